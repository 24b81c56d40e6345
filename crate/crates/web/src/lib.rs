//! WebAssembly bindings for the demo page in `www/`.
//!
//! Every export has a plain Rust twin so the logic runs natively too.

use ftjnf_kd::losses::{gram, soft_loss_selfsim, GramOptions, Layer, TapGrid};
use ftjnf_kd::model::{count_macs_per_frame, count_params, featurize, FtJnfModel, ModelConfig, SizePreset};
use ftjnf_kd::scene::{
    generate_examples, ArrayGeometry, ExampleMetadata, MixtureExample, SceneSimulator, SnrSpec, Split,
    SyntheticCorpus,
};
use ftjnf_kd::signal::{Stft, StftConfig, SAMPLE_RATE};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const FRAME_LENGTH: usize = 512;
const ENVELOPE_HOP: usize = 160;

#[derive(Debug, Serialize)]
pub struct ModelSize {
    pub params: usize,
    pub macs_per_frame: u64,
    pub gmacs_per_frame: f64,
    /// Preset with the closest parameter count.
    pub nearest_preset: String,
}

pub fn model_size(f_hidden: usize, t_hidden: usize) -> ftjnf_kd::Result<ModelSize> {
    let cfg = ModelConfig::new(f_hidden, t_hidden)?;
    let params = count_params(&cfg)?;
    let macs = count_macs_per_frame(&cfg, FRAME_LENGTH / 2 + 1)?;
    let nearest = SizePreset::ALL
        .into_iter()
        .min_by_key(|p| count_params(&p.config()).unwrap_or(0).abs_diff(params))
        .expect("presets exist");
    Ok(ModelSize {
        params,
        macs_per_frame: macs,
        gmacs_per_frame: macs as f64 / 1e9,
        nearest_preset: nearest.to_string(),
    })
}

#[derive(Debug, Serialize)]
pub struct SceneView {
    pub meta: ExampleMetadata,
    pub mic_positions: Vec<[f64; 3]>,
    pub mic_rms: Vec<f64>,
    /// 10 ms RMS envelopes of the noisy reference and the clean target.
    pub noisy_envelope: Vec<f64>,
    pub clean_envelope: Vec<f64>,
}

fn synthetic_example(seed: u64, snr_db: f64, seconds: f64) -> ftjnf_kd::Result<MixtureExample> {
    let len = (seconds * SAMPLE_RATE as f64).round() as usize;
    let sim = SceneSimulator::new(ArrayGeometry::default(), Default::default())?;
    let mut ex = generate_examples(
        &sim,
        &SyntheticCorpus::default(),
        Split::Test,
        "demo",
        1,
        len,
        SnrSpec::Fixed(snr_db),
        seed,
    )?;
    Ok(ex.remove(0))
}

fn envelope(x: &[f64]) -> Vec<f64> {
    x.chunks(ENVELOPE_HOP)
        .map(|c| (c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64).sqrt())
        .collect()
}

pub fn simulate_scene(seed: u64, snr_db: f64, seconds: f64) -> ftjnf_kd::Result<SceneView> {
    let geom = ArrayGeometry::default();
    let ex = synthetic_example(seed, snr_db, seconds)?;
    let rms = |c: &[f64]| (c.iter().map(|v| v * v).sum::<f64>() / c.len().max(1) as f64).sqrt();
    Ok(SceneView {
        meta: ex.metadata(&geom),
        mic_positions: geom.mic_positions.clone(),
        mic_rms: ex.y.channels.iter().map(|c| rms(c)).collect(),
        noisy_envelope: envelope(&ex.y.channels[geom.center_index]),
        clean_envelope: envelope(&ex.s.samples),
    })
}

/// Per-frame Gram matrices of one layer for a teacher and a student.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct GramView {
    size: usize,
    teacher: Vec<f64>,
    student: Vec<f64>,
    loss: f64,
}

#[wasm_bindgen]
impl GramView {
    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.size
    }

    #[wasm_bindgen(getter)]
    pub fn loss(&self) -> f64 {
        self.loss
    }

    pub fn teacher(&self) -> Vec<f64> {
        self.teacher.clone()
    }

    pub fn student(&self) -> Vec<f64> {
        self.student.clone()
    }
}

fn layer_grid(model: &FtJnfModel, features: &ftjnf_kd::model::Features<f32>, layer: Layer) -> ftjnf_kd::Result<TapGrid> {
    let taps = model.forward(features)?;
    let data = match layer {
        Layer::FLstm => &taps.z_f,
        Layer::TLstm => &taps.z_t,
        Layer::Linear => &taps.z_lin,
        Layer::Mask => &taps.mask,
    };
    let rows = taps.rows();
    TapGrid::from_real(rows, data.len() / rows, data)
}

/// Untrained teacher and student (seeded) on a short synthetic scene; shows
/// the Gram matrix of `frame`.
pub fn gram_view(seed: u64, teacher: &str, student: &str, layer: &str, frame: usize) -> ftjnf_kd::Result<GramView> {
    let layer = Layer::ALL
        .into_iter()
        .find(|l| l.name() == layer)
        .ok_or_else(|| ftjnf_kd::Error::InvalidArgument(format!("unknown layer {layer}")))?;
    let t_cfg = teacher.parse::<SizePreset>()?.config();
    let s_cfg = student.parse::<SizePreset>()?.config();
    let ex = synthetic_example(seed, 5.0, 0.25)?;
    let stft = Stft::new(StftConfig::new(FRAME_LENGTH)?);
    let specs = ex.y.channels.iter().map(|c| stft.analyze(c)).collect::<ftjnf_kd::Result<Vec<_>>>()?;
    let features = featurize(&specs, None)?;
    if frame >= features.frames {
        return Err(ftjnf_kd::Error::InvalidArgument(format!(
            "frame {frame} out of range, the scene has {} frames",
            features.frames
        )));
    }
    let zt = layer_grid(&FtJnfModel::init(&t_cfg, seed)?, &features, layer)?;
    let zs = layer_grid(&FtJnfModel::init(&s_cfg, seed.wrapping_add(1))?, &features, layer)?;
    let opts = GramOptions::per_frame(features.bins);
    let loss = soft_loss_selfsim(&zt, &zs, &opts)?;
    let mut gt = gram(&zt, &opts)?;
    let mut gs = gram(&zs, &opts)?;
    Ok(GramView {
        size: features.bins,
        teacher: gt.swap_remove(frame).data,
        student: gs.swap_remove(frame).data,
        loss,
    })
}

fn js<T: Serialize>(r: ftjnf_kd::Result<T>) -> Result<String, String> {
    r.map_err(|e| e.to_string())
        .and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
}

#[wasm_bindgen(js_name = modelSize)]
pub fn model_size_js(f_hidden: usize, t_hidden: usize) -> Result<String, String> {
    js(model_size(f_hidden, t_hidden))
}

#[wasm_bindgen(js_name = simulateScene)]
pub fn simulate_scene_js(seed: u32, snr_db: f64, seconds: f64) -> Result<String, String> {
    js(simulate_scene(seed as u64, snr_db, seconds))
}

#[wasm_bindgen(js_name = gramView)]
pub fn gram_view_js(seed: u32, teacher: &str, student: &str, layer: &str, frame: usize) -> Result<GramView, String> {
    gram_view(seed as u64, teacher, student, layer, frame).map_err(|e| e.to_string())
}
