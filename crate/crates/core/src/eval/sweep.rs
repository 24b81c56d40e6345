use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{si_sdr, MetricResult, PesqAdapter};
use crate::error::{invalid, Result};
use crate::losses::{hard_loss, KdMethod};
use crate::model::{count_macs_per_frame, count_params, featurize, ComplexMask, Features, FtJnfModel, ModelConfig};
use crate::scene::{generate_examples, ArrayGeometry, MixtureExample, SceneSimulator, SnrSpec, SourceCorpus, Split};
use crate::signal::{Stft, StftConfig, Waveform, SAMPLE_RATE};

/// Anything that turns network features into a complex mask.
pub trait MaskModel: Sync {
    fn label(&self) -> String;

    fn input_compression(&self) -> Option<f64> {
        None
    }

    fn mask(&self, features: &Features<f32>) -> Result<ComplexMask>;
}

impl MaskModel for FtJnfModel {
    fn label(&self) -> String {
        self.config().label()
    }

    fn input_compression(&self) -> Option<f64> {
        self.config().input_compression
    }

    fn mask(&self, features: &Features<f32>) -> Result<ComplexMask> {
        Ok(self.forward(features)?.complex_mask())
    }
}

/// Applies the same mask value everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantMask {
    pub label: String,
    pub value: Complex64,
}

impl ConstantMask {
    pub fn identity() -> Self {
        Self {
            label: "identity".into(),
            value: Complex64::new(1.0, 0.0),
        }
    }

    pub fn zero() -> Self {
        Self {
            label: "zero".into(),
            value: Complex64::new(0.0, 0.0),
        }
    }
}

impl MaskModel for ConstantMask {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn mask(&self, features: &Features<f32>) -> Result<ComplexMask> {
        Ok(ComplexMask::constant(features.bins, features.frames, self.value))
    }
}

/// STFT and reference microphone used for enhancement.
#[derive(Debug, Clone)]
pub struct EnhanceOptions {
    pub stft: Stft,
    pub reference_mic: usize,
}

impl Default for EnhanceOptions {
    fn default() -> Self {
        Self {
            stft: Stft::default(),
            reference_mic: ArrayGeometry::default().center_index,
        }
    }
}

/// Masks the reference microphone's spectrogram and resynthesizes it.
pub fn enhance(model: &dyn MaskModel, example: &MixtureExample, opts: &EnhanceOptions) -> Result<Waveform> {
    if opts.reference_mic >= example.y.num_channels() {
        return Err(invalid!("reference microphone {} out of range", opts.reference_mic));
    }
    let specs = example
        .y
        .channels
        .iter()
        .map(|c| opts.stft.analyze(c))
        .collect::<Result<Vec<_>>>()?;
    let features = featurize::<f32>(&specs, model.input_compression())?;
    let mask = model.mask(&features)?;
    let enhanced = crate::model::apply_mask(&mask, &specs[opts.reference_mic])?;
    Ok(Waveform {
        samples: opts.stft.synthesize(&enhanced)?,
        sample_rate: example.s.sample_rate,
    })
}

/// Test-set definition shared by every model in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalProtocol {
    pub snr_grid: Vec<f64>,
    pub examples_per_snr: usize,
    pub example_seconds: f64,
    pub seed: u64,
    pub stft_frame_length: usize,
    pub reference_mic: usize,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self {
            snr_grid: vec![-5.0, 0.0, 5.0, 10.0, 15.0],
            examples_per_snr: 20,
            example_seconds: 4.0,
            seed: 0,
            stft_frame_length: 512,
            reference_mic: ArrayGeometry::default().center_index,
        }
    }
}

impl EvalProtocol {
    pub fn enhance_options(&self) -> Result<EnhanceOptions> {
        Ok(EnhanceOptions {
            stft: Stft::new(StftConfig::new(self.stft_frame_length)?),
            reference_mic: self.reference_mic,
        })
    }
}

/// Test examples per SNR bucket.
#[derive(Debug, Clone)]
pub struct TestSet {
    pub buckets: Vec<(f64, Vec<MixtureExample>)>,
}

impl TestSet {
    /// Simulates `examples_per_snr` examples at every grid SNR.
    pub fn simulate(protocol: &EvalProtocol, sim: &SceneSimulator, corpus: &dyn SourceCorpus) -> Result<Self> {
        if protocol.snr_grid.is_empty() || protocol.examples_per_snr == 0 {
            return Err(invalid!("evaluation needs SNR buckets and examples"));
        }
        let len = (protocol.example_seconds * SAMPLE_RATE as f64).round() as usize;
        let buckets = protocol
            .snr_grid
            .iter()
            .map(|&snr| {
                let ex = generate_examples(
                    sim,
                    corpus,
                    Split::Test,
                    &format!("snr{snr}"),
                    protocol.examples_per_snr,
                    len,
                    SnrSpec::Fixed(snr),
                    protocol.seed,
                )?;
                Ok((snr, ex))
            })
            .collect::<Result<_>>()?;
        Ok(Self { buckets })
    }

    /// SHA-256 over every noisy example of one bucket.
    pub fn digest(examples: &[MixtureExample]) -> String {
        let mut h = Sha256::new();
        for ex in examples {
            for ch in &ex.y.channels {
                for v in ch {
                    h.update(v.to_le_bytes());
                }
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub const NOISY_LABEL: &str = "noisy";

/// Outcome of scoring one model on one bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrReport {
    pub rows: Vec<MetricResult>,
    /// Digest of the test audio per SNR bucket.
    pub digests: Vec<(f64, String)>,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub pesq: Option<PesqAdapter>,
}

fn score_bucket(
    label: &str,
    snr: Option<f64>,
    examples: &[MixtureExample],
    estimate: &(dyn Fn(&MixtureExample) -> Result<Waveform> + Sync),
    opts: &SweepOptions,
    stft: &Stft,
) -> Result<Vec<MetricResult>> {
    type Scores = (f64, f64, Option<std::result::Result<f64, String>>);
    let per: Vec<Scores> = examples
        .par_iter()
        .map(|ex| {
            let est = estimate(ex)?;
            let sdr = si_sdr(&est, &ex.s)?;
            let l1 = hard_loss(&est, &ex.s, stft)?;
            let pesq = opts.pesq.as_ref().map(|a| a.score(&est, &ex.s).map_err(|e| e.to_string()));
            Ok((sdr, l1, pesq))
        })
        .collect::<Result<_>>()?;
    let mut rows = vec![
        MetricResult::new("si_sdr", label, snr, per.iter().map(|p| p.0).collect(), vec![]),
        MetricResult::new("hard_l1", label, snr, per.iter().map(|p| p.1).collect(), vec![]),
    ];
    if opts.pesq.is_some() {
        let mut values = Vec::new();
        let mut errors = Vec::new();
        for (i, p) in per.iter().enumerate() {
            match p.2.clone().expect("adapter configured") {
                Ok(v) => values.push(v),
                Err(e) => {
                    log::warn!("PESQ failed for {label} example {i}: {e}");
                    errors.push((i, e));
                }
            }
        }
        rows.push(MetricResult::new("pesq", label, snr, values, errors));
    }
    Ok(rows)
}

/// Scores the unprocessed reference microphone and every model at every SNR
/// bucket. `on_row` sees each result as soon as it exists.
pub fn run_snr_sweep(
    models: &[&dyn MaskModel],
    test: &TestSet,
    protocol: &EvalProtocol,
    opts: &SweepOptions,
    on_row: &mut dyn FnMut(&MetricResult) -> Result<()>,
) -> Result<SnrReport> {
    if models.is_empty() {
        return Err(invalid!("no models to evaluate"));
    }
    let enh = protocol.enhance_options()?;
    let mut rows = Vec::new();
    let mut digests = Vec::new();
    for (snr, examples) in &test.buckets {
        digests.push((*snr, TestSet::digest(examples)));
        let noisy = |ex: &MixtureExample| -> Result<Waveform> { Ok(Waveform::new(ex.y.channels[enh.reference_mic].clone())) };
        for r in score_bucket(NOISY_LABEL, Some(*snr), examples, &noisy, opts, &enh.stft)? {
            on_row(&r)?;
            rows.push(r);
        }
        for model in models {
            let est = |ex: &MixtureExample| enhance(*model, ex, &enh);
            for r in score_bucket(&model.label(), Some(*snr), examples, &est, opts, &enh.stft)? {
                on_row(&r)?;
                rows.push(r);
            }
        }
    }
    Ok(SnrReport { rows, digests })
}

/// One (size, method) cell of the size sweep; `model` is `None` when the
/// checkpoint is missing.
pub struct SizeCell<'a> {
    pub config: ModelConfig,
    pub method: Option<KdMethod>,
    pub model: Option<&'a dyn MaskModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeRow {
    pub label: String,
    /// `teacher`, a KD method name or `none`.
    pub method: String,
    pub params: usize,
    pub macs_per_frame: u64,
    pub gmacs_per_frame: f64,
    pub results: Vec<MetricResult>,
    pub missing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub snr_db: f64,
    pub digest: String,
    pub rows: Vec<SizeRow>,
}

/// Scores every cell and the teacher on the bucket at `snr_db`.
pub fn run_size_sweep(
    cells: &[SizeCell],
    teacher: &SizeCell,
    test: &TestSet,
    snr_db: f64,
    protocol: &EvalProtocol,
    opts: &SweepOptions,
) -> Result<SizeReport> {
    let (_, examples) = test
        .buckets
        .iter()
        .find(|(s, _)| *s == snr_db)
        .ok_or_else(|| invalid!("test set has no {snr_db} dB bucket"))?;
    let enh = protocol.enhance_options()?;
    let bins = enh.stft.config().bins();
    let mut rows = Vec::new();
    for (cell, method) in std::iter::once((teacher, "teacher".to_string()))
        .chain(cells.iter().map(|c| (c, c.method.map_or("none".to_string(), |m| m.to_string()))))
    {
        let macs = count_macs_per_frame(&cell.config, bins)?;
        let results = match cell.model {
            Some(model) => {
                let est = |ex: &MixtureExample| enhance(model, ex, &enh);
                score_bucket(&cell.config.label(), Some(snr_db), examples, &est, opts, &enh.stft)?
            }
            None => {
                log::warn!("no model for size {} with method {method}", cell.config.label());
                Vec::new()
            }
        };
        rows.push(SizeRow {
            label: cell.config.label(),
            missing: cell.model.is_none(),
            method,
            params: count_params(&cell.config)?,
            macs_per_frame: macs,
            gmacs_per_frame: macs as f64 / 1e9,
            results,
        });
    }
    Ok(SizeReport {
        snr_db,
        digest: TestSet::digest(examples),
        rows,
    })
}
