//! Run configuration: defaults, then a TOML file, then command-line flags,
//! then `FTJNF_*` environment variables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ftjnf_kd::eval::EvalProtocol;
use ftjnf_kd::losses::{KdMethod, Layer};
use ftjnf_kd::model::{ModelConfig, SizePreset};
use ftjnf_kd::scene::{ArrayGeometry, SceneOptions, SnrSpec};
use ftjnf_kd::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

pub const ENV_PREFIX: &str = "FTJNF_";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub speech_manifest: Option<PathBuf>,
    pub noise_manifest: Option<PathBuf>,
    pub rir_manifest: Option<PathBuf>,
    /// Teacher model for `distill`; defaults to the one `train-teacher` wrote.
    pub teacher_model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_examples: usize,
    pub val_examples: usize,
    pub example_seconds: f64,
    pub snr_low_db: f64,
    pub snr_high_db: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_examples: 200,
            val_examples: 40,
            example_seconds: 4.0,
            snr_low_db: -5.0,
            snr_high_db: 15.0,
        }
    }
}

impl DataConfig {
    pub fn snr(&self) -> SnrSpec {
        SnrSpec::Uniform {
            low: self.snr_low_db,
            high: self.snr_high_db,
        }
    }
}

/// Architecture options shared by every preset in a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOptions {
    pub f_bidirectional: bool,
    pub input_compression: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub presets: Vec<SizePreset>,
    pub methods: Vec<String>,
    pub snr_db: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            presets: SizePreset::ALL[1..].to_vec(),
            methods: ["none", "mask", "linear", "flstm", "tlstm", "multi"].map(String::from).to_vec(),
            snr_db: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub synthetic: bool,
    pub out_dir: PathBuf,
    /// Student size for `distill`.
    pub preset: SizePreset,
    pub teacher_preset: SizePreset,
    /// KD method name, or `none`.
    pub kd: String,
    /// Taps distillation may read.
    pub kd_taps: Vec<Layer>,
    pub pesq_adapter: Option<PathBuf>,
    pub paths: Paths,
    pub data: DataConfig,
    pub geometry: ArrayGeometry,
    pub scene: SceneOptions,
    pub stft_frame_length: usize,
    pub model: ModelOptions,
    pub train: TrainConfig,
    pub protocol: EvalProtocol,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            synthetic: false,
            out_dir: PathBuf::from("runs/default"),
            preset: SizePreset::I,
            teacher_preset: SizePreset::A,
            kd: "multi".into(),
            kd_taps: Layer::ALL.to_vec(),
            pesq_adapter: None,
            paths: Paths::default(),
            data: DataConfig::default(),
            geometry: ArrayGeometry::default(),
            scene: SceneOptions::default(),
            stft_frame_length: 512,
            model: ModelOptions::default(),
            train: TrainConfig::default(),
            protocol: EvalProtocol::default(),
            sweep: SweepConfig::default(),
        }
    }
}

/// Values given on the command line; `None` leaves the lower layers alone.
#[derive(Debug, Clone, Default)]
pub struct FlagOverrides {
    pub seed: Option<u64>,
    pub preset: Option<SizePreset>,
    pub kd: Option<String>,
    pub synthetic: bool,
    pub pesq_adapter: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Builds the effective configuration from all layers.
    pub fn load(
        file: Option<&Path>,
        flags: &FlagOverrides,
        env: &BTreeMap<String, String>,
    ) -> Result<Self, CliError> {
        let mut value = serde_json::to_value(RunConfig::default()).expect("default config serializes");
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let parsed: toml::Table =
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let parsed = serde_json::to_value(parsed).map_err(|e| CliError::Config(e.to_string()))?;
            merge(&mut value, parsed);
        }
        let set = |value: &mut Value, key: &str, v: Value| value[key] = v;
        if let Some(s) = flags.seed {
            set(&mut value, "seed", Value::from(s));
        }
        if let Some(p) = flags.preset {
            set(&mut value, "preset", serde_json::to_value(p).unwrap());
        }
        if let Some(k) = &flags.kd {
            set(&mut value, "kd", Value::from(k.clone()));
        }
        if flags.synthetic {
            set(&mut value, "synthetic", Value::Bool(true));
        }
        if let Some(p) = &flags.pesq_adapter {
            set(&mut value, "pesq_adapter", Value::from(p.display().to_string()));
        }
        if let Some(o) = &flags.out {
            set(&mut value, "out_dir", Value::from(o.display().to_string()));
        }
        for (name, raw) in env {
            let Some(key) = name.strip_prefix(ENV_PREFIX) else { continue };
            apply_env(&mut value, key, raw)?;
        }
        let mut cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| CliError::Config(format!("invalid configuration: {e}")))?;
        // one seed drives every random stream
        cfg.train.seed = cfg.seed;
        cfg.protocol.seed = cfg.seed;
        cfg.train.stft_frame_length = cfg.stft_frame_length;
        cfg.protocol.stft_frame_length = cfg.stft_frame_length;
        cfg.train.reference_mic = cfg.geometry.center_index;
        cfg.protocol.reference_mic = cfg.geometry.center_index;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.geometry.validate()?;
        self.train.validate()?;
        self.kd_method()?;
        for m in &self.sweep.methods {
            KdMethod::parse_optional(m)?;
        }
        if self.data.snr_low_db > self.data.snr_high_db {
            return Err(CliError::Config("data.snr_low_db exceeds data.snr_high_db".into()));
        }
        if self.data.example_seconds < self.train.crop_seconds {
            return Err(CliError::Config(format!(
                "examples of {} s are shorter than the {} s training crop",
                self.data.example_seconds, self.train.crop_seconds
            )));
        }
        self.model_config(self.preset).validate()?;
        Ok(())
    }

    pub fn kd_method(&self) -> Result<Option<KdMethod>, CliError> {
        Ok(KdMethod::parse_optional(&self.kd)?)
    }

    /// Fails when `method` reads a tap that `kd_taps` does not enable.
    pub fn check_taps(&self, method: Option<KdMethod>) -> Result<(), CliError> {
        let Some(method) = method else { return Ok(()) };
        for (layer, _) in method.terms() {
            if !self.kd_taps.contains(layer) {
                return Err(CliError::Config(format!(
                    "KD {method} needs the {} tap, which kd_taps does not enable",
                    layer.name()
                )));
            }
        }
        Ok(())
    }

    pub fn model_config(&self, preset: SizePreset) -> ModelConfig {
        let mut cfg = preset.config();
        cfg.num_mics = self.geometry.mic_positions.len();
        cfg.f_bidirectional = self.model.f_bidirectional;
        cfg.input_compression = self.model.input_compression;
        cfg
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// `FTJNF_TRAIN__LR_INIT=1e-3` sets `train.lr_init`. Values are read as TOML
/// and fall back to plain strings.
fn apply_env(value: &mut Value, key: &str, raw: &str) -> Result<(), CliError> {
    let path: Vec<String> = key.split("__").map(|p| p.to_ascii_lowercase()).collect();
    let parsed: Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|t| serde_json::to_value(&t["v"]).ok())
        .unwrap_or_else(|| Value::from(raw.to_string()));
    let mut slot = value;
    for (i, part) in path.iter().enumerate() {
        let obj = slot
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("{ENV_PREFIX}{key}: {part} is not a section")))?;
        if !obj.contains_key(part) {
            return Err(CliError::Config(format!("{ENV_PREFIX}{key}: unknown setting {part}")));
        }
        slot = obj.get_mut(part).unwrap();
        if i + 1 == path.len() {
            *slot = parsed;
            break;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::load(None, &FlagOverrides::default(), &BTreeMap::new()).unwrap();
        assert_eq!(cfg, RunConfig::default());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, cfg.to_toml()).unwrap();
        assert_eq!(RunConfig::load(Some(&path), &FlagOverrides::default(), &BTreeMap::new()).unwrap(), cfg);
    }

    #[test]
    fn precedence_is_file_then_flags_then_env() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 3\nkd = \"linear\"\n[train]\nlr_init = 0.001\nmax_epochs = 7\n").unwrap();
        let flags = FlagOverrides {
            seed: Some(5),
            ..Default::default()
        };
        let cfg = RunConfig::load(Some(&path), &flags, &BTreeMap::new()).unwrap();
        assert_eq!((cfg.seed, cfg.train.seed, cfg.kd.as_str()), (5, 5, "linear"));
        assert_eq!((cfg.train.lr_init, cfg.train.max_epochs), (0.001, 7));
        let e = env(&[("FTJNF_SEED", "9"), ("FTJNF_TRAIN__MAX_EPOCHS", "2"), ("FTJNF_KD", "tlstm"), ("OTHER", "x")]);
        let cfg = RunConfig::load(Some(&path), &flags, &e).unwrap();
        assert_eq!((cfg.seed, cfg.train.max_epochs, cfg.kd.as_str()), (9, 2, "tlstm"));
    }

    #[test]
    fn bad_settings_are_config_errors() {
        let no_flags = FlagOverrides::default();
        assert!(RunConfig::load(None, &no_flags, &env(&[("FTJNF_TRAIN__NOPE", "1")])).is_err());
        assert!(RunConfig::load(None, &no_flags, &env(&[("FTJNF_KD", "gram")])).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "sed = 3\n").unwrap();
        assert!(matches!(RunConfig::load(Some(&path), &no_flags, &BTreeMap::new()), Err(CliError::Config(_))));
    }

    #[test]
    fn disabled_taps_reject_methods_that_need_them() {
        let mut cfg = RunConfig::default();
        cfg.kd_taps = vec![Layer::FLstm, Layer::TLstm];
        assert!(cfg.check_taps(Some(KdMethod::Linear)).is_err());
        assert!(cfg.check_taps(Some(KdMethod::TLstm)).is_ok());
        assert!(cfg.check_taps(Some(KdMethod::Multi)).is_err());
        assert!(cfg.check_taps(None).is_ok());
    }
}
