//! Teacher training and two-stage distillation of a student.

mod adam;
mod checkpoint;
mod crop;
mod schedule;

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{read_best, read_metrics, CheckpointRecord, CheckpointStore, EpochRecord, BEST_FILE, METRICS_FILE};
pub use crop::{crop_batch, ShortExamplePolicy};
pub use schedule::{PlateauScheduler, ScheduleEvent};

use crate::error::{invalid, Error, Result};
use crate::losses::{kd_soft_loss, masked_hard_loss, Fusion, GramBlocking, GramOptions, KdMethod, Layer};
use crate::model::{featurize, Features, FtJnfModel, ModelConfig, TapGrads};
use crate::scene::{ArrayGeometry, MixtureExample};
use crate::seed::{derive_seed, rng_for};
use crate::signal::{Spectrogram, Stft, StftConfig, Waveform, SAMPLE_RATE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr_init: f64,
    pub batch_size: usize,
    pub crop_seconds: f64,
    pub max_epochs: usize,
    pub plateau_patience: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub short_examples: ShortExamplePolicy,
    /// Row grouping for self-similarity losses; one STFT frame when unset.
    pub gram_blocking: Option<GramBlocking>,
    pub gram_normalize_rows: bool,
    pub stft_frame_length: usize,
    /// Microphone whose spectrogram the mask is applied to.
    pub reference_mic: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_init: 5e-4,
            batch_size: 4,
            crop_seconds: 4.0,
            max_epochs: 100,
            plateau_patience: 3,
            early_stop_patience: 6,
            seed: 0,
            adam: AdamConfig::default(),
            short_examples: ShortExamplePolicy::Skip,
            gram_blocking: None,
            gram_normalize_rows: false,
            stft_frame_length: 512,
            reference_mic: ArrayGeometry::default().center_index,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_init.is_finite() && self.lr_init > 0.0) {
            return Err(invalid!("learning rate must be positive, got {}", self.lr_init));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(invalid!("batch size and epoch count must be positive"));
        }
        if !(self.crop_seconds.is_finite() && self.crop_seconds > 0.0) {
            return Err(invalid!("crop length must be positive, got {} s", self.crop_seconds));
        }
        if self.plateau_patience == 0 || self.plateau_patience >= self.early_stop_patience {
            return Err(invalid!(
                "need 0 < plateau patience < early-stop patience, got {} and {}",
                self.plateau_patience,
                self.early_stop_patience
            ));
        }
        StftConfig::new(self.stft_frame_length)?;
        Ok(())
    }

    pub fn crop_len(&self) -> usize {
        (self.crop_seconds * SAMPLE_RATE as f64).round() as usize
    }

    fn gram_options(&self, bins: usize) -> GramOptions {
        GramOptions {
            blocking: self.gram_blocking.unwrap_or(GramBlocking::Rows(bins)),
            normalize_rows: self.gram_normalize_rows,
        }
    }
}

/// Training and validation examples.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub train: Vec<MixtureExample>,
    pub val: Vec<MixtureExample>,
}

impl Dataset {
    fn check(&self) -> Result<()> {
        if self.train.is_empty() {
            return Err(invalid!("training split is empty"));
        }
        if self.val.is_empty() {
            return Err(invalid!("validation split is empty"));
        }
        Ok(())
    }
}

/// What a stage minimizes.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    /// Enhancement loss against the clean target.
    Hard,
    /// Soft loss against a frozen teacher.
    Soft { teacher: &'a FtJnfModel, method: KdMethod },
}

/// Result of one training stage.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub stage: String,
    /// Parameters with the lowest validation loss.
    pub model: FtJnfModel,
    pub history: Vec<EpochRecord>,
    pub initial_val_loss: f64,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Teacher/student tap pairs the soft loss read, with their fusion.
    pub engaged: BTreeSet<(Layer, Fusion)>,
}

impl StageOutcome {
    pub fn epochs_run(&self) -> usize {
        self.history.iter().filter(|r| r.epoch > 0).count()
    }
}

struct Prepared {
    features: Features<f32>,
    y_ref: Spectrogram,
    s: Waveform,
}

struct Context<'a> {
    stft: Stft,
    cfg: &'a TrainConfig,
    compression: Option<f64>,
}

impl Context<'_> {
    fn prepare(&self, ex: &MixtureExample) -> Result<Prepared> {
        if self.cfg.reference_mic >= ex.y.num_channels() {
            return Err(invalid!(
                "reference microphone {} does not exist in a {}-channel example",
                self.cfg.reference_mic,
                ex.y.num_channels()
            ));
        }
        let specs = ex
            .y
            .channels
            .iter()
            .map(|c| self.stft.analyze(c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Prepared {
            features: featurize(&specs, self.compression)?,
            y_ref: specs[self.cfg.reference_mic].clone(),
            s: ex.s.clone(),
        })
    }

    /// Loss of one example; accumulates `scale * gradient` into `grads`.
    fn item(
        &self,
        model: &FtJnfModel,
        objective: Objective,
        item: &Prepared,
        grads: Option<(&mut FtJnfModel, f32)>,
        engaged: &mut BTreeSet<(Layer, Fusion)>,
    ) -> Result<f64> {
        let (taps, cache) = if grads.is_some() {
            let (t, c) = model.forward_train(&item.features)?;
            (t, Some(c))
        } else {
            (model.forward(&item.features)?, None)
        };
        let (loss, mut tap_grads) = match objective {
            Objective::Hard => {
                let (loss, d_mask, _) = masked_hard_loss(&self.stft, &taps.complex_mask(), &item.y_ref, &item.s)?;
                let tg = TapGrads {
                    mask: Some(d_mask.iter().map(|v| *v as f32).collect()),
                    ..Default::default()
                };
                (loss, tg)
            }
            Objective::Soft { teacher, method } => {
                let t_taps = teacher.forward(&item.features)?;
                let out = kd_soft_loss(method, &t_taps, &taps, &self.cfg.gram_options(taps.bins))?;
                engaged.extend(out.engaged.iter().copied());
                (out.value, out.grads)
            }
        };
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss {loss}")));
        }
        if let (Some((g, scale)), Some(cache)) = (grads, cache) {
            for v in [&mut tap_grads.z_f, &mut tap_grads.z_t, &mut tap_grads.z_lin, &mut tap_grads.mask]
                .into_iter()
                .flatten()
            {
                v.iter_mut().for_each(|x| *x *= scale);
            }
            model.backward(&cache, &taps, &tap_grads, g);
        }
        Ok(loss)
    }
}

/// Trains `init` on `objective` with plateau halving and early stopping and
/// returns the best-validation parameters. Records go to `store`.
pub fn train_stage(
    init: FtJnfModel,
    objective: Objective,
    data: &Dataset,
    cfg: &TrainConfig,
    stage: &str,
    store: &mut CheckpointStore,
) -> Result<StageOutcome> {
    cfg.validate()?;
    data.check()?;
    let ctx = Context {
        stft: Stft::new(StftConfig::new(cfg.stft_frame_length)?),
        cfg,
        compression: init.config().input_compression,
    };
    if let Objective::Soft { teacher, .. } = objective {
        if teacher.config().num_mics != init.config().num_mics {
            return Err(Error::Config("teacher and student use different microphone counts".into()));
        }
    }
    let val: Vec<Prepared> = data.val.iter().map(|e| ctx.prepare(e)).collect::<Result<_>>()?;
    let mut engaged = BTreeSet::new();
    let validate = |model: &FtJnfModel, engaged: &mut BTreeSet<(Layer, Fusion)>| -> Result<f64> {
        let mut total = 0.0;
        for item in &val {
            total += ctx.item(model, objective, item, None, engaged)?;
        }
        Ok(total / val.len() as f64)
    };

    let mut model = init;
    let mut adam = Adam::new(cfg.adam, &model);
    let mut sched = PlateauScheduler::new(cfg.lr_init, cfg.plateau_patience, cfg.early_stop_patience);
    let initial_val_loss = validate(&model, &mut engaged)?;
    sched.best = initial_val_loss;
    let first = EpochRecord {
        epoch: 0,
        stage: stage.to_string(),
        train_loss: None,
        val_loss: initial_val_loss,
        lr: sched.lr,
    };
    store.log(first.clone())?;
    let mut history = vec![first];
    let mut best_model = model.clone();
    let mut best_epoch = 0;
    let mut best_val = initial_val_loss;
    let mut stopped_early = false;
    let crop_len = cfg.crop_len();

    for epoch in 1..=cfg.max_epochs {
        let lr = sched.lr;
        let mut rng = rng_for(cfg.seed, &format!("trainer/{stage}"), epoch as u64);
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        order.shuffle(&mut rng);
        let mut train_total = 0.0;
        let mut train_items = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&MixtureExample> = chunk.iter().map(|&i| &data.train[i]).collect();
            let batch = crop_batch(&refs, crop_len, cfg.batch_size, cfg.short_examples, &mut rng)?;
            if batch.is_empty() {
                continue;
            }
            let scale = 1.0 / batch.len() as f32;
            let mut grads = model.zeros_like();
            for ex in &batch {
                let item = ctx.prepare(ex)?;
                let loss = ctx
                    .item(&model, objective, &item, Some((&mut grads, scale)), &mut engaged)
                    .map_err(|e| match e {
                        Error::NonFinite(msg) => {
                            Error::NonFinite(format!("{stage} epoch {epoch}, example seed {}: {msg}", ex.seed))
                        }
                        other => other,
                    })?;
                train_total += loss;
                train_items += 1;
            }
            adam.step(&mut model, &grads, lr);
        }
        if train_items == 0 {
            return Err(invalid!("no training example is long enough for a {crop_len}-sample crop"));
        }
        let val_loss = validate(&model, &mut engaged)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("{stage} epoch {epoch}: validation loss {val_loss}")));
        }
        let event = sched.step(val_loss);
        let record = EpochRecord {
            epoch,
            stage: stage.to_string(),
            train_loss: Some(train_total / train_items as f64),
            val_loss,
            lr,
        };
        let best_now = val_loss < best_val;
        if best_now {
            best_val = val_loss;
            best_epoch = epoch;
            best_model = model.clone();
        }
        store.save_epoch(&model, &record, best_now)?;
        store.log(record.clone())?;
        history.push(record);
        log::info!(
            "{stage} epoch {epoch}: train {:.5} val {val_loss:.5} lr {lr:.2e}{}",
            train_total / train_items as f64,
            if event.halved { " (lr halved)" } else { "" }
        );
        if event.stop {
            stopped_early = true;
            break;
        }
    }
    if best_epoch == 0 {
        store.save_epoch(&best_model, &history[0], true)?;
    }
    Ok(StageOutcome {
        stage: stage.to_string(),
        model: best_model,
        history,
        initial_val_loss,
        best_val_loss: best_val,
        best_epoch,
        stopped_early,
        engaged,
    })
}

fn store_for(cfg: &TrainConfig) -> Result<CheckpointStore> {
    CheckpointStore::new(cfg.checkpoint_dir.clone())
}

/// Trains a network of shape `model_cfg` on the hard loss.
pub fn train_teacher(model_cfg: &ModelConfig, data: &Dataset, cfg: &TrainConfig) -> Result<StageOutcome> {
    let init = FtJnfModel::init(model_cfg, derive_seed(cfg.seed, "teacher/init", 0))?;
    train_stage(init, Objective::Hard, data, cfg, "teacher", &mut store_for(cfg)?)
}

/// Result of [`run_two_stage_kd`].
#[derive(Debug, Clone)]
pub struct KdOutcome {
    pub student: FtJnfModel,
    /// Soft-loss pre-training; absent when no method was given.
    pub stage1: Option<StageOutcome>,
    pub stage2: StageOutcome,
    pub teacher_checksum: String,
}

/// Stage 1 minimizes the soft loss of `method` against the frozen teacher;
/// stage 2 restarts from the best stage-1 parameters with a fresh optimizer
/// and the initial learning rate and minimizes the hard loss. Without a
/// method only stage 2 runs, from a random initialization.
pub fn run_two_stage_kd(
    teacher: &FtJnfModel,
    student_cfg: &ModelConfig,
    method: Option<KdMethod>,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<KdOutcome> {
    cfg.validate()?;
    let checksum = teacher.checksum();
    let mut store = store_for(cfg)?;
    let init = FtJnfModel::init(student_cfg, derive_seed(cfg.seed, "student/init", 0))?;
    let (stage1, start) = match method {
        Some(method) => {
            let out = train_stage(init, Objective::Soft { teacher, method }, data, cfg, "stage1", &mut store)?;
            let start = out.model.clone();
            (Some(out), start)
        }
        None => (None, init),
    };
    let stage2 = train_stage(start, Objective::Hard, data, cfg, "stage2", &mut store)?;
    if teacher.checksum() != checksum {
        return Err(Error::NonFinite("teacher parameters changed during distillation".into()));
    }
    Ok(KdOutcome {
        student: stage2.model.clone(),
        stage1,
        stage2,
        teacher_checksum: checksum,
    })
}
