use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{save_model, FtJnfModel};

/// One line of the metrics log. Epoch 0 is the evaluation before any update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: String,
    pub train_loss: Option<f64>,
    pub val_loss: f64,
    pub lr: f64,
}

/// Pointer to the best checkpoint of a stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub stage: String,
    pub epoch: usize,
    pub val_loss: f64,
    pub lr: f64,
    /// File name inside the stage directory.
    pub model: String,
}

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const BEST_FILE: &str = "best.json";

/// Writes epoch checkpoints, best pointers and the metrics log below one
/// directory. A store without a directory only keeps records in memory.
#[derive(Debug, Clone, Default)]
pub struct CheckpointStore {
    dir: Option<PathBuf>,
    pub records: Vec<EpochRecord>,
}

impl CheckpointStore {
    pub fn new(dir: Option<PathBuf>) -> Result<Self> {
        if let Some(d) = &dir {
            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            let log = d.join(METRICS_FILE);
            fs::write(&log, b"").map_err(|e| Error::io(&log, e))?;
        }
        Ok(Self {
            dir,
            records: Vec::new(),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn log(&mut self, record: EpochRecord) -> Result<()> {
        if let Some(d) = &self.dir {
            let path = d.join(METRICS_FILE);
            let mut f = OpenOptions::new()
                .append(true)
                .create(true)
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            let mut line = serde_json::to_vec(&record)?;
            line.push(b'\n');
            f.write_all(&line).map_err(|e| Error::io(&path, e))?;
        }
        self.records.push(record);
        Ok(())
    }

    /// Saves an epoch snapshot and, when `best` is set, points the stage's
    /// best pointer at it.
    pub fn save_epoch(&self, model: &FtJnfModel, record: &EpochRecord, best: bool) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let stage_dir = dir.join(&record.stage);
        let name = format!("epoch_{:04}.ftjnf", record.epoch);
        let mut meta = BTreeMap::new();
        meta.insert("stage".to_string(), serde_json::json!(record.stage));
        meta.insert("epoch".to_string(), serde_json::json!(record.epoch));
        meta.insert("val_loss".to_string(), serde_json::json!(record.val_loss));
        save_model(model, &meta, &stage_dir.join(&name))?;
        if best {
            let pointer = CheckpointRecord {
                stage: record.stage.clone(),
                epoch: record.epoch,
                val_loss: record.val_loss,
                lr: record.lr,
                model: name,
            };
            let path = stage_dir.join(BEST_FILE);
            fs::write(&path, serde_json::to_vec_pretty(&pointer)?).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Reads a stage's best pointer.
pub fn read_best(stage_dir: &Path) -> Result<CheckpointRecord> {
    let path = stage_dir.join(BEST_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Reads a metrics log written by [`CheckpointStore`].
pub fn read_metrics(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
