//! On-disk model container.
//!
//! Layout: the 8-byte magic `FTJNFKD\x01`, a little-endian `u32` header
//! length, a JSON header, then every tensor as little-endian `f32` in header
//! order.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::network::FtJnfModel;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"FTJNFKD\x01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
    checksum: String,
    #[serde(default)]
    metadata: BTreeMap<String, serde_json::Value>,
}

/// A loaded model together with free-form metadata stored next to it.
#[derive(Debug, Clone)]
pub struct SavedModel {
    pub model: FtJnfModel,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

pub fn save_model(
    model: &FtJnfModel,
    metadata: &BTreeMap<String, serde_json::Value>,
    path: &Path,
) -> Result<()> {
    let params = model.params();
    let header = Header {
        format_version: FORMAT_VERSION,
        config: model.config().clone(),
        tensors: params
            .iter()
            .map(|(name, shape, _)| TensorEntry {
                name: name.clone(),
                shape: shape.clone(),
            })
            .collect(),
        checksum: model.checksum(),
        metadata: metadata.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(12 + json.len() + 4 * model.num_params());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, _, p) in &params {
        for v in p.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::ModelFormat {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(bad("not an FT-JNF model file".into()));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes
        .get(12..12 + hlen)
        .ok_or_else(|| bad("truncated header".into()))?;
    let header: Header =
        serde_json::from_slice(body).map_err(|e| bad(format!("bad header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {}", header.format_version)));
    }
    let mut model = FtJnfModel::zeros(&header.config).map_err(|e| bad(e.to_string()))?;
    let expected: Vec<(String, Vec<usize>)> = model
        .params()
        .into_iter()
        .map(|(n, s, _)| (n, s))
        .collect();
    let found: Vec<(String, Vec<usize>)> = header
        .tensors
        .iter()
        .map(|t| (t.name.clone(), t.shape.clone()))
        .collect();
    if expected != found {
        return Err(bad("tensor table does not match the stored config".into()));
    }
    let mut data = &bytes[12 + hlen..];
    for p in model.params_mut() {
        let need = 4 * p.len();
        if data.len() < need {
            return Err(bad("truncated tensor data".into()));
        }
        for (v, chunk) in p.iter_mut().zip(data[..need].chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().unwrap());
        }
        data = &data[need..];
    }
    if !data.is_empty() {
        return Err(bad(format!("{} trailing bytes", data.len())));
    }
    if model.checksum() != header.checksum {
        return Err(bad("checksum mismatch".into()));
    }
    Ok(SavedModel {
        model,
        metadata: header.metadata,
    })
}

/// Loads a model and checks that it has the expected architecture.
pub fn load_model_expecting(path: &Path, expected: &ModelConfig) -> Result<SavedModel> {
    let saved = load_model(path)?;
    if !saved.model.config().same_architecture(expected) {
        return Err(Error::ConfigMismatch {
            expected: describe(expected),
            found: describe(saved.model.config()),
        });
    }
    Ok(saved)
}

fn describe(cfg: &ModelConfig) -> String {
    format!(
        "{} (F {} / T {}, {} mics{})",
        cfg.label(),
        cfg.f_hidden,
        cfg.t_hidden,
        cfg.num_mics,
        if cfg.f_bidirectional { ", bidirectional F" } else { "" }
    )
}
