//! Source material for scene synthesis: manifest-driven audio files or the
//! synthetic generators.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mix::{MixtureExample, SceneSimulator};
use super::propagate::RoomImpulseResponse;
use super::synth;
use crate::error::{invalid, Error, Result};
use crate::seed::{derive_seed, rng_for};
use crate::signal::{read_wav, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Speech,
    Noise,
    Rir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// One line of a corpus manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub path: PathBuf,
    pub role: Role,
    pub split: Split,
}

/// Reads a line-delimited JSON manifest. Relative paths are resolved against
/// the manifest's directory; blank lines and `#` comments are skipped.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, line)| {
            let mut rec: ManifestRecord = serde_json::from_str(line)
                .map_err(|e| invalid!("{}:{}: {e}", path.display(), i + 1))?;
            if rec.path.is_relative() {
                rec.path = base.join(&rec.path);
            }
            Ok(rec)
        })
        .collect()
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[ManifestRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Supplies raw speech, noise and room responses for one split.
pub trait SourceCorpus: Sync {
    fn speech(&self, split: Split, rng: &mut ChaCha8Rng, len: usize) -> Result<Waveform>;
    fn noise(&self, split: Split, rng: &mut ChaCha8Rng, len: usize) -> Result<Waveform>;
    fn rir(&self, split: Split, rng: &mut ChaCha8Rng, channels: usize) -> Result<RoomImpulseResponse>;
}

/// Generator-backed corpus; needs no files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    pub t60_range: (f64, f64),
}

impl Default for SyntheticCorpus {
    fn default() -> Self {
        Self {
            t60_range: (0.15, 0.45),
        }
    }
}

impl SourceCorpus for SyntheticCorpus {
    fn speech(&self, _: Split, rng: &mut ChaCha8Rng, len: usize) -> Result<Waveform> {
        Ok(synth::harmonic_speech(rng, len))
    }

    fn noise(&self, _: Split, rng: &mut ChaCha8Rng, len: usize) -> Result<Waveform> {
        Ok(if rng.random_bool(0.5) {
            synth::white_noise(rng, len)
        } else {
            synth::pink_noise(rng, len)
        })
    }

    fn rir(&self, _: Split, rng: &mut ChaCha8Rng, channels: usize) -> Result<RoomImpulseResponse> {
        let t60 = rng.random_range(self.t60_range.0..self.t60_range.1);
        Ok(synth::sparse_rir(rng, channels, t60))
    }
}

/// Corpus backed by manifest records. Files are read on demand.
#[derive(Debug, Clone, Default)]
pub struct FileCorpus {
    records: Vec<ManifestRecord>,
}

impl FileCorpus {
    pub fn new(records: Vec<ManifestRecord>) -> Self {
        Self { records }
    }

    pub fn has(&self, role: Role) -> bool {
        self.records.iter().any(|r| r.role == role)
    }

    fn pick(&self, role: Role, split: Split, rng: &mut ChaCha8Rng) -> Result<&Path> {
        let pool: Vec<&ManifestRecord> = self
            .records
            .iter()
            .filter(|r| r.role == role && r.split == split)
            .collect();
        if pool.is_empty() {
            return Err(Error::Config(format!("manifest has no {role:?} entries for the {split} split")));
        }
        Ok(&pool[rng.random_range(0..pool.len())].path)
    }

    /// Random excerpt of `len` samples from the first channel; shorter files are
    /// zero-padded at the end.
    fn excerpt(&self, role: Role, split: Split, rng: &mut ChaCha8Rng, len: usize) -> Result<Waveform> {
        let path = self.pick(role, split, rng)?;
        let mut samples = read_wav(path)?.channels.swap_remove(0);
        if samples.len() > len {
            let start = rng.random_range(0..=samples.len() - len);
            samples = samples[start..start + len].to_vec();
        }
        samples.resize(len, 0.0);
        Ok(Waveform::new(samples))
    }
}

impl SourceCorpus for FileCorpus {
    fn speech(&self, split: Split, rng: &mut ChaCha8Rng, len: usize) -> Result<Waveform> {
        self.excerpt(Role::Speech, split, rng, len)
    }

    fn noise(&self, split: Split, rng: &mut ChaCha8Rng, len: usize) -> Result<Waveform> {
        self.excerpt(Role::Noise, split, rng, len)
    }

    /// Mono files are shared by all microphones; multichannel files must match
    /// the array.
    fn rir(&self, split: Split, rng: &mut ChaCha8Rng, channels: usize) -> Result<RoomImpulseResponse> {
        let path = self.pick(Role::Rir, split, rng)?;
        let wav = read_wav(path)?;
        let taps = match wav.num_channels() {
            1 => vec![wav.channels[0].clone(); channels],
            c if c == channels => wav.channels,
            c => return Err(invalid!("{}: {c} channels, array has {channels}", path.display())),
        };
        RoomImpulseResponse::new(taps, path.display().to_string())
    }
}

/// How per-example SNRs are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrSpec {
    Uniform { low: f64, high: f64 },
    Fixed(f64),
}

impl Default for SnrSpec {
    fn default() -> Self {
        SnrSpec::Uniform {
            low: -5.0,
            high: 15.0,
        }
    }
}

/// Synthesizes `count` examples of `len` samples. Example `i` depends only on
/// `(base_seed, stream, i)`, so the result is independent of thread count.
#[allow(clippy::too_many_arguments)]
pub fn generate_examples(
    sim: &SceneSimulator,
    corpus: &dyn SourceCorpus,
    split: Split,
    stream: &str,
    count: usize,
    len: usize,
    snr: SnrSpec,
    base_seed: u64,
) -> Result<Vec<MixtureExample>> {
    let stream = format!("simulate/{split}/{stream}");
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(base_seed, &stream, i);
            let speech = corpus.speech(split, &mut rng, len)?;
            let noise = corpus.noise(split, &mut rng, len)?;
            let rir = corpus.rir(split, &mut rng, sim.geometry.num_mics())?;
            let snr_db = match snr {
                SnrSpec::Uniform { low, high } => rng.random_range(low..=high),
                SnrSpec::Fixed(v) => v,
            };
            sim.make_example(&speech, &noise, &rir, snr_db, derive_seed(base_seed, &stream, i))
        })
        .collect()
}
