use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scene::NUM_MICS;

/// Named network sizes, from the teacher (`A`) down to the smallest student
/// (`I`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SizePreset {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    I,
}

/// Published reference figures for one preset: thousands of parameters and
/// billions of MACs per frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PublishedSize {
    pub params_k: f64,
    pub gmacs: f64,
}

impl SizePreset {
    pub const ALL: [SizePreset; 9] = [
        SizePreset::A,
        SizePreset::B,
        SizePreset::C,
        SizePreset::D,
        SizePreset::E,
        SizePreset::F,
        SizePreset::G,
        SizePreset::H,
        SizePreset::I,
    ];

    /// F-LSTM and T-LSTM hidden units.
    pub fn hidden_units(self) -> (usize, usize) {
        match self {
            SizePreset::A => (512, 256),
            SizePreset::B => (256, 64),
            SizePreset::C => (128, 32),
            SizePreset::D => (88, 40),
            SizePreset::E => (80, 32),
            SizePreset::F => (72, 24),
            SizePreset::G => (64, 16),
            SizePreset::H => (56, 8),
            SizePreset::I => (48, 8),
        }
    }

    pub fn published(self) -> PublishedSize {
        let (params_k, gmacs) = match self {
            SizePreset::A => (1400.0, 34.7),
            SizePreset::B => (364.9, 8.9),
            SizePreset::C => (92.7, 2.3),
            SizePreset::D => (56.4, 1.4),
            SizePreset::E => (44.4, 1.1),
            SizePreset::F => (33.9, 0.85),
            SizePreset::G => (24.9, 0.63),
            SizePreset::H => (17.4, 0.44),
            SizePreset::I => (13.4, 0.34),
        };
        PublishedSize { params_k, gmacs }
    }

    pub fn config(self) -> ModelConfig {
        let (f_hidden, t_hidden) = self.hidden_units();
        ModelConfig {
            f_hidden,
            t_hidden,
            num_mics: NUM_MICS,
            f_bidirectional: false,
            input_compression: None,
            preset: Some(self),
        }
    }
}

impl fmt::Display for SizePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for SizePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SizePreset::ALL
            .into_iter()
            .find(|p| p.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| invalid!("unknown size preset {s:?}, expected A..I"))
    }
}

/// Architecture of one FT-JNF network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub f_hidden: usize,
    pub t_hidden: usize,
    pub num_mics: usize,
    /// Split the F-LSTM into two directions of `f_hidden / 2` units each.
    #[serde(default)]
    pub f_bidirectional: bool,
    /// Optional power-law exponent applied to input magnitudes.
    #[serde(default)]
    pub input_compression: Option<f64>,
    #[serde(default)]
    pub preset: Option<SizePreset>,
}

impl ModelConfig {
    pub fn new(f_hidden: usize, t_hidden: usize) -> Result<Self> {
        let cfg = Self {
            f_hidden,
            t_hidden,
            num_mics: NUM_MICS,
            f_bidirectional: false,
            input_compression: None,
            preset: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.f_hidden == 0 || self.t_hidden == 0 {
            return Err(invalid!(
                "hidden sizes must be positive, got {}/{}",
                self.f_hidden,
                self.t_hidden
            ));
        }
        if self.num_mics == 0 {
            return Err(invalid!("model needs at least one microphone"));
        }
        if self.f_bidirectional && self.f_hidden % 2 != 0 {
            return Err(invalid!(
                "bidirectional F-LSTM needs an even hidden size, got {}",
                self.f_hidden
            ));
        }
        if let Some(c) = self.input_compression {
            if !(c > 0.0 && c <= 1.0) {
                return Err(invalid!("compression exponent must be in (0, 1], got {c}"));
            }
        }
        Ok(())
    }

    /// Real and imaginary part of every microphone.
    pub fn input_width(&self) -> usize {
        2 * self.num_mics
    }

    pub fn label(&self) -> String {
        match self.preset {
            Some(p) => p.to_string(),
            None => format!("{}/{}", self.f_hidden, self.t_hidden),
        }
    }

    /// Architecture equality, ignoring the preset label.
    pub fn same_architecture(&self, other: &ModelConfig) -> bool {
        self.f_hidden == other.f_hidden
            && self.t_hidden == other.t_hidden
            && self.num_mics == other.num_mics
            && self.f_bidirectional == other.f_bidirectional
            && self.input_compression == other.input_compression
    }
}

/// Parameters of one LSTM with two bias vectors.
fn lstm_params(input: usize, hidden: usize) -> usize {
    4 * hidden * (input + hidden + 2)
}

/// Trainable parameters of the network described by `cfg`.
pub fn count_params(cfg: &ModelConfig) -> Result<usize> {
    cfg.validate()?;
    let i = cfg.input_width();
    let f = if cfg.f_bidirectional {
        2 * lstm_params(i, cfg.f_hidden / 2)
    } else {
        lstm_params(i, cfg.f_hidden)
    };
    let t = lstm_params(cfg.f_hidden, cfg.t_hidden);
    Ok(f + t + 2 * cfg.t_hidden + 2)
}

/// Multiply-accumulates to process one STFT frame of `bins` frequencies: one
/// F-LSTM step and one T-LSTM step per bin, plus the output layer. Bias
/// additions and activations are not counted.
pub fn count_macs_per_frame(cfg: &ModelConfig, bins: usize) -> Result<u64> {
    cfg.validate()?;
    if bins == 0 {
        return Err(invalid!("need at least one frequency bin"));
    }
    let (hf, ht, i) = (cfg.f_hidden as u64, cfg.t_hidden as u64, cfg.input_width() as u64);
    let f = if cfg.f_bidirectional {
        2 * 4 * (hf / 2) * (i + hf / 2)
    } else {
        4 * hf * (i + hf)
    };
    let t = 4 * ht * (hf + ht);
    Ok(bins as u64 * (f + t + 2 * ht))
}
