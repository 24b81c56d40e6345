//! Time-domain signal containers, the STFT analysis/synthesis pair and WAV I/O.
//!
//! Every signal in the pipeline runs at [`SAMPLE_RATE`]; nothing here resamples.

mod stft;
mod wav;

pub use stft::{build_sqrt_hann, istft, stft, Spectrogram, Stft, StftConfig};
pub use wav::{read_wav, write_wav, SampleFormat};

use crate::error::{invalid, Result};

/// Sample rate of every pipeline signal in Hz.
pub const SAMPLE_RATE: u32 = 16_000;

/// A mono signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>) -> Self {
        Self {
            samples,
            sample_rate: SAMPLE_RATE,
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        energy(&self.samples)
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn check_finite(&self) -> Result<()> {
        check_finite(&self.samples)
    }
}

/// Equal-length channels sharing one sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelWaveform {
    pub channels: Vec<Vec<f64>>,
    pub sample_rate: u32,
}

impl MultichannelWaveform {
    pub fn new(channels: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(first) = channels.first() {
            if channels.iter().any(|c| c.len() != first.len()) {
                return Err(invalid!("channels have unequal lengths"));
            }
        }
        Ok(Self {
            channels,
            sample_rate: SAMPLE_RATE,
        })
    }

    pub fn zeros(num_channels: usize, len: usize) -> Self {
        Self {
            channels: vec![vec![0.0; len]; num_channels],
            sample_rate: SAMPLE_RATE,
        }
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, index: usize) -> Waveform {
        Waveform {
            samples: self.channels[index].clone(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn slice(&self, start: usize, len: usize) -> Self {
        Self {
            channels: self
                .channels
                .iter()
                .map(|c| c[start..start + len].to_vec())
                .collect(),
            sample_rate: self.sample_rate,
        }
    }
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub(crate) fn check_finite(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(invalid!("non-finite sample at index {i}")),
        None => Ok(()),
    }
}
