use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MultichannelWaveform, SAMPLE_RATE};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleFormat {
    Pcm16,
    Float32,
}

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> Error + '_ {
    move |source| match source {
        hound::Error::IoError(e) => Error::io(path, e),
        source => Error::Wav {
            path: path.to_path_buf(),
            source,
        },
    }
}

/// Reads a 16 kHz WAV file (16-bit PCM or 32-bit float) into de-interleaved
/// channels. Any other sample rate is rejected.
pub fn read_wav(path: impl AsRef<Path>) -> Result<MultichannelWaveform> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(wav_err(path))?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::SampleRate {
            path: path.to_path_buf(),
            found: spec.sample_rate,
            expected: SAMPLE_RATE,
        });
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err(path))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err(path))?,
        (fmt, bits) => {
            return Err(invalid!(
                "{}: unsupported sample format {fmt:?}/{bits} bit",
                path.display()
            ))
        }
    };
    let nch = spec.channels as usize;
    let mut channels = vec![Vec::with_capacity(interleaved.len() / nch); nch];
    for frame in interleaved.chunks_exact(nch) {
        for (c, &v) in channels.iter_mut().zip(frame) {
            c.push(v);
        }
    }
    MultichannelWaveform::new(channels)
}

pub fn write_wav(
    path: impl AsRef<Path>,
    signal: &MultichannelWaveform,
    format: SampleFormat,
) -> Result<()> {
    let path = path.as_ref();
    if signal.sample_rate != SAMPLE_RATE {
        return Err(Error::SampleRate {
            path: path.to_path_buf(),
            found: signal.sample_rate,
            expected: SAMPLE_RATE,
        });
    }
    let (bits, sample_format) = match format {
        SampleFormat::Pcm16 => (16, hound::SampleFormat::Int),
        SampleFormat::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels: signal.num_channels() as u16,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: bits,
        sample_format,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err(path))?;
    for n in 0..signal.len() {
        for c in &signal.channels {
            match format {
                SampleFormat::Pcm16 => {
                    let v = (c[n] * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    writer.write_sample(v).map_err(wav_err(path))?;
                }
                SampleFormat::Float32 => writer.write_sample(c[n] as f32).map_err(wav_err(path))?,
            }
        }
    }
    writer.finalize().map_err(wav_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip_is_exact_for_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let sig = MultichannelWaveform::new(vec![vec![0.25, -0.5, 0.125], vec![0.0, 1.0, -1.0]]).unwrap();
        write_wav(&path, &sig, SampleFormat::Float32).unwrap();
        assert_eq!(read_wav(&path).unwrap(), sig);
    }

    #[test]
    fn pcm16_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.wav");
        let sig = MultichannelWaveform::new(vec![vec![0.3, -0.7, 0.01]]).unwrap();
        write_wav(&path, &sig, SampleFormat::Pcm16).unwrap();
        let back = read_wav(&path).unwrap();
        for (a, b) in back.channels[0].iter().zip(&sig.channels[0]) {
            assert!((a - b).abs() <= 0.5 / 32768.0 + 1e-12);
        }
    }

    #[test]
    fn foreign_sample_rate_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 44_100,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(&path), Err(Error::SampleRate { found: 44_100, .. })));
    }
}
