//! Synthetic stand-ins for speech, noise and room responses, used for
//! corpus-free runs.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::propagate::RoomImpulseResponse;
use crate::signal::{Waveform, SAMPLE_RATE};

const TARGET_RMS: f64 = 0.1;

fn normalize_rms(mut x: Vec<f64>, target: f64) -> Vec<f64> {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        let g = target / rms;
        x.iter_mut().for_each(|v| *v *= g);
    }
    x
}

/// Voiced "utterance": a harmonic complex whose fundamental glides between
/// random targets, shaped by a syllable-rate on/off envelope and a single
/// formant-like spectral tilt.
pub fn harmonic_speech<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Waveform {
    let fs = SAMPLE_RATE as f64;
    let mut out = vec![0.0; len];

    // f0 contour: piecewise-linear glide between random anchors
    let mut anchors = vec![(0usize, rng.random_range(100.0..220.0))];
    while anchors.last().unwrap().0 < len {
        let step = (rng.random_range(0.15..0.5) * fs) as usize;
        anchors.push((anchors.last().unwrap().0 + step, rng.random_range(90.0..250.0)));
    }
    let formant = rng.random_range(500.0..1500.0);

    // syllables alternate with short pauses
    let mut envelope = vec![0.0; len];
    let mut t = (rng.random_range(0.0..0.1) * fs) as usize;
    while t < len {
        let dur = (rng.random_range(0.12..0.4) * fs) as usize;
        let ramp = (0.02 * fs) as usize;
        for i in 0..dur.min(len - t) {
            let rise = (i as f64 / ramp as f64).min(1.0);
            let fall = ((dur - i) as f64 / ramp as f64).min(1.0);
            envelope[t + i] = (0.5 - 0.5 * (PI * rise).cos()) * (0.5 - 0.5 * (PI * fall).cos());
        }
        t += dur + (rng.random_range(0.04..0.2) * fs) as usize;
    }

    let mut phase = 0.0;
    let mut seg = 0;
    for (n, o) in out.iter_mut().enumerate() {
        while anchors[seg + 1].0 <= n {
            seg += 1;
        }
        let (n0, f0a) = anchors[seg];
        let (n1, f0b) = anchors[seg + 1];
        let f0 = f0a + (f0b - f0a) * (n - n0) as f64 / (n1 - n0) as f64;
        phase += 2.0 * PI * f0 / fs;
        if envelope[n] == 0.0 {
            continue;
        }
        let mut acc = 0.0;
        let mut h = 1;
        while h as f64 * f0 < 4000.0 {
            let f = h as f64 * f0;
            let shape = 1.0 / (1.0 + ((f - formant) / 400.0).powi(2)) + 0.3 / h as f64;
            acc += shape * (h as f64 * phase).sin();
            h += 1;
        }
        *o = acc * envelope[n];
    }
    Waveform::new(normalize_rms(out, TARGET_RMS))
}

pub fn white_noise<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Waveform {
    let x = (0..len).map(|_| StandardNormal.sample(rng)).collect();
    Waveform::new(normalize_rms(x, TARGET_RMS))
}

/// Approximately 1/f noise from a bank of one-pole filters on white noise.
pub fn pink_noise<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Waveform {
    let mut b = [0.0f64; 7];
    let x = (0..len)
        .map(|_| {
            let w: f64 = StandardNormal.sample(rng);
            b[0] = 0.99886 * b[0] + w * 0.0555179;
            b[1] = 0.99332 * b[1] + w * 0.0750759;
            b[2] = 0.96900 * b[2] + w * 0.1538520;
            b[3] = 0.86650 * b[3] + w * 0.3104856;
            b[4] = 0.55000 * b[4] + w * 0.5329522;
            b[5] = -0.7616 * b[5] - w * 0.0168980;
            let y = b[..6].iter().sum::<f64>() + b[6] + w * 0.5362;
            b[6] = w * 0.115926;
            y
        })
        .collect();
    Waveform::new(normalize_rms(x, TARGET_RMS))
}

/// Exponentially decaying sparse reflections after a unit direct path. The
/// direct path sits at lag zero since free-field propagation already supplies
/// the source-to-microphone delay.
pub fn sparse_rir<R: Rng + ?Sized>(rng: &mut R, channels: usize, t60: f64) -> RoomImpulseResponse {
    let fs = SAMPLE_RATE as f64;
    let len = ((t60.min(0.6)) * fs) as usize + 1;
    let first_reflection = (0.002 * fs) as usize;
    let decay = 6.9 / (t60 * fs);
    let taps = (0..channels)
        .map(|_| {
            let mut h = vec![0.0; len];
            h[0] = 1.0;
            for (n, tap) in h.iter_mut().enumerate().skip(first_reflection) {
                if rng.random_bool(0.05) {
                    let g: f64 = StandardNormal.sample(rng);
                    *tap = 0.3 * g * (-decay * n as f64).exp();
                }
            }
            h
        })
        .collect();
    RoomImpulseResponse::new(taps, format!("synthetic sparse t60={t60:.2}s"))
        .expect("generated taps are finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generators_are_finite_and_scaled() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for w in [
            harmonic_speech(&mut rng, 16_000),
            white_noise(&mut rng, 16_000),
            pink_noise(&mut rng, 16_000),
        ] {
            w.check_finite().unwrap();
            let rms = (w.energy() / w.len() as f64).sqrt();
            assert!((rms - TARGET_RMS).abs() < 1e-9);
        }
        let rir = sparse_rir(&mut rng, 5, 0.4);
        assert_eq!(rir.num_channels(), 5);
        assert!(rir.taps.iter().all(|t| t[0] == 1.0));
    }

    #[test]
    fn speech_has_pauses() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = harmonic_speech(&mut rng, 32_000);
        assert!(w.samples.iter().filter(|v| **v == 0.0).count() > 1000);
    }
}
