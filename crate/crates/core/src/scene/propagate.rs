use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::geometry::{distance, ArrayGeometry, SourcePosition, SPEED_OF_SOUND};
use crate::error::{invalid, Result};
use crate::signal::{MultichannelWaveform, Waveform, SAMPLE_RATE};

/// Taps of the windowed-sinc fractional delay filter.
pub const FRACTIONAL_DELAY_TAPS: usize = 65;
const KAISER_BETA: f64 = 8.0;

/// Per-microphone room responses, applied after free-field propagation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomImpulseResponse {
    pub taps: Vec<Vec<f64>>,
    pub sample_rate: u32,
    /// Where the response came from (file path or generator description).
    #[serde(default)]
    pub source: String,
}

impl RoomImpulseResponse {
    pub fn new(taps: Vec<Vec<f64>>, source: impl Into<String>) -> Result<Self> {
        if taps.is_empty() || taps.iter().any(Vec::is_empty) {
            return Err(invalid!("room impulse response needs at least one tap per channel"));
        }
        if taps.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid!("room impulse response has non-finite taps"));
        }
        Ok(Self {
            taps,
            sample_rate: SAMPLE_RATE,
            source: source.into(),
        })
    }

    /// Unit impulse on every channel.
    pub fn identity(channels: usize) -> Self {
        Self {
            taps: vec![vec![1.0]; channels],
            sample_rate: SAMPLE_RATE,
            source: "identity".into(),
        }
    }

    pub fn num_channels(&self) -> usize {
        self.taps.len()
    }
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Kaiser-windowed sinc kernel for a delay of `frac` in [0, 1) samples. Tap
/// `j` multiplies the input sample `j - 32` positions behind the integer
/// delay. Normalized to unit DC gain.
fn fractional_kernel(frac: f64) -> [f64; FRACTIONAL_DELAY_TAPS] {
    let half = (FRACTIONAL_DELAY_TAPS / 2) as f64;
    let norm = bessel_i0(KAISER_BETA);
    let mut h = [0.0; FRACTIONAL_DELAY_TAPS];
    for (j, tap) in h.iter_mut().enumerate() {
        let t = j as f64 - half - frac;
        let r = t / (half + 1.0);
        let w = if r.abs() < 1.0 {
            bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm
        } else {
            0.0
        };
        *tap = sinc(t) * w;
    }
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Delays `x` by `delay` samples (non-negative, fractional allowed) and scales
/// by `gain`, keeping the input length.
pub fn fractional_delay(x: &[f64], delay: f64, gain: f64) -> Result<Vec<f64>> {
    if !(delay.is_finite() && delay >= 0.0) {
        return Err(invalid!("delay must be finite and non-negative, got {delay}"));
    }
    let whole = delay.floor();
    let kernel = fractional_kernel(delay - whole);
    let whole = whole as isize;
    let half = (FRACTIONAL_DELAY_TAPS / 2) as isize;
    let n = x.len() as isize;
    let mut out = vec![0.0; x.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let base = i as isize - whole + half;
        let mut acc = 0.0;
        for (j, &h) in kernel.iter().enumerate() {
            let p = base - j as isize;
            if (0..n).contains(&p) {
                acc += h * x[p as usize];
            }
        }
        *o = acc * gain;
    }
    Ok(out)
}

/// Options for free-field propagation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationOptions {
    pub speed_of_sound: f64,
    /// Scale each channel by the inverse source-to-microphone distance.
    pub inverse_distance_gain: bool,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self {
            speed_of_sound: SPEED_OF_SOUND,
            inverse_distance_gain: true,
        }
    }
}

/// Delay in samples and amplitude gain from a source to one point.
pub fn path_to(
    pos: &SourcePosition,
    point: &[f64; 3],
    opts: &PropagationOptions,
) -> Result<(f64, f64)> {
    let d = distance(&pos.cartesian(), point);
    if d < 1e-6 {
        return Err(invalid!("source coincides with a microphone"));
    }
    let delay = d / opts.speed_of_sound * SAMPLE_RATE as f64;
    let gain = if opts.inverse_distance_gain { 1.0 / d } else { 1.0 };
    Ok((delay, gain))
}

/// Free-field propagation of a point source to every microphone.
pub fn propagate_free_field(
    s: &Waveform,
    pos: &SourcePosition,
    geom: &ArrayGeometry,
    opts: &PropagationOptions,
) -> Result<MultichannelWaveform> {
    geom.validate()?;
    let channels = geom
        .mic_positions
        .iter()
        .map(|mic| {
            let (delay, gain) = path_to(pos, mic, opts)?;
            fractional_delay(&s.samples, delay, gain)
        })
        .collect::<Result<Vec<_>>>()?;
    MultichannelWaveform::new(channels)
}

/// Linear convolution of `x` with `h`, truncated to `x.len()` samples.
pub fn convolve_truncated(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 || h.is_empty() {
        return vec![0.0; n];
    }
    if h.len() <= 32 {
        let mut out = vec![0.0; n];
        for (i, o) in out.iter_mut().enumerate() {
            *o = h.iter().take(i + 1).enumerate().map(|(j, &t)| t * x[i - j]).sum();
        }
        return out;
    }
    let size = (n + h.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut a: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    a.resize(size, Complex64::new(0.0, 0.0));
    let mut b: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    b.resize(size, Complex64::new(0.0, 0.0));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    let scale = 1.0 / size as f64;
    a[..n].iter().map(|c| c.re * scale).collect()
}

/// Per-channel convolution with the room response, truncated to the input
/// length.
pub fn apply_rir(x: &MultichannelWaveform, rir: &RoomImpulseResponse) -> Result<MultichannelWaveform> {
    if x.num_channels() != rir.num_channels() {
        return Err(invalid!(
            "signal has {} channels, room response has {}",
            x.num_channels(),
            rir.num_channels()
        ));
    }
    if x.sample_rate != rir.sample_rate {
        return Err(invalid!(
            "sample rates differ: {} vs {}",
            x.sample_rate,
            rir.sample_rate
        ));
    }
    MultichannelWaveform::new(
        x.channels
            .iter()
            .zip(&rir.taps)
            .map(|(c, h)| convolve_truncated(c, h))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|i| (0..h.len()).filter(|&j| j <= i).map(|j| h[j] * x[i - j]).sum())
            .collect()
    }

    #[test]
    fn bessel_matches_known_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-12);
    }

    #[test]
    fn integer_delay_is_a_shift() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let y = fractional_delay(&x, 7.0, 1.0).unwrap();
        for i in 0..100 {
            let expected = if i >= 7 { x[i - 7] } else { 0.0 };
            assert!((y[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_impulse_rir_is_identity() {
        let x = MultichannelWaveform::new(vec![vec![1.0, -2.0, 3.0]; 5]).unwrap();
        assert_eq!(apply_rir(&x, &RoomImpulseResponse::identity(5)).unwrap(), x);
    }

    #[test]
    fn delta_rir_delays() {
        let x = MultichannelWaveform::new(vec![(1..=10).map(f64::from).collect()]).unwrap();
        let mut taps = vec![0.0; 4];
        taps[3] = 1.0;
        let rir = RoomImpulseResponse::new(vec![taps], "delta").unwrap();
        let y = apply_rir(&x, &rir).unwrap();
        assert_eq!(y.channels[0], vec![0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn fft_convolution_matches_direct_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..3000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = convolve_truncated(&x, &h);
        let slow = brute_convolve(&x, &h);
        let max = fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(max <= 1e-10, "max diff {max}");
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let x = MultichannelWaveform::zeros(5, 10);
        assert!(apply_rir(&x, &RoomImpulseResponse::identity(4)).is_err());
    }

    #[test]
    fn coincident_source_is_rejected() {
        let mut geom = ArrayGeometry::default();
        geom.mic_positions[0] = [0.0, 0.0, 0.0];
        geom.mic_positions[4] = [0.05, 0.0, 0.0];
        // put a source exactly on the centre microphone position
        let pos = SourcePosition {
            azimuth: 0.0,
            elevation: 0.0,
            distance: 0.05,
        };
        let s = Waveform::new(vec![1.0; 100]);
        assert!(propagate_free_field(&s, &pos, &geom, &PropagationOptions::default()).is_err());
    }
}
