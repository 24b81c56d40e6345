use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::check_finite;
use crate::error::{invalid, Error, Result};

/// Square root of the periodic Hann window.
///
/// The squared window is the periodic Hann window, so shifted copies at half
/// the frame length overlap-add to exactly one.
pub fn build_sqrt_hann(frame_length: usize) -> Result<Vec<f64>> {
    if frame_length < 2 || frame_length % 2 != 0 {
        return Err(invalid!(
            "frame length must be even and at least 2, got {frame_length}"
        ));
    }
    let n = frame_length as f64;
    Ok((0..frame_length)
        .map(|i| {
            let hann = 0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos();
            hann.max(0.0).sqrt()
        })
        .collect())
}

/// Frame geometry of the STFT: sqrt-Hann analysis and synthesis windows at
/// 50% overlap.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StftParams", into = "StftParams")]
pub struct StftConfig {
    frame_length: usize,
    frame_shift: usize,
    window: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StftParams {
    frame_length: usize,
}

impl TryFrom<StftParams> for StftConfig {
    type Error = Error;

    fn try_from(p: StftParams) -> Result<Self> {
        StftConfig::new(p.frame_length)
    }
}

impl From<StftConfig> for StftParams {
    fn from(c: StftConfig) -> Self {
        StftParams {
            frame_length: c.frame_length,
        }
    }
}

impl StftConfig {
    /// 512 samples (32 ms) at 16 kHz.
    pub const DEFAULT_FRAME_LENGTH: usize = 512;

    pub fn new(frame_length: usize) -> Result<Self> {
        let window = build_sqrt_hann(frame_length)?;
        Ok(Self {
            frame_length,
            frame_shift: frame_length / 2,
            window,
        })
    }

    pub fn frame_length(&self) -> usize {
        self.frame_length
    }

    pub fn frame_shift(&self) -> usize {
        self.frame_shift
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Number of one-sided frequency bins.
    pub fn bins(&self) -> usize {
        self.frame_length / 2 + 1
    }

    /// Frames produced for a signal of `len` samples.
    ///
    /// The signal is zero-padded by one frame shift on both ends, and the tail
    /// is padded further until the last frame is complete.
    pub fn frames_for(&self, len: usize) -> usize {
        len.div_ceil(self.frame_shift) + 1
    }
}

impl Default for StftConfig {
    fn default() -> Self {
        Self::new(Self::DEFAULT_FRAME_LENGTH).expect("default frame length is valid")
    }
}

impl fmt::Debug for StftConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StftConfig")
            .field("frame_length", &self.frame_length)
            .field("frame_shift", &self.frame_shift)
            .finish()
    }
}

/// One-sided complex STFT coefficients, stored frame-major: `data[l * bins + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub bins: usize,
    pub frames: usize,
    /// Length of the analyzed signal, used to trim the synthesis output.
    pub source_len: usize,
    pub data: Vec<Complex64>,
}

impl Spectrogram {
    pub fn zeros(bins: usize, frames: usize, source_len: usize) -> Self {
        Self {
            bins,
            frames,
            source_len,
            data: vec![Complex64::new(0.0, 0.0); bins * frames],
        }
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize) -> Complex64 {
        self.data[l * self.bins + k]
    }

    #[inline]
    pub fn set(&mut self, k: usize, l: usize, v: Complex64) {
        self.data[l * self.bins + k] = v;
    }

    pub fn frame(&self, l: usize) -> &[Complex64] {
        &self.data[l * self.bins..(l + 1) * self.bins]
    }

    pub fn same_shape(&self, other: &Spectrogram) -> bool {
        self.bins == other.bins && self.frames == other.frames
    }
}

/// Planned STFT engine. Cheap to clone and safe to share across threads.
#[derive(Clone)]
pub struct Stft {
    cfg: StftConfig,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Stft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Stft").field(&self.cfg).finish()
    }
}

impl Default for Stft {
    fn default() -> Self {
        Self::new(StftConfig::default())
    }
}

impl Stft {
    pub fn new(cfg: StftConfig) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(cfg.frame_length);
        let inverse = planner.plan_fft_inverse(cfg.frame_length);
        Self {
            cfg,
            forward,
            inverse,
        }
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    fn padded(&self, x: &[f64]) -> Vec<f64> {
        let frames = self.cfg.frames_for(x.len());
        let hop = self.cfg.frame_shift;
        let mut padded = vec![0.0; (frames - 1) * hop + self.cfg.frame_length];
        padded[hop..hop + x.len()].copy_from_slice(x);
        padded
    }

    /// Forward transform, unnormalized.
    pub fn analyze(&self, x: &[f64]) -> Result<Spectrogram> {
        if x.is_empty() {
            return Err(invalid!("cannot analyze an empty signal"));
        }
        check_finite(x)?;
        let n = self.cfg.frame_length;
        let hop = self.cfg.frame_shift;
        let bins = self.cfg.bins();
        let frames = self.cfg.frames_for(x.len());
        let padded = self.padded(x);

        let mut out = Spectrogram::zeros(bins, frames, x.len());
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        for l in 0..frames {
            let seg = &padded[l * hop..l * hop + n];
            for ((b, &s), &w) in buf.iter_mut().zip(seg).zip(&self.cfg.window) {
                *b = Complex64::new(s * w, 0.0);
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            out.data[l * bins..(l + 1) * bins].copy_from_slice(&buf[..bins]);
        }
        Ok(out)
    }

    /// Inverse transform by windowed overlap-add; the output has the length of
    /// the originally analyzed signal.
    pub fn synthesize(&self, spec: &Spectrogram) -> Result<Vec<f64>> {
        let n = self.cfg.frame_length;
        let hop = self.cfg.frame_shift;
        let bins = self.cfg.bins();
        if spec.bins != bins || spec.data.len() != bins * spec.frames {
            return Err(invalid!(
                "spectrogram has {} bins, config expects {bins}",
                spec.bins
            ));
        }
        if spec.frames != self.cfg.frames_for(spec.source_len) {
            return Err(invalid!(
                "{} frames cannot come from a {}-sample signal",
                spec.frames,
                spec.source_len
            ));
        }
        let mut out = vec![0.0; (spec.frames - 1) * hop + n];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        let scale = 1.0 / n as f64;
        for l in 0..spec.frames {
            let frame = spec.frame(l);
            buf[..bins].copy_from_slice(frame);
            for k in 1..bins - 1 {
                buf[n - k] = frame[k].conj();
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let seg = &mut out[l * hop..l * hop + n];
            for ((o, b), &w) in seg.iter_mut().zip(&buf).zip(&self.cfg.window) {
                *o += b.re * scale * w;
            }
        }
        Ok(out[hop..hop + spec.source_len].to_vec())
    }

    /// Adjoint of [`Stft::analyze`] as a real-linear map.
    ///
    /// `grad[(k, l)]` holds `dL/dRe + i dL/dIm` of each coefficient; the result
    /// is `dL/dx` for a signal of `len` samples.
    pub fn analyze_adjoint(&self, grad: &Spectrogram) -> Vec<f64> {
        let n = self.cfg.frame_length;
        let hop = self.cfg.frame_shift;
        let bins = self.cfg.bins();
        let mut padded = vec![0.0; (grad.frames - 1) * hop + n];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        for l in 0..grad.frames {
            buf.fill(Complex64::new(0.0, 0.0));
            buf[..bins].copy_from_slice(grad.frame(l));
            // unnormalized inverse FFT computes sum_k G_k e^{+2 pi i k n / N}
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let seg = &mut padded[l * hop..l * hop + n];
            for ((o, b), &w) in seg.iter_mut().zip(&buf).zip(&self.cfg.window) {
                *o += b.re * w;
            }
        }
        padded[hop..hop + grad.source_len].to_vec()
    }

    /// Adjoint of [`Stft::synthesize`]: maps `dL/dy` to per-coefficient
    /// `dL/dRe + i dL/dIm`.
    pub fn synthesize_adjoint(&self, grad: &[f64]) -> Spectrogram {
        let n = self.cfg.frame_length;
        let hop = self.cfg.frame_shift;
        let bins = self.cfg.bins();
        let frames = self.cfg.frames_for(grad.len());
        let mut padded = vec![0.0; (frames - 1) * hop + n];
        padded[hop..hop + grad.len()].copy_from_slice(grad);
        let mut out = Spectrogram::zeros(bins, frames, grad.len());
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        let inv_n = 1.0 / n as f64;
        for l in 0..frames {
            let seg = &padded[l * hop..l * hop + n];
            for ((b, &g), &w) in buf.iter_mut().zip(seg).zip(&self.cfg.window) {
                *b = Complex64::new(g * w, 0.0);
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            let dst = &mut out.data[l * bins..(l + 1) * bins];
            for (k, (d, b)) in dst.iter_mut().zip(&buf).enumerate() {
                // DC and Nyquist appear once in the Hermitian extension, the rest twice
                let weight = if k == 0 || k == bins - 1 { 1.0 } else { 2.0 };
                *d = b * (weight * inv_n);
            }
        }
        out
    }
}

/// One-shot forward transform.
pub fn stft(x: &super::Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    Stft::new(cfg.clone()).analyze(&x.samples)
}

/// One-shot inverse transform.
pub fn istft(spec: &Spectrogram, cfg: &StftConfig) -> Result<super::Waveform> {
    Ok(super::Waveform::new(Stft::new(cfg.clone()).synthesize(spec)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct O(N^2) DFT of one windowed frame.
    fn dft_frame(frame: &[f64], window: &[f64], k: usize) -> Complex64 {
        let n = frame.len() as f64;
        frame
            .iter()
            .zip(window)
            .enumerate()
            .map(|(i, (&x, &w))| {
                let ang = -2.0 * PI * (k * i) as f64 / n;
                Complex64::new(ang.cos(), ang.sin()) * (x * w)
            })
            .sum()
    }

    fn random_signal(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn sqrt_hann_small_case() {
        let w = build_sqrt_hann(4).unwrap();
        let expected = [0.0f64, 0.5, 1.0, 0.5].map(f64::sqrt);
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(w[0], 0.0);
    }

    #[test]
    fn sqrt_hann_rejects_bad_lengths() {
        assert!(build_sqrt_hann(0).is_err());
        assert!(build_sqrt_hann(7).is_err());
        assert!(StftConfig::new(511).is_err());
    }

    #[test]
    fn squared_window_overlap_adds_to_one() {
        let w = build_sqrt_hann(512).unwrap();
        let hop = 256;
        for n in 0..hop {
            let sum = w[n] * w[n] + w[n + hop] * w[n + hop];
            assert!((sum - 1.0).abs() < 1e-12, "n={n} sum={sum}");
        }
    }

    #[test]
    fn default_config_shape() {
        let cfg = StftConfig::default();
        assert_eq!(cfg.bins(), 257);
        assert_eq!(cfg.frame_shift() * 2, cfg.frame_length());
        assert_eq!(cfg.frames_for(64_000), 251);
    }

    #[test]
    fn zero_signal_gives_zero_spectrum() {
        let x = super::super::Waveform::zeros(16_000);
        let cfg = StftConfig::default();
        let s = stft(&x, &cfg).unwrap();
        assert_eq!(s.frames, cfg.frames_for(16_000));
        assert!(s.data.iter().all(|c| c.norm() == 0.0));
        let y = istft(&s, &cfg).unwrap();
        assert!(y.samples.iter().all(|&v| v == 0.0));
        assert_eq!(y.len(), 16_000);
    }

    #[test]
    fn rejects_empty_and_nan() {
        let stft = Stft::default();
        assert!(stft.analyze(&[]).is_err());
        assert!(stft.analyze(&[0.0, f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn synthesize_rejects_foreign_shapes() {
        let stft = Stft::default();
        let spec = Spectrogram::zeros(129, 10, 2000);
        assert!(stft.synthesize(&spec).is_err());
        let spec = Spectrogram::zeros(257, 5, 16_000);
        assert!(stft.synthesize(&spec).is_err());
    }

    #[test]
    fn bin_centered_sinusoid_matches_direct_dft() {
        let cfg = StftConfig::default();
        let stft = Stft::new(cfg.clone());
        let k0 = 20;
        let f = k0 as f64 * 16_000.0 / 512.0;
        let x: Vec<f64> = (0..8000)
            .map(|n| (2.0 * PI * f * n as f64 / 16_000.0).sin())
            .collect();
        let spec = stft.analyze(&x).unwrap();
        let l = 10;
        let start = l * 256 - 256;
        let frame = &x[start..start + 512];
        for k in [k0 - 1, k0, k0 + 1, k0 + 2] {
            let oracle = dft_frame(frame, cfg.window(), k);
            assert!((spec.get(k, l) - oracle).norm() < 1e-9);
        }
        let mags: Vec<f64> = (0..cfg.bins()).map(|k| spec.get(k, l).norm()).collect();
        let peak = mags
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, k0);
        let oracle_ratio =
            dft_frame(frame, cfg.window(), k0 + 1).norm() / dft_frame(frame, cfg.window(), k0).norm();
        assert!((mags[k0 + 1] / mags[k0] - oracle_ratio).abs() < 1e-9);
        // sqrt-Hann main lobe: the first neighbour keeps roughly 1/3 of the peak.
        assert!((oracle_ratio - 1.0 / 3.0).abs() < 0.01, "{oracle_ratio}");
    }

    #[test]
    fn linearity_under_scaling_and_superposition() {
        let stft = Stft::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_signal(&mut rng, 5000);
        let b = random_signal(&mut rng, 5000);
        let sa = stft.analyze(&a).unwrap();
        let sb = stft.analyze(&b).unwrap();
        let scaled: Vec<f64> = a.iter().map(|v| 2.5 * v).collect();
        let ss = stft.analyze(&scaled).unwrap();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - 0.7 * y).collect();
        let ssum = stft.analyze(&sum).unwrap();
        let norm: f64 = sa.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let err_scale: f64 = ss
            .data
            .iter()
            .zip(&sa.data)
            .map(|(x, y)| (x - y * 2.5).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let err_sum: f64 = ssum
            .data
            .iter()
            .zip(sa.data.iter().zip(&sb.data))
            .map(|(x, (p, q))| (x - (p - q * 0.7)).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err_scale / (2.5 * norm) < 1e-12);
        assert!(err_sum / norm < 1e-12);
    }

    #[test]
    fn parseval_per_frame() {
        let cfg = StftConfig::default();
        let stft = Stft::new(cfg.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_signal(&mut rng, 4000);
        let spec = stft.analyze(&x).unwrap();
        let mut padded = vec![0.0; 256];
        padded.extend_from_slice(&x);
        padded.resize((spec.frames - 1) * 256 + 512, 0.0);
        for l in 0..spec.frames {
            let time: f64 = padded[l * 256..l * 256 + 512]
                .iter()
                .zip(cfg.window())
                .map(|(s, w)| (s * w).powi(2))
                .sum();
            let frame = spec.frame(l);
            let freq: f64 = frame
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    let weight = if k == 0 || k == 256 { 1.0 } else { 2.0 };
                    weight * c.norm_sqr()
                })
                .sum::<f64>()
                / 512.0;
            assert!((time - freq).abs() <= 1e-9 * time.max(1e-30), "frame {l}");
        }
    }

    #[test]
    fn round_trip_reconstructs_interior() {
        let stft = Stft::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_signal(&mut rng, 64_000);
        let y = stft.synthesize(&stft.analyze(&x).unwrap()).unwrap();
        assert_eq!(y.len(), x.len());
        let err: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(err / norm <= 1e-6, "relative error {}", err / norm);
    }

    #[test]
    fn single_frame_impulse_follows_squared_window() {
        // A spectrum that is flat in one frame is the transform of an impulse at
        // that frame's start; synthesis weights it by the window squared at
        // offset zero. Probe every offset with a direct impulse instead.
        let cfg = StftConfig::new(16).unwrap();
        let stft = Stft::new(cfg.clone());
        let len = 64;
        for pos in 0..len {
            let mut x = vec![0.0; len];
            x[pos] = 1.0;
            let spec = stft.analyze(&x).unwrap();
            // synthesize only frame l and compare to the window-squared weight
            let p = pos + 8;
            for l in 0..spec.frames {
                let mut single = Spectrogram::zeros(spec.bins, spec.frames, len);
                single.data[l * spec.bins..(l + 1) * spec.bins].copy_from_slice(spec.frame(l));
                let y = stft.synthesize(&single).unwrap();
                let expected = if p >= l * 8 && p < l * 8 + 16 {
                    let w = cfg.window()[p - l * 8];
                    w * w
                } else {
                    0.0
                };
                assert!((y[pos] - expected).abs() < 1e-12, "pos {pos} frame {l}");
            }
        }
    }

    #[test]
    fn adjoints_satisfy_dot_product_identity() {
        let cfg = StftConfig::new(16).unwrap();
        let stft = Stft::new(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_signal(&mut rng, 50);
        let spec = stft.analyze(&x).unwrap();
        let mut g = Spectrogram::zeros(spec.bins, spec.frames, x.len());
        for c in g.data.iter_mut() {
            *c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        // <A x, g> over the real pairing equals <x, A* g>
        let lhs: f64 = spec.data.iter().zip(&g.data).map(|(a, b)| a.re * b.re + a.im * b.im).sum();
        let ax = stft.analyze_adjoint(&g);
        let rhs: f64 = x.iter().zip(&ax).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));

        let y = stft.synthesize(&g).unwrap();
        let h = random_signal(&mut rng, y.len());
        let lhs: f64 = y.iter().zip(&h).map(|(a, b)| a * b).sum();
        let sh = stft.synthesize_adjoint(&h);
        let rhs: f64 = g.data.iter().zip(&sh.data).map(|(a, b)| a.re * b.re + a.im * b.im).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }
}
