use rustfft::num_complex::Complex64;

use super::{sign, TapGrid};
use crate::error::{invalid, Result};
use crate::model::{apply_mask, ComplexMask};
use crate::signal::{Spectrogram, Stft, Waveform};

/// Weight of the hard loss in the combined objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
}

impl LossWeights {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(invalid!("alpha must lie in [0, 1], got {alpha}"));
        }
        Ok(Self { alpha })
    }

    pub const SOFT_ONLY: LossWeights = LossWeights { alpha: 0.0 };
    pub const HARD_ONLY: LossWeights = LossWeights { alpha: 1.0 };
}

/// `alpha * hard + (1 - alpha) * soft`.
pub fn combined_loss(hard: f64, soft: f64, w: LossWeights) -> Result<f64> {
    LossWeights::new(w.alpha)?;
    if !hard.is_finite() || !soft.is_finite() {
        return Err(invalid!("loss terms must be finite, got {hard} and {soft}"));
    }
    Ok(w.alpha * hard + (1.0 - w.alpha) * soft)
}

fn check_pair(s_hat: &Waveform, s: &Waveform) -> Result<()> {
    if s_hat.len() != s.len() {
        return Err(invalid!(
            "estimate has {} samples, reference has {}",
            s_hat.len(),
            s.len()
        ));
    }
    if s.is_empty() {
        return Err(invalid!("hard loss of empty signals"));
    }
    if s_hat.samples.iter().chain(&s.samples).any(|v| !v.is_finite()) {
        return Err(invalid!("hard loss inputs contain non-finite samples"));
    }
    Ok(())
}

/// Mean absolute sample error plus mean absolute STFT magnitude error.
pub fn hard_loss(s_hat: &Waveform, s: &Waveform, stft: &Stft) -> Result<f64> {
    Ok(hard_loss_grad(s_hat, s, stft)?.0)
}

/// [`hard_loss`] and its gradient with respect to `s_hat`.
pub fn hard_loss_grad(s_hat: &Waveform, s: &Waveform, stft: &Stft) -> Result<(f64, Vec<f64>)> {
    check_pair(s_hat, s)?;
    let n = s.len() as f64;
    let mut time = 0.0;
    let mut grad: Vec<f64> = s_hat
        .samples
        .iter()
        .zip(&s.samples)
        .map(|(a, b)| {
            time += (a - b).abs();
            sign(a - b) / n
        })
        .collect();
    let (mag, spec_grad) = magnitude_term(&stft.analyze(&s_hat.samples)?, &stft.analyze(&s.samples)?);
    for (g, d) in grad.iter_mut().zip(stft.analyze_adjoint(&spec_grad)) {
        *g += d;
    }
    Ok((time / n + mag, grad))
}

/// Mean of `||A| - |B||` and its gradient with respect to `A`.
fn magnitude_term(a: &Spectrogram, b: &Spectrogram) -> (f64, Spectrogram) {
    let count = a.data.len() as f64;
    let mut grad = Spectrogram::zeros(a.bins, a.frames, a.source_len);
    let mut total = 0.0;
    for ((g, x), y) in grad.data.iter_mut().zip(&a.data).zip(&b.data) {
        let (mx, my) = (x.norm(), y.norm());
        total += (mx - my).abs();
        if mx > 0.0 {
            *g = x * (sign(mx - my) / (count * mx));
        }
    }
    (total / count, grad)
}

/// Hard loss of the masked reference spectrogram against the clean target.
///
/// Returns the loss, its gradient with respect to the mask as `rows x 2`
/// (real, imaginary) and the enhanced waveform.
pub fn masked_hard_loss(
    stft: &Stft,
    mask: &ComplexMask,
    y_ref: &Spectrogram,
    s: &Waveform,
) -> Result<(f64, Vec<f64>, Waveform)> {
    let enhanced = apply_mask(mask, y_ref)?;
    let s_hat = Waveform { samples: stft.synthesize(&enhanced)?, sample_rate: s.sample_rate };
    let (loss, d_time) = hard_loss_grad(&s_hat, s, stft)?;
    let d_spec = stft.synthesize_adjoint(&d_time);
    let mut d_mask = Vec::with_capacity(2 * mask.data.len());
    for (g, y) in d_spec.data.iter().zip(&y_ref.data) {
        let d: Complex64 = g * y.conj();
        d_mask.push(d.re);
        d_mask.push(d.im);
    }
    Ok((loss, d_mask, s_hat))
}

fn check_same_shape(t: &TapGrid, s: &TapGrid) -> Result<()> {
    if t.rows != s.rows || t.cols != s.cols {
        return Err(invalid!(
            "direct fusion needs equal tap shapes, teacher {}x{} vs student {}x{}",
            t.rows,
            t.cols,
            s.rows,
            s.cols
        ));
    }
    if t.data.is_empty() {
        return Err(invalid!("empty tap"));
    }
    t.check_finite("teacher tap")?;
    s.check_finite("student tap")
}

/// Mean absolute difference between two equally shaped taps.
pub fn soft_loss_direct(z_t: &TapGrid, z_s: &TapGrid) -> Result<f64> {
    Ok(soft_loss_direct_grad(z_t, z_s)?.0)
}

/// [`soft_loss_direct`] and its gradient with respect to the student tap.
pub fn soft_loss_direct_grad(z_t: &TapGrid, z_s: &TapGrid) -> Result<(f64, TapGrid)> {
    check_same_shape(z_t, z_s)?;
    let n = z_t.data.len() as f64;
    let mut total = 0.0;
    let grad = z_s
        .data
        .iter()
        .zip(&z_t.data)
        .map(|(s, t)| {
            total += (s - t).abs();
            sign(s - t) / n
        })
        .collect();
    Ok((total / n, TapGrid::new(z_s.rows, z_s.cols, grad)?))
}
