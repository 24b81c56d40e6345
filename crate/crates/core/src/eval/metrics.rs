use std::path::PathBuf;
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::signal::{write_wav, MultichannelWaveform, SampleFormat, Waveform};

/// Bound applied to SI-SDR so that perfect or silent estimates stay finite.
pub const SI_SDR_CAP_DB: f64 = 60.0;

/// Scale-invariant signal-to-distortion ratio in dB, clamped to
/// `[-SI_SDR_CAP_DB, SI_SDR_CAP_DB]`.
pub fn si_sdr(estimate: &Waveform, reference: &Waveform) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(invalid!(
            "estimate has {} samples, reference has {}",
            estimate.len(),
            reference.len()
        ));
    }
    let rr: f64 = reference.energy();
    if rr == 0.0 {
        return Err(Error::DegenerateInput("SI-SDR reference is silent".into()));
    }
    let er: f64 = estimate.samples.iter().zip(&reference.samples).map(|(e, r)| e * r).sum();
    let a = er / rr;
    let (mut target, mut noise) = (0.0, 0.0);
    for (e, r) in estimate.samples.iter().zip(&reference.samples) {
        let t = a * r;
        target += t * t;
        noise += (e - t) * (e - t);
    }
    let db = if target == 0.0 {
        -SI_SDR_CAP_DB
    } else if noise == 0.0 {
        SI_SDR_CAP_DB
    } else {
        10.0 * (target / noise).log10()
    };
    if db.is_nan() {
        return Err(Error::NonFinite("SI-SDR of non-finite signals".into()));
    }
    Ok(db.clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

/// External wideband PESQ scorer, run as `program [args..] ref.wav deg.wav`.
/// It must print a single score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PesqAdapter {
    pub program: PathBuf,
    #[serde(default)]
    pub args: Vec<String>,
}

impl PesqAdapter {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        Self {
            program: program.into(),
            args: Vec::new(),
        }
    }

    pub fn score(&self, estimate: &Waveform, reference: &Waveform) -> Result<f64> {
        let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let (r, d) = (dir.path().join("ref.wav"), dir.path().join("deg.wav"));
        for (path, w) in [(&r, reference), (&d, estimate)] {
            let mc = MultichannelWaveform::new(vec![w.samples.clone()])?;
            write_wav(path, &mc, SampleFormat::Pcm16)?;
        }
        let out = Command::new(&self.program)
            .args(&self.args)
            .arg(&r)
            .arg(&d)
            .output()
            .map_err(|e| Error::Adapter(format!("cannot run {}: {e}", self.program.display())))?;
        if !out.status.success() {
            return Err(Error::Adapter(format!(
                "{} exited with {}: {}",
                self.program.display(),
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        parse_score(&String::from_utf8_lossy(&out.stdout))
    }
}

pub(crate) fn parse_score(stdout: &str) -> Result<f64> {
    let text = stdout.trim();
    let v: f64 = text
        .parse()
        .map_err(|_| Error::Adapter(format!("expected a single score, got {text:?}")))?;
    if !(-0.5..=4.5).contains(&v) {
        return Err(Error::Adapter(format!("score {v} outside [-0.5, 4.5]")));
    }
    Ok(v)
}

/// Median (mean of the middle pair for even counts) and population variance.
pub fn median_and_variance(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    Some((median, var))
}

/// Per-example values of one metric for one model and SNR bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: String,
    pub model: String,
    pub snr_db: Option<f64>,
    pub values: Vec<f64>,
    pub median: Option<f64>,
    /// Population variance.
    pub variance: Option<f64>,
    /// Per-example failures, keyed by example index.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<(usize, String)>,
}

impl MetricResult {
    pub fn new(metric: &str, model: &str, snr_db: Option<f64>, values: Vec<f64>, errors: Vec<(usize, String)>) -> Self {
        let stats = median_and_variance(&values);
        Self {
            metric: metric.to_string(),
            model: model.to_string(),
            snr_db,
            median: stats.map(|s| s.0),
            variance: stats.map(|s| s.1),
            values,
            errors,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(v: Vec<f64>) -> Waveform {
        Waveform::new(v)
    }

    #[test]
    fn perfect_and_scaled_estimates_hit_the_cap() {
        let s = wave((0..100).map(|i| (i as f64 * 0.2).sin()).collect());
        assert_eq!(si_sdr(&s, &s).unwrap(), SI_SDR_CAP_DB);
        let twice = wave(s.samples.iter().map(|v| 2.0 * v).collect());
        assert_eq!(si_sdr(&twice, &s).unwrap(), SI_SDR_CAP_DB);
        assert!(matches!(si_sdr(&s, &wave(vec![0.0; 100])), Err(Error::DegenerateInput(_))));
        assert_eq!(si_sdr(&wave(vec![0.0; 100]), &s).unwrap(), -SI_SDR_CAP_DB);
    }

    #[test]
    fn orthogonal_noise_at_tenth_energy_is_10_db() {
        // alternating-sign pairs are orthogonal to a signal constant over pairs
        let s: Vec<f64> = (0..200).map(|i| ((i / 2) as f64 * 0.3).cos() + 1.5).collect();
        let raw: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } * (1.0 + (i / 2) as f64 * 0.01)).collect();
        let es: f64 = s.iter().map(|v| v * v).sum();
        let dot: f64 = s.iter().zip(&raw).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-9);
        let en: f64 = raw.iter().map(|v| v * v).sum();
        let g = (0.1 * es / en).sqrt();
        let est: Vec<f64> = s.iter().zip(&raw).map(|(a, b)| a + g * b).collect();
        assert!((si_sdr(&wave(est), &wave(s)).unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn aggregation_matches_brute_force() {
        let vals = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0];
        let (m, v) = median_and_variance(&vals).unwrap();
        assert_eq!(m, 3.5);
        let mean = 23.0 / 6.0;
        let var: f64 = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 6.0;
        assert!((v - var).abs() < 1e-15);
        assert_eq!(median_and_variance(&[2.0, 7.0, 1.0]).unwrap().0, 2.0);
        assert!(median_and_variance(&[]).is_none());
    }

    #[test]
    fn score_parsing() {
        assert_eq!(parse_score(" 3.25\n").unwrap(), 3.25);
        assert!(matches!(parse_score("MOS-LQO: 3.1"), Err(Error::Adapter(_))));
        assert!(parse_score("7.0").is_err());
    }
}
