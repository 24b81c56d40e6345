use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{soft_loss_direct_grad, soft_loss_selfsim_grad, GramOptions, TapGrid};
use crate::error::{invalid, Error, Result};
use crate::model::{IntermediateTaps, Real, TapGrads};

/// A network output that distillation can match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    FLstm,
    TLstm,
    Linear,
    Mask,
}

impl Layer {
    pub const ALL: [Layer; 4] = [Layer::FLstm, Layer::TLstm, Layer::Linear, Layer::Mask];

    pub fn name(self) -> &'static str {
        match self {
            Layer::FLstm => "flstm",
            Layer::TLstm => "tlstm",
            Layer::Linear => "linear",
            Layer::Mask => "mask",
        }
    }
}

/// How a teacher tap is compared to the student tap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    Direct,
    SelfSimilarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdMethod {
    Mask,
    Linear,
    FLstm,
    TLstm,
    Multi,
}

impl KdMethod {
    pub const ALL: [KdMethod; 5] = [
        KdMethod::Mask,
        KdMethod::Linear,
        KdMethod::FLstm,
        KdMethod::TLstm,
        KdMethod::Multi,
    ];

    /// The taps this method compares and how.
    pub fn terms(self) -> &'static [(Layer, Fusion)] {
        use Fusion::*;
        match self {
            KdMethod::Mask => &[(Layer::Mask, Direct)],
            KdMethod::Linear => &[(Layer::Linear, Direct)],
            KdMethod::FLstm => &[(Layer::FLstm, SelfSimilarity)],
            KdMethod::TLstm => &[(Layer::TLstm, SelfSimilarity)],
            KdMethod::Multi => &[
                (Layer::FLstm, SelfSimilarity),
                (Layer::TLstm, SelfSimilarity),
                (Layer::Linear, SelfSimilarity),
            ],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KdMethod::Mask => "mask",
            KdMethod::Linear => "linear",
            KdMethod::FLstm => "flstm",
            KdMethod::TLstm => "tlstm",
            KdMethod::Multi => "multi",
        }
    }

    /// Parses a method name, where `none` means no distillation.
    pub fn parse_optional(s: &str) -> Result<Option<KdMethod>> {
        if s.trim().eq_ignore_ascii_case("none") {
            Ok(None)
        } else {
            s.parse().map(Some)
        }
    }
}

impl fmt::Display for KdMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KdMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| *c != '-' && *c != '_')
            .collect();
        KdMethod::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| invalid!("unknown KD method {s:?}, expected mask, linear, flstm, tlstm, multi or none"))
    }
}

/// Result of one soft-loss evaluation.
#[derive(Debug, Clone)]
pub struct SoftLossOutput<T> {
    pub value: f64,
    /// Value of every term in evaluation order.
    pub terms: Vec<(Layer, Fusion, f64)>,
    /// Taps that were read from both networks, with the fusion applied.
    pub engaged: Vec<(Layer, Fusion)>,
    /// Gradient of `value` with respect to the student taps.
    pub grads: TapGrads<T>,
}

/// Reads taps and records every access.
struct TapReader<'a, T> {
    taps: &'a IntermediateTaps<T>,
    reads: Vec<Layer>,
}

impl<'a, T: Real> TapReader<'a, T> {
    fn new(taps: &'a IntermediateTaps<T>) -> Self {
        Self { taps, reads: Vec::new() }
    }

    fn read(&mut self, layer: Layer) -> Result<TapGrid> {
        self.reads.push(layer);
        let rows = self.taps.rows();
        let data = match layer {
            Layer::FLstm => &self.taps.z_f,
            Layer::TLstm => &self.taps.z_t,
            Layer::Linear => &self.taps.z_lin,
            Layer::Mask => &self.taps.mask,
        };
        if rows == 0 || data.len() % rows != 0 {
            return Err(invalid!("{} tap does not divide into {rows} rows", layer.name()));
        }
        TapGrid::from_real(rows, data.len() / rows, data)
    }
}

/// Soft distillation loss of `method`, summed over its terms with equal
/// weights.
pub fn kd_soft_loss<T: Real>(
    method: KdMethod,
    teacher: &IntermediateTaps<T>,
    student: &IntermediateTaps<T>,
    gram: &GramOptions,
) -> Result<SoftLossOutput<T>> {
    let mut t_reader = TapReader::new(teacher);
    let mut s_reader = TapReader::new(student);
    let mut out = SoftLossOutput {
        value: 0.0,
        terms: Vec::new(),
        engaged: Vec::new(),
        grads: TapGrads::default(),
    };
    for &(layer, fusion) in method.terms() {
        let zt = t_reader.read(layer)?;
        let zs = s_reader.read(layer)?;
        let (value, grad) = match fusion {
            Fusion::Direct => soft_loss_direct_grad(&zt, &zs)
                .map_err(|e| Error::Config(format!("KD {method} on the {} tap: {e}", layer.name())))?,
            Fusion::SelfSimilarity => soft_loss_selfsim_grad(&zt, &zs, gram)?,
        };
        out.value += value;
        out.terms.push((layer, fusion, value));
        out.engaged.push((layer, fusion));
        let slot = match layer {
            Layer::FLstm => &mut out.grads.z_f,
            Layer::TLstm => &mut out.grads.z_t,
            Layer::Linear => &mut out.grads.z_lin,
            Layer::Mask => &mut out.grads.mask,
        };
        let g: Vec<T> = grad.to_real();
        match slot {
            Some(existing) => existing.iter_mut().zip(g).for_each(|(a, b)| *a = *a + b),
            None => *slot = Some(g),
        }
    }
    debug_assert_eq!(t_reader.reads, s_reader.reads);
    Ok(out)
}

/// Self-similarity losses of the F-LSTM, T-LSTM and linear taps, summed.
pub fn soft_loss_multi<T: Real>(
    teacher: &IntermediateTaps<T>,
    student: &IntermediateTaps<T>,
    gram: &GramOptions,
) -> Result<f64> {
    Ok(kd_soft_loss(KdMethod::Multi, teacher, student, gram)?.value)
}

/// [`soft_loss_multi`] and its gradient with respect to the student taps.
pub fn soft_loss_multi_grad<T: Real>(
    teacher: &IntermediateTaps<T>,
    student: &IntermediateTaps<T>,
    gram: &GramOptions,
) -> Result<(f64, TapGrads<T>)> {
    let out = kd_soft_loss(KdMethod::Multi, teacher, student, gram)?;
    Ok((out.value, out.grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::soft_loss_selfsim;

    fn taps(seed: f64, hf: usize, ht: usize) -> IntermediateTaps<f64> {
        let rows = 6;
        let f = |n: usize, k: f64| (0..n).map(|i| ((i as f64 + 1.0) * k * seed).sin()).collect::<Vec<f64>>();
        IntermediateTaps {
            bins: 3,
            frames: 2,
            z_f: f(rows * hf, 0.7),
            z_t: f(rows * ht, 1.3),
            z_lin: f(rows * 2, 2.1),
            mask: f(rows * 2, 2.1).iter().map(|v| v.tanh()).collect(),
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in KdMethod::ALL {
            assert_eq!(m.name().parse::<KdMethod>().unwrap(), m);
        }
        assert_eq!("F-LSTM".parse::<KdMethod>().unwrap(), KdMethod::FLstm);
        assert_eq!(KdMethod::parse_optional("none").unwrap(), None);
        assert!("gram".parse::<KdMethod>().is_err());
    }

    #[test]
    fn multi_is_sum_of_terms() {
        let (t, s) = (taps(1.0, 4, 3), taps(1.7, 2, 2));
        let opts = GramOptions::per_frame(3);
        let grid = |v: &Vec<f64>| TapGrid::new(6, v.len() / 6, v.clone()).unwrap();
        let sum = soft_loss_selfsim(&grid(&t.z_f), &grid(&s.z_f), &opts).unwrap()
            + soft_loss_selfsim(&grid(&t.z_t), &grid(&s.z_t), &opts).unwrap()
            + soft_loss_selfsim(&grid(&t.z_lin), &grid(&s.z_lin), &opts).unwrap();
        assert!((soft_loss_multi(&t, &s, &opts).unwrap() - sum).abs() < 1e-12);
        assert_eq!(soft_loss_multi(&t, &t, &opts).unwrap(), 0.0);
    }

    #[test]
    fn direct_fusion_on_mismatched_taps_is_a_config_error() {
        let (t, s) = (taps(1.0, 4, 3), taps(1.7, 2, 2));
        let opts = GramOptions::per_frame(3);
        assert!(kd_soft_loss(KdMethod::Linear, &t, &s, &opts).is_ok());
        let mut s2 = s.clone();
        s2.z_lin.truncate(6);
        let err = kd_soft_loss(KdMethod::Linear, &t, &s2, &opts).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn gradients_only_for_engaged_taps() {
        let (t, s) = (taps(1.0, 4, 3), taps(1.7, 2, 2));
        let out = kd_soft_loss(KdMethod::TLstm, &t, &s, &GramOptions::per_frame(3)).unwrap();
        assert!(out.grads.z_t.is_some());
        assert!(out.grads.z_f.is_none() && out.grads.z_lin.is_none() && out.grads.mask.is_none());
    }
}
