//! The FT-JNF network: an LSTM across frequency, an LSTM across time, a
//! linear layer and a tanh producing a complex mask for the reference
//! microphone.
//!
//! All activations are stored frame-major as `[frame][bin][channel]`, so row
//! `l * bins + k` of any tap is time-frequency bin `(k, l)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use super::linalg::{gemm, MatMut, MatRef};
use super::lstm::{Lstm, LstmCache, SeqLayout};
use super::real::Real;
use crate::error::{invalid, Error, Result};
use crate::signal::Spectrogram;

/// Network input: real and imaginary parts of every microphone per bin,
/// ordered `[Re mic0, Im mic0, Re mic1, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Features<T> {
    pub frames: usize,
    pub bins: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

/// Interleaves the microphone spectrograms into network input. An optional
/// power-law exponent compresses magnitudes while keeping phases.
pub fn featurize<T: Real>(specs: &[Spectrogram], compression: Option<f64>) -> Result<Features<T>> {
    let first = specs.first().ok_or_else(|| invalid!("no spectrograms to featurize"))?;
    if specs.iter().any(|s| !s.same_shape(first)) {
        return Err(invalid!("microphone spectrograms differ in shape"));
    }
    let (bins, frames, m) = (first.bins, first.frames, specs.len());
    let channels = 2 * m;
    let mut data = vec![T::zero(); frames * bins * channels];
    for (mic, spec) in specs.iter().enumerate() {
        for (idx, c) in spec.data.iter().enumerate() {
            let c = match compression {
                Some(p) if c.norm() > 0.0 => c * c.norm().powf(p - 1.0),
                _ => *c,
            };
            data[idx * channels + 2 * mic] = T::from_f64(c.re);
            data[idx * channels + 2 * mic + 1] = T::from_f64(c.im);
        }
    }
    Ok(Features {
        frames,
        bins,
        channels,
        data,
    })
}

/// Inverse of [`featurize`] without compression.
pub fn defeaturize<T: Real>(features: &Features<T>, source_len: usize) -> Vec<Spectrogram> {
    let m = features.channels / 2;
    (0..m)
        .map(|mic| {
            let mut s = Spectrogram::zeros(features.bins, features.frames, source_len);
            for (idx, c) in s.data.iter_mut().enumerate() {
                let base = idx * features.channels + 2 * mic;
                *c = Complex64::new(features.data[base].as_f64(), features.data[base + 1].as_f64());
            }
            s
        })
        .collect()
}

/// Complex mask `W(k, l)`, stored frame-major like [`Spectrogram`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMask {
    pub bins: usize,
    pub frames: usize,
    pub data: Vec<Complex64>,
}

impl ComplexMask {
    pub fn constant(bins: usize, frames: usize, value: Complex64) -> Self {
        Self {
            bins,
            frames,
            data: vec![value; bins * frames],
        }
    }

    /// Real and imaginary parts both lie in `[-1, 1]`.
    pub fn is_bounded(&self) -> bool {
        self.data.iter().all(|c| c.re.abs() <= 1.0 && c.im.abs() <= 1.0)
    }
}

/// `S(k, l) = W(k, l) * Y_ref(k, l)`.
pub fn apply_mask(mask: &ComplexMask, y_ref: &Spectrogram) -> Result<Spectrogram> {
    if mask.bins != y_ref.bins || mask.frames != y_ref.frames {
        return Err(Error::ShapeMismatch(format!(
            "mask is {}x{}, spectrogram is {}x{}",
            mask.bins, mask.frames, y_ref.bins, y_ref.frames
        )));
    }
    Ok(Spectrogram {
        data: mask.data.iter().zip(&y_ref.data).map(|(w, y)| w * y).collect(),
        ..y_ref.clone()
    })
}

/// Intermediate outputs of one forward pass, each with `bins * frames` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct IntermediateTaps<T> {
    pub bins: usize,
    pub frames: usize,
    /// F-LSTM output, `rows x f_hidden`.
    pub z_f: Vec<T>,
    /// T-LSTM output, `rows x t_hidden`.
    pub z_t: Vec<T>,
    /// Linear layer output before the tanh, `rows x 2`.
    pub z_lin: Vec<T>,
    /// Post-tanh mask as `rows x 2` (real, imaginary).
    pub mask: Vec<T>,
}

impl<T: Real> IntermediateTaps<T> {
    pub fn rows(&self) -> usize {
        self.bins * self.frames
    }

    pub fn complex_mask(&self) -> ComplexMask {
        ComplexMask {
            bins: self.bins,
            frames: self.frames,
            data: self
                .mask
                .chunks_exact(2)
                .map(|p| Complex64::new(p[0].as_f64(), p[1].as_f64()))
                .collect(),
        }
    }
}

/// Gradients of some scalar with respect to the taps. Absent taps contribute
/// nothing, and layers above the deepest present tap are not backpropagated.
#[derive(Debug, Clone, Default)]
pub struct TapGrads<T> {
    pub z_f: Option<Vec<T>>,
    pub z_t: Option<Vec<T>>,
    pub z_lin: Option<Vec<T>>,
    pub mask: Option<Vec<T>>,
}

/// Saved activations for [`FtJnf::backward`].
#[derive(Debug)]
pub struct ForwardCache<T> {
    features: Features<T>,
    f_fwd: LstmCache<T>,
    f_rev: Option<LstmCache<T>>,
    t: LstmCache<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FtJnf<T> {
    config: ModelConfig,
    pub(crate) f_lstm: Lstm<T>,
    /// Backward-direction half of a bidirectional F-LSTM.
    pub(crate) f_lstm_rev: Option<Lstm<T>>,
    pub(crate) t_lstm: Lstm<T>,
    /// `2 x t_hidden`, row-major.
    pub(crate) linear_w: Vec<T>,
    pub(crate) linear_b: Vec<T>,
}

pub type FtJnfModel = FtJnf<f32>;

impl<T: Real> FtJnf<T> {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let input = config.input_width();
        let f_dir = if config.f_bidirectional {
            config.f_hidden / 2
        } else {
            config.f_hidden
        };
        Ok(Self {
            config: config.clone(),
            f_lstm: Lstm::zeros(input, f_dir),
            f_lstm_rev: config.f_bidirectional.then(|| Lstm::zeros(input, f_dir)),
            t_lstm: Lstm::zeros(config.f_hidden, config.t_hidden),
            linear_w: vec![T::zero(); 2 * config.t_hidden],
            linear_b: vec![T::zero(); 2],
        })
    }

    /// Randomly initialized network; identical seeds give identical weights.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        use rand::Rng;
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = config.input_width();
        let f_dir = if config.f_bidirectional {
            config.f_hidden / 2
        } else {
            config.f_hidden
        };
        let f_lstm = Lstm::init(input, f_dir, &mut rng);
        let f_lstm_rev = config
            .f_bidirectional
            .then(|| Lstm::init(input, f_dir, &mut rng));
        let t_lstm = Lstm::init(config.f_hidden, config.t_hidden, &mut rng);
        let bound = 1.0 / (config.t_hidden as f64).sqrt();
        let linear_w = (0..2 * config.t_hidden)
            .map(|_| T::from_f64(rng.random_range(-bound..bound)))
            .collect();
        Ok(Self {
            config: config.clone(),
            f_lstm,
            f_lstm_rev,
            t_lstm,
            linear_w,
            linear_b: vec![T::zero(); 2],
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Same-shaped network with all parameters zero; used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config).expect("config already validated")
    }

    /// Named parameter tensors with their shapes, in a fixed order.
    pub fn params(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out = Vec::new();
        let lstms: Vec<(&str, &Lstm<T>)> = std::iter::once(("f_lstm", &self.f_lstm))
            .chain(self.f_lstm_rev.as_ref().map(|l| ("f_lstm_reverse", l)))
            .chain(std::iter::once(("t_lstm", &self.t_lstm)))
            .collect();
        for (name, l) in lstms {
            let g4 = 4 * l.hidden;
            out.push((format!("{name}.w_ih"), vec![g4, l.input], l.w_ih.as_slice()));
            out.push((format!("{name}.w_hh"), vec![g4, l.hidden], l.w_hh.as_slice()));
            out.push((format!("{name}.b_ih"), vec![g4], l.b_ih.as_slice()));
            out.push((format!("{name}.b_hh"), vec![g4], l.b_hh.as_slice()));
        }
        out.push(("linear.weight".into(), vec![2, self.config.t_hidden], self.linear_w.as_slice()));
        out.push(("linear.bias".into(), vec![2], self.linear_b.as_slice()));
        out
    }

    /// Mutable parameter tensors in the order of [`FtJnf::params`].
    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        let lstms = std::iter::once(&mut self.f_lstm)
            .chain(self.f_lstm_rev.as_mut())
            .chain(std::iter::once(&mut self.t_lstm));
        for l in lstms {
            out.push(&mut l.w_ih);
            out.push(&mut l.w_hh);
            out.push(&mut l.b_ih);
            out.push(&mut l.b_hh);
        }
        out.push(&mut self.linear_w);
        out.push(&mut self.linear_b);
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|(_, _, p)| p.len()).sum()
    }

    /// SHA-256 over every parameter, as lowercase hex.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, _, p) in self.params() {
            h.update(name.as_bytes());
            for v in p {
                h.update(v.as_f64().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn f_layouts(&self, bins: usize, frames: usize, channels: usize) -> (SeqLayout, SeqLayout) {
        let hf = self.config.f_hidden;
        (
            SeqLayout {
                steps: bins,
                batch: frames,
                step_stride: channels,
                batch_stride: bins * channels,
            },
            SeqLayout {
                steps: bins,
                batch: frames,
                step_stride: hf,
                batch_stride: bins * hf,
            },
        )
    }

    fn t_layouts(&self, bins: usize, frames: usize) -> (SeqLayout, SeqLayout) {
        let (hf, ht) = (self.config.f_hidden, self.config.t_hidden);
        (
            SeqLayout {
                steps: frames,
                batch: bins,
                step_stride: bins * hf,
                batch_stride: hf,
            },
            SeqLayout {
                steps: frames,
                batch: bins,
                step_stride: bins * ht,
                batch_stride: ht,
            },
        )
    }

    fn run(&self, features: &Features<T>, train: bool) -> Result<(IntermediateTaps<T>, Option<ForwardCache<T>>)> {
        let (bins, frames, ch) = (features.bins, features.frames, features.channels);
        if ch != self.config.input_width() {
            return Err(invalid!(
                "features have {ch} channels, model expects {}",
                self.config.input_width()
            ));
        }
        if features.data.len() != bins * frames * ch || bins == 0 || frames == 0 {
            return Err(invalid!("feature buffer does not match its {bins}x{frames} shape"));
        }
        if features.data.iter().any(|v| !v.is_finite()) {
            return Err(invalid!("features contain non-finite values"));
        }
        let rows = bins * frames;
        let (hf, ht) = (self.config.f_hidden, self.config.t_hidden);

        let (f_in, f_out) = self.f_layouts(bins, frames, ch);
        let mut z_f = vec![T::zero(); rows * hf];
        let mut f_fwd = train.then(LstmCache::default);
        let mut f_rev = (train && self.f_lstm_rev.is_some()).then(LstmCache::default);
        self.f_lstm
            .forward(&features.data, f_in, &mut z_f, f_out, false, f_fwd.as_mut());
        if let Some(rev) = &self.f_lstm_rev {
            rev.forward(&features.data, f_in, &mut z_f[hf / 2..], f_out, true, f_rev.as_mut());
        }

        let (t_in, t_out) = self.t_layouts(bins, frames);
        let mut z_t = vec![T::zero(); rows * ht];
        let mut t_cache = train.then(LstmCache::default);
        self.t_lstm.forward(&z_f, t_in, &mut z_t, t_out, false, t_cache.as_mut());

        let mut z_lin: Vec<T> = (0..rows).flat_map(|_| self.linear_b.iter().copied()).collect();
        gemm(
            T::one(),
            MatRef::dense(&z_t, rows, ht),
            MatRef::dense(&self.linear_w, 2, ht).t(),
            T::one(),
            MatMut::dense(&mut z_lin, rows, 2),
        );
        let mask: Vec<T> = z_lin.iter().map(|v| v.tanh()).collect();

        if let Some(bad) = [("F-LSTM", &z_f), ("T-LSTM", &z_t), ("linear", &z_lin)]
            .into_iter()
            .find(|(_, v)| v.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::NonFinite(format!(
                "{} output of model {} is not finite",
                bad.0,
                self.config.label()
            )));
        }

        let taps = IntermediateTaps {
            bins,
            frames,
            z_f,
            z_t,
            z_lin,
            mask,
        };
        let cache = train.then(|| ForwardCache {
            features: features.clone(),
            f_fwd: f_fwd.unwrap_or_default(),
            f_rev,
            t: t_cache.unwrap_or_default(),
        });
        Ok((taps, cache))
    }

    /// Inference pass.
    pub fn forward(&self, features: &Features<T>) -> Result<IntermediateTaps<T>> {
        Ok(self.run(features, false)?.0)
    }

    /// Forward pass that keeps what [`FtJnf::backward`] needs.
    pub fn forward_train(&self, features: &Features<T>) -> Result<(IntermediateTaps<T>, ForwardCache<T>)> {
        let (taps, cache) = self.run(features, true)?;
        Ok((taps, cache.expect("training pass keeps a cache")))
    }

    /// Accumulates parameter gradients into `grads` (a buffer from
    /// [`FtJnf::zeros_like`]).
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        taps: &IntermediateTaps<T>,
        tap_grads: &TapGrads<T>,
        grads: &mut FtJnf<T>,
    ) {
        let (bins, frames) = (taps.bins, taps.frames);
        let rows = bins * frames;
        let (hf, ht) = (self.config.f_hidden, self.config.t_hidden);
        let one = T::one();

        // linear + tanh
        let d_lin: Option<Vec<T>> = match (&tap_grads.z_lin, &tap_grads.mask) {
            (None, None) => None,
            (lin, mask) => {
                let mut d = lin.clone().unwrap_or_else(|| vec![T::zero(); rows * 2]);
                if let Some(dm) = mask {
                    for ((d, g), w) in d.iter_mut().zip(dm).zip(&taps.mask) {
                        *d = *d + *g * (one - *w * *w);
                    }
                }
                Some(d)
            }
        };
        let mut d_zt = tap_grads.z_t.clone();
        if let Some(d_lin) = &d_lin {
            let d_lin_mat = MatRef::dense(d_lin, rows, 2);
            gemm(one, d_lin_mat.t(), MatRef::dense(&taps.z_t, rows, ht), one, MatMut::dense(&mut grads.linear_w, 2, ht));
            for r in d_lin.chunks_exact(2) {
                grads.linear_b[0] = grads.linear_b[0] + r[0];
                grads.linear_b[1] = grads.linear_b[1] + r[1];
            }
            let d = d_zt.get_or_insert_with(|| vec![T::zero(); rows * ht]);
            gemm(one, d_lin_mat, MatRef::dense(&self.linear_w, 2, ht), one, MatMut::dense(d, rows, ht));
        }

        // T-LSTM
        let mut d_zf = tap_grads.z_f.clone();
        if let Some(d_zt) = &d_zt {
            let (t_in, t_out) = self.t_layouts(bins, frames);
            let d = d_zf.get_or_insert_with(|| vec![T::zero(); rows * hf]);
            self.t_lstm.backward(
                &taps.z_f,
                t_in,
                &taps.z_t,
                t_out,
                false,
                &cache.t,
                d_zt,
                Some(d),
                &mut grads.t_lstm,
            );
        }

        // F-LSTM
        if let Some(d_zf) = &d_zf {
            let (f_in, f_out) = self.f_layouts(bins, frames, cache.features.channels);
            self.f_lstm.backward(
                &cache.features.data,
                f_in,
                &taps.z_f,
                f_out,
                false,
                &cache.f_fwd,
                d_zf,
                None,
                &mut grads.f_lstm,
            );
            if let (Some(rev), Some(rev_cache), Some(rev_grads)) =
                (&self.f_lstm_rev, &cache.f_rev, grads.f_lstm_rev.as_mut())
            {
                rev.backward(
                    &cache.features.data,
                    f_in,
                    &taps.z_f[hf / 2..],
                    f_out,
                    true,
                    rev_cache,
                    &d_zf[hf / 2..],
                    None,
                    rev_grads,
                );
            }
        }
    }
}

impl FtJnf<f32> {
    /// Widens every parameter to `f64`.
    pub fn to_f64(&self) -> FtJnf<f64> {
        let mut out = FtJnf::<f64>::zeros(&self.config).expect("validated config");
        for (dst, (_, _, src)) in out.params_mut().into_iter().zip(self.params()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = *s as f64;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SizePreset;
    use rand::Rng;

    fn random_features<T: Real>(bins: usize, frames: usize, mics: usize, seed: u64) -> Features<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Features {
            frames,
            bins,
            channels: 2 * mics,
            data: (0..frames * bins * 2 * mics)
                .map(|_| T::from_f64(rng.random_range(-1.0..1.0)))
                .collect(),
        }
    }

    #[test]
    fn zero_input_gives_tanh_of_bias() {
        let mut net = FtJnf::<f64>::init(&SizePreset::I.config(), 0).unwrap();
        net.linear_b = vec![0.3, -0.7];
        let feats = Features {
            frames: 3,
            bins: 5,
            channels: 10,
            data: vec![0.0; 150],
        };
        let taps = net.forward(&feats).unwrap();
        assert!(taps.z_f.iter().all(|v| *v == 0.0));
        for p in taps.mask.chunks_exact(2) {
            assert!((p[0] - 0.3f64.tanh()).abs() < 1e-15);
            assert!((p[1] + 0.7f64.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn tap_shapes_and_bounds() {
        let cfg = SizePreset::H.config();
        let net = FtJnfModel::init(&cfg, 1).unwrap();
        let taps = net.forward(&random_features(7, 4, 5, 2)).unwrap();
        assert_eq!(taps.z_f.len(), 28 * cfg.f_hidden);
        assert_eq!(taps.z_t.len(), 28 * cfg.t_hidden);
        assert_eq!(taps.mask.len(), 56);
        assert!(taps.complex_mask().is_bounded());
        assert_eq!(net.num_params(), crate::model::count_params(&cfg).unwrap());
    }

    #[test]
    fn later_frames_do_not_affect_earlier_outputs() {
        let net = FtJnf::<f64>::init(&SizePreset::I.config(), 4).unwrap();
        let a = random_features::<f64>(9, 6, 5, 5);
        let mut b = a.clone();
        let row = 9 * 10;
        for v in &mut b.data[3 * row..] {
            *v += 0.5;
        }
        let (ta, tb) = (net.forward(&a).unwrap(), net.forward(&b).unwrap());
        assert_eq!(ta.mask[..3 * 18], tb.mask[..3 * 18]);
        assert_ne!(ta.mask[3 * 18..], tb.mask[3 * 18..]);
    }

    #[test]
    fn mic_order_matters() {
        let net = FtJnf::<f64>::init(&SizePreset::I.config(), 4).unwrap();
        let a = random_features::<f64>(5, 3, 5, 6);
        let mut b = a.clone();
        for r in b.data.chunks_exact_mut(10) {
            r.swap(0, 2);
            r.swap(1, 3);
        }
        assert_ne!(net.forward(&a).unwrap().mask, net.forward(&b).unwrap().mask);
    }

    #[test]
    fn featurize_round_trip() {
        let mut s = Spectrogram::zeros(3, 2, 256);
        for (i, c) in s.data.iter_mut().enumerate() {
            *c = Complex64::new(i as f64, -(i as f64) * 0.5);
        }
        let specs = vec![s.clone(), s.clone()];
        let f = featurize::<f64>(&specs, None).unwrap();
        assert_eq!(f.data[..4], [0.0, 0.0, 0.0, 0.0]);
        assert_eq!(f.data[4..8], [1.0, -0.5, 1.0, -0.5]);
        assert_eq!(defeaturize(&f, 256), specs);
        let c = featurize::<f64>(&specs, Some(0.5)).unwrap();
        let z = Complex64::new(c.data[4], c.data[5]);
        assert!((z.norm() - Complex64::new(1.0, -0.5).norm().sqrt()).abs() < 1e-12);
        assert!((z.arg() - Complex64::new(1.0, -0.5).arg()).abs() < 1e-12);
    }

    #[test]
    fn mask_application() {
        let mut y = Spectrogram::zeros(2, 2, 256);
        y.data = vec![Complex64::new(1.0, 2.0); 4];
        let id = ComplexMask::constant(2, 2, Complex64::new(1.0, 0.0));
        assert_eq!(apply_mask(&id, &y).unwrap(), y);
        let zero = ComplexMask::constant(2, 2, Complex64::new(0.0, 0.0));
        assert!(apply_mask(&zero, &y).unwrap().data.iter().all(|c| c.norm() == 0.0));
        let j = ComplexMask::constant(2, 2, Complex64::new(0.0, 1.0));
        assert_eq!(apply_mask(&j, &y).unwrap().data[0], Complex64::new(-2.0, 1.0));
        assert!(apply_mask(&ComplexMask::constant(3, 2, Complex64::new(1.0, 0.0)), &y).is_err());
    }

    fn check_gradients(bidirectional: bool, taps_used: [bool; 4]) {
        let mut cfg = ModelConfig::new(6, 4).unwrap();
        cfg.num_mics = 2;
        cfg.f_bidirectional = bidirectional;
        let mut net = FtJnf::<f64>::init(&cfg, 11).unwrap();
        net.linear_b = vec![0.1, -0.2];
        let feats = random_features::<f64>(4, 3, 2, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rows = 12;
        let mut weights = |n: usize, on: bool| -> Option<Vec<f64>> {
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            on.then_some(w)
        };
        let tg = TapGrads {
            z_f: weights(rows * 6, taps_used[0]),
            z_t: weights(rows * 4, taps_used[1]),
            z_lin: weights(rows * 2, taps_used[2]),
            mask: weights(rows * 2, taps_used[3]),
        };
        let objective = |net: &FtJnf<f64>| -> f64 {
            let t = net.forward(&feats).unwrap();
            let dot = |w: &Option<Vec<f64>>, v: &[f64]| {
                w.as_ref().map_or(0.0, |w| w.iter().zip(v).map(|(a, b)| a * b).sum())
            };
            dot(&tg.z_f, &t.z_f) + dot(&tg.z_t, &t.z_t) + dot(&tg.z_lin, &t.z_lin) + dot(&tg.mask, &t.mask)
        };
        let (taps, cache) = net.forward_train(&feats).unwrap();
        let mut grads = net.zeros_like();
        net.backward(&cache, &taps, &tg, &mut grads);
        let analytic: Vec<Vec<f64>> = grads.params().into_iter().map(|(_, _, p)| p.to_vec()).collect();
        let n_tensors = analytic.len();
        for t in 0..n_tensors {
            for i in 0..analytic[t].len() {
                let eps = 1e-6;
                let mut plus = net.clone();
                plus.params_mut()[t][i] += eps;
                let mut minus = net.clone();
                minus.params_mut()[t][i] -= eps;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * eps);
                let a = analytic[t][i];
                assert!(
                    (a - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "tensor {t} index {i}: analytic {a} vs numeric {fd}"
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        check_gradients(false, [true, true, true, true]);
        check_gradients(true, [true, true, true, true]);
        check_gradients(false, [false, false, false, true]);
        check_gradients(false, [true, false, false, false]);
        check_gradients(true, [false, true, false, false]);
    }

    #[test]
    fn unused_layers_get_no_gradient() {
        let net = FtJnf::<f64>::init(&ModelConfig::new(6, 4).unwrap(), 1).unwrap();
        let feats = random_features::<f64>(4, 3, 5, 2);
        let (taps, cache) = net.forward_train(&feats).unwrap();
        let mut grads = net.zeros_like();
        let tg = TapGrads {
            z_f: Some(vec![1.0; 12 * 6]),
            ..Default::default()
        };
        net.backward(&cache, &taps, &tg, &mut grads);
        assert!(grads.t_lstm.w_ih.iter().all(|v| *v == 0.0));
        assert!(grads.linear_w.iter().all(|v| *v == 0.0));
        assert!(grads.f_lstm.w_ih.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn wrong_feature_width_is_rejected() {
        let net = FtJnfModel::init(&SizePreset::I.config(), 0).unwrap();
        assert!(net.forward(&random_features(4, 3, 2, 0)).is_err());
    }

    #[test]
    fn checksum_tracks_weights() {
        let a = FtJnfModel::init(&SizePreset::I.config(), 0).unwrap();
        let mut b = a.clone();
        assert_eq!(a.checksum(), b.checksum());
        b.linear_b[0] = 1e-3;
        assert_ne!(a.checksum(), b.checksum());
        assert_eq!(a.to_f64().num_params(), a.num_params());
    }
}
