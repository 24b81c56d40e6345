use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{sample_noise_position, sample_talker_position, ArrayGeometry, SourcePosition};
use super::propagate::{
    apply_rir, fractional_delay, path_to, propagate_free_field, PropagationOptions,
    RoomImpulseResponse,
};
use crate::error::{invalid, Error, Result};
use crate::signal::{energy, MultichannelWaveform, Waveform};

/// Speech and noise components mixed at a calibrated SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub y: MultichannelWaveform,
    pub x: MultichannelWaveform,
    /// Noise component after gain, so that `y == x + v`.
    pub v: MultichannelWaveform,
    pub noise_gain: f64,
    pub snr_db: f64,
}

/// One aligned training or evaluation unit.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureExample {
    /// Noisy microphone signals.
    pub y: MultichannelWaveform,
    /// Reverberant speech at the microphones.
    pub x: MultichannelWaveform,
    /// Scaled noise at the microphones.
    pub v: MultichannelWaveform,
    /// Clean anechoic target, aligned with the direct path at the centre
    /// microphone.
    pub s: Waveform,
    pub snr_db: f64,
    pub talker_pos: SourcePosition,
    pub noise_pos: SourcePosition,
    pub seed: u64,
}

impl MixtureExample {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Aligned excerpt of every signal.
    pub fn crop(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(invalid!(
                "crop {start}..{} exceeds example length {}",
                start + len,
                self.len()
            ));
        }
        Ok(Self {
            y: self.y.slice(start, len),
            x: self.x.slice(start, len),
            v: self.v.slice(start, len),
            s: Waveform::new(self.s.samples[start..start + len].to_vec()),
            ..self.clone()
        })
    }

    /// Metadata stored next to rendered audio.
    pub fn metadata(&self, geom: &ArrayGeometry) -> ExampleMetadata {
        ExampleMetadata {
            seed: self.seed,
            snr_db: self.snr_db,
            measured_snr_db: front_snr_db(&self.x, &self.v, geom),
            talker_pos: self.talker_pos,
            noise_pos: self.noise_pos,
            num_samples: self.len(),
            sample_rate: self.s.sample_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleMetadata {
    pub seed: u64,
    pub snr_db: f64,
    pub measured_snr_db: f64,
    pub talker_pos: SourcePosition,
    pub noise_pos: SourcePosition,
    pub num_samples: usize,
    pub sample_rate: u32,
}

/// SNR in dB of speech against noise at the front microphone, over the whole
/// signal.
pub fn front_snr_db(x: &MultichannelWaveform, v: &MultichannelWaveform, geom: &ArrayGeometry) -> f64 {
    let ex = energy(&x.channels[geom.front_index]);
    let ev = energy(&v.channels[geom.front_index]);
    10.0 * (ex / ev).log10()
}

/// Scales the noise so that the front-microphone SNR equals `snr_db` and adds
/// it to the speech. `snr_db = +inf` yields a noise-free mixture.
pub fn mix_at_snr(
    x: &MultichannelWaveform,
    v: &MultichannelWaveform,
    snr_db: f64,
    geom: &ArrayGeometry,
) -> Result<Mixture> {
    if x.num_channels() != v.num_channels() || x.len() != v.len() {
        return Err(invalid!(
            "speech is {}x{}, noise is {}x{}",
            x.num_channels(),
            x.len(),
            v.num_channels(),
            v.len()
        ));
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(invalid!("SNR must be a number or +inf, got {snr_db}"));
    }
    if geom.front_index >= x.num_channels() {
        return Err(invalid!("front microphone {} out of range", geom.front_index));
    }
    let ex = energy(&x.channels[geom.front_index]);
    let ev = energy(&v.channels[geom.front_index]);
    if ex <= 0.0 {
        return Err(Error::DegenerateInput("speech has zero energy at the front microphone".into()));
    }
    if ev <= 0.0 {
        return Err(Error::DegenerateInput("noise has zero energy at the front microphone".into()));
    }
    let gain = (ex / (ev * 10f64.powf(snr_db / 10.0))).sqrt();
    let scaled = MultichannelWaveform {
        channels: v
            .channels
            .iter()
            .map(|c| c.iter().map(|s| s * gain).collect())
            .collect(),
        sample_rate: v.sample_rate,
    };
    let y = MultichannelWaveform {
        channels: x
            .channels
            .iter()
            .zip(&scaled.channels)
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect())
            .collect(),
        sample_rate: x.sample_rate,
    };
    Ok(Mixture {
        y,
        x: x.clone(),
        v: scaled,
        noise_gain: gain,
        snr_db,
    })
}

/// Options for the scene pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneOptions {
    pub propagation: PropagationOptions,
    /// Convolve the noise path with the room response as well.
    pub reverberate_noise: bool,
}

impl Default for SceneOptions {
    fn default() -> Self {
        Self {
            propagation: PropagationOptions::default(),
            reverberate_noise: false,
        }
    }
}

/// Builds [`MixtureExample`]s for one array.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneSimulator {
    pub geometry: ArrayGeometry,
    pub options: SceneOptions,
}

impl SceneSimulator {
    pub fn new(geometry: ArrayGeometry, options: SceneOptions) -> Result<Self> {
        geometry.validate()?;
        Ok(Self { geometry, options })
    }

    /// Draws talker and noise positions from `seed`, propagates speech through
    /// free field and the room, propagates noise from its position, and mixes
    /// at `snr_db`. `noise` must be at least as long as `speech`; a random
    /// excerpt of matching length is used.
    pub fn make_example(
        &self,
        speech: &Waveform,
        noise: &Waveform,
        rir: &RoomImpulseResponse,
        snr_db: f64,
        seed: u64,
    ) -> Result<MixtureExample> {
        if speech.is_empty() {
            return Err(invalid!("empty speech signal"));
        }
        if noise.len() < speech.len() {
            return Err(invalid!(
                "noise ({} samples) shorter than speech ({} samples)",
                noise.len(),
                speech.len()
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let talker_pos = sample_talker_position(&mut rng);
        let noise_pos = sample_noise_position(&mut rng);
        let offset = rng.random_range(0..=noise.len() - speech.len());
        let noise = Waveform::new(noise.samples[offset..offset + speech.len()].to_vec());

        let geom = &self.geometry;
        let opts = &self.options.propagation;
        let direct = propagate_free_field(speech, &talker_pos, geom, opts)?;
        let x = apply_rir(&direct, rir)?;
        let mut v = propagate_free_field(&noise, &noise_pos, geom, opts)?;
        if self.options.reverberate_noise {
            v = apply_rir(&v, rir)?;
        }
        let mix = mix_at_snr(&x, &v, snr_db, geom)?;

        let (delay, gain) = path_to(&talker_pos, &geom.mic_positions[geom.center_index], opts)?;
        let s = Waveform::new(fractional_delay(&speech.samples, delay, gain)?);

        Ok(MixtureExample {
            y: mix.y,
            x: mix.x,
            v: mix.v,
            s,
            snr_db,
            talker_pos,
            noise_pos,
            seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::synth;

    fn random_multi(rng: &mut ChaCha8Rng, len: usize) -> MultichannelWaveform {
        MultichannelWaveform::new(
            (0..5)
                .map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn unit_gain_at_zero_db_with_equal_energy() {
        let geom = ArrayGeometry::default();
        let x = MultichannelWaveform::new(vec![vec![1.0, -1.0]; 5]).unwrap();
        let v = MultichannelWaveform::new(vec![vec![-1.0, 1.0]; 5]).unwrap();
        let m = mix_at_snr(&x, &v, 0.0, &geom).unwrap();
        assert_eq!(m.noise_gain, 1.0);
    }

    #[test]
    fn closed_form_gain_at_ten_db() {
        let geom = ArrayGeometry::default();
        let x = MultichannelWaveform::new(vec![vec![1.0, 0.0]; 5]).unwrap();
        let v = MultichannelWaveform::new(vec![vec![0.0, 1.0]; 5]).unwrap();
        let m = mix_at_snr(&x, &v, 10.0, &geom).unwrap();
        assert!((m.noise_gain - 10f64.powf(-0.5)).abs() < 1e-15);
        assert!((m.noise_gain - 0.316_227_8).abs() < 1e-7);
    }

    #[test]
    fn measured_snr_matches_request() {
        let geom = ArrayGeometry::default();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let x = random_multi(&mut rng, 400);
            let v = random_multi(&mut rng, 400);
            let snr = rng.random_range(-5.0..15.0);
            let m = mix_at_snr(&x, &v, snr, &geom).unwrap();
            assert!((front_snr_db(&m.x, &m.v, &geom) - snr).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_energy_is_degenerate() {
        let geom = ArrayGeometry::default();
        let z = MultichannelWaveform::zeros(5, 10);
        let one = MultichannelWaveform::new(vec![vec![1.0; 10]; 5]).unwrap();
        assert!(matches!(mix_at_snr(&z, &one, 0.0, &geom), Err(Error::DegenerateInput(_))));
        assert!(matches!(mix_at_snr(&one, &z, 0.0, &geom), Err(Error::DegenerateInput(_))));
        assert!(mix_at_snr(&one, &one, f64::NAN, &geom).is_err());
    }

    #[test]
    fn identity_room_without_noise_leaves_speech() {
        let sim = SceneSimulator::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let speech = synth::harmonic_speech(&mut rng, 8000);
        let noise = synth::white_noise(&mut rng, 9000);
        let ex = sim
            .make_example(&speech, &noise, &RoomImpulseResponse::identity(5), f64::INFINITY, 5)
            .unwrap();
        assert_eq!(ex.y, ex.x);
    }

    #[test]
    fn additivity_holds_and_pipeline_is_deterministic() {
        let sim = SceneSimulator::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let speech = synth::harmonic_speech(&mut rng, 8000);
        let noise = synth::pink_noise(&mut rng, 12_000);
        let rir = synth::sparse_rir(&mut rng, 5, 0.3);
        let a = sim.make_example(&speech, &noise, &rir, 3.0, 99).unwrap();
        let b = sim.make_example(&speech, &noise, &rir, 3.0, 99).unwrap();
        assert_eq!(a, b);
        for c in 0..5 {
            for n in 0..a.len() {
                assert!((a.y.channels[c][n] - a.x.channels[c][n] - a.v.channels[c][n]).abs() <= 1e-12);
            }
        }
        assert!((front_snr_db(&a.x, &a.v, &sim.geometry) - 3.0).abs() < 1e-9);
        assert!(a.talker_pos.is_talker_grid_point());
        assert!(a.noise_pos.is_noise_grid_point());
    }

    #[test]
    fn crop_keeps_alignment() {
        let sim = SceneSimulator::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let speech = synth::harmonic_speech(&mut rng, 4000);
        let noise = synth::white_noise(&mut rng, 4000);
        let ex = sim
            .make_example(&speech, &noise, &RoomImpulseResponse::identity(5), 0.0, 1)
            .unwrap();
        let c = ex.crop(1000, 500).unwrap();
        assert_eq!(c.len(), 500);
        assert_eq!(c.y.channels[2][0], ex.y.channels[2][1000]);
        assert_eq!(c.s.samples[499], ex.s.samples[1499]);
        assert!(ex.crop(3900, 200).is_err());
    }
}
