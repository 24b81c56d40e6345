use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Number of microphones in the array.
pub const NUM_MICS: usize = 5;

/// Propagation speed in m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;

/// Distance of talker positions from the array centre, in meters.
pub const TALKER_DISTANCE: f64 = 5.0;

/// Distance of noise source positions from the array centre, in meters.
pub const NOISE_DISTANCE: f64 = 5.0;

const MAX_APERTURE: f64 = 0.2;

/// Microphone positions in meters plus the roles of two of them: the front
/// microphone defines the mixture SNR, the centre microphone is the reference
/// for mask application and loss alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub mic_positions: Vec<[f64; 3]>,
    pub front_index: usize,
    pub center_index: usize,
}

impl ArrayGeometry {
    pub fn new(mic_positions: Vec<[f64; 3]>, front_index: usize, center_index: usize) -> Result<Self> {
        let geom = Self {
            mic_positions,
            front_index,
            center_index,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.mic_positions.len();
        if m != NUM_MICS {
            return Err(invalid!("array must have {NUM_MICS} microphones, got {m}"));
        }
        if self.front_index >= m || self.center_index >= m {
            return Err(invalid!(
                "front/center index ({}, {}) outside 0..{m}",
                self.front_index,
                self.center_index
            ));
        }
        for (i, a) in self.mic_positions.iter().enumerate() {
            for b in &self.mic_positions[i + 1..] {
                if distance(a, b) > MAX_APERTURE + 1e-12 {
                    return Err(invalid!(
                        "microphone spacing {:.3} m exceeds the {MAX_APERTURE} m aperture",
                        distance(a, b)
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn num_mics(&self) -> usize {
        self.mic_positions.len()
    }
}

impl Default for ArrayGeometry {
    /// Four microphones on a 5 cm circle in the horizontal plane plus one at
    /// the centre. Front is the +x microphone.
    fn default() -> Self {
        let r = 0.05;
        Self {
            mic_positions: vec![
                [r, 0.0, 0.0],
                [0.0, r, 0.0],
                [-r, 0.0, 0.0],
                [0.0, -r, 0.0],
                [0.0, 0.0, 0.0],
            ],
            front_index: 0,
            center_index: 4,
        }
    }
}

pub(crate) fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Source direction relative to the array centre. Azimuth 0 points along +x,
/// positive azimuth turns toward +y, positive elevation toward +z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourcePosition {
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: f64,
}

impl SourcePosition {
    pub fn cartesian(&self) -> [f64; 3] {
        let (az, el) = (self.azimuth.to_radians(), self.elevation.to_radians());
        [
            self.distance * el.cos() * az.cos(),
            self.distance * el.cos() * az.sin(),
            self.distance * el.sin(),
        ]
    }

    pub fn is_talker_grid_point(&self) -> bool {
        on_grid(self.azimuth, -30.0, 30.0, 5.0)
            && on_grid(self.elevation, -10.0, 10.0, 5.0)
            && self.distance == TALKER_DISTANCE
    }

    pub fn is_noise_grid_point(&self) -> bool {
        on_grid(self.azimuth, 0.0, 315.0, 45.0) && self.elevation == 0.0
    }
}

fn on_grid(v: f64, lo: f64, hi: f64, step: f64) -> bool {
    let idx = (v - lo) / step;
    v >= lo && v <= hi && idx == idx.round()
}

/// Target talker grid: azimuth -30..30 and elevation -10..10 degrees, both
/// in 5 degree steps, at 5 m. 65 points.
pub fn talker_grid() -> Vec<SourcePosition> {
    let mut grid = Vec::with_capacity(65);
    for a in -6..=6 {
        for e in -2..=2 {
            grid.push(SourcePosition {
                azimuth: 5.0 * a as f64,
                elevation: 5.0 * e as f64,
                distance: TALKER_DISTANCE,
            });
        }
    }
    grid
}

/// Noise source grid: eight azimuths in 45 degree steps at zero elevation.
pub fn noise_grid() -> Vec<SourcePosition> {
    (0..8)
        .map(|i| SourcePosition {
            azimuth: 45.0 * i as f64,
            elevation: 0.0,
            distance: NOISE_DISTANCE,
        })
        .collect()
}

pub fn sample_talker_position<R: Rng + ?Sized>(rng: &mut R) -> SourcePosition {
    let a = rng.random_range(-6..=6);
    let e = rng.random_range(-2..=2);
    SourcePosition {
        azimuth: 5.0 * a as f64,
        elevation: 5.0 * e as f64,
        distance: TALKER_DISTANCE,
    }
}

pub fn sample_noise_position<R: Rng + ?Sized>(rng: &mut R) -> SourcePosition {
    SourcePosition {
        azimuth: 45.0 * rng.random_range(0..8) as f64,
        elevation: 0.0,
        distance: NOISE_DISTANCE,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    #[test]
    fn grid_cardinalities() {
        assert_eq!(talker_grid().len(), 65);
        assert_eq!(noise_grid().len(), 8);
        assert!(talker_grid().iter().all(SourcePosition::is_talker_grid_point));
        assert!(noise_grid().iter().all(SourcePosition::is_noise_grid_point));
    }

    #[test]
    fn default_geometry_is_valid() {
        let g = ArrayGeometry::default();
        g.validate().unwrap();
        assert_ne!(g.front_index, g.center_index);
    }

    #[test]
    fn geometry_rejects_wide_or_wrong_arrays() {
        let mut pos = ArrayGeometry::default().mic_positions;
        pos[0] = [0.3, 0.0, 0.0];
        assert!(ArrayGeometry::new(pos, 0, 4).is_err());
        let pos = ArrayGeometry::default().mic_positions[..4].to_vec();
        assert!(ArrayGeometry::new(pos, 0, 3).is_err());
        assert!(ArrayGeometry::new(ArrayGeometry::default().mic_positions, 0, 5).is_err());
    }

    /// Every grid point's count must lie within 3 sigma of the multinomial
    /// expectation.
    fn check_uniform(counts: &HashMap<(i64, i64), usize>, cells: usize, draws: usize) {
        assert_eq!(counts.len(), cells);
        let p = 1.0 / cells as f64;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for (&cell, &c) in counts {
            assert!(
                (c as f64 - mean).abs() <= 3.0 * sigma + 1.0,
                "cell {cell:?} count {c}, expected {mean} +- {}",
                3.0 * sigma
            );
        }
    }

    fn key(p: &SourcePosition) -> (i64, i64) {
        (p.azimuth as i64, p.elevation as i64)
    }

    #[test]
    fn talker_draws_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = HashMap::new();
        for _ in 0..65_000 {
            let p = sample_talker_position(&mut rng);
            assert!(p.is_talker_grid_point());
            *counts.entry(key(&p)).or_insert(0) += 1;
        }
        check_uniform(&counts, 65, 65_000);
    }

    #[test]
    fn noise_draws_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut counts = HashMap::new();
        for _ in 0..8_000 {
            let p = sample_noise_position(&mut rng);
            assert_eq!(p.elevation, 0.0);
            *counts.entry(key(&p)).or_insert(0) += 1;
        }
        check_uniform(&counts, 8, 8_000);
    }
}
