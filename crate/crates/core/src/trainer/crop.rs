use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scene::MixtureExample;

/// What to do with an example shorter than the crop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShortExamplePolicy {
    #[default]
    Skip,
    /// Zero-pad at the end.
    Pad,
}

fn pad(example: &MixtureExample, len: usize) -> MixtureExample {
    let mut out = example.clone();
    for ch in out
        .y
        .channels
        .iter_mut()
        .chain(out.x.channels.iter_mut())
        .chain(out.v.channels.iter_mut())
        .chain(std::iter::once(&mut out.s.samples))
    {
        ch.resize(len, 0.0);
    }
    out
}

/// Draws `batch_size` examples and cuts one random aligned crop of
/// `crop_len` samples from each.
pub fn crop_batch<R: Rng + ?Sized>(
    examples: &[&MixtureExample],
    crop_len: usize,
    batch_size: usize,
    policy: ShortExamplePolicy,
    rng: &mut R,
) -> Result<Vec<MixtureExample>> {
    if crop_len == 0 || batch_size == 0 {
        return Err(invalid!("crop length and batch size must be positive"));
    }
    let mut batch = Vec::with_capacity(batch_size);
    for ex in examples.iter().take(batch_size) {
        if ex.len() < crop_len {
            match policy {
                ShortExamplePolicy::Skip => {
                    log::warn!(
                        "skipping example with seed {}: {} samples is shorter than the {crop_len}-sample crop",
                        ex.seed,
                        ex.len()
                    );
                    continue;
                }
                ShortExamplePolicy::Pad => {
                    batch.push(pad(ex, crop_len));
                    continue;
                }
            }
        }
        let start = rng.random_range(0..=ex.len() - crop_len);
        batch.push(ex.crop(start, crop_len)?);
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_examples, SceneSimulator, SnrSpec, Split, SyntheticCorpus};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn examples(len: usize) -> Vec<MixtureExample> {
        let sim = SceneSimulator::default();
        generate_examples(&sim, &SyntheticCorpus::default(), Split::Train, "crop", 3, len, SnrSpec::Fixed(5.0), 9)
            .unwrap()
    }

    #[test]
    fn crops_are_aligned_and_repeatable() {
        let ex = examples(6000);
        let refs: Vec<&MixtureExample> = ex.iter().collect();
        let a = crop_batch(&refs, 4000, 3, ShortExamplePolicy::Skip, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = crop_batch(&refs, 4000, 3, ShortExamplePolicy::Skip, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a.len(), 3);
        for (c, d) in a.iter().zip(&b) {
            assert_eq!(c.y, d.y);
            assert_eq!(c.len(), 4000);
            for m in 0..c.y.num_channels() {
                for n in 0..4000 {
                    let sum = c.x.channels[m][n] + c.v.channels[m][n];
                    assert!((c.y.channels[m][n] - sum).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn four_seconds_is_64000_samples() {
        let ex = examples(64_000);
        let refs: Vec<&MixtureExample> = ex.iter().collect();
        let b = crop_batch(&refs, 4 * 16_000, 4, ShortExamplePolicy::Skip, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(b.iter().all(|e| e.len() == 64_000));
    }

    #[test]
    fn short_examples_are_skipped_or_padded() {
        let ex = examples(4000);
        let refs: Vec<&MixtureExample> = ex.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(crop_batch(&refs, 8000, 3, ShortExamplePolicy::Skip, &mut rng).unwrap().is_empty());
        let padded = crop_batch(&refs, 8000, 3, ShortExamplePolicy::Pad, &mut rng).unwrap();
        assert_eq!(padded.len(), 3);
        assert!(padded[0].s.samples[4000..].iter().all(|v| *v == 0.0));
    }
}
