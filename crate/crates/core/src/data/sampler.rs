use super::DataError;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerMode {
    /// Every index once per epoch, in shuffled order.
    Uniform,
    /// Draws with replacement, probability inversely proportional to the
    /// sample's class frequency.
    Weighted,
}

/// Seeded batch sampler over a labeled collection. One generator stream
/// feeds every epoch, so successive epochs differ but the whole sequence is
/// fixed by the seed.
#[derive(Debug, Clone)]
pub struct Sampler {
    mode: SamplerMode,
    batch_size: usize,
    per_sample_weights: Vec<f64>,
    distribution: Option<WeightedIndex<f64>>,
    rng: ChaCha8Rng,
}

pub fn make_sampler(
    labels: &[usize],
    mode: SamplerMode,
    batch_size: usize,
    seed: u64,
) -> Result<Sampler, DataError> {
    if batch_size < 2 {
        return Err(DataError::BatchTooSmall(batch_size));
    }
    if labels.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut counts = vec![0usize; classes];
    for &l in labels {
        counts[l] += 1;
    }
    let per_sample_weights: Vec<f64> = match mode {
        SamplerMode::Uniform => vec![1.0; labels.len()],
        SamplerMode::Weighted => labels.iter().map(|&l| 1.0 / counts[l] as f64).collect(),
    };
    let distribution = match mode {
        SamplerMode::Uniform => None,
        SamplerMode::Weighted => Some(
            WeightedIndex::new(&per_sample_weights)
                .map_err(|e| DataError::InvalidArgument(e.to_string()))?,
        ),
    };
    Ok(Sampler {
        mode,
        batch_size,
        per_sample_weights,
        distribution,
        rng: ChaCha8Rng::seed_from_u64(seed),
    })
}

impl Sampler {
    pub fn mode(&self) -> SamplerMode {
        self.mode
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn per_sample_weights(&self) -> &[f64] {
        &self.per_sample_weights
    }

    pub fn len(&self) -> usize {
        self.per_sample_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_sample_weights.is_empty()
    }

    /// Number of batches one epoch yields.
    pub fn batches_per_epoch(&self) -> usize {
        let n = self.len();
        match self.mode {
            SamplerMode::Weighted => n.div_ceil(self.batch_size),
            SamplerMode::Uniform => {
                let full = n / self.batch_size;
                if n % self.batch_size >= 2 || full == 0 {
                    full + 1
                } else {
                    full
                }
            }
        }
    }

    /// Batches of sample indices for the next epoch.
    ///
    /// In uniform mode a trailing batch of a single sample is folded into the
    /// previous batch, since batch normalization cannot train on it.
    pub fn next_epoch(&mut self) -> Vec<Vec<usize>> {
        let n = self.len();
        match &self.distribution {
            None => {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut self.rng);
                let mut batches: Vec<Vec<usize>> =
                    order.chunks(self.batch_size).map(<[usize]>::to_vec).collect();
                if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
                    let last = batches.pop().expect("checked non-empty");
                    batches.last_mut().expect("more than one batch").extend(last);
                }
                batches
            }
            Some(dist) => (0..n.div_ceil(self.batch_size))
                .map(|_| {
                    (0..self.batch_size)
                        .map(|_| dist.sample(&mut self.rng))
                        .collect()
                })
                .collect(),
        }
    }

    /// `count` individual indices from the sampler's distribution.
    pub fn draw(&mut self, count: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            for batch in self.next_epoch() {
                out.extend(batch);
            }
        }
        out.truncate(count);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ninety_ten() -> Vec<usize> {
        (0..1000).map(|i| usize::from(i % 10 == 0)).collect()
    }

    #[test]
    fn uniform_epoch_is_a_partition() {
        let labels = ninety_ten();
        let mut s = make_sampler(&labels, SamplerMode::Uniform, 32, 1).unwrap();
        let batches = s.next_epoch();
        assert_eq!(batches.len(), s.batches_per_epoch());
        let mut seen: Vec<usize> = batches.concat();
        seen.sort_unstable();
        assert_eq!(seen, (0..1000).collect::<Vec<_>>());
    }

    #[test]
    fn single_leftover_is_merged() {
        let labels = vec![0; 9];
        let mut s = make_sampler(&labels, SamplerMode::Uniform, 4, 0).unwrap();
        let batches = s.next_epoch();
        assert_eq!(batches.iter().map(Vec::len).collect::<Vec<_>>(), [4, 5]);
        assert_eq!(s.batches_per_epoch(), 2);
    }

    #[test]
    fn weighted_epoch_length() {
        let labels = ninety_ten();
        let mut s = make_sampler(&labels, SamplerMode::Weighted, 32, 1).unwrap();
        let batches = s.next_epoch();
        assert_eq!(batches.len(), 32);
        assert!(batches.iter().all(|b| b.len() == 32));
    }

    #[test]
    fn weighted_class_mass_is_balanced() {
        let labels = ninety_ten();
        let s = make_sampler(&labels, SamplerMode::Weighted, 32, 1).unwrap();
        let mut mass = [0.0; 2];
        for (&l, &w) in labels.iter().zip(s.per_sample_weights()) {
            mass[l] += w;
        }
        assert!((mass[0] - mass[1]).abs() < 1e-9);
    }

    #[test]
    fn minority_fractions() {
        let labels = ninety_ten();
        let frac = |mode| {
            let mut s = make_sampler(&labels, mode, 32, 42).unwrap();
            let draws = s.draw(10_000);
            draws.iter().filter(|&&i| labels[i] == 1).count() as f64 / draws.len() as f64
        };
        let w = frac(SamplerMode::Weighted);
        assert!((0.47..=0.53).contains(&w), "weighted {w}");
        let u = frac(SamplerMode::Uniform);
        assert!((0.08..=0.12).contains(&u), "uniform {u}");
    }

    #[test]
    fn same_seed_same_batches() {
        let labels = ninety_ten();
        for mode in [SamplerMode::Uniform, SamplerMode::Weighted] {
            let mut a = make_sampler(&labels, mode, 16, 3).unwrap();
            let mut b = make_sampler(&labels, mode, 16, 3).unwrap();
            assert_eq!(a.next_epoch(), b.next_epoch());
            assert_eq!(a.next_epoch(), b.next_epoch());
        }
    }

    #[test]
    fn rejects_tiny_batches() {
        assert!(matches!(
            make_sampler(&[0, 1], SamplerMode::Uniform, 1, 0),
            Err(DataError::BatchTooSmall(1))
        ));
        assert!(matches!(
            make_sampler(&[], SamplerMode::Uniform, 2, 0),
            Err(DataError::EmptyDataset)
        ));
    }
}
