use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::seed::rng_on_stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BatchOrder {
    /// Each batch draws `b` distinct indices uniformly; batches are independent.
    Uniform,
    /// Each epoch is a fresh permutation cut into `⌈M/b⌉` consecutive batches.
    #[default]
    ShuffledEpoch,
}

/// Deterministic mini-batch sequence: batch `k` depends only on
/// `(seed, order, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatchSchedule {
    num_samples: usize,
    batch_size: usize,
    order: BatchOrder,
    seed: u64,
}

impl MiniBatchSchedule {
    /// `batch_size` is clamped to `[1, num_samples]`.
    pub fn new(num_samples: usize, batch_size: usize, order: BatchOrder, seed: u64) -> Self {
        assert!(num_samples > 0, "schedule over an empty sample set");
        Self {
            num_samples,
            batch_size: batch_size.clamp(1, num_samples),
            order,
            seed,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn order(&self) -> BatchOrder {
        self.order
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.num_samples.div_ceil(self.batch_size)
    }

    /// Mini-batch used at iteration `k`.
    pub fn sample_batch(&self, k: u64) -> Vec<usize> {
        match self.order {
            BatchOrder::Uniform => {
                let mut rng = rng_on_stream(self.seed, k);
                index::sample(&mut rng, self.num_samples, self.batch_size).into_vec()
            }
            BatchOrder::ShuffledEpoch => {
                let per_epoch = self.batches_per_epoch() as u64;
                let perm = self.permutation(k / per_epoch);
                let start = (k % per_epoch) as usize * self.batch_size;
                let end = (start + self.batch_size).min(self.num_samples);
                perm[start..end].to_vec()
            }
        }
    }

    /// All batches of one epoch, in order.
    pub fn epoch_batches(&self, epoch: u64) -> Vec<Vec<usize>> {
        let per_epoch = self.batches_per_epoch() as u64;
        match self.order {
            BatchOrder::Uniform => (0..per_epoch)
                .map(|j| self.sample_batch(epoch * per_epoch + j))
                .collect(),
            BatchOrder::ShuffledEpoch => self
                .permutation(epoch)
                .chunks(self.batch_size)
                .map(|c| c.to_vec())
                .collect(),
        }
    }

    fn permutation(&self, epoch: u64) -> Vec<usize> {
        let mut rng = rng_on_stream(self.seed, epoch);
        let mut perm: Vec<usize> = (0..self.num_samples).collect();
        perm.shuffle(&mut rng);
        perm
    }
}
