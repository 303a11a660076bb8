use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{LineSearchError, NonmonotoneState};
use crate::vecops::pairwise_sum_by;

/// Which reference value the sufficient-decrease test compares against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceKind {
    /// `f_{i_k}(w_k)`.
    Monotone,
    /// Zhang–Hager weighted history with mixing parameter `xi`.
    Zhang { xi: f64 },
    /// Max over the last `window` batch values, whatever batch produced them.
    GrippoCrossBatch { window: usize, full_windows_only: bool },
    /// Max over the current batch's mean loss in each of the last `window`
    /// epochs.
    GrippoSingleBatch { window: usize },
}

/// Max over the stored batch values.
pub fn cross_batch_reference(window: &[f64]) -> f64 {
    window.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Ring of the most recent `W` batch values `f_{i_j}(w_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossBatchWindow {
    values: VecDeque<f64>,
    capacity: usize,
    full_windows_only: bool,
}

impl CrossBatchWindow {
    pub fn new(capacity: usize, full_windows_only: bool) -> Self {
        let capacity = capacity.max(1);
        Self {
            values: VecDeque::with_capacity(capacity),
            capacity,
            full_windows_only,
        }
    }

    /// Pushes the current batch value and returns the reference.
    ///
    /// During warm-up (fewer than `W` values seen) the max runs over the
    /// values available, or falls back to the current value when
    /// `full_windows_only` is set.
    pub fn push_and_reference(&mut self, current: f64) -> f64 {
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(current);
        if self.full_windows_only && self.values.len() < self.capacity {
            return current;
        }
        self.values.iter().cloned().fold(current, f64::max)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-sample loss table of shape `M × W`: column `e mod W` holds `f_i` at the
/// iterate where sample `i` was visited during epoch `e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleBatchTable {
    samples: usize,
    window: usize,
    values: Vec<f64>,
    /// Epoch that wrote each cell, plus one (0 = empty).
    tags: Vec<u64>,
}

impl SingleBatchTable {
    pub fn new(samples: usize, window: usize) -> Self {
        let window = window.max(1);
        Self {
            samples,
            window,
            values: vec![0.0; samples * window],
            tags: vec![0; samples * window],
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    fn cell(&self, i: usize, epoch: u64) -> usize {
        i * self.window + (epoch % self.window as u64) as usize
    }

    /// Mean over `idx` of the values stored for `epoch`, if every entry is present.
    pub fn epoch_mean(&self, idx: &[usize], epoch: u64) -> Option<f64> {
        if idx.is_empty() {
            return None;
        }
        let complete = idx.iter().all(|&i| self.tags[self.cell(i, epoch)] == epoch + 1);
        complete.then(|| pairwise_sum_by(idx.len(), |j| self.values[self.cell(idx[j], epoch)]) / idx.len() as f64)
    }

    /// Stores the current epoch's per-sample values for `idx`.
    pub fn record(&mut self, idx: &[usize], epoch: u64, sample_values: &[f64]) {
        debug_assert_eq!(idx.len(), sample_values.len());
        for (&i, &v) in idx.iter().zip(sample_values) {
            let c = self.cell(i, epoch);
            self.values[c] = v;
            self.tags[c] = epoch + 1;
        }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }
}

/// Max of `current` and the batch's mean loss in each of the up-to-`W`
/// previous epochs. In epoch 0 nothing is stored and the current value is
/// returned.
pub fn single_batch_reference(table: &SingleBatchTable, idx: &[usize], epoch: u64, current: f64) -> f64 {
    let first = epoch.saturating_sub(table.window as u64);
    (first..epoch)
        .filter_map(|e| table.epoch_mean(idx, e))
        .fold(current, f64::max)
}

/// Live reference-value state owned by the optimizer loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ReferencePolicy {
    Monotone,
    Zhang(NonmonotoneState),
    CrossBatch(CrossBatchWindow),
    SingleBatch(SingleBatchTable),
}

impl ReferencePolicy {
    pub fn new(kind: ReferenceKind, num_samples: usize) -> Result<Self, LineSearchError> {
        Ok(match kind {
            ReferenceKind::Monotone => ReferencePolicy::Monotone,
            ReferenceKind::Zhang { xi } => ReferencePolicy::Zhang(NonmonotoneState::new(xi)?),
            ReferenceKind::GrippoCrossBatch {
                window,
                full_windows_only,
            } => ReferencePolicy::CrossBatch(CrossBatchWindow::new(window, full_windows_only)),
            ReferenceKind::GrippoSingleBatch { window } => {
                ReferencePolicy::SingleBatch(SingleBatchTable::new(num_samples, window))
            }
        })
    }

    /// Reference for the current batch, advancing the policy state.
    ///
    /// `sample_values` are the per-sample losses at `w_k` over `idx`; only the
    /// single-batch policy reads them.
    pub fn next_reference(
        &mut self,
        current: f64,
        idx: &[usize],
        epoch: u64,
        sample_values: &[f64],
    ) -> Result<f64, LineSearchError> {
        if !current.is_finite() {
            return Err(LineSearchError::NonFiniteValue(current));
        }
        Ok(match self {
            ReferencePolicy::Monotone => current,
            ReferencePolicy::Zhang(state) => state.update(current)?,
            ReferencePolicy::CrossBatch(window) => window.push_and_reference(current),
            ReferencePolicy::SingleBatch(table) => {
                let r = single_batch_reference(table, idx, epoch, current);
                table.record(idx, epoch, sample_values);
                r
            }
        })
    }

    pub fn nonmonotone_state(&self) -> Option<&NonmonotoneState> {
        match self {
            ReferencePolicy::Zhang(s) => Some(s),
            _ => None,
        }
    }
}
