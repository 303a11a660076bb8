//! Finite-sum objectives `f(w) = (1/M) Σ f_i(w)` with mini-batch oracles.
//!
//! Every problem is a pure function of `(w, idx)`; no oracle mutates shared
//! state, so a problem can be evaluated from several threads at once. Indices
//! are zero-based.

mod data;
mod kernel;
mod least_squares;
mod mlp;
mod quadratic;
mod schedule;

pub use data::{load_csv, load_libsvm, make_blobs, Dataset};
pub use kernel::{rbf_kernel, KernelLogistic};
pub use least_squares::InterpolatingLeastSquares;
pub use mlp::MlpClassifier;
pub use quadratic::ScaledQuadratic;
pub use schedule::{BatchOrder, MiniBatchSchedule};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vecops::pairwise_sum_by;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("empty mini-batch")]
    EmptyBatch,
    #[error("parameter vector has length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("sample index {index} out of range for {len} samples")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("design matrix is rank deficient (lambda_min = {lambda_min:e}, lambda_max = {lambda_max:e})")]
    RankDeficient { lambda_min: f64, lambda_max: f64 },
    #[error("label {label} of sample {index} is not in {{-1, +1}}")]
    BadLabel { index: usize, label: f64 },
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("missing problem metadata: {0}")]
    MissingMetadata(&'static str),
    #[error("data error: {0}")]
    Data(String),
}

/// Known facts about a problem, used by step-size rules and by the verifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemMeta {
    pub name: String,
    /// Lower bound on every per-sample loss used by the Polyak step. Zero for
    /// every shipped problem.
    pub f_star: f64,
    /// `max_i L_i` when known.
    pub lipschitz_max: Option<f64>,
    /// Strong-convexity modulus of the full objective when known.
    pub strong_convexity: Option<f64>,
    /// A point where every per-sample loss vanishes, when the generator knows one.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<Vec<f64>>,
}

impl ProblemMeta {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            f_star: 0.0,
            lipschitz_max: None,
            strong_convexity: None,
            witness: None,
        }
    }
}

/// Result of one pass over a mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEvaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub samples: Vec<f64>,
}

pub trait FiniteSumProblem: Send + Sync {
    /// Number of component functions `M`.
    fn num_samples(&self) -> usize;

    /// Parameter dimension `n`.
    fn dim(&self) -> usize;

    /// `f_i(w)`. Callers guarantee `w.len() == dim()` and `i < num_samples()`.
    fn per_sample_value(&self, w: &[f64], i: usize) -> f64;

    /// Adds `scale * ∇f_i(w)` into `grad` and returns `f_i(w)`.
    fn accumulate_sample_gradient(&self, w: &[f64], i: usize, scale: f64, grad: &mut [f64]) -> f64;

    fn meta(&self) -> &ProblemMeta;

    /// Smoothness constant `L_i` of one component, when known.
    fn sample_lipschitz(&self, _i: usize) -> Option<f64> {
        None
    }

    /// Classification accuracy of `w` on this problem's own samples.
    fn accuracy(&self, _w: &[f64]) -> Option<f64> {
        None
    }

    /// Starting point for an optimizer run.
    fn initial_point(&self, _seed: u64) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    /// Mean of `f_i(w)` over `idx`.
    fn value(&self, w: &[f64], idx: &[usize]) -> Result<f64, ProblemError> {
        check_args(self, w, idx)?;
        let sum = pairwise_sum_by(idx.len(), |j| self.per_sample_value(w, idx[j]));
        Ok(sum / idx.len() as f64)
    }

    /// Mean gradient over `idx`.
    fn gradient(&self, w: &[f64], idx: &[usize]) -> Result<Vec<f64>, ProblemError> {
        Ok(self.value_grad(w, idx)?.1)
    }

    /// Mean value and gradient over `idx` in one pass over the batch.
    fn value_grad(&self, w: &[f64], idx: &[usize]) -> Result<(f64, Vec<f64>), ProblemError> {
        self.value_grad_with_samples(w, idx).map(|e| (e.value, e.gradient))
    }

    /// Like [`value_grad`](Self::value_grad) but also keeps the per-sample
    /// values produced along the way.
    fn value_grad_with_samples(&self, w: &[f64], idx: &[usize]) -> Result<BatchEvaluation, ProblemError> {
        check_args(self, w, idx)?;
        let scale = 1.0 / idx.len() as f64;
        let mut gradient = vec![0.0; self.dim()];
        let mut samples = Vec::with_capacity(idx.len());
        for &i in idx {
            samples.push(self.accumulate_sample_gradient(w, i, scale, &mut gradient));
        }
        let sum = pairwise_sum_by(samples.len(), |j| samples[j]);
        Ok(BatchEvaluation {
            value: sum / idx.len() as f64,
            gradient,
            samples,
        })
    }

    /// Per-sample values over `idx`, in batch order.
    fn sample_values(&self, w: &[f64], idx: &[usize]) -> Result<Vec<f64>, ProblemError> {
        check_args(self, w, idx)?;
        Ok(idx.iter().map(|&i| self.per_sample_value(w, i)).collect())
    }

    /// Full-batch loss, pairwise-summed.
    fn full_value(&self, w: &[f64]) -> Result<f64, ProblemError> {
        check_dim(self, w)?;
        let m = self.num_samples();
        if m == 0 {
            return Err(ProblemError::EmptyBatch);
        }
        Ok(pairwise_sum_by(m, |i| self.per_sample_value(w, i)) / m as f64)
    }

    fn full_value_grad(&self, w: &[f64]) -> Result<(f64, Vec<f64>), ProblemError> {
        let all: Vec<usize> = (0..self.num_samples()).collect();
        self.value_grad(w, &all)
    }
}

fn check_dim<P: FiniteSumProblem + ?Sized>(p: &P, w: &[f64]) -> Result<(), ProblemError> {
    if w.len() != p.dim() {
        return Err(ProblemError::DimensionMismatch {
            expected: p.dim(),
            found: w.len(),
        });
    }
    Ok(())
}

fn check_args<P: FiniteSumProblem + ?Sized>(p: &P, w: &[f64], idx: &[usize]) -> Result<(), ProblemError> {
    if idx.is_empty() {
        return Err(ProblemError::EmptyBatch);
    }
    check_dim(p, w)?;
    let m = p.num_samples();
    if let Some(&bad) = idx.iter().find(|&&i| i >= m) {
        return Err(ProblemError::IndexOutOfRange { index: bad, len: m });
    }
    Ok(())
}

/// Mini-batch value and gradient `(f_{i_k}(w), ∇f_{i_k}(w))`.
pub fn batch_value_grad<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    w: &[f64],
    idx: &[usize],
) -> Result<(f64, Vec<f64>), ProblemError> {
    problem.value_grad(w, idx)
}

/// Central-difference gradient of the batch loss with per-coordinate step
/// `h * (1 + |w_j|)`.
pub fn finite_diff_gradient<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    w: &[f64],
    idx: &[usize],
    h: f64,
) -> Result<Vec<f64>, ProblemError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(ProblemError::InvalidStep(h));
    }
    check_args(problem, w, idx)?;
    let mut probe = w.to_vec();
    let mut grad = Vec::with_capacity(w.len());
    for j in 0..w.len() {
        let step = h * (1.0 + w[j].abs());
        probe[j] = w[j] + step;
        let plus = problem.value(&probe, idx)?;
        probe[j] = w[j] - step;
        let minus = problem.value(&probe, idx)?;
        probe[j] = w[j];
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

/// Largest relative error between two gradients, normalised by
/// `max(‖reference‖_∞, floor)`.
pub fn max_relative_error(reference: &[f64], candidate: &[f64], floor: f64) -> f64 {
    let scale = reference
        .iter()
        .fold(floor, |acc, x| acc.max(x.abs()));
    reference
        .iter()
        .zip(candidate)
        .map(|(r, c)| (r - c).abs() / scale)
        .fold(0.0, f64::max)
}
