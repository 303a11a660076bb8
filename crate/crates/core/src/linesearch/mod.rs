//! Backtracking line search with pluggable reference values.
//!
//! A step `η` is accepted when the trial value satisfies
//! `f(w + η·dir) ≤ reference − c·η·decrement`, where `decrement` is
//! `‖g‖²` for plain gradient steps or `−⟨d, g⟩` for preconditioned
//! directions. The reference is `f(w)` for the monotone (Armijo) search and
//! something larger for the nonmonotone policies in [`reference`].

mod reference;

pub use reference::{
    cross_batch_reference, single_batch_reference, CrossBatchWindow, ReferenceKind, ReferencePolicy,
    SingleBatchTable,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LineSearchError {
    #[error("non-finite function value {0}")]
    NonFiniteValue(f64),
    #[error("direction is not a descent direction (decrement {0})")]
    NonDescentDirection(f64),
    #[error("no acceptable step after {backtracks} backtracks (last trial step {last_eta:e})")]
    MaxBacktracksExceeded { backtracks: u32, last_eta: f64 },
    #[error("invalid line-search parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

/// Recursion state of the stochastic Zhang–Hager reference
///
/// ```text
/// C̃_k = (ξ Q_k C_{k−1} + f_k) / (ξ Q_k + 1),   C_k = max(C̃_k, f_k),
/// Q_{k+1} = ξ Q_k + 1,                         Q_0 = 0, C_{−1} = f_0.
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonmonotoneState {
    c_prev: f64,
    q: f64,
    k: u64,
    xi: f64,
}

impl NonmonotoneState {
    pub fn new(xi: f64) -> Result<Self, LineSearchError> {
        if !(0.0..=1.0).contains(&xi) {
            return Err(LineSearchError::InvalidParameter {
                name: "xi",
                reason: format!("must be in [0, 1], got {xi}"),
            });
        }
        Ok(Self {
            c_prev: 0.0,
            q: 0.0,
            k: 0,
            xi,
        })
    }

    /// `C_{k−1}` (undefined before the first update; reported as 0).
    pub fn c_prev(&self) -> f64 {
        self.c_prev
    }

    /// `Q_k`.
    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    /// Returns `C_k` for the current batch value `f_k` and the advanced state
    /// carrying `(C_k, Q_{k+1}, k + 1)`.
    pub fn zhang_reference(&self, f_k: f64) -> Result<(f64, NonmonotoneState), LineSearchError> {
        if !f_k.is_finite() {
            return Err(LineSearchError::NonFiniteValue(f_k));
        }
        let c_prev = if self.k == 0 { f_k } else { self.c_prev };
        let q_next = self.xi * self.q + 1.0;
        let c_tilde = (self.xi * self.q * c_prev + f_k) / q_next;
        let c_k = c_tilde.max(f_k);
        Ok((
            c_k,
            NonmonotoneState {
                c_prev: c_k,
                q: q_next,
                k: self.k + 1,
                xi: self.xi,
            },
        ))
    }

    /// In-place form of [`zhang_reference`](Self::zhang_reference).
    pub fn update(&mut self, f_k: f64) -> Result<f64, LineSearchError> {
        let (c_k, next) = self.zhang_reference(f_k)?;
        *self = next;
        Ok(c_k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearchOutcome {
    /// Accepted step `η_k = eta_start · δ^backtracks`.
    pub eta: f64,
    pub backtracks: u32,
    /// Trial value at the accepted step.
    pub trial_value: f64,
    /// Function evaluations consumed, `backtracks + 1`.
    pub evals: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacktrackParams {
    pub delta: f64,
    pub c: f64,
    pub max_backtracks: u32,
}

impl Default for BacktrackParams {
    fn default() -> Self {
        Self {
            delta: 0.5,
            c: 0.5,
            max_backtracks: 100,
        }
    }
}

/// Right-hand side of the sufficient-decrease test.
pub fn armijo_rhs(reference: f64, c: f64, eta: f64, decrement: f64) -> Result<f64, LineSearchError> {
    if decrement < 0.0 || decrement.is_nan() {
        return Err(LineSearchError::NonDescentDirection(decrement));
    }
    Ok(reference - c * eta * decrement)
}

/// Tries `η = eta_start · δ^l` for `l = 0, 1, …, max_backtracks` and returns the
/// first step whose trial value passes the sufficient-decrease test. Ties
/// accept. Non-finite trial values count as failures.
pub fn backtrack<F>(
    mut trial_eval: F,
    eta_start: f64,
    reference: f64,
    decrement: f64,
    params: &BacktrackParams,
) -> Result<LineSearchOutcome, LineSearchError>
where
    F: FnMut(f64) -> f64,
{
    if !(eta_start > 0.0) || !eta_start.is_finite() {
        return Err(LineSearchError::InvalidParameter {
            name: "eta_start",
            reason: format!("must be positive and finite, got {eta_start}"),
        });
    }
    if !(params.delta > 0.0 && params.delta < 1.0) {
        return Err(LineSearchError::InvalidParameter {
            name: "delta",
            reason: format!("must be in (0, 1), got {}", params.delta),
        });
    }
    if !(params.c > 0.0 && params.c < 1.0) {
        return Err(LineSearchError::InvalidParameter {
            name: "c",
            reason: format!("must be in (0, 1), got {}", params.c),
        });
    }
    if !reference.is_finite() {
        return Err(LineSearchError::NonFiniteValue(reference));
    }
    // Validates the decrement once; the rhs is recomputed per trial.
    armijo_rhs(reference, params.c, eta_start, decrement)?;

    let mut eta = eta_start;
    for l in 0..=params.max_backtracks {
        eta = eta_start * params.delta.powi(l as i32);
        let value = trial_eval(eta);
        let rhs = reference - params.c * eta * decrement;
        if value.is_finite() && value <= rhs {
            return Ok(LineSearchOutcome {
                eta,
                backtracks: l,
                trial_value: value,
                evals: l + 1,
            });
        }
    }
    Err(LineSearchError::MaxBacktracksExceeded {
        backtracks: params.max_backtracks,
        last_eta: eta,
    })
}
