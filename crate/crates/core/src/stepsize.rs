//! Initial step-size rules and the backtrack-count reset.
//!
//! An iteration's starting step is `η_{k,0} · δ^{l̄_k}`: `η_{k,0}` comes from one
//! of the rules below and `l̄_k` remembers how many backtracks recent iterations
//! needed, so the search does not repeat them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stationarity threshold on squared norms (and directional decrements).
pub const TOL_G: f64 = 1e-24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepSizeError {
    #[error("gradient is numerically zero (squared norm {0:e})")]
    DegenerateGradient(f64),
    #[error("batch loss is at its lower bound")]
    Converged,
    #[error("invalid step-size parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

/// Polyak step `(f − f*) / (c_p · decrement)` before the `η_max` cap.
pub fn polyak_uncapped(f_val: f64, f_star: f64, decrement: f64, c_p: f64) -> Result<f64, StepSizeError> {
    if !(decrement > TOL_G) {
        return Err(StepSizeError::DegenerateGradient(decrement));
    }
    let gap = f_val - f_star;
    if !(gap > 0.0) {
        return Err(StepSizeError::Converged);
    }
    Ok(gap / (c_p * decrement))
}

/// `min{(f − f*) / (c_p · decrement), η_max}`.
pub fn polyak_initial(f_val: f64, f_star: f64, decrement: f64, c_p: f64, eta_max: f64) -> Result<f64, StepSizeError> {
    Ok(polyak_uncapped(f_val, f_star, decrement, c_p)?.min(eta_max))
}

/// `min{η_{k−1} γ^{b/M}, η_max}`.
pub fn exp_growth_cap(eta_prev: f64, gamma: f64, batch: usize, samples: usize, eta_max: f64) -> f64 {
    (eta_prev * gamma.powf(batch as f64 / samples as f64)).min(eta_max)
}

/// Smoothed stochastic Polyak step `min{η̃_{k,0}, η_{k−1} γ^{b/M}, η_max}`.
pub fn sps_smoothed(polyak_value: f64, eta_prev: f64, gamma: f64, batch: usize, samples: usize, eta_max: f64) -> f64 {
    polyak_value.min(exp_growth_cap(eta_prev, gamma, batch, samples, eta_max))
}

/// Gradient-ratio reset `η_{k−1} ‖g_{k−1}‖² / ‖g_k‖²` (uncapped).
pub fn bb_reset3(eta_prev: f64, g_prev_sq: f64, g_cur_sq: f64) -> Result<f64, StepSizeError> {
    if !(g_cur_sq > TOL_G) {
        return Err(StepSizeError::DegenerateGradient(g_cur_sq));
    }
    Ok(eta_prev * (g_prev_sq / g_cur_sq))
}

/// Interpolation reset `2 (f_{k−1}(w_{k−1}) − f_{k−1}(w_k)) / denom` (raw; may be
/// non-positive). `denom` is `‖g_{k−1}‖` as printed, or `‖g_{k−1}‖²` for the
/// classical variant.
pub fn reset4(f_prev_at_wprev: f64, f_prev_at_wcur: f64, denom: f64, tol: f64) -> Result<f64, StepSizeError> {
    if !(denom > tol) {
        return Err(StepSizeError::DegenerateGradient(denom));
    }
    Ok(2.0 * (f_prev_at_wprev - f_prev_at_wcur) / denom)
}

/// Clamps a raw reset value to `(0, η_max]`, falling back to `eta_prev` when
/// the raw value is not positive.
pub fn positive_or_fallback(raw: f64, eta_prev: f64, eta_max: f64) -> f64 {
    if raw > 0.0 && raw.is_finite() {
        raw.min(eta_max)
    } else {
        eta_prev.min(eta_max)
    }
}

/// `l̄_k = max(l̄_{k−1} + l_{k−1} − 1, 0)`.
pub fn update_reset_exponent(l_bar_prev: u32, l_prev: u32) -> u32 {
    (l_bar_prev + l_prev).saturating_sub(1)
}

/// `η_{k,0} · δ^{l̄_k}`.
pub fn scaled_initial(eta_k0: f64, l_bar: u32, delta: f64) -> f64 {
    eta_k0 * delta.powi(l_bar as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialStepKind {
    /// Polyak step capped at `η_max`.
    Polyak,
    /// Polyak step, additionally capped by geometric growth of the last step.
    SpsSmoothed,
    /// Geometric growth of the last step, capped at `η_max`.
    ExpCap,
    /// Previous step scaled by the ratio of squared gradient norms.
    Reset3,
    /// Twice the previous batch's decrease over its gradient norm.
    Reset4,
    Constant { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResetKind {
    /// Pre-scale by `δ^{l̄_k}`.
    #[default]
    New,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizeParams {
    pub c_p: f64,
    pub eta_max: f64,
    pub gamma: f64,
    pub delta: f64,
    /// `η_{−1}` for the rules that grow or rescale the previous step.
    pub eta_init: f64,
    pub reset4_squared_norm: bool,
    pub batch_size: usize,
    pub samples: usize,
}

impl Default for StepSizeParams {
    fn default() -> Self {
        Self {
            c_p: 0.1,
            eta_max: 10.0,
            gamma: 2.0,
            delta: 0.5,
            eta_init: 1.0,
            reset4_squared_norm: false,
            batch_size: 1,
            samples: 1,
        }
    }
}

/// Memory carried between iterations by the initial-step rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResetState {
    pub l_bar: u32,
    pub l_prev: u32,
    /// Last accepted step `η_{k−1}`.
    pub eta_prev: f64,
    /// `‖∇f_{i_{k−1}}(w_{k−1})‖²`.
    pub g_prev_sq: Option<f64>,
    /// `(f_{i_{k−1}}(w_{k−1}), f_{i_{k−1}}(w_k))` when the second value is known.
    pub f_prev_pair: Option<(f64, f64)>,
}

impl ResetState {
    pub fn new(eta_init: f64) -> Self {
        Self {
            l_bar: 0,
            l_prev: 0,
            eta_prev: eta_init,
            g_prev_sq: None,
            f_prev_pair: None,
        }
    }
}

/// What an initial-step rule proposes for the current iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialStep {
    /// `η_{k,0}`.
    pub eta_k0: f64,
    /// Pre-cap Polyak value, when the rule computed one.
    pub polyak_uncapped: Option<f64>,
    /// Step handed to the backtracking engine, `η_{k,0} δ^{l̄_k}`.
    pub eta_start: f64,
    pub l_bar: u32,
}

/// Initial-step rule plus optional backtrack-count reset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialStepRule {
    pub kind: InitialStepKind,
    pub reset: ResetKind,
    pub params: StepSizeParams,
    pub state: ResetState,
}

impl InitialStepRule {
    pub fn new(kind: InitialStepKind, reset: ResetKind, params: StepSizeParams) -> Result<Self, StepSizeError> {
        let bad = |name, reason: String| Err(StepSizeError::InvalidParameter { name, reason });
        if !(params.c_p > 0.0 && params.c_p < 1.0) {
            return bad("c_p", format!("must be in (0, 1), got {}", params.c_p));
        }
        if !(params.eta_max > 0.0) {
            return bad("eta_max", format!("must be positive, got {}", params.eta_max));
        }
        if !(params.gamma > 1.0) || !params.gamma.is_finite() {
            return bad("gamma", format!("must be > 1, got {}", params.gamma));
        }
        if !(params.delta > 0.0 && params.delta < 1.0) {
            return bad("delta", format!("must be in (0, 1), got {}", params.delta));
        }
        if !(params.eta_init > 0.0) || !params.eta_init.is_finite() {
            return bad("eta_init", format!("must be positive, got {}", params.eta_init));
        }
        if let InitialStepKind::Constant { value } = kind {
            if !(value > 0.0) || !value.is_finite() {
                return bad("constant", format!("must be positive, got {value}"));
            }
        }
        Ok(Self {
            kind,
            reset,
            params,
            state: ResetState::new(params.eta_init),
        })
    }

    /// Proposes `η_{k,0}` and the scaled starting step for an iterate with
    /// batch loss `f_val`, directional decrement and squared gradient norm.
    pub fn propose(&self, f_val: f64, f_star: f64, decrement: f64, grad_sq: f64) -> Result<InitialStep, StepSizeError> {
        if !(decrement > TOL_G) {
            return Err(StepSizeError::DegenerateGradient(decrement));
        }
        let p = &self.params;
        let s = &self.state;
        let mut polyak = None;
        let eta_k0 = match self.kind {
            InitialStepKind::Polyak => {
                let raw = polyak_uncapped(f_val, f_star, decrement, p.c_p)?;
                polyak = Some(raw);
                raw.min(p.eta_max)
            }
            InitialStepKind::SpsSmoothed => {
                let raw = polyak_uncapped(f_val, f_star, decrement, p.c_p)?;
                polyak = Some(raw);
                sps_smoothed(raw, s.eta_prev, p.gamma, p.batch_size, p.samples, p.eta_max)
            }
            InitialStepKind::ExpCap => exp_growth_cap(s.eta_prev, p.gamma, p.batch_size, p.samples, p.eta_max),
            InitialStepKind::Reset3 => match s.g_prev_sq {
                Some(g_prev_sq) => {
                    let raw = bb_reset3(s.eta_prev, g_prev_sq, grad_sq)?;
                    log_cap("reset3", raw, p.eta_max);
                    positive_or_fallback(raw, s.eta_prev, p.eta_max)
                }
                None => s.eta_prev.min(p.eta_max),
            },
            InitialStepKind::Reset4 => match (s.f_prev_pair, s.g_prev_sq) {
                (Some((before, after)), Some(g_prev_sq)) => {
                    let (denom, tol) = if p.reset4_squared_norm {
                        (g_prev_sq, TOL_G)
                    } else {
                        (g_prev_sq.sqrt(), TOL_G.sqrt())
                    };
                    match reset4(before, after, denom, tol) {
                        Ok(raw) => {
                            log_cap("reset4", raw, p.eta_max);
                            positive_or_fallback(raw, s.eta_prev, p.eta_max)
                        }
                        Err(_) => s.eta_prev.min(p.eta_max),
                    }
                }
                _ => s.eta_prev.min(p.eta_max),
            },
            InitialStepKind::Constant { value } => value,
        };
        let l_bar = match self.reset {
            ResetKind::New => s.l_bar,
            ResetKind::None => 0,
        };
        Ok(InitialStep {
            eta_k0,
            polyak_uncapped: polyak,
            eta_start: scaled_initial(eta_k0, l_bar, p.delta),
            l_bar,
        })
    }

    /// Records the outcome of iteration `k`.
    ///
    /// `trial_at_next` is `f_{i_k}(w_{k+1})` when it was evaluated.
    pub fn record(&mut self, eta: f64, backtracks: u32, f_val: f64, grad_sq: f64, trial_at_next: Option<f64>) {
        let s = &mut self.state;
        if self.reset == ResetKind::New {
            s.l_bar = update_reset_exponent(s.l_bar, backtracks);
        }
        s.l_prev = backtracks;
        s.eta_prev = eta;
        s.g_prev_sq = Some(grad_sq);
        s.f_prev_pair = trial_at_next.map(|after| (f_val, after));
    }

    /// Records an iteration that did not move the iterate.
    pub fn record_skip(&mut self, f_val: f64, grad_sq: f64) {
        let s = &mut self.state;
        if self.reset == ResetKind::New {
            s.l_bar = update_reset_exponent(s.l_bar, 0);
        }
        s.l_prev = 0;
        s.g_prev_sq = Some(grad_sq);
        s.f_prev_pair = Some((f_val, f_val));
    }
}

fn log_cap(rule: &str, raw: f64, eta_max: f64) {
    if raw > eta_max {
        log::debug!("{rule}: initial step {raw:e} capped at {eta_max}");
    }
}
