//! Optimizer loop.
//!
//! One [`Optimizer::step`] of a line-search method:
//!
//! 1. evaluate `f_{i_k}(w_k)` and `∇f_{i_k}(w_k)` in one pass;
//! 2. form the direction (`−g`, or the preconditioned `d_k`) and its decrement;
//! 3. advance the reference policy to get `C_k`;
//! 4. propose `η_{k,0}` and pre-scale it by `δ^{l̄_k}`;
//! 5. backtrack to `η_k = eta_start · δ^{l_k}`;
//! 6. move `w_{k+1} = w_k + η_k · dir` and update `l̄`.
//!
//! A numerically zero gradient (or a batch already at `f*`) skips the move but
//! still advances `k` and the reference state.

mod baselines;
mod runner;

pub use baselines::{precondition, AdamState};
pub use runner::{run, OracleCounters, RunPlan, RunRecord};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linesearch::{backtrack, BacktrackParams, LineSearchError, ReferenceKind, ReferencePolicy};
use crate::problems::{FiniteSumProblem, ProblemError};
use crate::stepsize::{InitialStepKind, InitialStepRule, ResetKind, StepSizeError, StepSizeParams, TOL_G};
use crate::vecops::{all_finite, axpy, dot, norm_sq, offset};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    LineSearch(#[from] LineSearchError),
    #[error(transparent)]
    StepSize(#[from] StepSizeError),
    #[error("non-finite value {0} (divergence)")]
    NonFiniteValue(f64),
    #[error("invalid optimizer settings: {0}")]
    InvalidSettings(String),
}

impl StepError {
    /// Short machine-readable tag for run records.
    pub fn tag(&self) -> &'static str {
        match self {
            StepError::Problem(_) => "problem",
            StepError::LineSearch(LineSearchError::MaxBacktracksExceeded { .. }) => "max_backtracks_exceeded",
            StepError::LineSearch(LineSearchError::NonFiniteValue(_)) | StepError::NonFiniteValue(_) => {
                "non_finite_value"
            }
            StepError::LineSearch(_) => "line_search",
            StepError::StepSize(_) => "step_size",
            StepError::InvalidSettings(_) => "invalid_settings",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    /// Backtracking line search; covers PoNoS, SLS, the Grippo variants and
    /// their preconditioned forms.
    LineSearch {
        initial: InitialStepKind,
        reset: ResetKind,
        reference: ReferenceKind,
        /// Run the search every `ls_every` iterations, reusing the last
        /// accepted step in between.
        ls_every: u32,
        preconditioned: bool,
    },
    /// Smoothed stochastic Polyak step used directly as the learning rate.
    Sps { preconditioned: bool },
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecondParams {
    pub beta2: f64,
    pub eps: f64,
}

impl Default for PrecondParams {
    fn default() -> Self {
        Self { beta2: 0.9, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub method: Method,
    pub backtrack: BacktrackParams,
    pub step: StepSizeParams,
    pub precond: PrecondParams,
    /// Lower bound used by Polyak steps.
    pub f_star: f64,
}

impl OptimizerSettings {
    /// PoNoS with the default hyper-parameters (`δ=0.5, ξ=1, η_max=10, c=0.5,
    /// c_p=0.1`).
    pub fn ponos(samples: usize, batch_size: usize) -> Self {
        Self {
            method: Method::LineSearch {
                initial: InitialStepKind::Polyak,
                reset: ResetKind::New,
                reference: ReferenceKind::Zhang { xi: 1.0 },
                ls_every: 1,
                preconditioned: false,
            },
            backtrack: BacktrackParams::default(),
            step: StepSizeParams {
                batch_size,
                samples,
                ..StepSizeParams::default()
            },
            precond: PrecondParams::default(),
            f_star: 0.0,
        }
    }

    pub fn with_reference(mut self, reference: ReferenceKind) -> Self {
        if let Method::LineSearch { reference: r, .. } = &mut self.method {
            *r = reference;
        }
        self
    }

    pub fn with_reset(mut self, reset: ResetKind) -> Self {
        if let Method::LineSearch { reset: r, .. } = &mut self.method {
            *r = reset;
        }
        self
    }

    pub fn with_initial(mut self, initial: InitialStepKind) -> Self {
        if let Method::LineSearch { initial: i, .. } = &mut self.method {
            *i = initial;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationStatus {
    /// Line search ran and the iterate moved.
    Stepped,
    /// Line search skipped (`ls_every`); the last accepted step was reused.
    ReusedStep,
    /// Batch already at its lower bound; no move.
    Converged,
    /// Numerically zero gradient or decrement; no move.
    DegenerateGradient,
    /// Fixed-rule step without line search (SPS, SGD, Adam).
    Baseline,
}

/// Per-iteration telemetry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: u64,
    pub epoch: u64,
    /// `f_{i_k}(w_k)`.
    pub f_k: f64,
    pub grad_norm: f64,
    /// `‖g‖²`, or `−⟨d, g⟩` for preconditioned directions.
    pub decrement: f64,
    /// `η_{k,0}`.
    pub eta_k0: f64,
    pub polyak_uncapped: Option<f64>,
    pub eta_start: f64,
    pub l_bar: u32,
    pub eta: f64,
    pub backtracks: u32,
    /// Line-search function evaluations at this iteration.
    pub evals: u32,
    /// `C_k` (or the Grippo / monotone reference).
    pub reference: Option<f64>,
    /// `f_{i_k}(w_{k+1})` when the line search evaluated it.
    pub trial_value: Option<f64>,
    pub status: IterationStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    settings: OptimizerSettings,
    w: Vec<f64>,
    k: u64,
    rule: InitialStepRule,
    reference: ReferencePolicy,
    precond_v: Option<Vec<f64>>,
    adam: Option<AdamState>,
    counters: OracleCounters,
}

impl Optimizer {
    pub fn new(settings: OptimizerSettings, w0: Vec<f64>, num_samples: usize) -> Result<Self, StepError> {
        validate(&settings)?;
        let (initial, reset, reference, preconditioned) = match settings.method {
            Method::LineSearch {
                initial,
                reset,
                reference,
                preconditioned,
                ..
            } => (initial, reset, reference, preconditioned),
            Method::Sps { preconditioned } => (
                InitialStepKind::SpsSmoothed,
                ResetKind::None,
                ReferenceKind::Monotone,
                preconditioned,
            ),
            Method::Sgd { lr } | Method::Adam { lr, .. } => (
                InitialStepKind::Constant { value: lr.max(f64::MIN_POSITIVE) },
                ResetKind::None,
                ReferenceKind::Monotone,
                false,
            ),
        };
        let rule = InitialStepRule::new(initial, reset, settings.step)?;
        let reference = ReferencePolicy::new(reference, num_samples)?;
        let dim = w0.len();
        let adam = matches!(settings.method, Method::Adam { .. }).then(|| AdamState::new(dim));
        Ok(Self {
            settings,
            w: w0,
            k: 0,
            rule,
            reference,
            precond_v: preconditioned.then(|| vec![0.0; dim]),
            adam,
            counters: OracleCounters::default(),
        })
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn settings(&self) -> &OptimizerSettings {
        &self.settings
    }

    pub fn counters(&self) -> &OracleCounters {
        &self.counters
    }

    pub(crate) fn counters_mut(&mut self) -> &mut OracleCounters {
        &mut self.counters
    }

    pub fn reference_policy(&self) -> &ReferencePolicy {
        &self.reference
    }

    pub fn step_rule(&self) -> &InitialStepRule {
        &self.rule
    }

    /// Copy of this optimizer with its reference policy replaced, for
    /// side-by-side comparisons from an identical state.
    pub fn with_reference_policy(&self, policy: ReferencePolicy) -> Self {
        Self {
            reference: policy,
            ..self.clone()
        }
    }

    /// One iteration on `batch` (zero-based sample indices) during `epoch`.
    pub fn step<P: FiniteSumProblem + ?Sized>(
        &mut self,
        problem: &P,
        batch: &[usize],
        epoch: u64,
    ) -> Result<IterationRecord, StepError> {
        match self.settings.method {
            Method::LineSearch { ls_every, .. } => self.line_search_step(problem, batch, epoch, ls_every.max(1)),
            Method::Sps { .. } => self.sps_step(problem, batch, epoch),
            Method::Sgd { lr } => self.sgd_step(problem, batch, epoch, lr),
            Method::Adam { lr, beta1, beta2, eps } => self.adam_step(problem, batch, epoch, lr, beta1, beta2, eps),
        }
    }

    /// Evaluates the batch and forms `(direction, decrement)`.
    fn evaluate<P: FiniteSumProblem + ?Sized>(&mut self, problem: &P, batch: &[usize]) -> Result<Evaluated, StepError> {
        let eval = problem.value_grad_with_samples(&self.w, batch)?;
        self.counters.grad_evals += 1;
        if !eval.value.is_finite() {
            return Err(StepError::NonFiniteValue(eval.value));
        }
        let grad_sq = norm_sq(&eval.gradient);
        if !grad_sq.is_finite() {
            return Err(StepError::NonFiniteValue(grad_sq));
        }
        let (direction, decrement) = match self.precond_v.as_mut() {
            Some(v) => {
                let (d, v_next) = precondition(
                    &eval.gradient,
                    v,
                    self.settings.precond.beta2,
                    self.settings.precond.eps,
                    self.k + 1,
                );
                *v = v_next;
                let dec = -dot(&d, &eval.gradient);
                (d, dec)
            }
            None => (eval.gradient.iter().map(|g| -g).collect(), grad_sq),
        };
        Ok(Evaluated {
            value: eval.value,
            samples: eval.samples,
            grad_sq,
            direction,
            decrement,
        })
    }

    fn line_search_step<P: FiniteSumProblem + ?Sized>(
        &mut self,
        problem: &P,
        batch: &[usize],
        epoch: u64,
        ls_every: u32,
    ) -> Result<IterationRecord, StepError> {
        let ev = self.evaluate(problem, batch)?;
        let reference = self.reference.next_reference(ev.value, batch, epoch, &ev.samples)?;
        let mut rec = self.blank_record(epoch, &ev);
        rec.reference = Some(reference);

        if ev.decrement <= TOL_G {
            return Ok(self.skip(rec, &ev, IterationStatus::DegenerateGradient));
        }

        if !self.k.is_multiple_of(ls_every as u64) {
            let eta = self.rule.state.eta_prev;
            axpy(eta, &ev.direction, &mut self.w);
            self.check_iterate()?;
            rec.eta_k0 = eta;
            rec.eta_start = eta;
            rec.eta = eta;
            rec.status = IterationStatus::ReusedStep;
            self.k += 1;
            return Ok(rec);
        }

        let proposal = match self.rule.propose(ev.value, self.settings.f_star, ev.decrement, ev.grad_sq) {
            Ok(p) => p,
            Err(StepSizeError::Converged) => return Ok(self.skip(rec, &ev, IterationStatus::Converged)),
            Err(StepSizeError::DegenerateGradient(_)) => {
                return Ok(self.skip(rec, &ev, IterationStatus::DegenerateGradient))
            }
            Err(e) => return Err(e.into()),
        };
        rec.eta_k0 = proposal.eta_k0;
        rec.polyak_uncapped = proposal.polyak_uncapped;
        rec.eta_start = proposal.eta_start;
        rec.l_bar = proposal.l_bar;

        let w = &self.w;
        let dir = &ev.direction;
        let mut trial_evals = 0u64;
        let mut trial = |eta: f64| {
            trial_evals += 1;
            let probe = offset(w, eta, dir);
            problem.value(&probe, batch).unwrap_or(f64::NAN)
        };
        let outcome = backtrack(
            &mut trial,
            proposal.eta_start,
            reference,
            ev.decrement,
            &self.settings.backtrack,
        );
        self.counters.value_evals += trial_evals;
        let outcome = outcome?;

        axpy(outcome.eta, &ev.direction, &mut self.w);
        self.check_iterate()?;
        self.rule
            .record(outcome.eta, outcome.backtracks, ev.value, ev.grad_sq, Some(outcome.trial_value));

        rec.eta = outcome.eta;
        rec.backtracks = outcome.backtracks;
        rec.evals = outcome.evals;
        rec.trial_value = Some(outcome.trial_value);
        rec.status = IterationStatus::Stepped;
        self.k += 1;
        Ok(rec)
    }

    fn sps_step<P: FiniteSumProblem + ?Sized>(
        &mut self,
        problem: &P,
        batch: &[usize],
        epoch: u64,
    ) -> Result<IterationRecord, StepError> {
        let ev = self.evaluate(problem, batch)?;
        let mut rec = self.blank_record(epoch, &ev);
        let proposal = match self.rule.propose(ev.value, self.settings.f_star, ev.decrement, ev.grad_sq) {
            Ok(p) => p,
            Err(StepSizeError::Converged) => return Ok(self.skip(rec, &ev, IterationStatus::Converged)),
            Err(StepSizeError::DegenerateGradient(_)) => {
                return Ok(self.skip(rec, &ev, IterationStatus::DegenerateGradient))
            }
            Err(e) => return Err(e.into()),
        };
        let eta = proposal.eta_k0;
        axpy(eta, &ev.direction, &mut self.w);
        self.check_iterate()?;
        self.rule.record(eta, 0, ev.value, ev.grad_sq, None);
        rec.eta_k0 = eta;
        rec.polyak_uncapped = proposal.polyak_uncapped;
        rec.eta_start = eta;
        rec.eta = eta;
        rec.status = IterationStatus::Baseline;
        self.k += 1;
        Ok(rec)
    }

    /// Constant-step SGD, `w ← w − lr·g`.
    fn sgd_step<P: FiniteSumProblem + ?Sized>(
        &mut self,
        problem: &P,
        batch: &[usize],
        epoch: u64,
        lr: f64,
    ) -> Result<IterationRecord, StepError> {
        let ev = self.evaluate(problem, batch)?;
        let mut rec = self.blank_record(epoch, &ev);
        axpy(lr, &ev.direction, &mut self.w);
        self.check_iterate()?;
        rec.eta_k0 = lr;
        rec.eta_start = lr;
        rec.eta = lr;
        rec.status = IterationStatus::Baseline;
        self.k += 1;
        Ok(rec)
    }

    #[allow(clippy::too_many_arguments)]
    fn adam_step<P: FiniteSumProblem + ?Sized>(
        &mut self,
        problem: &P,
        batch: &[usize],
        epoch: u64,
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) -> Result<IterationRecord, StepError> {
        let ev = self.evaluate(problem, batch)?;
        let mut rec = self.blank_record(epoch, &ev);
        let grad: Vec<f64> = ev.direction.iter().map(|d| -d).collect();
        let adam = self.adam.as_mut().expect("adam state exists for the adam method");
        adam.apply(&mut self.w, &grad, lr, beta1, beta2, eps);
        self.check_iterate()?;
        rec.eta_k0 = lr;
        rec.eta_start = lr;
        rec.eta = lr;
        rec.status = IterationStatus::Baseline;
        self.k += 1;
        Ok(rec)
    }

    fn blank_record(&self, epoch: u64, ev: &Evaluated) -> IterationRecord {
        IterationRecord {
            k: self.k,
            epoch,
            f_k: ev.value,
            grad_norm: ev.grad_sq.sqrt(),
            decrement: ev.decrement,
            eta_k0: 0.0,
            polyak_uncapped: None,
            eta_start: 0.0,
            l_bar: self.rule.state.l_bar,
            eta: 0.0,
            backtracks: 0,
            evals: 0,
            reference: None,
            trial_value: None,
            status: IterationStatus::Stepped,
        }
    }

    fn skip(&mut self, mut rec: IterationRecord, ev: &Evaluated, status: IterationStatus) -> IterationRecord {
        self.rule.record_skip(ev.value, ev.grad_sq);
        rec.status = status;
        self.k += 1;
        rec
    }

    fn check_iterate(&self) -> Result<(), StepError> {
        if all_finite(&self.w) {
            Ok(())
        } else {
            Err(StepError::NonFiniteValue(f64::NAN))
        }
    }
}

struct Evaluated {
    value: f64,
    samples: Vec<f64>,
    grad_sq: f64,
    direction: Vec<f64>,
    decrement: f64,
}

fn validate(s: &OptimizerSettings) -> Result<(), StepError> {
    let bad = |msg: String| Err(StepError::InvalidSettings(msg));
    let b = &s.backtrack;
    if !(b.c > 0.0 && b.c < 1.0) {
        return bad(format!("c must be in (0, 1), got {}", b.c));
    }
    if !(b.delta > 0.0 && b.delta < 1.0) {
        return bad(format!("delta must be in (0, 1), got {}", b.delta));
    }
    if b.max_backtracks == 0 {
        return bad("max_backtracks must be at least 1".into());
    }
    if !(s.precond.beta2 > 0.0 && s.precond.beta2 < 1.0) {
        return bad(format!("beta2 must be in (0, 1), got {}", s.precond.beta2));
    }
    if !(s.precond.eps > 0.0) {
        return bad(format!("eps must be positive, got {}", s.precond.eps));
    }
    match s.method {
        Method::Sgd { lr } if !(lr >= 0.0) || !lr.is_finite() => bad(format!("lr must be >= 0, got {lr}")),
        Method::Adam { lr, beta1, beta2, eps } => {
            if !(lr >= 0.0) || !lr.is_finite() {
                bad(format!("lr must be >= 0, got {lr}"))
            } else if !(0.0..1.0).contains(&beta1) || !(beta2 > 0.0 && beta2 < 1.0) || !(eps > 0.0) {
                bad("adam betas must lie in [0, 1) and eps must be positive".into())
            } else {
                Ok(())
            }
        }
        Method::LineSearch { ls_every: 0, .. } => bad("ls_every must be at least 1".into()),
        _ => Ok(()),
    }
}
