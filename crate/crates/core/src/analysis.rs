//! Convergence-rate certificates, empirical rate fits and post-hoc checks of
//! recorded runs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optim::{IterationStatus, Method, RunRecord};
use crate::problems::{FiniteSumProblem, ProblemError};
use crate::vecops::{dist_sq, norm_sq, pairwise_sum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("series entry {index} is {value}, expected a positive finite value")]
    NonPositiveSeries { index: usize, value: f64 },
    #[error("need at least {needed} points to fit a rate, got {found}")]
    TooShort { needed: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    StronglyConvex,
    Convex,
    Pl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateInputs {
    pub c: f64,
    pub xi: f64,
    pub delta: f64,
    pub eta_bar_min: f64,
    pub eta_max: Option<f64>,
    pub mu: Option<f64>,
    pub l_max: f64,
    pub a1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum RateConstants {
    StronglyConvex { eta_min: f64, a: f64, rate_b: f64, d: f64, xi_bound: f64 },
    Convex { eta_min: f64, d1: f64, b1: f64 },
    Pl { a2: f64, nu: f64, b2: f64, d2: f64, eta_max_bound: f64, xi_bound: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCertificate {
    pub regime: Regime,
    pub inputs: CertificateInputs,
    pub constants: RateConstants,
    pub valid: bool,
    /// Violated conditions, empty when valid.
    pub violations: Vec<String>,
}

fn finalize(regime: Regime, inputs: CertificateInputs, constants: RateConstants, violations: Vec<String>) -> RateCertificate {
    RateCertificate {
        regime,
        inputs,
        constants,
        valid: violations.is_empty(),
        violations,
    }
}

fn require(violations: &mut Vec<String>, ok: bool, msg: impl FnOnce() -> String) {
    if !ok {
        violations.push(msg());
    }
}

fn positive_inputs(violations: &mut Vec<String>, named: &[(&str, f64)]) {
    for &(name, v) in named {
        require(violations, v > 0.0 && v.is_finite(), || format!("{name} must be positive, got {v}"));
    }
}

/// `η_min = min{2δ(1−c)/L_max, η̄_min}`, the guaranteed floor on accepted steps.
pub fn eta_min(c: f64, delta: f64, eta_bar_min: f64, l_max: f64) -> f64 {
    (2.0 * delta * (1.0 - c) / l_max).min(eta_bar_min)
}

/// Linear-rate certificate for strongly convex interpolating problems.
pub fn certificate_strongly_convex(
    c: f64,
    xi: f64,
    delta: f64,
    eta_bar_min: f64,
    eta_max: f64,
    mu: f64,
    l_max: f64,
) -> RateCertificate {
    let inputs = CertificateInputs {
        c,
        xi,
        delta,
        eta_bar_min,
        eta_max: Some(eta_max),
        mu: Some(mu),
        l_max,
        a1: None,
    };
    let mut v = Vec::new();
    positive_inputs(
        &mut v,
        &[("delta", delta), ("eta_bar_min", eta_bar_min), ("eta_max", eta_max), ("mu", mu), ("l_max", l_max)],
    );
    require(&mut v, (0.0..=1.0).contains(&xi), || format!("xi must be in [0, 1], got {xi}"));
    require(&mut v, mu <= l_max, || format!("mu = {mu} exceeds l_max = {l_max}"));
    require(&mut v, c > 0.5 && c < 1.0, || format!("c must lie in (1/2, 1), got {c}"));

    let eta_min = eta_min(c, delta, eta_bar_min, l_max);
    let a = eta_min * (2.0 - 1.0 / c);
    let rate_b = (1.0 + eta_max / (a * c)) * xi;
    let d = (1.0 - eta_min * mu).max(rate_b);
    let xi_bound = 1.0 / (1.0 + eta_max / (eta_min * (2.0 * c - 1.0)));
    require(&mut v, xi < xi_bound, || format!("xi = {xi} is not below its bound {xi_bound}"));
    require(&mut v, d > 0.0 && d < 1.0, || format!("d = {d} is outside (0, 1)"));
    finalize(
        Regime::StronglyConvex,
        inputs,
        RateConstants::StronglyConvex {
            eta_min,
            a,
            rate_b,
            d,
            xi_bound,
        },
        v,
    )
}

/// `O(1/k)` certificate for convex interpolating problems.
pub fn certificate_convex(c: f64, xi: f64, a1: f64, delta: f64, eta_bar_min: f64, l_max: f64) -> RateCertificate {
    let inputs = CertificateInputs {
        c,
        xi,
        delta,
        eta_bar_min,
        eta_max: None,
        mu: None,
        l_max,
        a1: Some(a1),
    };
    let mut v = Vec::new();
    positive_inputs(&mut v, &[("delta", delta), ("eta_bar_min", eta_bar_min), ("l_max", l_max)]);
    require(&mut v, (0.0..=1.0).contains(&xi), || format!("xi must be in [0, 1], got {xi}"));
    require(&mut v, c > 0.5 && c < 1.0, || format!("c must lie in (1/2, 1), got {c}"));
    require(&mut v, a1 > 0.0 && a1 < 2.0 - 1.0 / c, || {
        format!("a1 out of range: need 0 < a1 < {}, got {a1}", 2.0 - 1.0 / c)
    });
    require(&mut v, xi < a1 / 2.0, || format!("xi = {xi} is not below a1/2 = {}", a1 / 2.0));
    let d1 = c / (c * (2.0 - a1) - 1.0);
    let b1 = (1.0 + 1.0 / (a1 * c)) * xi;
    finalize(
        Regime::Convex,
        inputs,
        RateConstants::Convex {
            eta_min: eta_min(c, delta, eta_bar_min, l_max),
            d1,
            b1,
        },
        v,
    )
}

/// Linear-rate certificate under the PL condition. `d2` is reported as
/// `max(ν, b2)`; the certificate is valid only when both lie below one.
pub fn certificate_pl(
    c: f64,
    xi: f64,
    delta: f64,
    eta_bar_min: f64,
    eta_max: f64,
    mu: f64,
    l_max: f64,
) -> RateCertificate {
    let inputs = CertificateInputs {
        c,
        xi,
        delta,
        eta_bar_min,
        eta_max: Some(eta_max),
        mu: Some(mu),
        l_max,
        a1: None,
    };
    let mut v = Vec::new();
    positive_inputs(
        &mut v,
        &[("delta", delta), ("eta_bar_min", eta_bar_min), ("eta_max", eta_max), ("mu", mu), ("l_max", l_max)],
    );
    require(&mut v, (0.0..=1.0).contains(&xi), || format!("xi must be in [0, 1], got {xi}"));
    let cc = c * (1.0 - c);
    let gap = l_max - 4.0 * mu * cc;
    require(&mut v, c > l_max / (4.0 * mu) && c < 1.0, || {
        format!("c must lie in (l_max/(4 mu), 1) = ({}, 1), got {c}", l_max / (4.0 * mu))
    });
    let floor = 2.0 * delta * (1.0 - c) / l_max;
    require(&mut v, floor < eta_bar_min, || {
        format!("2 delta (1-c)/l_max = {floor} is not below eta_bar_min = {eta_bar_min}")
    });
    let eta_max_bound = if gap > 0.0 {
        2.0 * delta * cc / gap
    } else {
        f64::INFINITY
    };
    require(&mut v, eta_max < eta_max_bound, || {
        format!("eta_max = {eta_max} is not below its bound {eta_max_bound}")
    });

    let a2 = -gap / (4.0 * delta * cc) + 1.0 / (2.0 * eta_max);
    let nu = eta_max * (gap / (2.0 * delta * cc) + a2);
    let b2 = (1.0 + l_max / (a2 * c)) * xi;
    let d2 = nu.max(b2);
    let xi_bound = a2 * c / (a2 * c + l_max);
    require(&mut v, a2 > 0.0, || format!("a2 = {a2} must be positive"));
    require(&mut v, xi < xi_bound, || format!("xi = {xi} is not below its bound {xi_bound}"));
    require(&mut v, nu > 0.0 && nu < 1.0, || format!("nu = {nu} is outside (0, 1)"));
    require(&mut v, (0.0..1.0).contains(&b2), || format!("b2 = {b2} is outside [0, 1)"));
    finalize(
        Regime::Pl,
        inputs,
        RateConstants::Pl {
            a2,
            nu,
            b2,
            d2,
            eta_max_bound,
            xi_bound,
        },
        v,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub d_hat: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares fit of `log(series_k)` against `k`; `d_hat = exp(slope)`.
pub fn estimate_geometric_rate(series: &[f64]) -> Result<RateFit, AnalysisError> {
    let points: Vec<(f64, f64)> = series.iter().enumerate().map(|(k, &v)| (k as f64, v)).collect();
    fit_log_linear(&points, 10)
}

/// Fits only the entries whose value lies in `[lo, hi]`, keeping their
/// original positions as abscissae.
pub fn estimate_geometric_rate_in_band(series: &[f64], lo: f64, hi: f64) -> Result<RateFit, AnalysisError> {
    let points: Vec<(f64, f64)> = series
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= lo && v <= hi)
        .map(|(k, &v)| (k as f64, v))
        .collect();
    fit_log_linear(&points, 3)
}

fn fit_log_linear(points: &[(f64, f64)], needed: usize) -> Result<RateFit, AnalysisError> {
    if points.len() < needed {
        return Err(AnalysisError::TooShort {
            needed,
            found: points.len(),
        });
    }
    if let Some((k, &(_, v))) = points.iter().enumerate().find(|(_, (_, v))| !(*v > 0.0) || !v.is_finite()) {
        return Err(AnalysisError::NonPositiveSeries { index: k, value: v });
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = pairwise_sum(&xs) / n;
    let my = pairwise_sum(&ys) / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (my + slope * (x - mx));
            r * r
        })
        .sum();
    // A flat series has nothing left to explain.
    let r_squared = if syy <= f64::EPSILON * f64::EPSILON * n { 1.0 } else { 1.0 - sse / syy };
    Ok(RateFit {
        d_hat: slope.exp(),
        r_squared,
        points: points.len(),
    })
}

/// `‖w − w*‖² + a (C_k − f*)`.
pub fn lyapunov_strongly_convex(w: &[f64], w_star: &[f64], c_k: f64, f_star: f64, a: f64) -> f64 {
    dist_sq(w, w_star) + a * (c_k - f_star)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceCheck {
    /// `(1/M) Σ_i ‖∇f_i(w)‖²`.
    pub lhs: f64,
    /// `2 L_max (f(w) − f*)`.
    pub rhs: f64,
    pub ok: bool,
}

/// Checks the gradient-noise bound `E‖∇f_i(w)‖² ≤ 2 L_max (f(w) − f*)`.
///
/// For a smooth nonnegative component, `‖∇f_i‖² ≤ 2 L_i f_i`, which
/// averages to the bound above. For `f_i = ½ L ‖w‖²` it holds with equality.
pub fn check_variance_bound<P: FiniteSumProblem + ?Sized>(problem: &P, w: &[f64]) -> Result<VarianceCheck, ProblemError> {
    let meta = problem.meta();
    let l_max = meta.lipschitz_max.ok_or(ProblemError::MissingMetadata("lipschitz_max"))?;
    let m = problem.num_samples();
    let mut per_sample = Vec::with_capacity(m);
    let mut values = Vec::with_capacity(m);
    let mut grad = vec![0.0; problem.dim()];
    for i in 0..m {
        if i == 0 && w.len() != problem.dim() {
            return Err(ProblemError::DimensionMismatch {
                expected: problem.dim(),
                found: w.len(),
            });
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        values.push(problem.accumulate_sample_gradient(w, i, 1.0, &mut grad));
        per_sample.push(norm_sq(&grad));
    }
    let lhs = pairwise_sum(&per_sample) / m as f64;
    let f = pairwise_sum(&values) / m as f64;
    let rhs = 2.0 * l_max * (f - meta.f_star);
    Ok(VarianceCheck {
        lhs,
        rhs,
        ok: lhs <= rhs * (1.0 + 1e-9),
    })
}

/// Lower bound `1/(2 c_p L_max)` on the uncapped Polyak step at any iterate
/// of an interpolating problem.
pub fn polyak_floor(c_p: f64, l_max: f64) -> f64 {
    1.0 / (2.0 * c_p * l_max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantResult {
    pub name: String,
    /// `None` when the record lacks what the check needs.
    pub passed: Option<bool>,
    pub checked: u64,
    pub violations: u64,
    pub detail: String,
}

impl InvariantResult {
    fn counted(name: &str, checked: u64, violations: u64, detail: String) -> Self {
        Self {
            name: name.to_owned(),
            passed: Some(violations == 0),
            checked,
            violations,
            detail,
        }
    }

    fn skipped(name: &str, detail: &str) -> Self {
        Self {
            name: name.to_owned(),
            passed: None,
            checked: 0,
            violations: 0,
            detail: detail.to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub invariants: Vec<InvariantResult>,
    /// Geometric fit of the epoch losses inside `[1e-12, 1e-2]`.
    pub loss_rate: Option<RateFit>,
    pub passed: bool,
}

/// Re-checks a recorded run against the per-iteration invariants.
pub fn verify_run(record: &RunRecord) -> VerifyReport {
    let its = &record.iterations;
    let s = &record.settings;
    let (c, delta) = (s.backtrack.c, s.backtrack.delta);
    let line_search = matches!(s.method, Method::LineSearch { .. });
    let preconditioned = match s.method {
        Method::LineSearch { preconditioned, .. } | Method::Sps { preconditioned } => preconditioned,
        _ => false,
    };
    let stepped = || its.iter().filter(|i| i.status == IterationStatus::Stepped);
    let mut out = Vec::new();

    if its.is_empty() {
        out.push(InvariantResult::skipped("armijo", "no iteration records"));
    } else {
        let mut n = 0;
        let mut bad = 0;
        for it in stepped() {
            n += 1;
            let (Some(r), Some(t)) = (it.reference, it.trial_value) else {
                bad += 1;
                continue;
            };
            if t > r - c * it.eta * it.decrement + 1e-12 * r.abs().max(1.0) {
                bad += 1;
            }
        }
        out.push(InvariantResult::counted("armijo", n, bad, format!("c = {c}")));
    }

    match record.problem.lipschitz_max {
        Some(l) if line_search && !preconditioned && !its.is_empty() => {
            let floor = 2.0 * delta * (1.0 - c) / l;
            let bad = stepped().filter(|i| i.eta < floor.min(i.eta_start) - 1e-12).count() as u64;
            out.push(InvariantResult::counted(
                "step_floor",
                stepped().count() as u64,
                bad,
                format!("2 delta (1-c)/L_max = {floor:e}"),
            ));
        }
        _ => out.push(InvariantResult::skipped(
            "step_floor",
            "needs L_max, plain gradient directions and iteration records",
        )),
    }

    let with_ref: Vec<_> = its.iter().filter_map(|i| i.reference.map(|r| (r, i.f_k))).collect();
    if with_ref.is_empty() {
        out.push(InvariantResult::skipped("reference_bounds", "no reference values recorded"));
    } else {
        let f_star = record.problem.f_star;
        let bad = with_ref.iter().filter(|&&(r, f)| r < f || r < f_star).count() as u64;
        out.push(InvariantResult::counted(
            "reference_bounds",
            with_ref.len() as u64,
            bad,
            "C_k >= f_k and C_k >= f*".into(),
        ));
    }

    match record.problem.lipschitz_max {
        Some(l) if !preconditioned => {
            let floor = polyak_floor(s.step.c_p, l);
            let vals: Vec<f64> = its.iter().filter_map(|i| i.polyak_uncapped).collect();
            if vals.is_empty() {
                out.push(InvariantResult::skipped("polyak_floor", "no Polyak steps recorded"));
            } else {
                let bad = vals.iter().filter(|&&p| p < floor * (1.0 - 1e-9)).count() as u64;
                out.push(InvariantResult::counted(
                    "polyak_floor",
                    vals.len() as u64,
                    bad,
                    format!("1/(2 c_p L_max) = {floor:e}"),
                ));
            }
        }
        _ => out.push(InvariantResult::skipped("polyak_floor", "needs L_max and plain gradient directions")),
    }

    if its.is_empty() || record.error.is_some() {
        out.push(InvariantResult::skipped(
            "oracle_accounting",
            "needs a complete run with iteration records",
        ));
    } else {
        let ls: u64 = its.iter().map(|i| i.evals as u64).sum();
        let expected = ls + record.counters.telemetry_evals;
        let mismatched = stepped().filter(|i| i.evals != i.backtracks + 1).count() as u64;
        let bad = mismatched + u64::from(expected != record.counters.value_evals);
        out.push(InvariantResult::counted(
            "oracle_accounting",
            its.len() as u64 + 1,
            bad,
            format!(
                "value_evals = {}, sum of (l_k + 1) = {ls}, telemetry = {}",
                record.counters.value_evals, record.counters.telemetry_evals
            ),
        ));
    }

    let rows = &record.epochs;
    let bad = rows
        .windows(2)
        .filter(|w| w[1].value_evals < w[0].value_evals || w[1].grad_evals < w[0].grad_evals)
        .count() as u64;
    out.push(InvariantResult::counted(
        "counters_monotone",
        rows.len().saturating_sub(1) as u64,
        bad,
        String::new(),
    ));

    let loss_rate = estimate_geometric_rate_in_band(&record.losses(), 1e-12, 1e-2).ok();
    let passed = out.iter().all(|r| r.passed != Some(false));
    VerifyReport {
        invariants: out,
        loss_rate,
        passed,
    }
}
