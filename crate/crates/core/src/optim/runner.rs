use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{IterationRecord, Optimizer, OptimizerSettings, StepError};
use crate::problems::{BatchOrder, FiniteSumProblem, MiniBatchSchedule, ProblemMeta};
use crate::seed::{derive, Stream};
use crate::telemetry::TelemetryRow;

/// Oracle-call counters. `value_evals` counts every batch or full-batch loss
/// evaluation; `telemetry_evals` is the part spent on epoch-boundary losses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCounters {
    pub value_evals: u64,
    pub grad_evals: u64,
    pub telemetry_evals: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub epochs: u64,
    pub batch_size: usize,
    pub order: BatchOrder,
    pub seed: u64,
    /// Keep every [`IterationRecord`] in the run record.
    pub record_iterations: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub tag: String,
    pub message: String,
    pub epoch: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    /// Fully resolved run configuration, filled in by the config layer.
    #[serde(default)]
    pub config: Option<serde_json::Value>,
    pub problem: ProblemMeta,
    pub settings: OptimizerSettings,
    pub plan: RunPlan,
    pub epochs: Vec<TelemetryRow>,
    #[serde(default)]
    pub iterations: Vec<IterationRecord>,
    pub counters: OracleCounters,
    pub final_w: Vec<f64>,
    #[serde(default)]
    pub error: Option<RunFailure>,
}

impl RunRecord {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|r| r.train_loss).collect()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|r| r.train_loss)
    }
}

/// Runs `plan.epochs` epochs of `⌈M/b⌉` iterations each and records one
/// telemetry row per epoch boundary, starting with the initial point.
///
/// A step error ends the run early; the record keeps every completed epoch
/// and the failure.
pub fn run(
    problem: &dyn FiniteSumProblem,
    test: Option<&dyn FiniteSumProblem>,
    settings: OptimizerSettings,
    plan: &RunPlan,
) -> RunRecord {
    let mut meta = problem.meta().clone();
    meta.witness = None;
    let mut record = RunRecord {
        seed: plan.seed,
        config: None,
        problem: meta,
        settings,
        plan: *plan,
        epochs: Vec::new(),
        iterations: Vec::new(),
        counters: OracleCounters::default(),
        final_w: Vec::new(),
        error: None,
    };
    let m = problem.num_samples();
    let w0 = problem.initial_point(derive(plan.seed, Stream::InitialPoint));
    let mut opt = match Optimizer::new(settings, w0, m) {
        Ok(o) => o,
        Err(e) => {
            record.error = Some(failure(&e, 0));
            return record;
        }
    };
    let schedule = MiniBatchSchedule::new(m, plan.batch_size, plan.order, derive(plan.seed, Stream::Batches));

    let start = Instant::now();
    match epoch_row(&mut opt, problem, test, 0, EpochStats::default(), start) {
        Ok(row) => record.epochs.push(row),
        Err(e) => {
            record.error = Some(failure(&e, 0));
            record.final_w = opt.w().to_vec();
            record.counters = *opt.counters();
            return record;
        }
    }

    'epochs: for epoch in 0..plan.epochs {
        let start = Instant::now();
        let mut stats = EpochStats::default();
        for batch in schedule.epoch_batches(epoch) {
            match opt.step(problem, &batch, epoch) {
                Ok(it) => {
                    stats.add(&it);
                    if plan.record_iterations {
                        record.iterations.push(it);
                    }
                }
                Err(e) => {
                    log::warn!("run stopped in epoch {epoch}: {e}");
                    record.error = Some(failure(&e, epoch));
                    break 'epochs;
                }
            }
        }
        match epoch_row(&mut opt, problem, test, epoch + 1, stats, start) {
            Ok(row) => {
                log::debug!("epoch {}: loss {:e}", row.epoch, row.train_loss);
                record.epochs.push(row);
            }
            Err(e) => {
                record.error = Some(failure(&e, epoch));
                break;
            }
        }
    }
    record.final_w = opt.w().to_vec();
    record.counters = *opt.counters();
    record
}

fn failure(e: &StepError, epoch: u64) -> RunFailure {
    RunFailure {
        tag: e.tag().to_owned(),
        message: e.to_string(),
        epoch,
    }
}

#[derive(Default)]
struct EpochStats {
    iterations: u64,
    eta: f64,
    eta_initial: f64,
    grad_norm: f64,
    backtracks: u64,
}

impl EpochStats {
    fn add(&mut self, it: &IterationRecord) {
        self.iterations += 1;
        self.eta += it.eta;
        self.eta_initial += it.eta_k0;
        self.grad_norm += it.grad_norm;
        self.backtracks += it.backtracks as u64;
    }

    fn mean(&self, total: f64) -> f64 {
        if self.iterations == 0 {
            0.0
        } else {
            total / self.iterations as f64
        }
    }
}

fn epoch_row(
    opt: &mut Optimizer,
    problem: &dyn FiniteSumProblem,
    test: Option<&dyn FiniteSumProblem>,
    epoch: u64,
    stats: EpochStats,
    start: Instant,
) -> Result<TelemetryRow, StepError> {
    let loss = problem.full_value(opt.w())?;
    let counters = opt.counters_mut();
    counters.value_evals += 1;
    counters.telemetry_evals += 1;
    let counters = *counters;
    let test_accuracy = test.and_then(|t| t.accuracy(opt.w()));
    Ok(TelemetryRow {
        epoch,
        train_loss: loss,
        test_accuracy,
        avg_step: stats.mean(stats.eta),
        avg_initial_step: stats.mean(stats.eta_initial),
        avg_grad_norm: stats.mean(stats.grad_norm),
        backtracks_total: stats.backtracks,
        value_evals: counters.value_evals,
        grad_evals: counters.grad_evals,
        epoch_seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::Method;
    use crate::problems::ScaledQuadratic;

    fn plan(epochs: u64) -> RunPlan {
        RunPlan {
            epochs,
            batch_size: 2,
            order: BatchOrder::ShuffledEpoch,
            seed: 7,
            record_iterations: true,
        }
    }

    fn problem() -> ScaledQuadratic {
        ScaledQuadratic::new(vec![1.0, 2.0, 0.5, 3.0, 1.5], 4)
    }

    #[test]
    fn zero_epochs_reports_initial_point_only() {
        let p = problem();
        let r = run(&p, None, OptimizerSettings::ponos(5, 2), &plan(0));
        assert_eq!(r.epochs.len(), 1);
        assert_eq!(r.epochs[0].epoch, 0);
        assert!(r.iterations.is_empty());
        assert_eq!(r.counters.telemetry_evals, 1);
    }

    #[test]
    fn iteration_count_and_accounting() {
        let p = problem();
        let r = run(&p, None, OptimizerSettings::ponos(5, 2), &plan(4));
        assert!(r.error.is_none());
        assert_eq!(r.iterations.len(), 4 * 3);
        let ls: u64 = r.iterations.iter().map(|i| i.evals as u64).sum();
        assert_eq!(r.counters.value_evals, ls + r.counters.telemetry_evals);
        assert_eq!(r.counters.telemetry_evals, 5);
        assert_eq!(r.epochs.last().unwrap().value_evals, r.counters.value_evals);
    }

    #[test]
    fn divergence_is_reported() {
        let p = problem();
        let settings = OptimizerSettings {
            method: Method::Sgd { lr: 50.0 },
            ..OptimizerSettings::ponos(5, 2)
        };
        let r = run(&p, None, settings, &plan(400));
        let tag = r.error.as_ref().map(|e| e.tag.as_str());
        assert_eq!(tag, Some("non_finite_value"));
        assert!(r.epochs.len() < 401);
    }
}
