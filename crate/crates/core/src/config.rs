//! Run configuration.
//!
//! Configs are TOML files: top-level run keys plus a `[problem]` and an
//! `[optimizer]` section. Unknown keys are rejected. Optimizer fields left
//! out take the defaults of the chosen preset, and [`RunConfig::resolved`]
//! writes them back so a summary can echo the full configuration.
//!
//! ```toml
//! name = "minimal"
//! seed = 1
//! epochs = 10
//! batch_size = 5
//!
//! [problem]
//! kind = "least_squares"
//! samples = 50
//! dim = 20
//! seed = 0
//!
//! [optimizer]
//! name = "ponos"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linesearch::{BacktrackParams, ReferenceKind};
use crate::optim::{self, Method, OptimizerSettings, PrecondParams, RunPlan, RunRecord};
use crate::problems::{
    load_csv, load_libsvm, make_blobs, BatchOrder, Dataset, FiniteSumProblem, InterpolatingLeastSquares,
    KernelLogistic, MlpClassifier, ProblemError, ScaledQuadratic,
};
use crate::seed::{derive, Stream};
use crate::stepsize::{InitialStepKind, ResetKind, StepSizeParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{}", match line { Some(l) => format!("parse error at line {l}: {message}"), None => format!("parse error: {message}") })]
    Parse { line: Option<usize>, message: String },
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.to_owned(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub seed: u64,
    pub epochs: u64,
    pub batch_size: usize,
    #[serde(default)]
    pub order: BatchOrder,
    /// Keep per-iteration records (needed by `verify`).
    #[serde(default)]
    pub record_iterations: bool,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// Consistent least squares with a planted interpolating solution.
    #[serde(alias = "lsq")]
    LeastSquares {
        samples: usize,
        dim: usize,
        seed: Option<u64>,
        #[serde(default = "default_condition")]
        condition: f64,
    },
    /// `f_i = ½ L_i ‖w‖²`.
    Quadratic { curvatures: Vec<f64>, dim: usize },
    /// RBF-kernel logistic regression on two Gaussian blobs or a data file.
    #[serde(alias = "kernel")]
    KernelLogistic(DataSpec),
    /// One-hidden-layer softplus network with softmax cross-entropy.
    Mlp(DataSpec),
}

fn default_condition() -> f64 {
    10.0
}
fn default_bandwidth() -> f64 {
    1.0
}
fn default_hidden() -> usize {
    16
}

/// Classification problem settings. `path` takes precedence over the blob
/// generator; `.svm` / `.libsvm` files are read as LIBSVM, anything else as
/// dense CSV. `bandwidth` is read by the kernel model, `hidden` by the MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_features")]
    pub features: usize,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default = "default_spread")]
    pub spread: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Fraction of samples held out for test accuracy.
    #[serde(default)]
    pub test_fraction: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: f64,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
}

fn default_samples() -> usize {
    200
}
fn default_features() -> usize {
    2
}
fn default_classes() -> usize {
    2
}
fn default_separation() -> f64 {
    6.0
}
fn default_spread() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    #[default]
    Ponos,
    PonosPrec,
    /// PoNoS without the backtrack-count reset.
    Reset0,
    /// PoNoS with the line search run every other iteration.
    ZhangEvery2,
    Sls,
    SlsPrec,
    Sps,
    SpsPrec,
    GrippoCross,
    GrippoSingle,
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialRule {
    Polyak,
    SpsSmoothed,
    ExpCap,
    Reset3,
    Reset4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceRule {
    Monotone,
    Zhang,
    GrippoCross,
    GrippoSingle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default)]
    pub name: OptimizerName,
    pub c: Option<f64>,
    pub delta: Option<f64>,
    pub xi: Option<f64>,
    pub c_p: Option<f64>,
    pub eta_max: Option<f64>,
    pub gamma: Option<f64>,
    pub eta_init: Option<f64>,
    pub max_backtracks: Option<u32>,
    pub ls_every: Option<u32>,
    pub reset: Option<ResetKind>,
    pub initial: Option<InitialRule>,
    pub reference: Option<ReferenceRule>,
    pub window: Option<usize>,
    pub full_windows_only: Option<bool>,
    pub reset4_squared_norm: Option<bool>,
    pub precond_beta2: Option<f64>,
    pub precond_eps: Option<f64>,
    pub lr: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub eps: Option<f64>,
}

fn fill<T>(slot: &mut Option<T>, default: T) {
    if slot.is_none() {
        *slot = Some(default);
    }
}

impl OptimizerConfig {
    fn is_line_search(&self) -> bool {
        !matches!(
            self.name,
            OptimizerName::Sps | OptimizerName::SpsPrec | OptimizerName::Sgd | OptimizerName::Adam
        )
    }

    /// Copy with every field the chosen method reads filled in.
    pub fn resolved(&self) -> OptimizerConfig {
        use OptimizerName::*;
        let mut o = self.clone();
        let sls = matches!(o.name, Sls | SlsPrec);
        let sps = matches!(o.name, Sps | SpsPrec);
        fill(&mut o.c, if sls { 0.1 } else { 0.5 });
        fill(&mut o.delta, if sls { 0.9 } else { 0.5 });
        fill(&mut o.c_p, if sps { 0.2 } else { 0.1 });
        fill(&mut o.eta_max, 10.0);
        fill(&mut o.gamma, 2.0);
        fill(&mut o.eta_init, 1.0);
        fill(&mut o.max_backtracks, 100);
        fill(&mut o.precond_beta2, 0.9);
        fill(&mut o.precond_eps, 1e-8);
        fill(&mut o.reset4_squared_norm, false);
        if o.is_line_search() {
            fill(&mut o.xi, 1.0);
            fill(&mut o.ls_every, if o.name == ZhangEvery2 { 2 } else { 1 });
            fill(
                &mut o.reset,
                if matches!(o.name, Reset0 | Sls | SlsPrec) { ResetKind::None } else { ResetKind::New },
            );
            fill(&mut o.initial, if sls { InitialRule::ExpCap } else { InitialRule::Polyak });
            fill(
                &mut o.reference,
                match o.name {
                    Sls | SlsPrec => ReferenceRule::Monotone,
                    GrippoCross => ReferenceRule::GrippoCross,
                    GrippoSingle => ReferenceRule::GrippoSingle,
                    _ => ReferenceRule::Zhang,
                },
            );
            fill(&mut o.window, 10);
            fill(&mut o.full_windows_only, false);
        }
        match o.name {
            Sgd => fill(&mut o.lr, 0.1),
            Adam => {
                fill(&mut o.lr, 1e-3);
                fill(&mut o.beta1, 0.9);
                fill(&mut o.beta2, 0.999);
                fill(&mut o.eps, 1e-8);
            }
            _ => {}
        }
        o
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let o = self.resolved();
        let open01 = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x < 1.0) => Err(invalid(name, format!("must be in (0,1), got {x}"))),
            _ => Ok(()),
        };
        open01("c", o.c)?;
        open01("delta", o.delta)?;
        open01("c_p", o.c_p)?;
        open01("precond_beta2", o.precond_beta2)?;
        open01("beta2", o.beta2)?;
        if let Some(x) = o.xi.filter(|x| !(0.0..=1.0).contains(x)) {
            return Err(invalid("xi", format!("must be in [0,1], got {x}")));
        }
        if let Some(x) = o.beta1.filter(|x| !(0.0..1.0).contains(x)) {
            return Err(invalid("beta1", format!("must be in [0,1), got {x}")));
        }
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0) || !x.is_finite() => Err(invalid(name, format!("must be positive, got {x}"))),
            _ => Ok(()),
        };
        positive("eta_max", o.eta_max)?;
        positive("eta_init", o.eta_init)?;
        positive("precond_eps", o.precond_eps)?;
        positive("eps", o.eps)?;
        if let Some(g) = o.gamma.filter(|g| !(*g > 1.0) || !g.is_finite()) {
            return Err(invalid("gamma", format!("must be > 1, got {g}")));
        }
        if let Some(lr) = o.lr.filter(|lr| !(*lr >= 0.0) || !lr.is_finite()) {
            return Err(invalid("lr", format!("must be >= 0, got {lr}")));
        }
        if o.max_backtracks == Some(0) {
            return Err(invalid("max_backtracks", "must be at least 1"));
        }
        if o.ls_every == Some(0) {
            return Err(invalid("ls_every", "must be at least 1"));
        }
        if o.window == Some(0) {
            return Err(invalid("window", "must be at least 1"));
        }
        Ok(())
    }

    /// Optimizer settings for a problem with `samples` components.
    pub fn settings(&self, samples: usize, batch_size: usize, f_star: f64) -> Result<OptimizerSettings, ConfigError> {
        self.validate()?;
        use OptimizerName::*;
        let o = self.resolved();
        let preconditioned = matches!(o.name, PonosPrec | SlsPrec | SpsPrec);
        let method = match o.name {
            Sgd => Method::Sgd { lr: o.lr.unwrap_or(0.1) },
            Adam => Method::Adam {
                lr: o.lr.unwrap_or(1e-3),
                beta1: o.beta1.unwrap_or(0.9),
                beta2: o.beta2.unwrap_or(0.999),
                eps: o.eps.unwrap_or(1e-8),
            },
            Sps | SpsPrec => Method::Sps { preconditioned },
            _ => {
                let window = o.window.unwrap_or(10);
                let reference = match o.reference.unwrap_or(ReferenceRule::Zhang) {
                    ReferenceRule::Monotone => ReferenceKind::Monotone,
                    ReferenceRule::Zhang => ReferenceKind::Zhang { xi: o.xi.unwrap_or(1.0) },
                    ReferenceRule::GrippoCross => ReferenceKind::GrippoCrossBatch {
                        window,
                        full_windows_only: o.full_windows_only.unwrap_or(false),
                    },
                    ReferenceRule::GrippoSingle => ReferenceKind::GrippoSingleBatch { window },
                };
                let initial = match o.initial.unwrap_or(InitialRule::Polyak) {
                    InitialRule::Polyak => InitialStepKind::Polyak,
                    InitialRule::SpsSmoothed => InitialStepKind::SpsSmoothed,
                    InitialRule::ExpCap => InitialStepKind::ExpCap,
                    InitialRule::Reset3 => InitialStepKind::Reset3,
                    InitialRule::Reset4 => InitialStepKind::Reset4,
                };
                Method::LineSearch {
                    initial,
                    reset: o.reset.unwrap_or_default(),
                    reference,
                    ls_every: o.ls_every.unwrap_or(1),
                    preconditioned,
                }
            }
        };
        let delta = o.delta.unwrap_or(0.5);
        Ok(OptimizerSettings {
            method,
            backtrack: BacktrackParams {
                delta,
                c: o.c.unwrap_or(0.5),
                max_backtracks: o.max_backtracks.unwrap_or(100),
            },
            step: StepSizeParams {
                c_p: o.c_p.unwrap_or(0.1),
                eta_max: o.eta_max.unwrap_or(10.0),
                gamma: o.gamma.unwrap_or(2.0),
                delta,
                eta_init: o.eta_init.unwrap_or(1.0),
                reset4_squared_norm: o.reset4_squared_norm.unwrap_or(false),
                batch_size: batch_size.min(samples).max(1),
                samples,
            },
            precond: PrecondParams {
                beta2: o.precond_beta2.unwrap_or(0.9),
                eps: o.precond_eps.unwrap_or(1e-8),
            },
            f_star,
        })
    }
}

/// Training problem plus optional held-out problem for test accuracy.
pub struct BuiltProblem {
    pub train: Box<dyn FiniteSumProblem>,
    pub test: Option<Box<dyn FiniteSumProblem>>,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            ProblemSpec::LeastSquares {
                samples,
                dim,
                condition,
                ..
            } => {
                if *samples == 0 {
                    return Err(invalid("problem.samples", "must be at least 1"));
                }
                if *dim == 0 {
                    return Err(invalid("problem.dim", "must be at least 1"));
                }
                if !(*condition >= 1.0) || !condition.is_finite() {
                    return Err(invalid("problem.condition", format!("must be >= 1, got {condition}")));
                }
            }
            ProblemSpec::Quadratic { curvatures, dim } => {
                if curvatures.is_empty() {
                    return Err(invalid("problem.curvatures", "must not be empty"));
                }
                if let Some(l) = curvatures.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
                    return Err(invalid("problem.curvatures", format!("must be positive, got {l}")));
                }
                if *dim == 0 {
                    return Err(invalid("problem.dim", "must be at least 1"));
                }
            }
            ProblemSpec::KernelLogistic(data) => {
                data.validate()?;
                if !(data.bandwidth > 0.0) || !data.bandwidth.is_finite() {
                    return Err(invalid(
                        "problem.bandwidth",
                        format!("must be positive, got {}", data.bandwidth),
                    ));
                }
            }
            ProblemSpec::Mlp(data) => {
                data.validate()?;
                if data.hidden == 0 {
                    return Err(invalid("problem.hidden", "must be at least 1"));
                }
            }
        }
        Ok(())
    }

    /// Builds the problem; generators without an explicit seed derive one
    /// from the run seed.
    pub fn build(&self, run_seed: u64) -> Result<BuiltProblem, ConfigError> {
        self.validate()?;
        let fallback = derive(run_seed, Stream::Problem);
        Ok(match self {
            ProblemSpec::LeastSquares {
                samples,
                dim,
                seed,
                condition,
            } => BuiltProblem {
                train: Box::new(InterpolatingLeastSquares::generate(
                    seed.unwrap_or(fallback),
                    *samples,
                    *dim,
                    *condition,
                )?),
                test: None,
            },
            ProblemSpec::Quadratic { curvatures, dim } => BuiltProblem {
                train: Box::new(ScaledQuadratic::new(curvatures.clone(), *dim)),
                test: None,
            },
            ProblemSpec::KernelLogistic(data) => {
                let (train, test) = data.load(fallback, run_seed)?;
                let train = train.to_signed_labels()?;
                let problem = KernelLogistic::new(&train, data.bandwidth)?;
                let test = match test {
                    Some(t) if !t.is_empty() => Some(Box::new(problem.on_samples(&t.to_signed_labels()?)?) as Box<dyn FiniteSumProblem>),
                    _ => None,
                };
                BuiltProblem {
                    train: Box::new(problem),
                    test,
                }
            }
            ProblemSpec::Mlp(data) => {
                let (train, test) = data.load(fallback, run_seed)?;
                let classes = data.classes.max(class_count(&train));
                let labels = |d: &Dataset| d.labels.iter().map(|&y| y as usize).collect::<Vec<_>>();
                let problem = MlpClassifier::with_classes(&train, labels(&train), classes, data.hidden)?;
                let test = match test {
                    Some(t) if !t.is_empty() => {
                        Some(Box::new(problem.on_samples(&t, labels(&t))?) as Box<dyn FiniteSumProblem>)
                    }
                    _ => None,
                };
                BuiltProblem {
                    train: Box::new(problem),
                    test,
                }
            }
        })
    }
}

fn class_count(d: &Dataset) -> usize {
    d.labels.iter().fold(0usize, |acc, &y| acc.max(y as usize + 1))
}

impl DataSpec {
    fn validate(&self) -> Result<(), ConfigError> {
        if self.path.is_none() {
            if self.samples == 0 {
                return Err(invalid("problem.samples", "must be at least 1"));
            }
            if self.features == 0 {
                return Err(invalid("problem.features", "must be at least 1"));
            }
            if self.classes < 2 {
                return Err(invalid("problem.classes", "must be at least 2"));
            }
            if !(self.spread > 0.0) {
                return Err(invalid("problem.spread", format!("must be positive, got {}", self.spread)));
            }
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(invalid(
                "problem.test_fraction",
                format!("must be in [0,1), got {}", self.test_fraction),
            ));
        }
        Ok(())
    }

    /// Loads or generates the samples, relabels them as class indices and
    /// splits off the test set.
    fn load(&self, fallback_seed: u64, run_seed: u64) -> Result<(Dataset, Option<Dataset>), ConfigError> {
        let raw = match &self.path {
            Some(p) if is_libsvm(p) => load_libsvm(p, None)?,
            Some(p) => load_csv(p)?,
            None => make_blobs(
                self.seed.unwrap_or(fallback_seed),
                self.samples,
                self.features,
                self.classes,
                self.separation,
                self.spread,
            )?,
        };
        let (idx, _) = raw.class_indices();
        let data = Dataset::new(raw.features.clone(), raw.num_features, idx.iter().map(|&i| i as f64).collect())?;
        if self.test_fraction == 0.0 {
            return Ok((data, None));
        }
        let (train, test) = data.split(1.0 - self.test_fraction, derive(run_seed, Stream::Split));
        if train.is_empty() {
            return Err(invalid("problem.test_fraction", "leaves no training samples"));
        }
        Ok((train, Some(test)))
    }
}

fn is_libsvm(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()),
        Some("svm") | Some("libsvm")
    )
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        Self::from_path_with_overrides(path, &[])
    }

    pub fn from_path_with_overrides(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        Self::parse_with_overrides(&text, overrides)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_with_overrides(text, &[])
    }

    /// Parses `text`, applies `key=value` overrides (dotted keys reach into
    /// sections), then validates.
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let cfg: RunConfig = if overrides.is_empty() {
            toml::from_str(text).map_err(|e| parse_error(&e, Some(text)))?
        } else {
            let mut table: toml::Table = toml::from_str(text).map_err(|e| parse_error(&e, Some(text)))?;
            for o in overrides {
                apply_override(&mut table, o)?;
            }
            toml::Value::Table(table)
                .try_into()
                .map_err(|e: toml::de::Error| parse_error(&e, None))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(invalid("name", "must be a non-empty name without path separators"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be at least 1"));
        }
        self.problem.validate()?;
        self.optimizer.validate()
    }

    /// Copy with every defaulted optimizer field written out.
    pub fn resolved(&self) -> RunConfig {
        RunConfig {
            optimizer: self.optimizer.resolved(),
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> RunConfig {
        RunConfig { seed, ..self.clone() }
    }

    /// Builds the problem and runs the optimizer; the record embeds the
    /// resolved config.
    pub fn run(&self) -> Result<RunRecord, ConfigError> {
        self.validate()?;
        let built = self.problem.build(self.seed)?;
        let train = built.train.as_ref();
        let settings = self
            .optimizer
            .settings(train.num_samples(), self.batch_size, train.meta().f_star)?;
        let plan = RunPlan {
            epochs: self.epochs,
            batch_size: self.batch_size,
            order: self.order,
            seed: self.seed,
            record_iterations: self.record_iterations,
        };
        let mut record = optim::run(train, built.test.as_deref(), settings, &plan);
        record.config = serde_json::to_value(self.resolved()).ok();
        Ok(record)
    }
}

fn parse_error(e: &toml::de::Error, text: Option<&str>) -> ConfigError {
    let line = match (e.span(), text) {
        (Some(span), Some(t)) => Some(t[..span.start.min(t.len())].matches('\n').count() + 1),
        _ => None,
    };
    ConfigError::Parse {
        line,
        message: e.message().trim().to_owned(),
    }
}

/// Applies one `key=value` override. Values are read as TOML literals, and
/// fall back to plain strings (`--set optimizer.name=sls`).
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| invalid(assignment, "override must look like key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_owned()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(invalid(key, "empty key segment"));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| invalid(key, format!("`{part}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_owned(), value);
    Ok(())
}
