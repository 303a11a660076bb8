use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use ponos::analysis::{certificate_convex, certificate_pl, certificate_strongly_convex, verify_run, RateCertificate};
use ponos::config::RunConfig;
use ponos::optim::RunRecord;
use ponos::telemetry::{fmt_f64, write_csv, TelemetryRow};

#[derive(Parser)]
#[command(name = "ponos", version, about = "Nonmonotone stochastic line-search experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write telemetry.csv and summary.json.
    Run {
        #[command(flatten)]
        common: RunArgs,
        /// Replace the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one configuration for several seeds and aggregate the telemetry.
    Sweep {
        #[command(flatten)]
        common: RunArgs,
        /// Comma-separated seeds or an inclusive range such as `1..5`.
        #[arg(long, value_parser = parse_seeds)]
        seeds: SeedList,
    },
    /// Re-check a summary.json against the per-iteration invariants.
    Verify {
        record: PathBuf,
        /// Also write the JSON report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the rate constants of a convergence certificate.
    Certificate(CertificateArgs),
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<u64>,
    /// Override any config key, e.g. `--set optimizer.c=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Debug)]
struct SeedList(Vec<u64>);

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    let mut seeds = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|e| format!("bad seed `{a}`: {e}"))?;
            let b: u64 = b.trim().parse().map_err(|e| format!("bad seed `{b}`: {e}"))?;
            if a > b {
                return Err(format!("empty seed range {part}"));
            }
            seeds.extend(a..=b);
        } else {
            seeds.push(part.parse().map_err(|e| format!("bad seed `{part}`: {e}"))?);
        }
    }
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err("seeds must be distinct".into());
    }
    Ok(SeedList(seeds))
}

#[derive(Clone, Copy, ValueEnum)]
enum Regime {
    /// Strongly convex.
    Sc,
    Convex,
    Pl,
}

#[derive(Args)]
struct CertificateArgs {
    #[arg(long, value_enum)]
    regime: Regime,
    #[arg(long)]
    c: f64,
    #[arg(long)]
    xi: f64,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    /// Lower bound on the initial step sizes.
    #[arg(long)]
    eta_bar_min: f64,
    /// Upper cap on the initial step sizes (strongly convex and PL).
    #[arg(long)]
    eta_max: Option<f64>,
    /// Strong convexity or PL constant.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    l_max: f64,
    /// Free constant of the convex certificate.
    #[arg(long)]
    a1: Option<f64>,
}

/// Failure classes with their exit codes.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    Verification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Verification(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { common, seed } => cmd_run(&common, seed),
        Command::Sweep { common, seeds } => cmd_sweep(&common, &seeds.0),
        Command::Verify { record, out } => cmd_verify(&record, out.as_deref()),
        Command::Certificate(args) => cmd_certificate(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(e) => eprintln!("config error: {e:#}"),
                Failure::Runtime(e) => eprintln!("runtime error: {e:#}"),
                Failure::Verification(msg) => eprintln!("verification failed: {msg}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut overrides = args.overrides.clone();
    if let Some(e) = args.epochs {
        overrides.push(format!("epochs={e}"));
    }
    RunConfig::from_path_with_overrides(&args.config, &overrides).map_err(|e| Failure::Config(e.into()))
}

/// Writes `telemetry.csv` and `summary.json` into `dir`.
fn write_outputs(dir: &Path, record: &RunRecord) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let csv_path = dir.join("telemetry.csv");
    let file = File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    write_csv(BufWriter::new(file), &record.epochs).with_context(|| format!("writing {}", csv_path.display()))?;
    let json_path = dir.join("summary.json");
    let file = File::create(&json_path).with_context(|| format!("creating {}", json_path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), record)
        .with_context(|| format!("writing {}", json_path.display()))?;
    Ok(())
}

fn run_error(record: &RunRecord) -> Option<anyhow::Error> {
    record
        .error
        .as_ref()
        .map(|e| anyhow!("seed {}: {} in epoch {} ({})", record.seed, e.message, e.epoch, e.tag))
}

fn cmd_run(args: &RunArgs, seed: Option<u64>) -> Result<(), Failure> {
    let mut cfg = load_config(args)?;
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    let record = cfg.run().map_err(|e| Failure::Config(e.into()))?;
    let dir = args.out.join(&cfg.name);
    write_outputs(&dir, &record).map_err(Failure::Runtime)?;
    if let Some(e) = run_error(&record) {
        return Err(Failure::Runtime(e));
    }
    println!(
        "{}: {} epochs, final loss {}, output in {}",
        cfg.name,
        record.epochs.len().saturating_sub(1),
        record.final_loss().map_or("n/a".into(), fmt_f64),
        dir.display()
    );
    Ok(())
}

fn cmd_sweep(args: &RunArgs, seeds: &[u64]) -> Result<(), Failure> {
    let cfg = load_config(args)?;
    // Build once up front so config-level problem errors surface as such.
    cfg.problem.build(cfg.seed).map_err(|e| Failure::Config(e.into()))?;
    let root = args.out.join(&cfg.name);
    let records: Vec<RunRecord> = seeds
        .par_iter()
        .map(|&s| {
            let record = cfg.with_seed(s).run().map_err(|e| Failure::Config(e.into()))?;
            write_outputs(&root.join(format!("seed_{s}")), &record).map_err(Failure::Runtime)?;
            Ok(record)
        })
        .collect::<Result<_, Failure>>()?;

    let rows: Vec<&[TelemetryRow]> = records.iter().map(|r| r.epochs.as_slice()).collect();
    let agg_path = root.join("aggregate.csv");
    write_aggregate(&agg_path, &rows).map_err(Failure::Runtime)?;

    let errors: Vec<String> = records.iter().filter_map(run_error).map(|e| e.to_string()).collect();
    if !errors.is_empty() {
        return Err(Failure::Runtime(anyhow!(errors.join("; "))));
    }
    println!("{}: {} seeds, aggregate in {}", cfg.name, seeds.len(), agg_path.display());
    Ok(())
}

const AGGREGATED: [&str; 8] = [
    "train_loss",
    "test_accuracy",
    "avg_step",
    "avg_initial_step",
    "avg_grad_norm",
    "backtracks_total",
    "value_evals",
    "grad_evals",
];

fn column(row: &TelemetryRow, name: &str) -> Option<f64> {
    match name {
        "train_loss" => Some(row.train_loss),
        "test_accuracy" => row.test_accuracy,
        "avg_step" => Some(row.avg_step),
        "avg_initial_step" => Some(row.avg_initial_step),
        "avg_grad_norm" => Some(row.avg_grad_norm),
        "backtracks_total" => Some(row.backtracks_total as f64),
        "value_evals" => Some(row.value_evals as f64),
        "grad_evals" => Some(row.grad_evals as f64),
        _ => None,
    }
}

/// Mean and sample standard deviation; the deviation of a single value is 0.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One row per epoch reached by every run, with `<col>_mean` and `<col>_std`
/// for each numeric telemetry column.
fn write_aggregate(path: &Path, runs: &[&[TelemetryRow]]) -> anyhow::Result<()> {
    let epochs = runs.iter().map(|r| r.len()).min().unwrap_or(0);
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec!["epoch".to_owned(), "runs".to_owned()];
    for c in AGGREGATED {
        header.push(format!("{c}_mean"));
        header.push(format!("{c}_std"));
    }
    w.write_record(&header)?;
    for e in 0..epochs {
        let mut rec = vec![runs[0][e].epoch.to_string(), runs.len().to_string()];
        for c in AGGREGATED {
            let values: Vec<f64> = runs.iter().filter_map(|r| column(&r[e], c)).collect();
            if values.is_empty() {
                rec.extend([String::new(), String::new()]);
            } else {
                let (m, s) = mean_std(&values);
                rec.extend([fmt_f64(m), fmt_f64(s)]);
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_verify(path: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Config)?;
    let record: RunRecord = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::Config)?;
    let report = verify_run(&record);
    let json = serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.into()))?;
    println!("{json}");
    if let Some(out) = out {
        fs::write(out, &json)
            .with_context(|| format!("writing {}", out.display()))
            .map_err(Failure::Runtime)?;
    }
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .invariants
            .iter()
            .filter(|i| i.passed == Some(false))
            .map(|i| i.name.as_str())
            .collect();
        Err(Failure::Verification(format!("failed invariants: {}", failed.join(", "))))
    }
}

fn require(value: Option<f64>, flag: &str) -> Result<f64, Failure> {
    value.ok_or_else(|| Failure::Config(anyhow!("--{flag} is required for this regime")))
}

fn certificate(args: &CertificateArgs) -> Result<RateCertificate, Failure> {
    Ok(match args.regime {
        Regime::Sc => certificate_strongly_convex(
            args.c,
            args.xi,
            args.delta,
            args.eta_bar_min,
            require(args.eta_max, "eta-max")?,
            require(args.mu, "mu")?,
            args.l_max,
        ),
        Regime::Convex => certificate_convex(
            args.c,
            args.xi,
            require(args.a1, "a1")?,
            args.delta,
            args.eta_bar_min,
            args.l_max,
        ),
        Regime::Pl => certificate_pl(
            args.c,
            args.xi,
            args.delta,
            args.eta_bar_min,
            require(args.eta_max, "eta-max")?,
            require(args.mu, "mu")?,
            args.l_max,
        ),
    })
}

fn cmd_certificate(args: &CertificateArgs) -> Result<(), Failure> {
    let cert = certificate(args)?;
    let json = serde_json::to_string_pretty(&cert).map_err(|e| Failure::Runtime(e.into()))?;
    println!("{json}");
    if cert.valid {
        Ok(())
    } else {
        Err(Failure::Verification(cert.violations.join("; ")))
    }
}
