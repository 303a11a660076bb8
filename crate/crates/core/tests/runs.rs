use ponos::analysis::verify_run;
use ponos::config::RunConfig;
use ponos::optim::RunRecord;
use ponos::telemetry::{read_csv, write_csv};

fn config(problem: &str, optimizer: &str) -> RunConfig {
    RunConfig::parse(&format!(
        "name = \"t\"\nseed = 4\nepochs = 8\nbatch_size = 8\nrecord_iterations = true\n\
         [problem]\n{problem}\n[optimizer]\nname = \"{optimizer}\"\n"
    ))
    .unwrap()
}

const PROBLEMS: [&str; 4] = [
    "kind = \"least_squares\"\nsamples = 40\ndim = 12",
    "kind = \"quadratic\"\ncurvatures = [1.0, 2.0, 0.5, 3.0]\ndim = 3",
    "kind = \"kernel_logistic\"\nsamples = 60\ntest_fraction = 0.25",
    "kind = \"mlp\"\nsamples = 48\nclasses = 3\nhidden = 6\ntest_fraction = 0.25",
];

const OPTIMIZERS: [&str; 12] = [
    "ponos",
    "ponos_prec",
    "reset0",
    "zhang_every2",
    "sls",
    "sls_prec",
    "sps",
    "sps_prec",
    "grippo_cross",
    "grippo_single",
    "sgd",
    "adam",
];

fn bits(r: &RunRecord) -> Vec<u64> {
    r.losses().iter().map(|x| x.to_bits()).collect()
}

#[test]
fn same_seed_same_losses() {
    for p in PROBLEMS {
        for o in ["ponos", "sls", "adam"] {
            let cfg = config(p, o);
            let (a, b) = (cfg.run().unwrap(), cfg.run().unwrap());
            assert_eq!(bits(&a), bits(&b), "{p} / {o}");
            assert_eq!(a.final_w, b.final_w);
            assert_eq!(a.iterations, b.iterations);
        }
    }
}

#[test]
fn different_seeds_differ() {
    let cfg = config(PROBLEMS[0], "ponos");
    assert_ne!(bits(&cfg.run().unwrap()), bits(&cfg.with_seed(5).run().unwrap()));
}

#[test]
fn every_optimizer_runs_and_verifies() {
    for p in PROBLEMS {
        for o in OPTIMIZERS {
            let rec = config(p, o).run().unwrap();
            assert!(rec.error.is_none(), "{p} / {o}: {:?}", rec.error);
            assert_eq!(rec.epochs.len(), 9);
            assert!(rec.final_loss().unwrap().is_finite());
            let report = verify_run(&rec);
            assert!(report.passed, "{p} / {o}: {report:#?}");
        }
    }
}

#[test]
fn test_accuracy_reported_when_held_out_data_exists() {
    let rec = config(PROBLEMS[2], "ponos").run().unwrap();
    assert!(rec.epochs.iter().all(|r| r.test_accuracy.is_some_and(|a| (0.0..=1.0).contains(&a))));
    let rec = config(PROBLEMS[0], "ponos").run().unwrap();
    assert!(rec.epochs.iter().all(|r| r.test_accuracy.is_none()));
}

#[test]
fn counters_are_cumulative() {
    let rec = config(PROBLEMS[3], "ponos").run().unwrap();
    for w in rec.epochs.windows(2) {
        assert!(w[1].value_evals >= w[0].value_evals);
        assert!(w[1].grad_evals >= w[0].grad_evals);
    }
    let last = rec.epochs.last().unwrap();
    assert_eq!(last.value_evals, rec.counters.value_evals);
    assert_eq!(last.grad_evals, rec.counters.grad_evals);
    assert_eq!(rec.counters.telemetry_evals, rec.epochs.len() as u64);
}

#[test]
fn records_round_trip_through_json_and_csv() {
    let rec = config(PROBLEMS[2], "ponos").run().unwrap();
    let json = serde_json::to_string(&rec).unwrap();
    let back: RunRecord = serde_json::from_str(&json).unwrap();
    assert_eq!(back, rec);

    let mut buf = Vec::new();
    write_csv(&mut buf, &rec.epochs).unwrap();
    assert_eq!(read_csv(buf.as_slice()).unwrap(), rec.epochs);
}

#[test]
fn summary_config_reproduces_the_run() {
    let rec = config(PROBLEMS[1], "zhang_every2").run().unwrap();
    let echoed: RunConfig = serde_json::from_value(rec.config.clone().unwrap()).unwrap();
    assert_eq!(echoed.optimizer.ls_every, Some(2));
    let again = echoed.run().unwrap();
    assert_eq!(bits(&again), bits(&rec));
}
