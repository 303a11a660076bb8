//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::time::Instant;

use ponos::analysis::{
    certificate_convex, certificate_pl, certificate_strongly_convex, check_variance_bound, estimate_geometric_rate_in_band,
    lyapunov_strongly_convex, polyak_floor, RateConstants,
};
use ponos::config::RunConfig;
use ponos::linesearch::{backtrack, BacktrackParams, NonmonotoneState, ReferenceKind, ReferencePolicy};
use ponos::optim::{IterationStatus, Optimizer, OptimizerSettings, RunRecord};
use ponos::problems::{
    finite_diff_gradient, make_blobs, max_relative_error, BatchOrder, FiniteSumProblem, InterpolatingLeastSquares,
    KernelLogistic, MiniBatchSchedule, MlpClassifier, ScaledQuadratic,
};
use ponos::seed::{derive, rng, Stream};
use ponos::stepsize::ResetKind;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn config(text: &str) -> RunConfig {
    RunConfig::parse(text).unwrap_or_else(|e| panic!("bad test config: {e}\n{text}"))
}

fn lsq_config(seed: u64, problem_seed: u64, epochs: u64, optimizer: &str) -> RunConfig {
    config(&format!(
        "name = \"lsq\"\nseed = {seed}\nepochs = {epochs}\nbatch_size = 5\nrecord_iterations = true\n\
         [problem]\nkind = \"least_squares\"\nsamples = 50\ndim = 20\nseed = {problem_seed}\n\
         [optimizer]\n{optimizer}\n"
    ))
}

fn kernel_config(seed: u64, epochs: u64, optimizer: &str) -> RunConfig {
    config(&format!(
        "name = \"kernel\"\nseed = {seed}\nepochs = {epochs}\nbatch_size = 10\nrecord_iterations = true\n\
         [problem]\nkind = \"kernel_logistic\"\nsamples = 200\nseparation = 6.0\nseed = {seed}\n\
         [optimizer]\n{optimizer}\n"
    ))
}

fn quadratic_config(seed: u64, epochs: u64, optimizer: &str) -> RunConfig {
    config(&format!(
        "name = \"quadratic\"\nseed = {seed}\nepochs = {epochs}\nbatch_size = 2\nrecord_iterations = true\n\
         [problem]\nkind = \"quadratic\"\ncurvatures = [0.5, 1.0, 2.0, 4.0, 1.5, 3.0]\ndim = 5\n\
         [optimizer]\n{optimizer}\n"
    ))
}

fn mlp_config(seed: u64, epochs: u64, optimizer: &str) -> RunConfig {
    config(&format!(
        "name = \"mlp\"\nseed = {seed}\nepochs = {epochs}\nbatch_size = 8\nrecord_iterations = true\n\
         [problem]\nkind = \"mlp\"\nsamples = 64\nfeatures = 4\nclasses = 3\nhidden = 8\nseed = {seed}\n\
         [optimizer]\n{optimizer}\n"
    ))
}

fn run(cfg: &RunConfig) -> RunRecord {
    let rec = cfg.run().expect("valid config");
    if let Some(e) = &rec.error {
        panic!("run `{}` failed: {} ({})", cfg.name, e.message, e.tag);
    }
    rec
}

fn median(mut v: Vec<u32>) -> f64 {
    assert!(!v.is_empty());
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        0.5 * (v[n / 2 - 1] as f64 + v[n / 2] as f64)
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(f64::MIN_POSITIVE)
}

/// Recomputes `C_k` and `Q_{k+1}` for the prefix `f[..=k]` from scratch.
fn zhang_brute_force(xi: f64, f: &[f64]) -> (f64, f64) {
    let mut c_prev = f[0];
    let mut q = 0.0;
    let mut c = f[0];
    for &fj in f {
        let q_next = xi * q + 1.0;
        c = ((xi * q * c_prev + fj) / q_next).max(fj);
        c_prev = c;
        q = q_next;
    }
    (c, q)
}

fn criterion_01() -> Outcome {
    let start = Instant::now();
    let mut r = rng(101);
    let mut worst = 0.0f64;
    let mut q_bad = 0;
    for draw in 0..1000 {
        let xi = match draw % 10 {
            0 => 0.0,
            1 => 1.0,
            _ => r.random::<f64>(),
        };
        let len = r.random_range(1..60);
        let f: Vec<f64> = (0..len).map(|_| 10f64.powf(r.random_range(-6.0..2.0))).collect();
        let mut state = NonmonotoneState::new(xi).unwrap();
        for k in 0..len {
            let c = state.update(f[k]).unwrap();
            let (c_ref, q_ref) = zhang_brute_force(xi, &f[..=k]);
            worst = worst.max((c - c_ref).abs() / c_ref.abs());
            worst = worst.max((state.q() - q_ref).abs() / q_ref);
            let q = state.q();
            let ok = if xi < 1.0 {
                q >= 1.0 && q <= 1.0 / (1.0 - xi) * (1.0 + 1e-15)
            } else {
                q == (k + 1) as f64
            };
            if !ok {
                q_bad += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-14 && q_bad == 0 && secs < 1.0,
        format!("1000 draws, max rel err {worst:.1e}, Q bound violations {q_bad}, {secs:.2} s"),
    )
}

fn criterion_02() -> Outcome {
    let start = Instant::now();
    let zhang = "name = \"ponos\"\nxi = 0.0";
    let monotone = "name = \"ponos\"\nreference = \"monotone\"";
    let pairs = [
        (lsq_config(1, 0, 40, zhang), lsq_config(1, 0, 40, monotone)),
        (quadratic_config(1, 40, zhang), quadratic_config(1, 40, monotone)),
        (kernel_config(1, 10, zhang), kernel_config(1, 10, monotone)),
        (mlp_config(1, 20, zhang), mlp_config(1, 20, monotone)),
    ];
    let mut mismatched = Vec::new();
    for (a, b) in &pairs {
        let (ra, rb) = (run(a), run(b));
        let same = ra.losses().iter().map(|x| x.to_bits()).eq(rb.losses().iter().map(|x| x.to_bits()));
        if !same {
            mismatched.push(a.name.clone());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatched.is_empty() && secs < 10.0,
        format!("{} problems, mismatched {:?}, {secs:.2} s", pairs.len(), mismatched),
    )
}

fn criterion_03() -> Outcome {
    let start = Instant::now();
    let params = BacktrackParams::default();
    let mut bad = Vec::new();
    let mut cases = 0;
    for l in [0.5, 1.0, 4.0] {
        for eta_start in [0.5, 5.0, 50.0] {
            cases += 1;
            let q = ScaledQuadratic::new(vec![l], 1);
            let w = [4.0];
            let (f, g) = q.value_grad(&w, &[0]).unwrap();
            let decrement = g[0] * g[0];
            let threshold = 2.0 * (1.0 - params.c) / l;
            let mut predicted = (eta_start, 0u32);
            while predicted.0 > threshold {
                predicted = (predicted.0 * params.delta, predicted.1 + 1);
            }
            let trial = |eta: f64| q.value(&[w[0] - eta * g[0]], &[0]).unwrap();
            let out = backtrack(trial, eta_start, f, decrement, &params).unwrap();
            if (out.eta, out.backtracks) != predicted {
                bad.push((l, eta_start, out.eta, out.backtracks));
            }
        }
    }
    let worked = backtrack(|eta: f64| 0.5 * (4.0 - 4.0 * eta).powi(2), 5.0, 8.0, 16.0, &params).unwrap();
    let worked_ok = (worked.eta, worked.backtracks) == (0.625, 3);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        bad.is_empty() && worked_ok && secs < 1.0,
        format!("{cases} cases, mismatches {bad:?}, worked example (0.625, 3) {worked_ok}, {secs:.3} s"),
    )
}

/// PoNoS runs on the least-squares suite, shared by criteria 4 to 6.
fn lsq_suite() -> Vec<RunRecord> {
    let mut out = Vec::new();
    for seed in 0..10u64 {
        out.push(run(&lsq_config(seed, seed, 500, "name = \"ponos\"")));
    }
    out
}

fn criterion_04(suite: &[RunRecord], secs: f64) -> Outcome {
    let mut checked = 0u64;
    let mut violations = 0u64;
    for rec in suite {
        let l_max = rec.problem.lipschitz_max.expect("least squares knows L_max");
        let b = &rec.settings.backtrack;
        let floor = 2.0 * b.delta * (1.0 - b.c) / l_max;
        for it in rec.iterations.iter().filter(|i| i.status == IterationStatus::Stepped) {
            checked += 1;
            if it.eta < floor.min(it.eta_start) - 1e-12 {
                violations += 1;
            }
        }
    }
    outcome(
        violations == 0 && checked >= 50_000 && secs < 30.0,
        format!("{checked} accepted steps, {violations} violations, {secs:.2} s"),
    )
}

fn criterion_05(runs: &[&RunRecord]) -> Outcome {
    let mut checked = 0u64;
    let mut violations = 0u64;
    for rec in runs {
        for it in &rec.iterations {
            let Some(c_k) = it.reference else { continue };
            checked += 1;
            if c_k < it.f_k || c_k < 0.0 {
                violations += 1;
            }
        }
    }
    outcome(
        violations == 0 && checked > 0,
        format!("{checked} iterations over {} runs, {violations} violations", runs.len()),
    )
}

fn criterion_06(runs: &[&RunRecord]) -> Outcome {
    let mut checked = 0u64;
    let mut violations = 0u64;
    let mut tightest = f64::INFINITY;
    for rec in runs {
        let l_max = rec.problem.lipschitz_max.expect("L_max known");
        let floor = polyak_floor(rec.settings.step.c_p, l_max);
        for p in rec.iterations.iter().filter_map(|i| i.polyak_uncapped) {
            checked += 1;
            tightest = tightest.min(p / floor);
            if p < floor * (1.0 - 1e-9) {
                violations += 1;
            }
        }
    }
    outcome(
        violations == 0 && checked > 0,
        format!("{checked} Polyak steps, {violations} violations, min ratio to bound {tightest:.3}"),
    )
}

fn criterion_07() -> Outcome {
    let mut exact = true;
    for l in [0.5, 1.0, 4.0, 3.0] {
        for w in [2.0, 3.0, -1.5, 0.25] {
            let q = ScaledQuadratic::new(vec![l], 1);
            let v = check_variance_bound(&q, &[w]).unwrap();
            exact &= v.lhs == v.rhs && v.ok;
        }
    }
    let mut problems: Vec<(String, Box<dyn FiniteSumProblem>, Vec<f64>)> = Vec::new();
    for (seed, m, n) in [(0u64, 50usize, 20usize), (1, 30, 60), (2, 100, 10)] {
        let p = InterpolatingLeastSquares::generate(seed, m, n, 10.0).unwrap();
        let centre = p.witness().to_vec();
        problems.push((format!("lsq {m}x{n}"), Box::new(p), centre));
    }
    let data = make_blobs(3, 80, 2, 2, 6.0, 1.0).unwrap().to_signed_labels().unwrap();
    problems.push(("kernel".into(), Box::new(KernelLogistic::new(&data, 1.0).unwrap()), vec![0.0; 80]));
    problems.push((
        "quadratic".into(),
        Box::new(ScaledQuadratic::new(vec![0.5, 2.0, 1.0], 4)),
        vec![0.0; 4],
    ));
    let mut r = rng(7);
    let mut failures = Vec::new();
    let mut checked = 0;
    for (name, p, centre) in &problems {
        for _ in 0..100 {
            let w: Vec<f64> = centre
                .iter()
                .map(|c| { let z: f64 = StandardNormal.sample(&mut r); c + 2.0 * z })
                .collect();
            let v = check_variance_bound(p.as_ref(), &w).unwrap();
            checked += 1;
            if !v.ok {
                failures.push((name.clone(), v.lhs, v.rhs));
            }
        }
    }
    outcome(
        exact && failures.is_empty(),
        format!(
            "quadratic equality |g|^2 = 2L(f-f*) exact: {exact}; {checked} random iterates, {} failures",
            failures.len()
        ),
    )
}

/// Full loss after every iteration until it drops below `target`.
fn iterations_to(cfg: &RunConfig, target: f64, max_epochs: u64) -> Option<u64> {
    let built = cfg.problem.build(cfg.seed).unwrap();
    let p = built.train.as_ref();
    let settings = cfg.optimizer.settings(p.num_samples(), cfg.batch_size, 0.0).unwrap();
    let mut opt = Optimizer::new(settings, p.initial_point(derive(cfg.seed, Stream::InitialPoint)), p.num_samples()).unwrap();
    let schedule = MiniBatchSchedule::new(
        p.num_samples(),
        cfg.batch_size,
        cfg.order,
        derive(cfg.seed, Stream::Batches),
    );
    let mut k = 0;
    for epoch in 0..max_epochs {
        for batch in schedule.epoch_batches(epoch) {
            opt.step(p, &batch, epoch).unwrap();
            k += 1;
            if p.full_value(opt.w()).unwrap() < target {
                return Some(k);
            }
        }
    }
    None
}

fn criterion_08() -> Outcome {
    let start = Instant::now();
    let defaults = run(&lsq_config(1, 0, 200, "name = \"ponos\""));
    let final_loss = defaults.final_loss().unwrap();
    let reached = final_loss < 1e-16;
    let fit = estimate_geometric_rate_in_band(&defaults.losses(), 1e-12, 1e-2);
    let fit_ok = matches!(fit, Ok(f) if f.r_squared > 0.9);

    // Certificate-valid configuration: c = 0.6, xi = 0.001, eta_max small enough
    // for the xi bound, no backtrack-count reset so eta_{k,0} stays in
    // [1/(2 c_p L_max), eta_max].
    let problem = InterpolatingLeastSquares::generate(0, 50, 20, 10.0).unwrap();
    let meta = problem.meta().clone();
    let (l_max, mu) = (meta.lipschitz_max.unwrap(), meta.strong_convexity.unwrap());
    let eta_max = 40.0 / l_max;
    let c_p = 0.1;
    let eta_bar_min = polyak_floor(c_p, l_max).min(eta_max);
    let cert = certificate_strongly_convex(0.6, 0.001, 0.5, eta_bar_min, eta_max, mu, l_max);
    let RateConstants::StronglyConvex { a, d, .. } = cert.constants else {
        unreachable!()
    };
    let w_star = problem.witness().to_vec();
    let seeds = 20u64;
    let iters = 2000usize;
    let mut phi = vec![0.0; iters + 1];
    for seed in 0..seeds {
        let mut settings = OptimizerSettings::ponos(50, 5)
            .with_reference(ReferenceKind::Zhang { xi: 0.001 })
            .with_reset(ResetKind::None);
        settings.backtrack.c = 0.6;
        settings.step.eta_max = eta_max;
        settings.step.c_p = c_p;
        let w0 = problem.initial_point(derive(seed, Stream::InitialPoint));
        phi[0] += lyapunov_strongly_convex(&w0, &w_star, problem.full_value(&w0).unwrap(), 0.0, a);
        let mut opt = Optimizer::new(settings, w0, 50).unwrap();
        let schedule = MiniBatchSchedule::new(50, 5, BatchOrder::ShuffledEpoch, derive(seed, Stream::Batches));
        for k in 0..iters {
            let batch = schedule.sample_batch(k as u64);
            let it = opt.step(&problem, &batch, k as u64 / 10).unwrap();
            phi[k + 1] += lyapunov_strongly_convex(opt.w(), &w_star, it.reference.unwrap(), 0.0, a);
        }
    }
    // Stop the average before it reaches the floating-point floor.
    let last = phi.iter().position(|&p| p / seeds as f64 <= 1e-20).unwrap_or(iters + 1) - 1;
    let ratio = (phi[last] / phi[0]).powf(1.0 / last as f64);
    let lyapunov_ok = cert.valid && last > 0 && ratio <= d + 0.05;
    let secs = start.elapsed().as_secs_f64();
    let fit_text = match fit {
        Ok(f) => format!("r^2 {:.3} over {} points", f.r_squared, f.points),
        Err(e) => format!("no fit ({e})"),
    };
    outcome(
        reached && fit_ok && lyapunov_ok && secs < 60.0,
        format!(
            "defaults: final loss {final_loss:.2e} (< 1e-16: {reached}), band fit {fit_text}; \
             c=0.6 xi=0.001: certificate valid {}, d = {d:.6}, averaged Lyapunov ratio {ratio:.6} over {last} iterations; {secs:.1} s",
            cert.valid
        ),
    )
}

fn criterion_09() -> Outcome {
    let start = Instant::now();
    let mut problems_ok = Vec::new();
    let mut details = Vec::new();
    let cases: Vec<(&str, RunConfig, RunConfig)> = vec![
        (
            "lsq",
            lsq_config(1, 0, 200, "name = \"ponos\""),
            lsq_config(1, 0, 200, "name = \"reset0\""),
        ),
        (
            "kernel",
            kernel_config(1, 30, "name = \"ponos\""),
            kernel_config(1, 30, "name = \"reset0\""),
        ),
    ];
    for (name, with_reset, without) in &cases {
        let a = run(with_reset);
        let b = run(without);
        let n = a.iterations.len();
        let early = median(a.iterations[..n / 10].iter().map(|i| i.backtracks).collect());
        let late = median(a.iterations[n - n / 5..].iter().map(|i| i.backtracks).collect());
        let total_a: u64 = a.iterations.iter().map(|i| i.backtracks as u64).sum();
        let total_b: u64 = b.iterations.iter().map(|i| i.backtracks as u64).sum();
        let (fa, fb) = (a.final_loss().unwrap(), b.final_loss().unwrap());
        let gap = (fa / fb).log10().abs();
        let ok = early <= 1.0 && late == 0.0 && total_b > total_a && gap <= 1.0;
        problems_ok.push(ok);
        details.push(format!(
            "{name}: medians {early}/{late}, backtracks {total_a} vs {total_b}, final {fa:.2e} vs {fb:.2e}"
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        problems_ok.iter().all(|&x| x) && secs < 60.0,
        format!("{}; {secs:.1} s", details.join("; ")),
    )
}

fn criterion_10() -> Outcome {
    let mut checked = 0u64;
    let mut dominated = 0u64;
    let cases = [
        ("lsq", lsq_config(2, 2, 100, "name = \"ponos\"")),
        ("kernel", kernel_config(2, 10, "name = \"ponos\"")),
        ("quadratic", quadratic_config(2, 50, "name = \"ponos\"")),
    ];
    for (_, cfg) in &cases {
        let built = cfg.problem.build(cfg.seed).unwrap();
        let p = built.train.as_ref();
        let m = p.num_samples();
        let settings = cfg.optimizer.settings(m, cfg.batch_size, 0.0).unwrap();
        let mut opt = Optimizer::new(settings, p.initial_point(derive(cfg.seed, Stream::InitialPoint)), m).unwrap();
        let schedule = MiniBatchSchedule::new(m, cfg.batch_size, cfg.order, derive(cfg.seed, Stream::Batches));
        for epoch in 0..cfg.epochs {
            for batch in schedule.epoch_batches(epoch) {
                let mut monotone = opt.with_reference_policy(ReferencePolicy::new(ReferenceKind::Monotone, m).unwrap());
                let mono = monotone.step(p, &batch, epoch).unwrap();
                let zhang = opt.step(p, &batch, epoch).unwrap();
                if zhang.status != IterationStatus::Stepped {
                    continue;
                }
                checked += 1;
                if zhang.eta >= mono.eta {
                    dominated += 1;
                }
            }
        }
    }
    outcome(
        checked > 0 && dominated == checked,
        format!("eta(zhang) >= eta(monotone) at {dominated}/{checked} iterations"),
    )
}

fn criterion_11() -> Outcome {
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 0..5u64 {
        let ponos = iterations_to(&kernel_config(seed, 0, "name = \"ponos\""), 1e-3, 300);
        let sls = iterations_to(&kernel_config(seed, 0, "name = \"sls\"\ngamma = 2.0"), 1e-3, 300);
        if let Some(p) = ponos {
            if sls.is_none_or(|s| p < s) {
                wins += 1;
            }
        }
        pairs.push(format!("{ponos:?}/{sls:?}"));
    }
    outcome(
        wins == 5,
        format!("iterations to loss < 1e-3, PoNoS/SLS per seed: {}", pairs.join(", ")),
    )
}

fn criterion_12() -> Outcome {
    let mut r = rng(12);
    let mut worst_smooth = 0.0f64;
    let mut worst_mlp = 0.0f64;
    let lsq = InterpolatingLeastSquares::generate(5, 30, 8, 10.0).unwrap();
    let quad = ScaledQuadratic::new(vec![0.5, 1.0, 3.0], 6);
    let kdata = make_blobs(6, 30, 3, 2, 6.0, 1.0).unwrap().to_signed_labels().unwrap();
    let kernel = KernelLogistic::new(&kdata, 1.0).unwrap();
    let mdata = make_blobs(8, 24, 4, 3, 3.0, 1.0).unwrap();
    let mlp = MlpClassifier::new(&mdata, 5).unwrap();
    let smooth: [&dyn FiniteSumProblem; 3] = [&quad, &lsq, &kernel];
    for _ in 0..20 {
        for p in smooth {
            let w: Vec<f64> = (0..p.dim()).map(|_| StandardNormal.sample(&mut r)).collect();
            let m = p.num_samples();
            let idx: Vec<usize> = (0..m.min(7)).map(|_| r.random_range(0..m)).collect();
            let g = p.gradient(&w, &idx).unwrap();
            let fd = finite_diff_gradient(p, &w, &idx, 1e-5).unwrap();
            worst_smooth = worst_smooth.max(max_relative_error(&g, &fd, 1e-8));
        }
        let w: Vec<f64> = (0..mlp.dim()).map(|_| StandardNormal.sample(&mut r)).collect();
        let idx: Vec<usize> = (0..6).map(|_| r.random_range(0..24)).collect();
        let g = mlp.gradient(&w, &idx).unwrap();
        let fd = finite_diff_gradient(&mlp, &w, &idx, 1e-5).unwrap();
        worst_mlp = worst_mlp.max(max_relative_error(&g, &fd, 1e-8));
    }
    outcome(
        worst_smooth < 1e-6 && worst_mlp < 1e-4,
        format!("max rel err {worst_smooth:.1e} (quadratic, lsq, kernel), {worst_mlp:.1e} (mlp), 20 points each"),
    )
}

fn criterion_13() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_owned());
        }
    };
    let ex = certificate_strongly_convex(0.6, 0.001, 0.5, 0.1, 10.0, 0.5, 4.0);
    check("example valid", ex.valid);
    if let RateConstants::StronglyConvex { eta_min, a, rate_b, d, xi_bound } = ex.constants {
        check("eta_min", rel_close(eta_min, 0.1, 1e-12));
        check("a", rel_close(a, 0.1 / 3.0, 1e-12));
        check("rate_b", rel_close(rate_b, 0.501, 1e-12));
        check("d", rel_close(d, 0.95, 1e-12));
        check("xi at bound", !certificate_strongly_convex(0.6, xi_bound, 0.5, 0.1, 10.0, 0.5, 4.0).valid);
        check(
            "xi above bound",
            !certificate_strongly_convex(0.6, xi_bound * 1.5, 0.5, 0.1, 10.0, 0.5, 4.0).valid,
        );
    }
    for c in [0.5, 0.45, 0.2] {
        check("c <= 0.5", !certificate_strongly_convex(c, 0.0, 0.5, 0.1, 10.0, 0.5, 4.0).valid);
    }
    let zero = certificate_strongly_convex(0.6, 0.0, 0.5, 0.1, 10.0, 0.5, 4.0);
    check("xi = 0 valid", zero.valid);

    let convex = certificate_convex(0.6, 0.05, 0.2, 0.5, 0.1, 4.0);
    check("convex valid", convex.valid);
    if let RateConstants::Convex { d1, .. } = convex.constants {
        check("d1", rel_close(d1, 7.5, 1e-12));
    }
    check("a1 range", !certificate_convex(0.6, 0.05, 2.0 - 1.0 / 0.6, 0.5, 0.1, 4.0).valid);
    check("xi = a1/2", !certificate_convex(0.6, 0.1, 0.2, 0.5, 0.1, 4.0).valid);

    let bound = 2.0 * 0.5 * 0.6 * 0.4 / (2.0 - 4.0 * 0.6 * 0.4);
    let pl = certificate_pl(0.6, 1e-9, 0.5, 0.7, bound * 0.999, 1.0, 2.0);
    check("pl valid", pl.valid);
    if let RateConstants::Pl { nu, eta_max_bound, .. } = pl.constants {
        check("nu < 1", nu < 1.0);
        check("eta_max bound", rel_close(eta_max_bound, 0.24 / 1.04, 1e-12));
    }
    for c in [0.5, 0.4] {
        check("c <= L/(4 mu)", !certificate_pl(c, 1e-9, 0.5, 0.7, 0.2, 1.0, 2.0).valid);
    }
    outcome(failures.is_empty(), format!("failed checks: {failures:?}"))
}

fn criterion_14(runs: &[&RunRecord]) -> Outcome {
    let mut bad = Vec::new();
    for rec in runs {
        let line_search: u64 = rec
            .iterations
            .iter()
            .filter(|i| i.status == IterationStatus::Stepped)
            .map(|i| i.backtracks as u64 + 1)
            .sum();
        if rec.counters.value_evals != line_search + rec.counters.telemetry_evals {
            bad.push(rec.problem.name.clone());
        }
    }
    outcome(
        bad.is_empty() && !runs.is_empty(),
        format!("{} runs, mismatches {:?}", runs.len(), bad),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |n: u32, name: &'static str, o: Outcome| {
        println!(
            "criterion {n:02} [{}] {name}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((n, name, o));
    };

    record(1, "Zhang recursion oracle", criterion_01());
    record(2, "monotone degeneration", criterion_02());
    record(3, "backtracking exactness", criterion_03());

    let start = Instant::now();
    let suite = lsq_suite();
    let suite_secs = start.elapsed().as_secs_f64();
    record(4, "step-size floor", criterion_04(&suite, suite_secs));

    let kernel_runs: Vec<RunRecord> = (0..3).map(|s| run(&kernel_config(s, 20, "name = \"ponos\""))).collect();
    let quad_runs: Vec<RunRecord> = (0..3).map(|s| run(&quadratic_config(s, 100, "name = \"ponos\""))).collect();
    let interpolating: Vec<&RunRecord> = suite.iter().chain(&kernel_runs).chain(&quad_runs).collect();
    record(5, "reference value bounds", criterion_05(&interpolating));
    record(6, "Polyak step lower bound", criterion_06(&interpolating));
    record(7, "gradient variance bound", criterion_07());
    record(8, "linear convergence, strongly convex", criterion_08());
    record(9, "backtrack-count reset", criterion_09());
    record(10, "nonmonotone step dominates monotone", criterion_10());
    record(11, "kernel problem, PoNoS vs SLS", criterion_11());
    record(12, "gradient correctness", criterion_12());
    record(13, "certificate validity logic", criterion_13());

    let mut extra = Vec::new();
    for name in [
        "ponos",
        "reset0",
        "zhang_every2",
        "sls",
        "ponos_prec",
        "sls_prec",
        "sps",
        "grippo_cross",
        "grippo_single",
    ] {
        let opt = format!("name = \"{name}\"");
        extra.push(run(&lsq_config(3, 3, 20, &opt)));
        extra.push(run(&mlp_config(3, 10, &opt)));
        extra.push(run(&kernel_config(3, 3, &opt)));
    }
    let all: Vec<&RunRecord> = interpolating.iter().copied().chain(&extra).collect();
    record(14, "oracle accounting", criterion_14(&all));

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.passed).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
