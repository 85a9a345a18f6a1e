//! Acceptance suite. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion; exits nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use trfam::adversarial::{verify_sharpness, AdversarialSpec, SharpnessReport};
use trfam::bench::{self, CostMatrix, Metric, STANDARD_VARIANTS};
use trfam::bounds::{
    audit_run, bound_successful_from_kappa, bounds_table, choose_tau, xi_beta, BoundInputs, TableConfig,
    XI_DEFAULT_REL_TOL,
};
use trfam::driver::{model_for, solve, theoretical_a_min, SolveOptions, StopStatus, TrParams};
use trfam::hessian::{CounterKind, HessianMode};
use trfam::problems::{builtin_collection, builtin_names, check_gradient, find_builtin, test_points};
use trfam::rng::Lcg64;
use trfam::subproblem::{cauchy_point, default_cg_tol, model_decrease, solve_tcg};

type Verdict = Result<String, String>;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn within(elapsed: Duration, limit_s: f64, detail: String) -> Verdict {
    let secs = elapsed.as_secs_f64();
    if secs < limit_s {
        Ok(format!("{detail}; {secs:.3}s"))
    } else {
        Err(format!("{detail}; took {secs:.3}s, limit {limit_s}s"))
    }
}

/// Checks shared by the single-instance sharpness criteria. When
/// `boundary_at_start` is set, the first step may sit exactly on the radius
/// (`delta0 = 2^(2 - alpha)` with `alpha = beta = 1` makes `|s_0| = R_0`).
fn sharpness(spec: AdversarialSpec, expected: usize, boundary_at_start: bool) -> Verdict {
    let start = Instant::now();
    let rep = verify_sharpness(&spec, &TrParams::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mut problems = Vec::new();
    if rep.iterations != expected || rep.k_eps != expected {
        problems.push(format!(
            "iterations {} (k_eps {}), expected {expected}",
            rep.iterations, rep.k_eps
        ));
    }
    if rep.status != StopStatus::FirstOrder {
        problems.push(format!("status {}", rep.status.as_str()));
    }
    if !rep.all_very_successful {
        problems.push("not every iteration very successful".into());
    }
    let rho_err = rep.run.log.iter().map(|r| (r.rho - 2.0).abs()).fold(0.0, f64::max);
    if rho_err > 1e-9 {
        problems.push(format!("max |rho - 2| = {rho_err:.3e}"));
    }
    if (rep.final_gradient - spec.eps).abs() > 1e-12 {
        problems.push(format!("final |f'| = {:.17e}", rep.final_gradient));
    }
    let mut k0_margin = None;
    for r in &rep.run.log {
        let inside = if boundary_at_start && r.k == 0 {
            k0_margin = Some((r.eff_radius - r.step_norm) / r.eff_radius);
            r.step_norm <= r.eff_radius
        } else {
            r.step_norm < r.eff_radius
        };
        if !inside {
            problems.push(format!(
                "step {} not inside radius: |s|={} R={}",
                r.k, r.step_norm, r.eff_radius
            ));
        }
    }
    if !rep.passed {
        problems.push(format!("verification report failed: {:?}", rep.mismatches));
    }
    if !problems.is_empty() {
        return Err(problems.join("; "));
    }
    let mut detail = format!(
        "{} iterations, all VS, max |rho-2| {rho_err:.1e}, final |f'| {}",
        rep.iterations, rep.final_gradient
    );
    if let Some(m) = k0_margin {
        detail.push_str(&format!(
            ", steps k>=1 strictly interior, k=0 margin {m:.1e} (|s_0| = R_0)"
        ));
    }
    within(elapsed, 1.0, detail)
}

struct SweepRun {
    spec: AdversarialSpec,
    expected: usize,
    report: SharpnessReport,
}

fn sweep_specs() -> Vec<(AdversarialSpec, usize)> {
    let mut out = Vec::new();
    for eps in [0.9f64, 0.5, 0.25] {
        for p in [0.0, 0.3, 0.5, 0.9] {
            let expected = eps.powf(-2.0 / (1.0 - p)).floor();
            if expected > 1e6 {
                continue;
            }
            for (alpha, beta) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
                out.push((AdversarialSpec::new(eps, p, alpha, beta), expected as usize));
            }
        }
    }
    out
}

fn criterion4(runs: &mut Vec<SweepRun>) -> Verdict {
    let start = Instant::now();
    let mut problems = Vec::new();
    for (spec, expected) in sweep_specs() {
        let rep = match verify_sharpness(&spec, &TrParams::default()) {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("{spec:?}: {e}"));
                continue;
            }
        };
        if rep.iterations != expected {
            problems.push(format!("{spec:?}: {} iterations, expected {expected}", rep.iterations));
        }
        let f0 = rep.instance.f_vals[0];
        let fs: Vec<f64> = rep.run.log.iter().map(|r| r.f).chain([rep.run.final_f]).collect();
        if fs.windows(2).any(|w| !(w[1] < w[0])) {
            problems.push(format!("{spec:?}: f not decreasing along the run"));
        }
        if fs.iter().chain(&rep.instance.f_vals).any(|&f| !(0.0..=f0).contains(&f)) {
            problems.push(format!("{spec:?}: f leaves [0, f0]"));
        }
        runs.push(SweepRun {
            spec,
            expected,
            report: rep,
        });
    }
    if !problems.is_empty() {
        return Err(problems.join("; "));
    }
    let total: usize = runs.iter().map(|r| r.expected).sum();
    within(
        start.elapsed(),
        30.0,
        format!("{} configurations, {total} iterations total, all exact", runs.len()),
    )
}

fn audit_inputs(run: &SweepRun) -> BoundInputs {
    let mut params = TrParams::default().with_alpha_beta(run.spec.alpha, run.spec.beta);
    params.delta0 = run.report.instance.delta0;
    BoundInputs::from_params(
        &params,
        run.report.f0,
        run.report.f_low,
        run.report.run.log[0].a_k,
        run.report.lipschitz,
        1.0,
        run.spec.p,
        run.spec.eps,
        0,
    )
}

fn criterion5(runs: &[SweepRun]) -> Verdict {
    if runs.is_empty() {
        return Err("no sweep runs available".into());
    }
    let mut problems = Vec::new();
    let mut audits = 0;
    for run in runs {
        let inputs = audit_inputs(run);
        for counter in [CounterKind::Successful, CounterKind::Iteration] {
            match audit_run(&run.report.run, &inputs, counter) {
                Ok(a) if a.successful_ok && a.unsuccessful_ok && a.total_ok.unwrap_or(true) => audits += 1,
                Ok(a) => problems.push(format!(
                    "{:?} {counter:?}: succ {} vs {:?}, unsucc {} vs {}",
                    run.spec, a.n_succ, a.successful_bound, a.n_unsucc, a.unsuccessful_bound
                )),
                Err(e) => problems.push(format!("{:?}: {e}", run.spec)),
            }
        }
    }
    if problems.is_empty() {
        Ok(format!("{audits} audits, zero violations"))
    } else {
        Err(problems.join("; "))
    }
}

fn criterion6(runs: &[SweepRun]) -> Verdict {
    if runs.is_empty() {
        return Err("no sweep runs available".into());
    }
    let mut worst = f64::INFINITY;
    let mut problems = Vec::new();
    for run in runs {
        let params = TrParams::default().with_alpha_beta(run.spec.alpha, run.spec.beta);
        let a0 = run.report.run.log[0].a_k;
        let a_min = theoretical_a_min(a0, &params, run.report.lipschitz);
        let min_a_k = run.report.run.log.iter().map(|r| r.a_k).fold(f64::INFINITY, f64::min);
        worst = worst.min(min_a_k / a_min);
        if min_a_k < a_min * (1.0 - 1e-10) {
            problems.push(format!("{:?}: min a_k {min_a_k} < a_min {a_min}", run.spec));
        }
    }
    if problems.is_empty() {
        Ok(format!("{} runs, smallest min a_k / a_min = {worst:.4}", runs.len()))
    } else {
        Err(problems.join("; "))
    }
}

fn random_instance(rng: &mut Lcg64, i: usize) -> (DVector<f64>, DMatrix<f64>, f64) {
    let n = 1 + rng.below(8);
    let a = DMatrix::from_fn(n, n, |_, _| rng.uniform(-1.0, 1.0));
    let b = match i % 3 {
        0 => a.transpose() * &a / n as f64 + DMatrix::identity(n, n) * 0.1,
        1 => (&a + a.transpose()) * 0.5,
        _ => -(a.transpose() * &a / n as f64 + DMatrix::identity(n, n) * 0.1),
    };
    let g = DVector::from_fn(n, |_, _| rng.uniform(-1.0, 1.0));
    let r = rng.uniform(0.1, 3.0);
    (g, b, r)
}

/// Best decrease along `-g` over a uniform grid of `points` steps in
/// `[0, r / |g|]`.
fn grid_line_search(g: &DVector<f64>, b: &DMatrix<f64>, r: f64, points: usize) -> f64 {
    let gg = g.norm_squared();
    let gbg = g.dot(&(b * g));
    let t_max = r / g.norm();
    (0..points)
        .map(|j| {
            let t = t_max * j as f64 / (points - 1) as f64;
            t * gg - 0.5 * t * t * gbg
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn criterion7() -> Verdict {
    let start = Instant::now();
    let mut rng = Lcg64::new(7);
    let mut problems = Vec::new();
    let mut worst_oracle = 0.0f64;
    for i in 0..200 {
        let (g, b, r) = random_instance(&mut rng, i);
        let cp = cauchy_point(&g, &b, r).map_err(|e| e.to_string())?;
        let oracle = grid_line_search(&g, &b, r, 1_000_000);
        let err = (cp.model_decrease - oracle) / oracle.abs();
        worst_oracle = worst_oracle.max(err.abs());
        if err.abs() > 1e-6 {
            problems.push(format!("instance {i}: cauchy {} vs grid {oracle}", cp.model_decrease));
        }
        let st = solve_tcg(&g, &b, r, 0.5, default_cg_tol(g.norm()), g.len()).map_err(|e| e.to_string())?;
        let dec = model_decrease(&g, &b, &st.s);
        if dec < cp.model_decrease - 1e-12 {
            problems.push(format!(
                "instance {i}: tcg decrease {dec} below cauchy {}",
                cp.model_decrease
            ));
        }
        if st.s.norm() > r * (1.0 + 1e-12) {
            problems.push(format!("instance {i}: |s| = {} exceeds {r}", st.s.norm()));
        }
    }
    if !problems.is_empty() {
        return Err(problems.join("; "));
    }
    within(
        start.elapsed(),
        10.0,
        format!("200 instances, worst cauchy/grid relative gap {worst_oracle:.1e}"),
    )
}

fn direct_successful_bound(kappa1: f64, mu: f64, p: f64, eps: f64) -> f64 {
    let core = (1.0 + 2.0 * mu) * kappa1 / (eps * eps);
    if p < 1.0 {
        (1.0 + (1.0 - p) * core).powf(1.0 / (1.0 - p)) - 1.0
    } else {
        core.exp_m1()
    }
}

fn criterion8() -> Verdict {
    let cfg = TableConfig {
        p: 1.0,
        mu: 0.0,
        eps: 1.0,
        kappa1: Some(1.0),
        ..TableConfig::default()
    };
    let rows = bounds_table(&cfg).map_err(|e| e.to_string())?;
    let row = rows
        .iter()
        .find(|r| r.name == "successful_bound")
        .ok_or("table has no successful_bound row")?;
    let expected = std::f64::consts::E - 1.0;
    let value = row.value.ok_or("successful bound reported as unrepresentable")?;
    if rel(value, expected) > 1e-12 {
        return Err(format!("table value {value}, expected e - 1 = {expected}"));
    }

    let mut rng = Lcg64::new(8);
    let mut compared = 0;
    let mut worst = 0.0f64;
    for i in 0..2000 {
        let kappa1 = 10f64.powf(rng.uniform(-2.0, 2.0));
        let mu = rng.uniform(0.0, 5.0);
        let p = if i % 4 == 0 { 1.0 } else { rng.uniform(0.0, 0.99) };
        let eps = 10f64.powf(rng.uniform(-1.5, 0.0));
        let b = bound_successful_from_kappa(kappa1, mu, p, eps);
        let direct = direct_successful_bound(kappa1, mu, p, eps);
        if direct.is_finite() && direct < 1e300 {
            let v = b
                .representable
                .ok_or_else(|| format!("representable value {direct} lost in log domain"))?;
            let e = rel(v, direct).max(rel(b.log_value, direct.ln()));
            worst = worst.max(e);
            if e > 1e-9 {
                return Err(format!(
                    "kappa1={kappa1} mu={mu} p={p} eps={eps}: {v} vs direct {direct}"
                ));
            }
            compared += 1;
        }
    }
    Ok(format!(
        "table value {value} (e - 1 to {:.1e}); log/direct agree on {compared} samples, worst {worst:.1e}",
        rel(value, expected)
    ))
}

fn criterion9() -> Verdict {
    let closed = 1.0 / (1.0 - 0.5f64.powf(1.0 / 3.0));
    let xi0 = xi_beta(0.5, 2.0, 3, 1.0, 0.5, 0.0, XI_DEFAULT_REL_TOL).map_err(|e| e.to_string())?;
    if rel(xi0, closed) > 1e-10 {
        return Err(format!("beta=0: {xi0} vs closed form {closed}"));
    }
    let mut worst = 0.0f64;
    for (mu, p) in [(1.0, 0.0), (1.0, 0.5), (0.5, 1.0), (2.0, 0.3), (10.0, 0.9)] {
        let xi = xi_beta(0.5, 2.0, 3, mu, p, 1.0, XI_DEFAULT_REL_TOL).map_err(|e| e.to_string())?;
        let r = 0.5f64.powf(1.0 / 3.0);
        let brute: f64 = (0..1_000_000u32)
            .map(|k| r.powi(k as i32) / (1.0 + mu * (1.0 + (k as f64).powf(p))))
            .sum();
        let e = rel(xi, brute);
        worst = worst.max(e);
        if e > 1e-9 {
            return Err(format!("beta=1 mu={mu} p={p}: {xi} vs brute force {brute}"));
        }
    }
    Ok(format!(
        "beta=0 gap {:.1e}; beta=1 worst gap {worst:.1e} over 5 configurations",
        rel(xi0, closed)
    ))
}

fn criterion10() -> Verdict {
    let t = choose_tau(0.5, 2.0).map_err(|e| e.to_string())?;
    if t != 3 {
        return Err(format!("choose_tau(0.5, 2) = {t}, expected 3"));
    }
    let mut checked = 0;
    for g2 in [0.1, 0.3, 0.5, 0.7, 0.9] {
        for g4 in [1.0, 1.5, 2.0, 4.0] {
            let tau = choose_tau(g2, g4).map_err(|e| e.to_string())?;
            let holds = |t: u32| g4 * g2.powi(t as i32 - 1) < 1.0;
            if !holds(tau) || (tau >= 1 && holds(tau - 1)) {
                return Err(format!("gamma2={g2} gamma4={g4}: tau={tau} is not minimal"));
            }
            checked += 1;
        }
    }
    Ok(format!("choose_tau(0.5, 2) = 3; minimality holds on {checked} pairs"))
}

fn exact_solve(name: &str) -> Result<(StopStatus, usize), String> {
    let problem = find_builtin(name).map_err(|e| e.to_string())?;
    let mut model = model_for(&problem, HessianMode::Exact, 5, 0).map_err(|e| e.to_string())?;
    let mut opts = SolveOptions::new(1e-6, bench::DEFAULT_MAX_ITER);
    opts.eval_budget = Some(bench::DEFAULT_EVAL_BUDGET);
    let r = solve(&problem, &TrParams::default(), &mut model, &opts).map_err(|e| e.to_string())?;
    Ok((r.status, r.iterations))
}

fn full_matrix() -> Result<CostMatrix, String> {
    let names = builtin_names();
    let specs = bench::specs_for(&names, &STANDARD_VARIANTS, HessianMode::Exact, 5, 1e-6);
    bench::run_matrix(&specs).map(|(m, _)| m).map_err(|e| e.to_string())
}

fn criterion11() -> Verdict {
    let start = Instant::now();
    let (s_status, s_iters) = exact_solve("sphere")?;
    let rosen = find_builtin("rosenbrock").map_err(|e| e.to_string())?;
    if rosen.x0().as_slice() != [-1.2, 1.0] {
        return Err(format!("rosenbrock starts at {:?}", rosen.x0().as_slice()));
    }
    let (r_status, r_iters) = exact_solve("rosenbrock")?;
    let m = full_matrix()?;
    let solved = m
        .problems
        .iter()
        .filter(|p| m.variants.iter().any(|v| m.get(p, v).is_some_and(|c| c.solved())))
        .count();
    let frac = solved as f64 / m.problems.len() as f64;
    let detail = format!(
        "sphere {} in {s_iters}, rosenbrock {} in {r_iters}, {solved}/{} problems solved by some variant",
        s_status.as_str(),
        r_status.as_str(),
        m.problems.len()
    );
    if s_status != StopStatus::FirstOrder || s_iters > 3 {
        return Err(detail);
    }
    if r_status != StopStatus::FirstOrder || r_iters > 200 {
        return Err(detail);
    }
    if frac < 0.9 {
        return Err(detail);
    }
    within(start.elapsed(), 60.0, detail)
}

fn criterion12() -> Verdict {
    let mut worst = (0.0f64, String::new());
    let mut checks = 0;
    for p in builtin_collection() {
        let mut points = vec![p.x0().clone()];
        points.extend(test_points(&p, 10, 0));
        for x in &points {
            let e = check_gradient(&p, x, 1e-6).map_err(|e| e.to_string())?;
            if e > worst.0 {
                worst = (e, p.name().to_string());
            }
            checks += 1;
            if e > 1e-5 {
                return Err(format!("{}: gradient error {e:.2e}", p.name()));
            }
        }
    }
    Ok(format!("{checks} checks, worst {:.1e} on {}", worst.0, worst.1))
}

fn profile_is_valid(m: &CostMatrix, metric: Metric) -> Result<(), String> {
    let profiles = bench::performance_profile(m, metric).map_err(|e| e.to_string())?;
    for prof in &profiles {
        if prof.breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(format!("{}: breakpoints not increasing", prof.variant));
        }
        if prof.values.windows(2).any(|w| w[1] < w[0]) {
            return Err(format!("{}: profile decreases", prof.variant));
        }
        if prof.values.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(format!("{}: value outside [0, 1]", prof.variant));
        }
        if prof.breakpoints.first().is_some_and(|&b| b < 1.0) {
            return Err(format!("{}: ratio below 1", prof.variant));
        }
        for (i, &b) in prof.breakpoints.iter().enumerate() {
            let left = if i == 0 { 0.0 } else { prof.values[i - 1] };
            if prof.value_at(b) != prof.values[i] || prof.value_at(b - b * 1e-12) != left {
                return Err(format!("{}: not right-continuous at {b}", prof.variant));
            }
        }
        let solved = m.solved_count(&prof.variant) as f64 / m.problems.len() as f64;
        if prof.terminal() != solved {
            return Err(format!(
                "{}: terminal {} vs solved fraction {solved}",
                prof.variant,
                prof.terminal()
            ));
        }
    }
    Ok(())
}

fn without_time(m: &CostMatrix) -> CostMatrix {
    let mut out = m.clone();
    for c in out.cells.values_mut() {
        c.time_ms = 0.0;
    }
    out
}

fn criterion13() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = full_matrix()?;
    for metric in Metric::ALL {
        profile_is_valid(&first, metric).map_err(|e| format!("{metric}: {e}"))?;
    }
    bench::emit(&first, dir.path()).map_err(|e| e.to_string())?;
    let back = CostMatrix::read_csv(&dir.path().join("matrix.csv")).map_err(|e| e.to_string())?;
    if back != first {
        return Err("matrix.csv does not round-trip".into());
    }

    let second = full_matrix()?;
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    without_time(&first).write_csv(&a).map_err(|e| e.to_string())?;
    without_time(&second).write_csv(&b).map_err(|e| e.to_string())?;
    let (ta, tb) = (
        std::fs::read(&a).map_err(|e| e.to_string())?,
        std::fs::read(&b).map_err(|e| e.to_string())?,
    );
    if ta != tb {
        return Err("repeated matrices differ outside the time column".into());
    }
    for metric in [Metric::Fevals, Metric::Gevals] {
        let pa = bench::profile_csv(&bench::performance_profile(&first, metric).map_err(|e| e.to_string())?);
        let pb = bench::profile_csv(&bench::performance_profile(&second, metric).map_err(|e| e.to_string())?);
        if pa.map_err(|e| e.to_string())? != pb.map_err(|e| e.to_string())? {
            return Err(format!("{metric} profile differs between runs"));
        }
    }
    Ok(format!(
        "{} problems x {} variants; profiles valid for all metrics; round-trip and repeat identical",
        first.problems.len(),
        first.variants.len()
    ))
}

fn guarded(f: impl FnOnce() -> Verdict) -> Verdict {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(v) => v,
        Err(p) => Err(format!(
            "panicked: {}",
            p.downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default()
        )),
    }
}

fn main() -> ExitCode {
    let mut sweep = Vec::new();
    let results: Vec<(u32, &str, Verdict)> = vec![
        (
            1,
            "sharpness p=0",
            guarded(|| sharpness(AdversarialSpec::new(0.5, 0.0, 0.0, 0.0), 4, false)),
        ),
        (
            2,
            "sharpness p=0.5",
            guarded(|| sharpness(AdversarialSpec::new(0.5, 0.5, 0.0, 0.0), 16, false)),
        ),
        (
            3,
            "sharpness p=1",
            guarded(|| sharpness(AdversarialSpec::new(0.5, 1.0, 1.0, 1.0).with_c(1.0), 54, true)),
        ),
        (4, "sharpness sweep", guarded(|| criterion4(&mut sweep))),
        (5, "bound audits", guarded(|| criterion5(&sweep))),
        (6, "a_k lower bound", guarded(|| criterion6(&sweep))),
        (7, "subproblem oracle", guarded(criterion7)),
        (8, "exponential-regime bound", guarded(criterion8)),
        (9, "xi_beta oracle", guarded(criterion9)),
        (10, "tau selection", guarded(criterion10)),
        (11, "solver sanity", guarded(criterion11)),
        (12, "gradient validation", guarded(criterion12)),
        (13, "profile properties", guarded(criterion13)),
    ];
    let mut failed = 0;
    for (n, name, verdict) in &results {
        match verdict {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
