use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use trfam::adversarial::{build_interpolant, generate, verify_sharpness, AdversarialSpec, EMIT_GRID_POINTS};
use trfam::bench::{self, CostMatrix, Metric, DEFAULT_EVAL_BUDGET, DEFAULT_MAX_ITER};
use trfam::bounds::{bounds_table, TableConfig, TableRow};
use trfam::driver::{model_for, solve, SolveOptions, TrParams};
use trfam::hessian::HessianMode;
use trfam::problems::{builtin_names, find_builtin};
use trfam::subproblem::RadiusMode;

const SEED_ENV: &str = "TRFAM_SEED";

#[derive(Parser)]
#[command(name = "trfam", version, about = "Trust-region methods with scaled radii")]
struct Cli {
    /// Seed for pseudo-random elements; overridden by TRFAM_SEED.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize a built-in problem.
    Solve(SolveArgs),
    /// Build the worst-case one-dimensional instance and optionally run it.
    Adversarial(AdversarialArgs),
    /// Print the complexity bound table.
    Bounds(BoundsArgs),
    /// Run the benchmark matrix and write profiles.
    Bench(BenchArgs),
    /// Recompute a profile from an existing matrix.csv.
    Profile(ProfileArgs),
}

#[derive(Args, Clone)]
struct MethodArgs {
    #[arg(long, default_value_t = 0.1)]
    eta1: f64,
    #[arg(long, default_value_t = 0.75)]
    eta2: f64,
    #[arg(long, default_value_t = 0.25)]
    gamma1: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma2: f64,
    #[arg(long, default_value_t = 2.0)]
    gamma3: f64,
    #[arg(long, default_value_t = 2.0)]
    gamma4: f64,
    #[arg(long, default_value_t = 0.5)]
    kappa_mdc: f64,
    #[arg(long, default_value_t = 1.0)]
    delta0: f64,
    /// `current` or `history`.
    #[arg(long, default_value = "current")]
    radius_mode: RadiusMode,
}

impl MethodArgs {
    fn params(&self, alpha: f64, beta: f64) -> Result<TrParams, CliError> {
        let p = TrParams {
            eta1: self.eta1,
            eta2: self.eta2,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            gamma3: self.gamma3,
            gamma4: self.gamma4,
            kappa_mdc: self.kappa_mdc,
            delta0: self.delta0,
            radius_mode: self.radius_mode,
            ..TrParams::default()
        }
        .with_alpha_beta(alpha, beta);
        p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    problem: String,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    beta: f64,
    /// `exact`, `lbfgs`, `lsr1` or `zero`.
    #[arg(long, default_value = "exact")]
    hessian: HessianMode,
    #[arg(long, default_value_t = 5)]
    mem: usize,
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long)]
    eval_budget: Option<u64>,
    /// Write the iteration log as CSV.
    #[arg(long)]
    log_csv: Option<PathBuf>,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    method: MethodArgs,
}

#[derive(Args)]
struct AdversarialArgs {
    #[arg(long)]
    p: f64,
    /// Scale of `k_eps` when `p = 1`.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    beta: f64,
    /// Run the method on the instance and check every iteration.
    #[arg(long)]
    verify: bool,
    /// Write `x,f,fprime` samples of the interpolant.
    #[arg(long)]
    emit_function: Option<PathBuf>,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    method: MethodArgs,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    p: f64,
    #[arg(long)]
    mu: f64,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    k0: usize,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    f0: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    f_low: f64,
    #[arg(long, default_value_t = 1.0)]
    lipschitz: f64,
    #[arg(long, default_value_t = 1.0)]
    a0: f64,
    /// Use this constant directly instead of deriving it from f0 - f_low.
    #[arg(long)]
    kappa1: Option<f64>,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    method: MethodArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Semicolon-separated `alpha,beta` pairs.
    #[arg(long, default_value = "0,0;0,1;1,0;1,1")]
    variants: String,
    #[arg(long, default_value = "exact")]
    hessian: HessianMode,
    #[arg(long, default_value_t = 5)]
    mem: usize,
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, default_value_t = DEFAULT_EVAL_BUDGET)]
    eval_budget: u64,
    /// Comma-separated subset of the collection; all problems by default.
    #[arg(long)]
    problems: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProfileArgs {
    /// Directory containing matrix.csv.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "fevals")]
    metric: Metric,
    /// Output directory; defaults to the input directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Domain(String),
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Domain(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string(value)?;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn effective_seed(flag: u64) -> Result<u64, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("{SEED_ENV} must be a nonnegative integer, got `{v}`"))),
        Err(_) => Ok(flag),
    }
}

fn run_solve(a: &SolveArgs, seed: u64) -> Result<(), CliError> {
    let params = a.method.params(a.alpha, a.beta)?;
    if !(a.eps > 0.0) {
        return Err(usage(format!("--eps must be positive, got {}", a.eps)));
    }
    let problem = find_builtin(&a.problem)?;
    let mut model = model_for(&problem, a.hessian, a.mem, seed)?;
    let mut opts = SolveOptions::new(a.eps, a.max_iter);
    opts.eval_budget = a.eval_budget;
    let report = solve(&problem, &params, &mut model, &opts)?;
    if let Some(path) = &a.log_csv {
        let file = File::create(path).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        report.write_log_csv(&mut w)?;
        w.flush()?;
    }
    if a.json {
        return print_json(&report);
    }
    println!("problem:      {}", problem.name());
    println!("status:       {}", report.status.as_str());
    println!("iterations:   {}", report.iterations);
    println!("successful:   {}", report.n_succ_total);
    println!("unsuccessful: {}", report.n_unsucc_total);
    println!("f:            {:.10e}", report.final_f);
    println!("|g|:          {:.6e}", report.final_gnorm);
    println!(
        "evaluations:  f={} g={} h={}",
        report.evals.n_f, report.evals.n_g, report.evals.n_h
    );
    Ok(())
}

#[derive(Serialize)]
struct InstanceSummary {
    spec: AdversarialSpec,
    k_eps: usize,
    delta0: f64,
    kappa_f: f64,
    f0: f64,
    f_end: f64,
    lipschitz: f64,
    f_low: f64,
}

fn run_adversarial(a: &AdversarialArgs) -> Result<(), CliError> {
    let spec = AdversarialSpec::new(a.eps, a.p, a.alpha, a.beta).with_c(a.c);
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let params = a.method.params(a.alpha, a.beta)?;
    let inst = generate(&spec)?;
    let interp = build_interpolant(&inst);
    if let Some(path) = &a.emit_function {
        let file = File::create(path).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        interp.write_csv(&mut w, EMIT_GRID_POINTS)?;
        w.flush()?;
    }
    if !a.verify {
        let summary = InstanceSummary {
            spec,
            k_eps: inst.k_eps,
            delta0: inst.delta0,
            kappa_f: inst.kappa_f,
            f0: inst.f_vals[0],
            f_end: inst.f_vals[inst.k_eps],
            lipschitz: interp.lipschitz_exact(),
            f_low: interp.global_min(),
        };
        if a.json {
            return print_json(&summary);
        }
        println!("k_eps:     {}", summary.k_eps);
        println!("delta0:    {:.10e}", summary.delta0);
        println!("f0:        {:.10e}", summary.f0);
        println!("f_end:     {:.10e}", summary.f_end);
        println!("lipschitz: {:.10e}", summary.lipschitz);
        println!("f_low:     {:.10e}", summary.f_low);
        return Ok(());
    }
    let report = verify_sharpness(&spec, &params)?;
    if a.json {
        print_json(&report)?;
    } else {
        println!("k_eps:              {}", report.k_eps);
        println!("iterations:         {}", report.iterations);
        println!("status:             {}", report.status.as_str());
        println!("all very successful: {}", report.all_very_successful);
        println!("max |rho - 2|:      {:.3e}", report.max_rho_error);
        println!("min radius margin:  {:.3e}", report.min_radius_margin);
        println!("final |f'|:         {:.16e}", report.final_gradient);
        println!("lipschitz:          {:.10e}", report.lipschitz);
        println!("min a_k / a_min:    {:.6e} / {:.6e}", report.min_a_k, report.a_min);
        for m in &report.mismatches {
            println!(
                "mismatch: {} at k={:?}: expected {:.16e}, observed {:.16e}",
                m.check, m.k, m.expected, m.observed
            );
        }
        for v in &report.instance_violations {
            println!("instance violation: {v}");
        }
        println!(
            "verification:       {}",
            if report.passed { "passed" } else { "FAILED" }
        );
    }
    if !report.passed {
        return Err(CliError::Domain(format!(
            "verification failed after {} iterations (expected {})",
            report.iterations, report.k_eps
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct BoundsOutput<'a> {
    p: f64,
    mu: f64,
    eps: f64,
    alpha: f64,
    beta: f64,
    rows: &'a [TableRow],
}

fn run_bounds(a: &BoundsArgs) -> Result<(), CliError> {
    let params = a.method.params(a.alpha, a.beta)?;
    let cfg = TableConfig {
        params,
        p: a.p,
        mu: a.mu,
        eps: a.eps,
        k0: a.k0,
        f0: a.f0,
        f_low: a.f_low,
        lipschitz: a.lipschitz,
        a0: a.a0,
        kappa1: a.kappa1,
    };
    let rows = bounds_table(&cfg)?;
    if a.json {
        return print_json(&BoundsOutput {
            p: a.p,
            mu: a.mu,
            eps: a.eps,
            alpha: a.alpha,
            beta: a.beta,
            rows: &rows,
        });
    }
    println!("{:<28} {:>24} {:>24}", "quantity", "value", "log(value)");
    for r in &rows {
        let value = match r.value {
            Some(v) => format!("{v:.12e}"),
            None => "unrepresentable".to_string(),
        };
        let note = if r.reference { "  (reference)" } else { "" };
        println!("{:<28} {:>24} {:>24.12e}{note}", r.name, value, r.log_value);
    }
    Ok(())
}

fn run_bench(a: &BenchArgs) -> Result<(), CliError> {
    let variants = bench::parse_variants(&a.variants).map_err(|e| usage(e.to_string()))?;
    for &(alpha, beta) in &variants {
        TrParams::default()
            .with_alpha_beta(alpha, beta)
            .validate()
            .map_err(|e| usage(e.to_string()))?;
    }
    if !(a.eps > 0.0) {
        return Err(usage(format!("--eps must be positive, got {}", a.eps)));
    }
    let problems: Vec<String> = match &a.problems {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
        None => builtin_names(),
    };
    let mut specs = bench::specs_for(&problems, &variants, a.hessian, a.mem, a.eps);
    for s in &mut specs {
        s.max_iter = a.max_iter;
        s.eval_budget = a.eval_budget;
    }
    let (matrix, _) = bench::run_matrix(&specs)?;
    let written = bench::emit(&matrix, &a.out)?;
    println!("{:<24} {:>8}", "variant", "solved");
    for v in &matrix.variants {
        println!("{:<24} {:>4}/{}", v, matrix.solved_count(v), matrix.problems.len());
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn run_profile(a: &ProfileArgs) -> Result<(), CliError> {
    let matrix = CostMatrix::read_csv(&a.input.join("matrix.csv"))?;
    let profiles = bench::performance_profile(&matrix, a.metric)?;
    let out = a.out.clone().unwrap_or_else(|| a.input.clone());
    let (csv_path, svg_path) = bench::emit_profile(&profiles, a.metric, &out)?;
    println!("{:<24} {:>10} {:>10}", "variant", "rho(1)", "solved");
    for p in &profiles {
        println!("{:<24} {:>10.4} {:>10.4}", p.variant, p.value_at(1.0), p.terminal());
    }
    println!("wrote {}", csv_path.display());
    println!("wrote {}", svg_path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = effective_seed(cli.seed).and_then(|seed| match &cli.command {
        Command::Solve(a) => run_solve(a, seed),
        Command::Adversarial(a) => run_adversarial(a),
        Command::Bounds(a) => run_bounds(a),
        Command::Bench(a) => run_bench(a),
        Command::Profile(a) => run_profile(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Domain(msg)) => {
            eprintln!("error: {}", msg.replace('\n', " "));
            ExitCode::from(1)
        }
    }
}
