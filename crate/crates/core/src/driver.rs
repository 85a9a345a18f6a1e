//! Outer trust-region loop with the scaled radius.
//!
//! Each iteration builds the radius from [`TrParams::radius_mode`], takes a
//! truncated-CG step, classifies it by `rho` against `eta1 <= eta2` and
//! rescales `delta` inside the interval prescribed for that class. The log
//! records `a_k = delta_k (1 + max|B_j|)^(1-beta) / (min|g_j|)^(1-alpha)`
//! and the run summary checks it, and the model decrease, against the
//! theoretical floors.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hessian::{EnvelopePoint, HessianMode, HessianModel, ModelError, SymmetricOperator};
use crate::problems::{EvalCounter, Problem};
use crate::subproblem::{default_cg_tol, pow, solve_tcg, RadiusMode, RadiusSpec, SubproblemError};

/// Relative guard below which the effective radius counts as underflow.
pub const DELTA_UNDERFLOW: f64 = 1e-15;
/// When the model decrease falls below `DEGENERATE_DECREASE (1 + |f|)`,
/// that amount is added to both sides of `rho` so rounding in `f` cannot
/// stall the method.
pub const DEGENERATE_DECREASE: f64 = 1e-14;
/// Safety factor on the secant Lipschitz estimate.
pub const LIPSCHITZ_SAFETY: f64 = 10.0;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid solve options: {0}")]
    InvalidOptions(String),
    #[error("non-finite {what} at iteration {k}")]
    NonFinite { what: &'static str, k: usize },
    #[error("subproblem returned model decrease {value:e} <= 0 at iteration {k}")]
    NonPositiveDecrease { k: usize, value: f64 },
    #[error("problem `{0}` has no analytic Hessian; use a quasi-Newton model")]
    NoHessian(String),
    #[error("model dimension {model} does not match problem dimension {problem}")]
    DimensionMismatch { model: usize, problem: usize },
    #[error(transparent)]
    Subproblem(#[from] SubproblemError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("csv output failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Position of `delta_{k+1}` inside each update interval, as a weight in
/// `[0, 1]` from the lower to the upper end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaUpdateRule {
    /// Within `[gamma3, gamma4] delta`.
    pub very_successful: f64,
    /// Within `[gamma2, 1] delta`.
    pub successful: f64,
    /// Within `[gamma1, gamma2] delta`.
    pub unsuccessful: f64,
}

impl Default for DeltaUpdateRule {
    fn default() -> Self {
        Self {
            very_successful: 0.0,
            successful: 1.0,
            unsuccessful: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrParams {
    pub eta1: f64,
    pub eta2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma4: f64,
    pub kappa_mdc: f64,
    pub alpha: f64,
    pub beta: f64,
    pub delta0: f64,
    /// Floating-point cap on `delta`; the method itself has none.
    pub delta_max: f64,
    pub radius_mode: RadiusMode,
    pub update_rule: DeltaUpdateRule,
    /// Also offer `(s, y)` to the model after unsuccessful iterations.
    pub update_on_unsuccessful: bool,
    /// CG forcing term; `None` uses `min(0.1, sqrt|g|)`.
    pub cg_tol: Option<f64>,
    /// CG iteration cap; `None` uses the dimension.
    pub max_cg: Option<usize>,
}

impl Default for TrParams {
    fn default() -> Self {
        Self {
            eta1: 0.1,
            eta2: 0.75,
            gamma1: 0.25,
            gamma2: 0.5,
            gamma3: 2.0,
            gamma4: 2.0,
            kappa_mdc: 0.5,
            alpha: 0.0,
            beta: 0.0,
            delta0: 1.0,
            delta_max: 1e100,
            radius_mode: RadiusMode::Current,
            update_rule: DeltaUpdateRule::default(),
            update_on_unsuccessful: false,
            cg_tol: None,
            max_cg: None,
        }
    }
}

impl TrParams {
    pub fn with_alpha_beta(mut self, alpha: f64, beta: f64) -> Self {
        self.alpha = alpha;
        self.beta = beta;
        self
    }

    pub fn validate(&self) -> Result<(), DriverError> {
        let bad = |msg: String| Err(DriverError::InvalidParams(msg));
        let all = [
            self.eta1,
            self.eta2,
            self.gamma1,
            self.gamma2,
            self.gamma3,
            self.gamma4,
            self.kappa_mdc,
            self.alpha,
            self.beta,
            self.delta0,
            self.delta_max,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("all constants must be finite".into());
        }
        if !(0.0 < self.eta1 && self.eta1 <= self.eta2 && self.eta2 < 1.0) {
            return bad(format!(
                "need 0 < eta1 <= eta2 < 1, got eta1={}, eta2={}",
                self.eta1, self.eta2
            ));
        }
        if !(0.0 < self.gamma1
            && self.gamma1 <= self.gamma2
            && self.gamma2 < 1.0
            && 1.0 <= self.gamma3
            && self.gamma3 <= self.gamma4)
        {
            return bad(format!(
                "need 0 < gamma1 <= gamma2 < 1 <= gamma3 <= gamma4, got {}, {}, {}, {}",
                self.gamma1, self.gamma2, self.gamma3, self.gamma4
            ));
        }
        if !(self.kappa_mdc > 0.0 && self.kappa_mdc <= 0.5) {
            return bad(format!("need kappa_mdc in (0, 0.5], got {}", self.kappa_mdc));
        }
        if self.alpha > 1.0 || self.beta > 1.0 {
            return bad(format!(
                "need alpha <= 1 and beta <= 1, got alpha={}, beta={}",
                self.alpha, self.beta
            ));
        }
        if !(self.delta0 > 0.0) || self.delta_max < self.delta0 {
            return bad(format!(
                "need 0 < delta0 <= delta_max, got {} and {}",
                self.delta0, self.delta_max
            ));
        }
        let r = &self.update_rule;
        if [r.very_successful, r.successful, r.unsuccessful]
            .iter()
            .any(|w| !(0.0..=1.0).contains(w))
        {
            return bad("update-rule weights must lie in [0, 1]".into());
        }
        if let Some(t) = self.cg_tol {
            if !(t > 0.0) {
                return bad(format!("cg_tol must be positive, got {t}"));
            }
        }
        if self.max_cg == Some(0) {
            return bad("max_cg must be positive".into());
        }
        Ok(())
    }

    /// `delta_{k+1} / delta_k` for an iteration of the given class.
    pub fn delta_factor(&self, status: IterStatus) -> f64 {
        let lerp = |lo: f64, hi: f64, w: f64| lo + w * (hi - lo);
        let r = &self.update_rule;
        match status {
            IterStatus::VerySuccessful => lerp(self.gamma3, self.gamma4, r.very_successful),
            IterStatus::Successful => lerp(self.gamma2, 1.0, r.successful),
            IterStatus::Unsuccessful => lerp(self.gamma1, self.gamma2, r.unsuccessful),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub eps: f64,
    pub max_iter: usize,
    /// Stop once this many objective evaluations have been spent.
    pub eval_budget: Option<u64>,
    /// Known Lipschitz constant of the gradient, used for the a_k floor.
    pub lipschitz: Option<f64>,
}

impl SolveOptions {
    pub fn new(eps: f64, max_iter: usize) -> Self {
        Self {
            eps,
            max_iter,
            eval_budget: None,
            lipschitz: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterStatus {
    VerySuccessful,
    Successful,
    Unsuccessful,
}

impl IterStatus {
    pub fn code(self) -> &'static str {
        match self {
            Self::VerySuccessful => "VS",
            Self::Successful => "S",
            Self::Unsuccessful => "U",
        }
    }

    pub fn is_success(self) -> bool {
        self != Self::Unsuccessful
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopStatus {
    FirstOrder,
    MaxIter,
    DeltaUnderflow,
    EvalBudget,
}

impl StopStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::FirstOrder => "first_order",
            Self::MaxIter => "max_iter",
            Self::DeltaUnderflow => "delta_underflow",
            Self::EvalBudget => "eval_budget",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub f: f64,
    pub gnorm: f64,
    pub delta: f64,
    pub eff_radius: f64,
    pub rho: f64,
    pub status: IterStatus,
    pub bnorm: f64,
    /// Successful iterations among `0..=k`.
    pub n_succ: usize,
    pub a_k: f64,
    pub cg_iters: usize,
    pub model_decrease: f64,
    pub step_norm: f64,
    /// `min_{j<=k} |g_j|`.
    pub min_gnorm: f64,
    /// `max_{j<=k} |B_j|`.
    pub max_bnorm: f64,
}

/// Per-run check of `a_k` and the model decrease against their floors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSummary {
    pub lipschitz: f64,
    /// `true` when `lipschitz` was supplied, `false` when estimated.
    pub lipschitz_exact: bool,
    pub a0: f64,
    pub a_min: f64,
    pub min_a_k: f64,
    pub a_k_floor_violations: usize,
    pub decrease_floor_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: StopStatus,
    pub iterations: usize,
    pub n_succ_total: usize,
    pub n_unsucc_total: usize,
    pub final_f: f64,
    pub final_gnorm: f64,
    pub f0: f64,
    pub x_final: Vec<f64>,
    pub evals: EvalCounter,
    pub a_min_theoretical: Option<f64>,
    pub monitor: Option<MonitorSummary>,
    pub log: Vec<IterationRecord>,
}

impl SolveReport {
    pub fn envelope_points(&self) -> Vec<EnvelopePoint> {
        self.log
            .iter()
            .map(|r| EnvelopePoint {
                k: r.k,
                bnorm: r.bnorm,
                n_succ: r.n_succ,
            })
            .collect()
    }

    pub fn write_log_csv<W: Write>(&self, out: W) -> Result<(), DriverError> {
        write_log_csv(&self.log, out)
    }
}

pub const LOG_CSV_HEADER: &str = "k,f,gnorm,delta,eff_radius,rho,status,bnorm,n_succ,a_k,cg_iters";

/// Iteration log as CSV, floats with 17 significant digits.
pub fn write_log_csv<W: Write>(log: &[IterationRecord], mut out: W) -> Result<(), DriverError> {
    writeln!(out, "{LOG_CSV_HEADER}")?;
    for r in log {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e},{},{:.16e},{}",
            r.k,
            r.f,
            r.gnorm,
            r.delta,
            r.eff_radius,
            r.rho,
            r.status.code(),
            r.bnorm,
            r.n_succ,
            r.a_k,
            r.cg_iters
        )?;
    }
    Ok(())
}

/// `delta (1 + max_bnorm)^(1-beta) / min_gnorm^(1-alpha)`.
pub fn a_k(delta: f64, max_bnorm: f64, min_gnorm: f64, alpha: f64, beta: f64) -> Result<f64, DriverError> {
    if !(min_gnorm > 0.0) {
        return Err(DriverError::InvalidOptions(format!(
            "a_k needs a positive gradient norm, got {min_gnorm}"
        )));
    }
    if !(delta > 0.0) {
        return Err(DriverError::InvalidOptions(format!("a_k needs delta > 0, got {delta}")));
    }
    Ok(delta * pow(1.0 + max_bnorm, 1.0 - beta) / pow(min_gnorm, 1.0 - alpha))
}

/// `min{a0, gamma1, gamma1 kappa_mdc (1 - eta2) / kappa}` with
/// `kappa = max(L, 1) / 2`.
pub fn theoretical_a_min(a0: f64, params: &TrParams, lipschitz: f64) -> f64 {
    let kappa = lipschitz.max(1.0) / 2.0;
    a0.min(params.gamma1)
        .min(params.gamma1 * params.kappa_mdc * (1.0 - params.eta2) / kappa)
}

fn non_finite(what: &'static str, k: usize) -> DriverError {
    DriverError::NonFinite { what, k }
}

/// Runs the trust-region method from the problem's start point.
///
/// `model` supplies `B_k`: scripted models are advanced to `B_k` at each
/// iteration, exact models are refreshed whenever the iterate moves, and
/// quasi-Newton models are offered `(s_k, y_k)` after each successful step.
pub fn solve(
    problem: &Problem,
    params: &TrParams,
    model: &mut HessianModel,
    opts: &SolveOptions,
) -> Result<SolveReport, DriverError> {
    params.validate()?;
    if !(opts.eps > 0.0) {
        return Err(DriverError::InvalidOptions(format!(
            "eps must be positive, got {}",
            opts.eps
        )));
    }
    if let Some(l) = opts.lipschitz {
        if !(l > 0.0) || !l.is_finite() {
            return Err(DriverError::InvalidOptions(format!(
                "lipschitz must be positive, got {l}"
            )));
        }
    }
    if model.dim() != problem.dim() {
        return Err(DriverError::DimensionMismatch {
            model: model.dim(),
            problem: problem.dim(),
        });
    }
    let exact = model.mode() == HessianMode::Exact;
    if exact && !problem.has_hessian() {
        return Err(DriverError::NoHessian(problem.name().to_string()));
    }

    let mut evals = EvalCounter::default();
    let mut x = problem.x0().clone();
    let mut f = problem.value(&x);
    evals.n_f += 1;
    let mut g = problem.gradient(&x);
    evals.n_g += 1;
    if !f.is_finite() {
        return Err(non_finite("objective value", 0));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(non_finite("gradient", 0));
    }
    let f0 = f;

    let mut delta = params.delta0;
    let mut log: Vec<IterationRecord> = Vec::new();
    let mut min_gnorm = f64::INFINITY;
    let mut max_bnorm = 0.0f64;
    let mut n_succ = 0usize;
    let mut hessian_stale = true;
    let mut secant_lipschitz = 0.0f64;

    let status = loop {
        let k = log.len();
        let gnorm = g.norm();
        if gnorm <= opts.eps {
            break StopStatus::FirstOrder;
        }
        if k >= opts.max_iter {
            break StopStatus::MaxIter;
        }
        if opts.eval_budget.is_some_and(|b| evals.n_f >= b) {
            break StopStatus::EvalBudget;
        }

        model.select_iteration(k);
        if exact && hessian_stale {
            let h = problem
                .hessian(&x)
                .ok_or_else(|| DriverError::NoHessian(problem.name().into()))?;
            evals.n_h += 1;
            if h.iter().any(|v| !v.is_finite()) {
                return Err(non_finite("Hessian", k));
            }
            model.set_exact(h)?;
            hessian_stale = false;
        }
        let bnorm = model.operator_norm();
        if !bnorm.is_finite() {
            return Err(non_finite("model norm", k));
        }
        min_gnorm = min_gnorm.min(gnorm);
        max_bnorm = max_bnorm.max(bnorm);

        let (gnorm_term, bnorm_term) = match params.radius_mode {
            RadiusMode::Current => (gnorm, bnorm),
            RadiusMode::History => (min_gnorm, max_bnorm),
        };
        let spec = RadiusSpec {
            alpha: params.alpha,
            beta: params.beta,
            delta,
            gnorm_term,
            bnorm_term,
            mode: params.radius_mode,
        };
        let radius = spec.effective_radius()?;
        let x_scale = x.amax().max(1.0);
        if radius < DELTA_UNDERFLOW * x_scale {
            break StopStatus::DeltaUnderflow;
        }

        let cg_tol = params.cg_tol.unwrap_or_else(|| default_cg_tol(gnorm));
        let max_cg = params.max_cg.unwrap_or(problem.dim());
        let step = solve_tcg(&g, &*model, radius, params.kappa_mdc, cg_tol, max_cg)?;
        if !(step.model_decrease > 0.0) {
            return Err(DriverError::NonPositiveDecrease {
                k,
                value: step.model_decrease,
            });
        }

        let x_trial = &x + &step.s;
        let f_trial = problem.value(&x_trial);
        evals.n_f += 1;
        if !f_trial.is_finite() {
            return Err(non_finite("objective value", k));
        }
        let guard = DEGENERATE_DECREASE * (1.0 + f.abs());
        let rho = if step.model_decrease < guard {
            (f - f_trial + guard) / (step.model_decrease + guard)
        } else {
            (f - f_trial) / step.model_decrease
        };
        let status = if rho >= params.eta2 {
            IterStatus::VerySuccessful
        } else if rho >= params.eta1 {
            IterStatus::Successful
        } else {
            IterStatus::Unsuccessful
        };
        if status.is_success() {
            n_succ += 1;
        }
        log.push(IterationRecord {
            k,
            f,
            gnorm,
            delta,
            eff_radius: radius,
            rho,
            status,
            bnorm,
            n_succ,
            a_k: a_k(delta, max_bnorm, min_gnorm, params.alpha, params.beta)?,
            cg_iters: step.cg_iters,
            model_decrease: step.model_decrease,
            step_norm: step.s.norm(),
            min_gnorm,
            max_bnorm,
        });

        delta = (delta * params.delta_factor(status)).min(params.delta_max);

        if status.is_success() || params.update_on_unsuccessful {
            let g_trial = problem.gradient(&x_trial);
            evals.n_g += 1;
            if g_trial.iter().any(|v| !v.is_finite()) {
                return Err(non_finite("gradient", k));
            }
            let y = &g_trial - &g;
            secant_lipschitz = secant_lipschitz.max(y.norm() / step.s.norm());
            model.update(&step.s, &y)?;
            if status.is_success() {
                x = x_trial;
                f = f_trial;
                g = g_trial;
                hessian_stale = true;
            }
        }
    };

    let monitor = build_monitor(&log, params, opts, secant_lipschitz);
    let n_unsucc = log.len() - n_succ;
    Ok(SolveReport {
        status,
        iterations: log.len(),
        n_succ_total: n_succ,
        n_unsucc_total: n_unsucc,
        final_f: f,
        final_gnorm: g.norm(),
        f0,
        x_final: x.iter().copied().collect(),
        evals,
        a_min_theoretical: monitor.as_ref().map(|m| m.a_min),
        monitor,
        log,
    })
}

fn build_monitor(
    log: &[IterationRecord],
    params: &TrParams,
    opts: &SolveOptions,
    secant_lipschitz: f64,
) -> Option<MonitorSummary> {
    let first = log.first()?;
    let (lipschitz, lipschitz_exact) = match opts.lipschitz {
        Some(l) => (l, true),
        None => (LIPSCHITZ_SAFETY * secant_lipschitz, false),
    };
    let a0 = first.a_k;
    let a_min = theoretical_a_min(a0, params, lipschitz);
    let floor = a_min * (1.0 - 1e-10);
    let mut a_k_floor_violations = 0;
    let mut decrease_floor_violations = 0;
    let mut min_a_k = f64::INFINITY;
    for r in log {
        min_a_k = min_a_k.min(r.a_k);
        if r.a_k < floor {
            a_k_floor_violations += 1;
        }
        let required = params.kappa_mdc * r.min_gnorm * r.min_gnorm / (1.0 + r.max_bnorm) * a_min;
        if r.model_decrease < required * (1.0 - 1e-10) {
            decrease_floor_violations += 1;
        }
    }
    Some(MonitorSummary {
        lipschitz,
        lipschitz_exact,
        a0,
        a_min,
        min_a_k,
        a_k_floor_violations,
        decrease_floor_violations,
    })
}

/// Model of the requested mode sized for `problem`.
pub fn model_for(problem: &Problem, mode: HessianMode, memory: usize, seed: u64) -> Result<HessianModel, DriverError> {
    Ok(HessianModel::for_mode(mode, problem.dim(), memory)?.with_seed(seed))
}
