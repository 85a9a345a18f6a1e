//! Closed-form worst-case iteration bounds and run audits.
//!
//! Bounds that can overflow are carried as [`LogBound`]s. With
//! `kappa1 = (f0 - f_low) / (eta1 kappa_mdc a_min)` the successful-iteration
//! bound is
//!
//! ```text
//! [(1-p)(1+2mu) kappa1 eps^-2 + 1]^(1/(1-p)) - 1     (p < 1)
//! exp((1+2mu) kappa1 eps^-2) - 1                     (p = 1)
//! ```
//!
//! and the unsuccessful-iteration bound is
//! `|log_g2 g4| S + (1-alpha) log_g2 eps + (beta-1) log_g2(1 + mu(1+S^p))
//! + log_g2(a_min/delta0)`. When the envelope is driven by the iteration
//! counter, the total bound uses `tau` (smallest with `g4 g2^(tau-1) < 1`)
//! and `xi_beta = sum_k q^(k/tau) / (1 + mu(1+k^p))^beta`, `q = g4 g2^(tau-1)`.

use serde::Serialize;
use thiserror::Error;

use crate::driver::{theoretical_a_min, SolveReport, StopStatus, TrParams};
use crate::hessian::{measure_envelope, CounterKind, ModelError};

/// Bounds at or above this are reported in log form only.
pub const REPRESENTABLE_LIMIT: f64 = 1e300;
pub const XI_DEFAULT_REL_TOL: f64 = 1e-12;
const XI_MAX_TERMS: usize = 100_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("invalid bound input: {0}")]
    InvalidInput(String),
    #[error("series ratio q = {0} is not below 1; xi_beta diverges")]
    Divergent(f64),
    #[error("xi_beta did not reach the requested tolerance within {0} terms")]
    IterationGuard(usize),
    #[error("audits need a run that stopped at first order, got {0:?}")]
    NotFirstOrder(StopStatus),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A nonnegative bound `B` with `log_value = ln B`; `representable` holds
/// `B` itself when it is below [`REPRESENTABLE_LIMIT`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogBound {
    pub log_value: f64,
    pub representable: Option<f64>,
}

impl LogBound {
    /// `B = exp(lx) - 1` from `lx = ln(B + 1) >= 0`.
    pub fn from_log_plus_one(lx: f64) -> Self {
        if lx <= 0.0 {
            return Self {
                log_value: f64::NEG_INFINITY,
                representable: Some(0.0),
            };
        }
        let value = lx.exp_m1();
        if value < REPRESENTABLE_LIMIT {
            Self {
                log_value: value.ln(),
                representable: Some(value),
            }
        } else {
            Self {
                log_value: lx + (-(-lx).exp()).ln_1p(),
                representable: None,
            }
        }
    }

    pub fn from_value(value: f64) -> Self {
        if value < REPRESENTABLE_LIMIT {
            Self {
                log_value: value.ln(),
                representable: Some(value),
            }
        } else {
            Self {
                log_value: value.ln(),
                representable: None,
            }
        }
    }

    /// Whether `count <= B`, decided in the log domain when needed.
    pub fn admits(&self, count: f64) -> bool {
        match self.representable {
            Some(v) => count <= v,
            None => count <= 0.0 || count.ln() <= self.log_value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs {
    pub f0: f64,
    pub f_low: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub kappa_mdc: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma4: f64,
    pub delta0: f64,
    pub a_min: f64,
    pub mu: f64,
    pub p: f64,
    pub eps: f64,
    pub alpha: f64,
    pub beta: f64,
    /// First successful iteration.
    pub k0: usize,
    pub lipschitz: f64,
}

impl BoundInputs {
    /// Inputs from the method constants, with `a_min` from `a0` and `L`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_params(
        params: &TrParams,
        f0: f64,
        f_low: f64,
        a0: f64,
        lipschitz: f64,
        mu: f64,
        p: f64,
        eps: f64,
        k0: usize,
    ) -> Self {
        Self {
            f0,
            f_low,
            eta1: params.eta1,
            eta2: params.eta2,
            kappa_mdc: params.kappa_mdc,
            gamma1: params.gamma1,
            gamma2: params.gamma2,
            gamma4: params.gamma4,
            delta0: params.delta0,
            a_min: theoretical_a_min(a0, params, lipschitz),
            mu,
            p,
            eps,
            alpha: params.alpha,
            beta: params.beta,
            k0,
            lipschitz,
        }
    }

    pub fn validate(&self) -> Result<(), BoundsError> {
        let bad = |m: String| Err(BoundsError::InvalidInput(m));
        if !(self.f0 >= self.f_low) {
            return bad(format!("need f0 >= f_low, got {} < {}", self.f0, self.f_low));
        }
        if !(self.a_min > 0.0) {
            return bad(format!("a_min must be positive, got {}", self.a_min));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return bad(format!("mu must be nonnegative, got {}", self.mu));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return bad(format!("p must lie in [0, 1], got {}", self.p));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.eta1 > 0.0 && self.kappa_mdc > 0.0 && self.delta0 > 0.0) {
            return bad("eta1, kappa_mdc and delta0 must be positive".into());
        }
        if !(self.gamma2 > 0.0 && self.gamma2 < 1.0 && self.gamma4 >= 1.0) {
            return bad(format!(
                "need 0 < gamma2 < 1 <= gamma4, got {} and {}",
                self.gamma2, self.gamma4
            ));
        }
        if self.alpha > 1.0 || self.beta > 1.0 {
            return bad("alpha and beta must not exceed 1".into());
        }
        Ok(())
    }
}

fn log_base(x: f64, base: f64) -> f64 {
    x.ln() / base.ln()
}

pub fn kappa1(inputs: &BoundInputs) -> f64 {
    (inputs.f0 - inputs.f_low) / (inputs.eta1 * inputs.kappa_mdc * inputs.a_min)
}

/// Successful-iteration bound for a given `kappa1`.
pub fn bound_successful_from_kappa(kappa1: f64, mu: f64, p: f64, eps: f64) -> LogBound {
    let core = (1.0 + 2.0 * mu) * kappa1 / (eps * eps);
    if p < 1.0 {
        LogBound::from_log_plus_one(((1.0 - p) * core).ln_1p() / (1.0 - p))
    } else {
        LogBound::from_log_plus_one(core)
    }
}

pub fn bound_successful(inputs: &BoundInputs) -> LogBound {
    bound_successful_from_kappa(kappa1(inputs), inputs.mu, inputs.p, inputs.eps)
}

/// Unsuccessful-iteration bound given the successful count `s_eps`.
pub fn bound_unsuccessful(inputs: &BoundInputs, s_eps: f64) -> f64 {
    let g2 = inputs.gamma2;
    let growth = 1.0 + inputs.mu * (1.0 + s_eps.powf(inputs.p));
    let mut total = log_base(inputs.gamma4, g2).abs() * s_eps;
    if inputs.alpha != 1.0 {
        total += (1.0 - inputs.alpha) * log_base(inputs.eps, g2);
    }
    if inputs.beta != 1.0 {
        total += (inputs.beta - 1.0) * log_base(growth, g2);
    }
    total + log_base(inputs.a_min / inputs.delta0, g2)
}

/// Smallest `tau >= 1` with `gamma4 gamma2^(tau-1) < 1`.
pub fn choose_tau(gamma2: f64, gamma4: f64) -> Result<u32, BoundsError> {
    if !(gamma2 > 0.0 && gamma2 < 1.0 && gamma4 >= 1.0 && gamma4.is_finite()) {
        return Err(BoundsError::InvalidInput(format!(
            "need 0 < gamma2 < 1 <= gamma4, got {gamma2} and {gamma4}"
        )));
    }
    let mut tau = 1u32;
    while gamma4 * gamma2.powi(tau as i32 - 1) >= 1.0 {
        tau += 1;
    }
    Ok(tau)
}

/// Upper estimate of `sum_{k>=0} q^(k/tau) / (1 + mu(1+k^p))^beta`: partial
/// sums plus a geometric bound on the remaining tail, stopping once that
/// bound is at most `rel_tol` times the partial sum.
pub fn xi_beta(
    gamma2: f64,
    gamma4: f64,
    tau: u32,
    mu: f64,
    p: f64,
    beta: f64,
    rel_tol: f64,
) -> Result<f64, BoundsError> {
    if tau == 0 || !(rel_tol > 0.0) || !(mu >= 0.0) {
        return Err(BoundsError::InvalidInput(format!(
            "need tau >= 1, rel_tol > 0, mu >= 0; got {tau}, {rel_tol}, {mu}"
        )));
    }
    let q = gamma4 * gamma2.powi(tau as i32 - 1);
    if !(q < 1.0) || !(q > 0.0) {
        return Err(BoundsError::Divergent(q));
    }
    let r = q.powf(1.0 / tau as f64);
    let weight = |k: usize| 1.0 + mu * (1.0 + (k as f64).powf(p));
    let term = |k: usize| r.powi(k as i32) / weight(k).powf(beta);
    let growth_exp = (-beta).max(0.0);
    let mut partial = 0.0;
    for k in 0..XI_MAX_TERMS {
        partial += term(k);
        // terms after k shrink by at most c per step
        let c = r * (weight(k + 2) / weight(k + 1)).powf(growth_exp);
        if c < 1.0 {
            let tail = term(k + 1) / (1.0 - c);
            if tail <= rel_tol * partial {
                return Ok(partial + tail);
            }
        }
    }
    Err(BoundsError::IterationGuard(XI_MAX_TERMS))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TotalBound {
    pub bound: LogBound,
    pub kappa2: f64,
    pub kappa3: f64,
    /// `kappa2 eps^-2`.
    pub eps_sq_term: f64,
    /// `kappa3 eps^(alpha-1)`.
    pub eps_alpha_term: f64,
}

/// Total-iteration bound from `kappa2` and `kappa3`:
///
/// ```text
/// [(1-p)(1+mu(1+(1+k0)^p))/(1+k0)^p T + (k0+1)^(1-p)]^(1/(1-p)) - 1   (p < 1)
/// (k0+1) exp[(1+mu(2+k0))/(1+k0) T] - 1                                (p = 1)
/// ```
///
/// with `T = kappa2 eps^-2 + kappa3 eps^(alpha-1)`.
#[allow(clippy::too_many_arguments)]
pub fn bound_total_from_kappas(
    kappa2: f64,
    kappa3: f64,
    mu: f64,
    p: f64,
    eps: f64,
    alpha: f64,
    k0: usize,
) -> TotalBound {
    let eps_sq_term = kappa2 / (eps * eps);
    let eps_alpha_term = kappa3 * eps.powf(alpha - 1.0);
    let t = eps_sq_term + eps_alpha_term;
    let k1 = k0 as f64 + 1.0;
    let lx = if p < 1.0 {
        let kp = k1.powf(p);
        let a = (1.0 - p) * (1.0 + mu * (1.0 + kp)) / kp * t + k1.powf(1.0 - p);
        a.ln() / (1.0 - p)
    } else {
        k1.ln() + (1.0 + mu * (1.0 + k1)) / k1 * t
    };
    TotalBound {
        bound: LogBound::from_log_plus_one(lx),
        kappa2,
        kappa3,
        eps_sq_term,
        eps_alpha_term,
    }
}

pub fn bound_total_k(inputs: &BoundInputs, tau: u32, xi: f64) -> TotalBound {
    let kappa2 = tau as f64 * (inputs.f0 - inputs.f_low) / (inputs.eta1 * inputs.kappa_mdc * inputs.a_min);
    let kappa3 = inputs.delta0 * xi / inputs.a_min;
    bound_total_from_kappas(kappa2, kappa3, inputs.mu, inputs.p, inputs.eps, inputs.alpha, inputs.k0)
}

/// Total bound when `alpha = beta = 1`:
/// `(|log_g2 g4| + 1) S_bound + log_g2(a_min / delta0)`.
pub fn bound_total_unit_exponents(inputs: &BoundInputs, successful: &LogBound) -> LogBound {
    let factor = log_base(inputs.gamma4, inputs.gamma2).abs() + 1.0;
    let shift = log_base(inputs.a_min / inputs.delta0, inputs.gamma2);
    match successful.representable {
        Some(s) => LogBound::from_value(factor * s + shift),
        None => LogBound {
            log_value: factor.ln() + successful.log_value,
            representable: None,
        },
    }
}

/// `p = 0` specialization with `kappa_mdc = 1/2`, `L >= 1`:
/// `(|log_g2 g4|+1) 4(L+2 mu L)/(g1 eta1 (1-eta2)) (f0-f_low) eps^-2
/// + log_g2(g1 (1-eta2) / (2 L delta0))`.
pub fn bound_constant_growth(inputs: &BoundInputs) -> f64 {
    let l = inputs.lipschitz.max(1.0);
    let factor = log_base(inputs.gamma4, inputs.gamma2).abs() + 1.0;
    factor * 4.0 * (l + 2.0 * inputs.mu * l) / (inputs.gamma1 * inputs.eta1 * (1.0 - inputs.eta2))
        * (inputs.f0 - inputs.f_low)
        / (inputs.eps * inputs.eps)
        + log_base(
            inputs.gamma1 * (1.0 - inputs.eta2) / (2.0 * l * inputs.delta0),
            inputs.gamma2,
        )
}

/// Classical bounded-model reference with `L + 2 mu` as the curvature scale.
pub fn bound_classical_reference(inputs: &BoundInputs) -> f64 {
    let l = inputs.lipschitz.max(1.0);
    let factor = log_base(inputs.gamma4, inputs.gamma2).abs() + 1.0;
    factor * 4.0 * (l + 2.0 * inputs.mu) / (inputs.gamma1 * inputs.eta1 * (1.0 - inputs.eta2))
        * (inputs.f0 - inputs.f_low)
        / (inputs.eps * inputs.eps)
        + log_base(inputs.eps, inputs.gamma2)
        + log_base(
            inputs.gamma1 * (1.0 - inputs.eta2) / (2.0 * (l + 2.0 * inputs.mu) * inputs.delta0),
            inputs.gamma2,
        )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Audit {
    pub counter: CounterKind,
    pub mu_hat: f64,
    pub a_min: f64,
    pub min_a_k: f64,
    pub a_k_ok: bool,
    pub kappa1: f64,
    pub n_succ: usize,
    pub successful_bound: LogBound,
    pub successful_ok: bool,
    pub n_unsucc: usize,
    pub unsuccessful_bound: f64,
    pub unsuccessful_ok: bool,
    pub iterations: usize,
    pub tau: Option<u32>,
    pub xi_beta: Option<f64>,
    pub total_bound: Option<TotalBound>,
    pub total_ok: Option<bool>,
    pub passed: bool,
}

/// Checks a finished run against the bounds. `inputs.mu` and `inputs.k0`
/// are replaced by the envelope measured from the log and the run's first
/// successful iteration.
pub fn audit_run(report: &SolveReport, inputs: &BoundInputs, counter: CounterKind) -> Result<Audit, BoundsError> {
    if report.status != StopStatus::FirstOrder {
        return Err(BoundsError::NotFirstOrder(report.status));
    }
    let mut inputs = *inputs;
    inputs.validate()?;
    let mu_hat = if report.log.is_empty() {
        0.0
    } else {
        measure_envelope(&report.envelope_points(), inputs.p, counter)?
    };
    inputs.mu = mu_hat;
    inputs.k0 = report.log.iter().position(|r| r.status.is_success()).unwrap_or(0);

    let min_a_k = report.log.iter().map(|r| r.a_k).fold(f64::INFINITY, f64::min);
    let a_k_ok = report.log.is_empty() || min_a_k >= inputs.a_min * (1.0 - 1e-10);

    let k1 = kappa1(&inputs);
    let successful_bound = bound_successful(&inputs);
    let successful_ok = successful_bound.admits(report.n_succ_total as f64);
    let unsuccessful_bound = bound_unsuccessful(&inputs, report.n_succ_total as f64);
    let unsuccessful_ok = report.n_unsucc_total as f64 <= unsuccessful_bound;

    let (tau, xi, total_bound, total_ok) = match counter {
        CounterKind::Iteration => {
            let tau = choose_tau(inputs.gamma2, inputs.gamma4)?;
            let xi = xi_beta(
                inputs.gamma2,
                inputs.gamma4,
                tau,
                inputs.mu,
                inputs.p,
                inputs.beta,
                XI_DEFAULT_REL_TOL,
            )?;
            let total = bound_total_k(&inputs, tau, xi);
            let ok = total.bound.admits(report.iterations as f64);
            (Some(tau), Some(xi), Some(total), Some(ok))
        }
        CounterKind::Successful => (None, None, None, None),
    };
    let passed = a_k_ok && successful_ok && unsuccessful_ok && total_ok.unwrap_or(true);
    Ok(Audit {
        counter,
        mu_hat,
        a_min: inputs.a_min,
        min_a_k,
        a_k_ok,
        kappa1: k1,
        n_succ: report.n_succ_total,
        successful_bound,
        successful_ok,
        n_unsucc: report.n_unsucc_total,
        unsuccessful_bound,
        unsuccessful_ok,
        iterations: report.iterations,
        tau,
        xi_beta: xi,
        total_bound,
        total_ok,
        passed,
    })
}

/// Configuration of the printed bounds table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableConfig {
    pub params: TrParams,
    pub p: f64,
    pub mu: f64,
    pub eps: f64,
    pub k0: usize,
    pub f0: f64,
    pub f_low: f64,
    pub lipschitz: f64,
    pub a0: f64,
    /// Use this `kappa1` instead of deriving it from `f0 - f_low`.
    pub kappa1: Option<f64>,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self {
            params: TrParams::default(),
            p: 0.0,
            mu: 1.0,
            eps: 1e-3,
            k0: 0,
            f0: 1.0,
            f_low: 0.0,
            lipschitz: 1.0,
            a0: 1.0,
            kappa1: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub name: &'static str,
    pub value: Option<f64>,
    pub log_value: f64,
    /// Reference rows are printed for comparison only.
    pub reference: bool,
}

impl TableRow {
    fn plain(name: &'static str, value: f64) -> Self {
        Self {
            name,
            value: Some(value),
            log_value: value.ln(),
            reference: false,
        }
    }

    fn bound(name: &'static str, b: &LogBound) -> Self {
        Self {
            name,
            value: b.representable,
            log_value: b.log_value,
            reference: false,
        }
    }

    fn maybe_finite(name: &'static str, value: f64) -> Self {
        Self {
            value: value.is_finite().then_some(value),
            ..Self::plain(name, value)
        }
    }

    fn reference(name: &'static str, value: f64) -> Self {
        Self {
            reference: true,
            ..Self::plain(name, value)
        }
    }
}

pub fn bounds_table(cfg: &TableConfig) -> Result<Vec<TableRow>, BoundsError> {
    cfg.params
        .validate()
        .map_err(|e| BoundsError::InvalidInput(e.to_string()))?;
    if !(cfg.lipschitz > 0.0) || !(cfg.a0 > 0.0) {
        return Err(BoundsError::InvalidInput(format!(
            "lipschitz and a0 must be positive, got {} and {}",
            cfg.lipschitz, cfg.a0
        )));
    }
    let params = &cfg.params;
    let inputs = BoundInputs::from_params(
        params,
        cfg.f0,
        cfg.f_low,
        cfg.a0,
        cfg.lipschitz,
        cfg.mu,
        cfg.p,
        cfg.eps,
        cfg.k0,
    );
    inputs.validate()?;
    let k1 = cfg.kappa1.unwrap_or_else(|| kappa1(&inputs));
    if !(k1 >= 0.0) {
        return Err(BoundsError::InvalidInput(format!(
            "kappa1 must be nonnegative, got {k1}"
        )));
    }
    let kappa = cfg.lipschitz.max(1.0) / 2.0;
    let tau = choose_tau(params.gamma2, params.gamma4)?;
    let xi = xi_beta(
        params.gamma2,
        params.gamma4,
        tau,
        cfg.mu,
        cfg.p,
        params.beta,
        XI_DEFAULT_REL_TOL,
    )?;
    let kappa2 = tau as f64 * k1;
    let kappa3 = params.delta0 * xi / inputs.a_min;
    let succ = bound_successful_from_kappa(k1, cfg.mu, cfg.p, cfg.eps);
    let s_for_unsucc = succ.representable.unwrap_or(f64::INFINITY);
    let unsucc = bound_unsuccessful(&inputs, s_for_unsucc);
    let total = bound_total_from_kappas(kappa2, kappa3, cfg.mu, cfg.p, cfg.eps, params.alpha, cfg.k0);

    // reference rows assume the same kappa1 scaling
    let mut ref_inputs = inputs;
    if cfg.kappa1.is_some() {
        ref_inputs.f0 = ref_inputs.f_low + k1 * inputs.eta1 * inputs.kappa_mdc * inputs.a_min;
    }
    let unit_total = bound_total_unit_exponents(&ref_inputs, &succ);

    let mut rows = vec![
        TableRow::plain("kappa", kappa),
        TableRow::plain("a_min", inputs.a_min),
        TableRow::plain("kappa1", k1),
        TableRow::plain("kappa2", kappa2),
        TableRow::plain("kappa3", kappa3),
        TableRow::plain("tau", tau as f64),
        TableRow::plain("xi_beta", xi),
        TableRow::bound("successful_bound", &succ),
        TableRow::maybe_finite("unsuccessful_bound", unsucc),
        TableRow::bound("total_bound_k", &total.bound),
        TableRow::plain("total_eps_sq_term", total.eps_sq_term),
        TableRow::plain("total_eps_alpha_term", total.eps_alpha_term),
    ];
    let mut unit = TableRow::bound("total_bound_unit_exponents", &unit_total);
    unit.reference = true;
    rows.push(unit);
    rows.push(TableRow::reference(
        "constant_growth_total",
        bound_constant_growth(&ref_inputs),
    ));
    rows.push(TableRow::reference(
        "classical_reference",
        bound_classical_reference(&ref_inputs),
    ));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inputs() -> BoundInputs {
        BoundInputs {
            f0: 1.0,
            f_low: 0.0,
            eta1: 0.1,
            eta2: 0.75,
            kappa_mdc: 0.5,
            gamma1: 0.25,
            gamma2: 0.5,
            gamma4: 2.0,
            delta0: 1.0,
            a_min: 0.03125,
            mu: 1.0,
            p: 0.0,
            eps: 0.1,
            alpha: 1.0,
            beta: 1.0,
            k0: 0,
            lipschitz: 2.0,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn kappa1_examples() {
        assert!(rel(kappa1(&inputs()), 640.0) < 1e-14);
        let mut i = inputs();
        i.f_low = i.f0;
        assert_eq!(kappa1(&i), 0.0);
        let mut i = inputs();
        i.a_min *= 2.0;
        assert!(rel(kappa1(&i), 320.0) < 1e-14);
    }

    #[test]
    fn successful_bound_examples() {
        let b = bound_successful_from_kappa(10.0, 1.0, 0.0, 0.1);
        assert!(rel(b.representable.unwrap(), 3000.0) < 1e-12);
        let b = bound_successful_from_kappa(10.0, 1.0, 0.5, 0.1);
        assert!(rel(b.representable.unwrap(), 2_253_000.0) < 1e-12);
        let b = bound_successful_from_kappa(1.0, 0.0, 1.0, 1.0);
        assert!(rel(b.representable.unwrap(), std::f64::consts::E - 1.0) < 1e-12);
    }

    #[test]
    fn exponential_bound_stays_finite_in_log_form() {
        let b = bound_successful_from_kappa(640.0, 1.0, 1.0, 0.05);
        assert!(b.representable.is_none());
        let expected = 3.0 * 640.0 / 0.0025;
        assert!(rel(b.log_value, expected) < 1e-12);
        assert!(b.admits(1e300));
    }

    #[test]
    fn approach_to_exponential_shape() {
        let exponent = 3.0 * 1.0 / 0.25;
        let mut last = 0.0;
        for p in [0.9, 0.99, 0.999] {
            let b = bound_successful_from_kappa(1.0, 1.0, p, 0.5);
            let ratio = b.log_value / exponent;
            assert!(ratio > last);
            last = ratio;
        }
        assert!((last - 1.0).abs() < 0.1);
    }

    #[test]
    fn unsuccessful_bound_examples() {
        let i = inputs();
        assert!((bound_unsuccessful(&i, 100.0) - 105.0).abs() < 1e-12);

        let mut i = inputs();
        i.gamma4 = 1.0;
        assert_eq!(bound_unsuccessful(&i, 10.0), bound_unsuccessful(&i, 1e6));

        let mut i = inputs();
        i.alpha = 0.0;
        i.eps = 0.5;
        let mut j = i;
        j.alpha = 1.0;
        assert!((bound_unsuccessful(&i, 7.0) - bound_unsuccessful(&j, 7.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tau_examples() {
        assert_eq!(choose_tau(0.5, 2.0).unwrap(), 3);
        assert_eq!(choose_tau(0.5, 1.0).unwrap(), 2);
        assert_eq!(choose_tau(0.1, 1.5).unwrap(), 2);
        assert!(choose_tau(1.0, 2.0).is_err());
        assert!(choose_tau(0.5, 0.9).is_err());
    }

    #[test]
    fn tau_is_minimal_on_a_grid() {
        for g2 in [0.1, 0.25, 0.5, 0.7, 0.9] {
            for g4 in [1.0, 1.5, 2.0, 4.0] {
                let tau = choose_tau(g2, g4).unwrap() as i32;
                assert!(g4 * g2.powi(tau - 1) < 1.0);
                if tau > 1 {
                    assert!(g4 * g2.powi(tau - 2) >= 1.0);
                }
            }
        }
    }

    fn brute_xi(g2: f64, g4: f64, tau: u32, mu: f64, p: f64, beta: f64, terms: usize) -> f64 {
        let r = (g4 * g2.powi(tau as i32 - 1)).powf(1.0 / tau as f64);
        (0..terms)
            .map(|k| r.powi(k as i32) / (1.0 + mu * (1.0 + (k as f64).powf(p))).powf(beta))
            .sum()
    }

    #[test]
    fn xi_examples() {
        let closed = 1.0 / (1.0 - 0.5f64.powf(1.0 / 3.0));
        assert!((closed - 4.8473).abs() < 1e-4);
        let xi = xi_beta(0.5, 2.0, 3, 1.0, 1.0, 0.0, 1e-12).unwrap();
        assert!(rel(xi, closed) < 1e-10);

        assert!(xi_beta(0.5, 2.0, 3, 1e300, 1.0, 1.0, 1e-12).unwrap() < 1e-290);

        let xi = xi_beta(0.5, 2.0, 3, 1.0, 1.0, 1.0, 1e-12).unwrap();
        assert!(xi > 0.0 && xi < closed);
        let brute = brute_xi(0.5, 2.0, 3, 1.0, 1.0, 1.0, 1_000_000);
        assert!(rel(xi, brute) < 1e-10);
    }

    #[test]
    fn xi_rejects_divergent_series() {
        assert!(matches!(
            xi_beta(0.5, 2.0, 2, 1.0, 1.0, 1.0, 1e-12),
            Err(BoundsError::Divergent(_))
        ));
    }

    #[test]
    fn total_bound_examples() {
        let t = bound_total_from_kappas(1.0, 1.0, 1.0, 0.0, 0.5, 1.0, 0);
        assert!(rel(t.bound.representable.unwrap(), 15.0) < 1e-12);
        assert_eq!(t.eps_alpha_term, 1.0);
        let t = bound_total_from_kappas(1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0);
        assert!(rel(t.bound.representable.unwrap(), 3f64.exp() - 1.0) < 1e-12);
    }

    #[test]
    fn table_exponential_row() {
        let cfg = TableConfig {
            p: 1.0,
            mu: 0.0,
            eps: 1.0,
            kappa1: Some(1.0),
            ..TableConfig::default()
        };
        let rows = bounds_table(&cfg).unwrap();
        let row = rows.iter().find(|r| r.name == "successful_bound").unwrap();
        assert!(rel(row.value.unwrap(), std::f64::consts::E - 1.0) < 1e-12);
        assert!(rows.iter().any(|r| r.name == "classical_reference" && r.reference));
        assert_eq!(rows.iter().find(|r| r.name == "tau").unwrap().value, Some(3.0));
    }

    #[test]
    fn audit_requires_first_order() {
        use crate::driver::{solve, SolveOptions};
        use crate::hessian::HessianModel;
        use crate::problems::find_builtin;
        let p = find_builtin("rosenbrock").unwrap();
        let params = TrParams::default();
        let mut m = HessianModel::exact(2);
        let r = solve(&p, &params, &mut m, &SolveOptions::new(1e-6, 2)).unwrap();
        assert!(matches!(
            audit_run(&r, &inputs(), CounterKind::Successful),
            Err(BoundsError::NotFirstOrder(StopStatus::MaxIter))
        ));
    }

    #[test]
    fn audits_of_adversarial_runs_pass() {
        use crate::adversarial::{verify_sharpness, AdversarialSpec};
        for spec in [
            AdversarialSpec::new(0.5, 0.0, 0.0, 0.0),
            AdversarialSpec::new(0.5, 1.0, 1.0, 1.0),
        ] {
            let params = TrParams::default();
            let rep = verify_sharpness(&spec, &params).unwrap();
            let mut run_params = params.with_alpha_beta(spec.alpha, spec.beta);
            run_params.delta0 = rep.instance.delta0;
            let i = BoundInputs::from_params(
                &run_params,
                rep.f0,
                rep.f_low,
                rep.run.log[0].a_k,
                rep.lipschitz,
                1.0,
                spec.p,
                spec.eps,
                0,
            );
            for counter in [CounterKind::Successful, CounterKind::Iteration] {
                let a = audit_run(&rep.run, &i, counter).unwrap();
                assert!(a.passed, "{spec:?} {counter:?}: {a:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn log_bound_is_consistent(lx in 1e-6f64..800.0) {
            let b = LogBound::from_log_plus_one(lx);
            if let Some(v) = b.representable {
                prop_assert!(rel(b.log_value.exp(), v) < 1e-12);
                prop_assert!(rel(v, lx.exp() - 1.0) < 1e-9);
            } else {
                prop_assert!(lx > 690.0);
            }
        }

        #[test]
        fn successful_bound_is_monotone(k in 0.1f64..100.0, mu in 0.0f64..10.0, p in 0.0f64..0.95,
                                       eps in 0.01f64..1.0, bump in 1.01f64..2.0) {
            let base = bound_successful_from_kappa(k, mu, p, eps).log_value;
            prop_assert!(bound_successful_from_kappa(k, mu, p, eps * bump).log_value <= base);
            prop_assert!(bound_successful_from_kappa(k, mu * bump + 0.01, p, eps).log_value >= base);
            prop_assert!(bound_successful_from_kappa(k * bump, mu, p, eps).log_value >= base);
            prop_assert!(bound_successful_from_kappa(k, mu, (p + 0.04).min(1.0), eps).log_value >= base * (1.0 - 1e-12));
        }

        #[test]
        fn xi_upper_estimate_dominates_partial_sums(mu in 0.0f64..5.0, p in 0.0f64..=1.0,
                                                    beta in -1.0f64..=1.0, n in 1usize..2000) {
            let xi = xi_beta(0.5, 2.0, 3, mu, p, beta, 1e-12).unwrap();
            let partial = brute_xi(0.5, 2.0, 3, mu, p, beta, n);
            prop_assert!(xi >= partial * (1.0 - 1e-14));
        }
    }
}
