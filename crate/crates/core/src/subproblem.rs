//! Trust-region subproblem: the scaled radius, the Cauchy point and a
//! Steihaug truncated-CG step.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hessian::SymmetricOperator;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubproblemError {
    #[error("gradient is zero; the caller should have stopped at stationarity")]
    ZeroGradient,
    #[error("trust-region radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("non-finite arithmetic in the subproblem ({0}); the model is ill-posed")]
    NonFinite(&'static str),
    #[error("gradient has length {got}, model has dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid radius specification: {0}")]
    InvalidSpec(String),
    #[error("unknown radius mode `{0}` (expected current or history)")]
    UnknownMode(String),
}

/// Which gradient and model norms enter the scaled radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusMode {
    /// `|g_k|` and `|B_k|`.
    #[default]
    Current,
    /// `min_{j<=k} |g_j|` and `max_{j<=k} |B_j|`.
    History,
}

impl fmt::Display for RadiusMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Current => "current",
            Self::History => "history",
        })
    }
}

impl FromStr for RadiusMode {
    type Err = SubproblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "current" => Ok(Self::Current),
            "history" => Ok(Self::History),
            other => Err(SubproblemError::UnknownMode(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusSpec {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub gnorm_term: f64,
    pub bnorm_term: f64,
    pub mode: RadiusMode,
}

impl RadiusSpec {
    /// `gnorm_term^alpha / (1 + bnorm_term)^beta * delta`.
    pub fn effective_radius(&self) -> Result<f64, SubproblemError> {
        effective_radius(self)
    }
}

pub fn effective_radius(spec: &RadiusSpec) -> Result<f64, SubproblemError> {
    if spec.gnorm_term == 0.0 {
        return Err(SubproblemError::ZeroGradient);
    }
    if !(spec.gnorm_term > 0.0) || !(spec.delta > 0.0) || !(spec.bnorm_term >= 0.0) {
        return Err(SubproblemError::InvalidSpec(format!(
            "need gnorm_term > 0, delta > 0, bnorm_term >= 0; got {}, {}, {}",
            spec.gnorm_term, spec.delta, spec.bnorm_term
        )));
    }
    if spec.alpha > 1.0 || spec.beta > 1.0 {
        return Err(SubproblemError::InvalidSpec(format!(
            "alpha and beta must not exceed 1; got {}, {}",
            spec.alpha, spec.beta
        )));
    }
    let r = pow(spec.gnorm_term, spec.alpha) / pow(1.0 + spec.bnorm_term, spec.beta) * spec.delta;
    if !r.is_finite() {
        return Err(SubproblemError::NonFinite("effective radius"));
    }
    Ok(r)
}

/// `x^e` with the integer exponents 0 and 1 taken exactly.
pub(crate) fn pow(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if e == 1.0 {
        x
    } else {
        x.powf(e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub s: DVector<f64>,
    /// `m(0) - m(s)`.
    pub model_decrease: f64,
    /// Decrease achieved by the Cauchy point on the same ball.
    pub cauchy_decrease: f64,
    pub boundary_hit: bool,
    pub cg_iters: usize,
}

fn check_inputs<O: SymmetricOperator + ?Sized>(g: &DVector<f64>, b: &O, r: f64) -> Result<f64, SubproblemError> {
    if g.len() != b.dim() {
        return Err(SubproblemError::DimensionMismatch {
            expected: b.dim(),
            got: g.len(),
        });
    }
    if !(r > 0.0) || r.is_nan() {
        return Err(SubproblemError::InvalidRadius(r));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(SubproblemError::NonFinite("gradient"));
    }
    let gnorm = g.norm();
    if gnorm == 0.0 {
        return Err(SubproblemError::ZeroGradient);
    }
    Ok(gnorm)
}

/// `m(0) - m(s) = -(g^T s + s^T B s / 2)`.
pub fn model_decrease<O: SymmetricOperator + ?Sized>(g: &DVector<f64>, b: &O, s: &DVector<f64>) -> f64 {
    -(g.dot(s) + 0.5 * s.dot(&b.apply_to(s)))
}

/// Minimizer of the model along `-g` inside the ball of radius `r`.
pub fn cauchy_point<O: SymmetricOperator + ?Sized>(
    g: &DVector<f64>,
    b: &O,
    r: f64,
) -> Result<StepResult, SubproblemError> {
    let gnorm = check_inputs(g, b, r)?;
    let gg = g.norm_squared();
    let gbg = g.dot(&b.apply_to(g));
    if !gbg.is_finite() {
        return Err(SubproblemError::NonFinite("curvature g^T B g"));
    }
    let t_boundary = r / gnorm;
    let (t, boundary_hit) = if gbg > 0.0 {
        let t_min = gg / gbg;
        if t_min >= t_boundary {
            (t_boundary, true)
        } else {
            (t_min, false)
        }
    } else {
        (t_boundary, true)
    };
    let decrease = t * gg - 0.5 * t * t * gbg;
    Ok(StepResult {
        s: g * -t,
        model_decrease: decrease,
        cauchy_decrease: decrease,
        boundary_hit,
        cg_iters: 0,
    })
}

/// Default forcing term `min(0.1, sqrt(|g|))`.
pub fn default_cg_tol(gnorm: f64) -> f64 {
    0.1f64.min(gnorm.sqrt())
}

/// Largest `tau >= 0` with `|s + tau d| = r`, assuming `|s| <= r`.
fn boundary_tau(s: &DVector<f64>, d: &DVector<f64>, r: f64) -> f64 {
    let dd = d.norm_squared();
    let ss = s.norm_squared();
    if ss == 0.0 {
        return r / dd.sqrt();
    }
    let sd = s.dot(d);
    let gap = (r * r - ss).max(0.0);
    let disc = (sd * sd + dd * gap).sqrt();
    if sd >= 0.0 {
        gap / (sd + disc)
    } else {
        (disc - sd) / dd
    }
}

/// Steihaug truncated conjugate gradients on `min m(s)` s.t. `|s| <= r`.
///
/// Stops when the residual drops to `cg_tol * |g|`, on nonpositive
/// curvature or when the trial iterate reaches the boundary (both end on the
/// boundary), or after `max_cg` iterations. If rounding ever leaves the
/// result below `2 kappa_mdc` times the Cauchy decrease, the Cauchy point is
/// returned instead.
pub fn solve_tcg<O: SymmetricOperator + ?Sized>(
    g: &DVector<f64>,
    b: &O,
    r: f64,
    kappa_mdc: f64,
    cg_tol: f64,
    max_cg: usize,
) -> Result<StepResult, SubproblemError> {
    let gnorm = check_inputs(g, b, r)?;
    if !(kappa_mdc > 0.0 && kappa_mdc <= 0.5) {
        return Err(SubproblemError::InvalidSpec(format!(
            "kappa_mdc must lie in (0, 0.5], got {kappa_mdc}"
        )));
    }
    let max_cg = max_cg.max(1);
    let n = g.len();
    let tol = cg_tol * gnorm;

    let mut s = DVector::zeros(n);
    let mut res = g.clone();
    let mut d = -g;
    let mut rr = res.norm_squared();
    let mut boundary_hit = false;
    let mut iters = 0;

    while iters < max_cg {
        iters += 1;
        let bd = b.apply_to(&d);
        let dbd = d.dot(&bd);
        if !dbd.is_finite() {
            return Err(SubproblemError::NonFinite("curvature d^T B d"));
        }
        if dbd <= 0.0 {
            let tau = boundary_tau(&s, &d, r);
            s.axpy(tau, &d, 1.0);
            boundary_hit = true;
            break;
        }
        let step = rr / dbd;
        let trial = &s + &d * step;
        if trial.norm() >= r {
            let tau = boundary_tau(&s, &d, r);
            s.axpy(tau, &d, 1.0);
            boundary_hit = true;
            break;
        }
        s = trial;
        res.axpy(step, &bd, 1.0);
        let rr_next = res.norm_squared();
        if rr_next.sqrt() <= tol {
            break;
        }
        d = &d * (rr_next / rr) - &res;
        rr = rr_next;
    }

    let s_norm = s.norm();
    if s_norm > r {
        s *= r / s_norm;
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(SubproblemError::NonFinite("step"));
    }
    let decrease = model_decrease(g, b, &s);
    let cauchy = cauchy_point(g, b, r)?;
    if !decrease.is_finite() {
        return Err(SubproblemError::NonFinite("model decrease"));
    }
    if decrease < 2.0 * kappa_mdc * cauchy.model_decrease - 1e-12 * (1.0 + decrease.abs()) {
        return Ok(cauchy);
    }
    Ok(StepResult {
        s,
        model_decrease: decrease,
        cauchy_decrease: cauchy.model_decrease,
        boundary_hit,
        cg_iters: iters,
    })
}
