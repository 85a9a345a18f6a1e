//! Worst-case one-dimensional instances.
//!
//! For `eps in (0, 1)` and a growth exponent `p in [0, 1]` the generator
//! builds knots on which the method with the scripted model `B_k = k^p`
//! (`B_0 = 1`) needs exactly `k_eps` iterations to reach `|f'| <= eps`:
//!
//! ```text
//! k_eps = floor(eps^(-2/(1-p)))        (p < 1)
//!       = floor(exp(c eps^-2))         (p = 1)
//! w_k   = (k_eps - k) / k_eps,   g_k = -eps (1 + w_k)
//! s_k   = -g_k / B_k,            x_0 = 0, x_{k+1} = x_k + s_k
//! f_0   = 8 eps^2 + 4/(1-p)  or  8 eps^2 + 4c,   f_{k+1} = f_k + g_k s_k
//! ```
//!
//! A piecewise cubic Hermite interpolant through `(x_k, f_k, g_k)` with
//! quadratic tails of curvature 1 turns the knots into a C^1 function.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::driver::{solve, DriverError, SolveOptions, SolveReport, StopStatus, TrParams};
use crate::hessian::HessianModel;
use crate::problems::{Objective, Problem};
use crate::subproblem::{default_cg_tol, pow, solve_tcg};

/// Default cap on `k_eps`.
pub const K_EPS_CAP: u64 = 100_000_000;
pub const TAIL_CURVATURE: f64 = 1.0;
pub const EMIT_GRID_POINTS: usize = 2001;
pub const LIPSCHITZ_SCAN_POINTS: usize = 100_000;

#[derive(Debug, Error)]
pub enum AdversarialError {
    #[error("invalid adversarial spec: {0}")]
    InvalidSpec(String),
    #[error("k_eps = {k_eps:e} exceeds the cap {cap}; use a larger eps or a smaller p")]
    CapExceeded { k_eps: f64, cap: u64 },
    #[error("knot generation failed at k = {k}: {reason}")]
    Generation { k: usize, reason: String },
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdversarialSpec {
    pub eps: f64,
    pub p: f64,
    /// Only used when `p = 1`.
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl AdversarialSpec {
    pub fn new(eps: f64, p: f64, alpha: f64, beta: f64) -> Self {
        Self {
            eps,
            p,
            c: 1.0,
            alpha,
            beta,
        }
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn validate(&self) -> Result<(), AdversarialError> {
        let bad = |m: String| Err(AdversarialError::InvalidSpec(m));
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad(format!("eps must lie in (0, 1), got {}", self.eps));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return bad(format!("p must lie in [0, 1], got {}", self.p));
        }
        if self.p == 1.0 && !(self.c > 0.0 && self.c.is_finite()) {
            return bad(format!("c must be positive when p = 1, got {}", self.c));
        }
        if !(self.alpha <= 1.0 && self.beta <= 1.0) {
            return bad(format!(
                "alpha and beta must not exceed 1, got {} and {}",
                self.alpha, self.beta
            ));
        }
        Ok(())
    }
}

/// `k_eps` as a real number, before flooring.
fn k_eps_real(spec: &AdversarialSpec) -> f64 {
    if spec.p < 1.0 {
        spec.eps.powf(-2.0 / (1.0 - spec.p))
    } else {
        (spec.c / (spec.eps * spec.eps)).exp()
    }
}

pub fn k_epsilon(spec: &AdversarialSpec) -> Result<u64, AdversarialError> {
    k_epsilon_capped(spec, K_EPS_CAP)
}

pub fn k_epsilon_capped(spec: &AdversarialSpec, cap: u64) -> Result<u64, AdversarialError> {
    spec.validate()?;
    let k = k_eps_real(spec).floor();
    if !(k <= cap as f64) {
        return Err(AdversarialError::CapExceeded { k_eps: k, cap });
    }
    Ok(k as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdversarialInstance {
    pub spec: AdversarialSpec,
    pub k_eps: usize,
    pub knots_x: Vec<f64>,
    pub f_vals: Vec<f64>,
    pub g_vals: Vec<f64>,
    pub b_vals: Vec<f64>,
    pub s_vals: Vec<f64>,
    pub delta0: f64,
    pub kappa_f: f64,
}

pub fn generate(spec: &AdversarialSpec) -> Result<AdversarialInstance, AdversarialError> {
    generate_capped(spec, K_EPS_CAP)
}

/// Steps are computed with the same truncated-CG arithmetic the driver uses
/// on the scripted model, so a run lands on the knots bit for bit.
pub fn generate_capped(spec: &AdversarialSpec, cap: u64) -> Result<AdversarialInstance, AdversarialError> {
    let k_eps = k_epsilon_capped(spec, cap)? as usize;
    let eps = spec.eps;
    let kf = k_eps as f64;
    let g_vals: Vec<f64> = (0..=k_eps)
        .map(|k| {
            let omega = (kf - k as f64) / kf;
            -eps * (1.0 + omega)
        })
        .collect();
    let b_vals: Vec<f64> = (0..=k_eps)
        .map(|k| if k == 0 { 1.0 } else { pow(k as f64, spec.p) })
        .collect();
    let f0 = if spec.p == 1.0 {
        8.0 * eps * eps + 4.0 * spec.c
    } else {
        8.0 * eps * eps + 4.0 / (1.0 - spec.p)
    };

    let mut knots_x = Vec::with_capacity(k_eps + 1);
    let mut f_vals = Vec::with_capacity(k_eps + 1);
    let mut s_vals = Vec::with_capacity(k_eps);
    knots_x.push(0.0);
    f_vals.push(f0);
    let mut g = DVector::zeros(1);
    for k in 0..k_eps {
        g[0] = g_vals[k];
        let model = HessianModel::scripted(1, vec![b_vals[k]]).map_err(|e| AdversarialError::Generation {
            k,
            reason: e.to_string(),
        })?;
        let step = solve_tcg(&g, &model, f64::MAX, 0.5, default_cg_tol(g_vals[k].abs()), 1).map_err(|e| {
            AdversarialError::Generation {
                k,
                reason: e.to_string(),
            }
        })?;
        let s = step.s[0];
        if !(s > 0.0) {
            return Err(AdversarialError::Generation {
                k,
                reason: format!("step {s} is not positive"),
            });
        }
        s_vals.push(s);
        knots_x.push(knots_x[k] + s);
        f_vals.push(f_vals[k] + g_vals[k] * s);
    }
    Ok(AdversarialInstance {
        spec: *spec,
        k_eps,
        knots_x,
        f_vals,
        g_vals,
        b_vals,
        s_vals,
        delta0: pow(2.0, 2.0 - spec.alpha),
        kappa_f: f0.max(2.0),
    })
}

/// Violated instance invariants, empty when all hold exactly.
pub fn check_instance(inst: &AdversarialInstance) -> Vec<String> {
    let mut out = Vec::new();
    let eps = inst.spec.eps;
    let f0 = inst.f_vals[0];
    let kf = inst.kappa_f;
    if inst.knots_x[0] != 0.0 {
        out.push(format!("x_0 = {} instead of 0", inst.knots_x[0]));
    }
    for k in 0..inst.k_eps {
        if !(inst.knots_x[k + 1] > inst.knots_x[k]) {
            out.push(format!("knots not increasing at k = {k}"));
        }
        if !(inst.f_vals[k + 1] < inst.f_vals[k]) {
            out.push(format!("f not decreasing at k = {k}"));
        }
        if inst.f_vals[k + 1] != inst.f_vals[k] + inst.g_vals[k] * inst.s_vals[k] {
            out.push(format!("f recurrence broken at k = {k}"));
        }
        if !(inst.g_vals[k].abs() > eps) {
            out.push(format!("|g_{k}| = {} is not above eps", inst.g_vals[k].abs()));
        }
        if (inst.g_vals[k + 1] - inst.g_vals[k]).abs() > inst.s_vals[k] {
            out.push(format!("|g_(k+1) - g_k| exceeds s_k at k = {k}"));
        }
        if inst.s_vals[k].abs() > kf {
            out.push(format!("|s_{k}| exceeds kappa_f"));
        }
    }
    for k in 0..=inst.k_eps {
        if !(0.0..=f0).contains(&inst.f_vals[k]) {
            out.push(format!("f_{k} = {} outside [0, f_0]", inst.f_vals[k]));
        }
        if inst.f_vals[k].abs() > kf || inst.g_vals[k].abs() > kf {
            out.push(format!("|f_{k}| or |g_{k}| exceeds kappa_f"));
        }
    }
    if inst.g_vals[inst.k_eps].abs() != eps {
        out.push(format!("|g_k_eps| = {} instead of eps", inst.g_vals[inst.k_eps].abs()));
    }
    out
}

/// C^1 piecewise cubic Hermite interpolant with quadratic tails.
#[derive(Debug, Clone)]
pub struct Interpolant1D {
    x: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    tail_curvature: f64,
}

/// `(f, f', f'')` on one Hermite segment at local coordinate `t in [0, 1]`.
fn hermite(f0: f64, g0: f64, f1: f64, g1: f64, h: f64, t: f64) -> (f64, f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let value = h00 * f0 + h10 * h * g0 + h01 * f1 + h11 * h * g1;
    let d00 = 6.0 * t2 - 6.0 * t;
    let d10 = 3.0 * t2 - 4.0 * t + 1.0;
    let d11 = 3.0 * t2 - 2.0 * t;
    let deriv = (d00 * f0 - d00 * f1) / h + d10 * g0 + d11 * g1;
    let e00 = 12.0 * t - 6.0;
    let e10 = 6.0 * t - 4.0;
    let e11 = 6.0 * t - 2.0;
    let second = (e00 * (f0 - f1) / h + e10 * g0 + e11 * g1) / h;
    (value, deriv, second)
}

impl Interpolant1D {
    pub fn new(inst: &AdversarialInstance) -> Self {
        Self {
            x: inst.knots_x.clone(),
            f: inst.f_vals.clone(),
            g: inst.g_vals.clone(),
            tail_curvature: TAIL_CURVATURE,
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn tail_curvature(&self) -> f64 {
        self.tail_curvature
    }

    /// `(f(x), f'(x), f''(x))`. Knots return the stored data exactly.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let n = self.x.len();
        let c = self.tail_curvature;
        if x <= self.x[0] {
            let d = x - self.x[0];
            if d == 0.0 {
                return (self.f[0], self.g[0], self.second_at_knot(0));
            }
            return (self.f[0] + self.g[0] * d + 0.5 * c * d * d, self.g[0] + c * d, c);
        }
        if x >= self.x[n - 1] {
            let d = x - self.x[n - 1];
            if d == 0.0 {
                return (self.f[n - 1], self.g[n - 1], self.second_at_knot(n - 1));
            }
            return (
                self.f[n - 1] + self.g[n - 1] * d + 0.5 * c * d * d,
                self.g[n - 1] + c * d,
                c,
            );
        }
        let j = self.x.partition_point(|&k| k <= x);
        let i = j - 1;
        if self.x[i] == x {
            return (self.f[i], self.g[i], self.second_at_knot(i));
        }
        let h = self.x[i + 1] - self.x[i];
        hermite(
            self.f[i],
            self.g[i],
            self.f[i + 1],
            self.g[i + 1],
            h,
            (x - self.x[i]) / h,
        )
    }

    /// Second derivative at a knot, taken from the segment to its right
    /// (the right tail for the last knot).
    fn second_at_knot(&self, i: usize) -> f64 {
        if i + 1 >= self.x.len() {
            return self.tail_curvature;
        }
        let h = self.x[i + 1] - self.x[i];
        hermite(self.f[i], self.g[i], self.f[i + 1], self.g[i + 1], h, 0.0).2
    }

    /// Endpoint values of `f''` on every segment: `(left, right)`.
    fn segment_curvatures(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.x.len() - 1).map(move |i| {
            let h = self.x[i + 1] - self.x[i];
            let a = hermite(self.f[i], self.g[i], self.f[i + 1], self.g[i + 1], h, 0.0).2;
            let b = hermite(self.f[i], self.g[i], self.f[i + 1], self.g[i + 1], h, 1.0).2;
            (a, b)
        })
    }

    /// Lipschitz constant of `f'`: `f''` is affine on each segment, so the
    /// maximum of `|f''|` is attained at segment endpoints or in the tails.
    pub fn lipschitz_exact(&self) -> f64 {
        self.segment_curvatures()
            .fold(self.tail_curvature, |m, (a, b)| m.max(a.abs()).max(b.abs()))
    }

    /// Global minimum over the real line.
    pub fn global_min(&self) -> f64 {
        let n = self.x.len();
        let c = self.tail_curvature;
        let mut best = self.f.iter().copied().fold(f64::INFINITY, f64::min);
        // tails: f' = g + c d vanishes at d = -g / c on the matching side
        let g0 = self.g[0];
        if g0 > 0.0 {
            best = best.min(self.f[0] - g0 * g0 / (2.0 * c));
        }
        let gn = self.g[n - 1];
        if gn < 0.0 {
            best = best.min(self.f[n - 1] - gn * gn / (2.0 * c));
        }
        for i in 0..n - 1 {
            let h = self.x[i + 1] - self.x[i];
            let (f0, g0, f1, g1) = (self.f[i], self.g[i], self.f[i + 1], self.g[i + 1]);
            // f'(t) = A t^2 + B t + C in local t
            let df = (f1 - f0) / h;
            let a = 3.0 * (g0 + g1) - 6.0 * df;
            let b = 6.0 * df - 4.0 * g0 - 2.0 * g1;
            let cc = g0;
            let mut roots = Vec::new();
            if a.abs() < 1e-300 {
                if b != 0.0 {
                    roots.push(-cc / b);
                }
            } else {
                let disc = b * b - 4.0 * a * cc;
                if disc >= 0.0 {
                    let sq = disc.sqrt();
                    roots.push((-b + sq) / (2.0 * a));
                    roots.push((-b - sq) / (2.0 * a));
                }
            }
            for t in roots {
                if t > 0.0 && t < 1.0 {
                    best = best.min(hermite(f0, g0, f1, g1, h, t).0);
                }
            }
        }
        best
    }

    /// Largest difference quotient of `f'` on a uniform grid over `[lo, hi]`.
    pub fn lipschitz_scan(&self, lo: f64, hi: f64, points: usize) -> f64 {
        let points = points.max(2);
        let step = (hi - lo) / (points - 1) as f64;
        let mut prev = self.eval(lo).1;
        let mut best = 0.0f64;
        for i in 1..points {
            let d = self.eval(lo + step * i as f64).1;
            best = best.max((d - prev).abs() / step);
            prev = d;
        }
        best
    }

    /// Writes `x,f,fprime` on `points` uniform points over `[x_0 - 1, x_end + 1]`.
    pub fn write_csv<W: Write>(&self, mut out: W, points: usize) -> std::io::Result<()> {
        let (lo, hi) = self.plot_range();
        let points = points.max(2);
        writeln!(out, "x,f,fprime")?;
        for i in 0..points {
            let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            let (f, d, _) = self.eval(x);
            writeln!(out, "{x:.16e},{f:.16e},{d:.16e}")?;
        }
        Ok(())
    }

    pub fn plot_range(&self) -> (f64, f64) {
        (self.x[0] - 1.0, self.x[self.x.len() - 1] + 1.0)
    }
}

impl Objective for Interpolant1D {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.eval(x[0]).0
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.eval(x[0]).1)
    }

    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, self.eval(x[0]).2))
    }
}

pub fn build_interpolant(inst: &AdversarialInstance) -> Interpolant1D {
    Interpolant1D::new(inst)
}

/// The interpolant as a [`Problem`] starting at `x_0 = 0`, with its exact
/// global minimum as the lower bound.
pub fn as_problem(interp: &Interpolant1D) -> Problem {
    Problem::new(
        "adversarial",
        DVector::from_element(1, interp.knots()[0]),
        Some(interp.global_min()),
        Arc::new(interp.clone()),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub check: String,
    pub k: Option<usize>,
    pub expected: f64,
    pub observed: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SharpnessReport {
    pub spec: AdversarialSpec,
    pub k_eps: usize,
    pub iterations: usize,
    pub status: StopStatus,
    pub all_very_successful: bool,
    pub max_rho_error: f64,
    /// `min_k (R_k - |s_k|) / R_k`; positive when every step is interior.
    pub min_radius_margin: f64,
    pub final_gradient: f64,
    pub f0: f64,
    pub f_low: f64,
    pub lipschitz: f64,
    pub lipschitz_scan: f64,
    pub a_min: f64,
    pub min_a_k: f64,
    pub instance_violations: Vec<String>,
    pub mismatches: Vec<Mismatch>,
    pub passed: bool,
    #[serde(skip)]
    pub run: SolveReport,
    #[serde(skip)]
    pub instance: AdversarialInstance,
}

/// Runs the method on the generated interpolant with the scripted model and
/// checks that it takes exactly `k_eps` iterations, all with `rho = 2`, all
/// strictly inside the radius, ending at `|f'| = eps`.
///
/// `params` supplies the acceptance and update constants; `alpha`, `beta`
/// and `delta0` are taken from the spec. When `alpha = beta = 1` the first
/// step lies exactly on the boundary and only `|s_0| <= R_0` is required.
pub fn verify_sharpness(spec: &AdversarialSpec, params: &TrParams) -> Result<SharpnessReport, AdversarialError> {
    verify_sharpness_capped(spec, params, K_EPS_CAP)
}

pub fn verify_sharpness_capped(
    spec: &AdversarialSpec,
    params: &TrParams,
    cap: u64,
) -> Result<SharpnessReport, AdversarialError> {
    let inst = generate_capped(spec, cap)?;
    let interp = build_interpolant(&inst);
    let problem = as_problem(&interp);
    let f_low = interp.global_min();
    let lipschitz = interp.lipschitz_exact();
    let (lo, hi) = interp.plot_range();
    let lipschitz_scan = interp.lipschitz_scan(lo, hi, LIPSCHITZ_SCAN_POINTS);

    let mut run_params = *params;
    run_params.alpha = spec.alpha;
    run_params.beta = spec.beta;
    run_params.delta0 = inst.delta0;
    run_params.delta_max = run_params.delta_max.max(inst.delta0);
    let mut model = HessianModel::scripted(1, inst.b_vals.clone()).map_err(DriverError::from)?;
    let mut opts = SolveOptions::new(spec.eps, inst.k_eps + 10);
    opts.lipschitz = Some(lipschitz);
    let run = solve(&problem, &run_params, &mut model, &opts)?;

    let mut mismatches = Vec::new();
    let mut push = |check: &str, k: Option<usize>, expected: f64, observed: f64| {
        mismatches.push(Mismatch {
            check: check.to_string(),
            k,
            expected,
            observed,
        })
    };
    if run.status != StopStatus::FirstOrder {
        push("first_order_termination", None, 1.0, 0.0);
    }
    if run.iterations != inst.k_eps {
        push("iteration_count", None, inst.k_eps as f64, run.iterations as f64);
    }
    let boundary_ok_at_start = spec.alpha == 1.0 && spec.beta == 1.0;
    let mut max_rho_error = 0.0f64;
    let mut min_radius_margin = f64::INFINITY;
    let mut all_vs = true;
    for r in &run.log {
        let err = (r.rho - 2.0).abs();
        max_rho_error = max_rho_error.max(err);
        if err > 1e-9 {
            push("rho_equals_two", Some(r.k), 2.0, r.rho);
        }
        if !matches!(r.status, crate::driver::IterStatus::VerySuccessful) {
            all_vs = false;
            push("very_successful", Some(r.k), 1.0, 0.0);
        }
        let margin = (r.eff_radius - r.step_norm) / r.eff_radius;
        min_radius_margin = min_radius_margin.min(margin);
        let interior = if boundary_ok_at_start && r.k == 0 {
            r.step_norm <= r.eff_radius
        } else {
            r.step_norm < r.eff_radius
        };
        if !interior {
            push("interior_step", Some(r.k), r.eff_radius, r.step_norm);
        }
        if r.k < inst.k_eps && r.f != inst.f_vals[r.k] {
            push("iterate_on_knot", Some(r.k), inst.f_vals[r.k], r.f);
        }
    }
    if (run.final_gnorm - spec.eps).abs() > 1e-12 {
        push("final_gradient", None, spec.eps, run.final_gnorm);
    }
    let monitor = run.monitor.clone();
    if let Some(m) = &monitor {
        if m.a_k_floor_violations > 0 {
            push("a_k_floor", None, 0.0, m.a_k_floor_violations as f64);
        }
        if m.decrease_floor_violations > 0 {
            push("decrease_floor", None, 0.0, m.decrease_floor_violations as f64);
        }
    }
    let instance_violations = check_instance(&inst);
    let passed = mismatches.is_empty() && instance_violations.is_empty();
    Ok(SharpnessReport {
        spec: *spec,
        k_eps: inst.k_eps,
        iterations: run.iterations,
        status: run.status,
        all_very_successful: all_vs,
        max_rho_error,
        min_radius_margin: if min_radius_margin.is_finite() {
            min_radius_margin
        } else {
            1.0
        },
        final_gradient: run.final_gnorm,
        f0: inst.f_vals[0],
        f_low,
        lipschitz,
        lipschitz_scan,
        a_min: monitor.as_ref().map_or(0.0, |m| m.a_min),
        min_a_k: monitor.as_ref().map_or(0.0, |m| m.min_a_k),
        instance_violations,
        mismatches,
        passed,
        run,
        instance: inst,
    })
}
