//! Objective functions and the built-in test collection.
//!
//! A [`Problem`] bundles an [`Objective`] with its dimension, standard start
//! point and an optional known lower bound. Objectives are immutable and may
//! be evaluated concurrently; evaluation counts live in a per-run
//! [`EvalCounter`].

mod collection;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Lcg64;

pub use collection::{builtin_collection, builtin_names, find_builtin};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("problem `{name}` produced a non-finite {what} at the evaluation point")]
    NonFinite { name: String, what: &'static str },
    #[error("point has length {got}, problem `{name}` has dimension {expected}")]
    DimensionMismatch { name: String, expected: usize, got: usize },
    #[error("unknown problem `{0}`")]
    Unknown(String),
}

/// A continuously differentiable function `f: R^n -> R`.
///
/// Implementations must be deterministic: repeated evaluation at the same
/// point returns bit-identical results.
pub trait Objective: Send + Sync {
    fn value(&self, x: &DVector<f64>) -> f64;

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Dense Hessian, if the objective provides one analytically.
    fn hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

#[derive(Clone)]
pub struct Problem {
    name: String,
    x0: DVector<f64>,
    f_low_hint: Option<f64>,
    objective: Arc<dyn Objective>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("f_low_hint", &self.f_low_hint)
            .finish()
    }
}

impl Problem {
    pub fn new(
        name: impl Into<String>,
        x0: DVector<f64>,
        f_low_hint: Option<f64>,
        objective: Arc<dyn Objective>,
    ) -> Self {
        assert!(!x0.is_empty(), "problem dimension must be positive");
        Self {
            name: name.into(),
            x0,
            f_low_hint,
            objective,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    pub fn f_low_hint(&self) -> Option<f64> {
        self.f_low_hint
    }

    /// Same problem started from a different point.
    pub fn with_start(mut self, x0: DVector<f64>) -> Self {
        assert_eq!(x0.len(), self.dim());
        self.x0 = x0;
        self
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.objective.value(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.objective.gradient(x)
    }

    pub fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.objective.hessian(x)
    }

    pub fn has_hessian(&self) -> bool {
        self.objective.hessian(&self.x0).is_some()
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<(), ProblemError> {
        if x.len() != self.dim() {
            return Err(ProblemError::DimensionMismatch {
                name: self.name.clone(),
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Objective/gradient/Hessian evaluation counts for one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounter {
    pub n_f: u64,
    pub n_g: u64,
    pub n_h: u64,
}

/// Maximum relative error between the analytic gradient and a central
/// difference with step `h`. The relative error of coordinate `i` uses the
/// denominator `max(1, |g_i|)`.
pub fn check_gradient(p: &Problem, x: &DVector<f64>, h: f64) -> Result<f64, ProblemError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(ProblemError::InvalidStep(h));
    }
    p.check_dim(x)?;
    let non_finite = |what| ProblemError::NonFinite {
        name: p.name.clone(),
        what,
    };
    if x.iter().any(|v| !v.is_finite()) {
        return Err(non_finite("point"));
    }
    let g = p.gradient(x);
    if g.len() != p.dim() {
        return Err(ProblemError::DimensionMismatch {
            name: p.name.clone(),
            expected: p.dim(),
            got: g.len(),
        });
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(non_finite("gradient"));
    }
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in 0..p.dim() {
        let xi = x[i];
        probe[i] = xi + h;
        let fp = p.value(&probe);
        probe[i] = xi - h;
        let fm = p.value(&probe);
        probe[i] = xi;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(non_finite("objective value"));
        }
        let fd = (fp - fm) / (2.0 * h);
        let err = (fd - g[i]).abs() / g[i].abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Maximum relative error between the analytic Hessian and central
/// differences of the analytic gradient. `None` when the problem has no
/// Hessian.
pub fn check_hessian(p: &Problem, x: &DVector<f64>, h: f64) -> Result<Option<f64>, ProblemError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(ProblemError::InvalidStep(h));
    }
    p.check_dim(x)?;
    let Some(hess) = p.hessian(x) else {
        return Ok(None);
    };
    let n = p.dim();
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for j in 0..n {
        let xj = x[j];
        probe[j] = xj + h;
        let gp = p.gradient(&probe);
        probe[j] = xj - h;
        let gm = p.gradient(&probe);
        probe[j] = xj;
        for i in 0..n {
            let fd = (gp[i] - gm[i]) / (2.0 * h);
            let err = (fd - hess[(i, j)]).abs() / hess[(i, j)].abs().max(1.0);
            if !err.is_finite() {
                return Err(ProblemError::NonFinite {
                    name: p.name.clone(),
                    what: "Hessian",
                });
            }
            worst = worst.max(err);
        }
    }
    Ok(Some(worst))
}

/// `count` points around the problem's start: `x0_i + U(-1, 1)` per
/// coordinate, drawn from [`Lcg64`] with the given seed.
pub fn test_points(p: &Problem, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = Lcg64::new(seed);
    (0..count)
        .map(|_| DVector::from_fn(p.dim(), |i, _| p.x0[i] + rng.uniform(-1.0, 1.0)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock() -> Problem {
        find_builtin("rosenbrock").unwrap()
    }

    #[test]
    fn sphere_minimizer() {
        let p = find_builtin("sphere").unwrap();
        let x = DVector::zeros(2);
        assert_eq!(p.value(&x), 0.0);
        assert_eq!(p.gradient(&x), DVector::zeros(2));
    }

    #[test]
    fn rosenbrock_known_values() {
        let p = rosenbrock();
        let one = DVector::from_vec(vec![1.0, 1.0]);
        assert_eq!(p.value(&one), 0.0);
        assert_eq!(p.gradient(&one), DVector::zeros(2));
        // (1 + 1.2)^2 + 100 (1 - 1.44)^2 = 4.84 + 19.36
        let start = DVector::from_vec(vec![-1.2, 1.0]);
        assert!((p.value(&start) - 24.2).abs() < 1e-12);
        assert_eq!(p.x0(), &start);
    }

    #[test]
    fn gradient_check_examples() {
        let sphere = find_builtin("sphere").unwrap();
        let x = DVector::from_vec(vec![1.0, 2.0]);
        assert!(check_gradient(&sphere, &x, 1e-6).unwrap() <= 1e-8);

        let p = rosenbrock();
        let x = DVector::from_vec(vec![-1.2, 1.0]);
        assert!(check_gradient(&p, &x, 1e-6).unwrap() <= 1e-6);
    }

    #[test]
    fn zero_step_is_rejected() {
        let p = rosenbrock();
        let x = p.x0().clone();
        assert_eq!(check_gradient(&p, &x, 0.0), Err(ProblemError::InvalidStep(0.0)));
        assert!(check_gradient(&p, &x, -1.0).is_err());
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let p = rosenbrock();
        let x = DVector::zeros(3);
        assert!(matches!(
            check_gradient(&p, &x, 1e-6),
            Err(ProblemError::DimensionMismatch {
                expected: 2,
                got: 3,
                ..
            })
        ));
    }

    struct Broken;
    impl Objective for Broken {
        fn value(&self, x: &DVector<f64>) -> f64 {
            1.0 / x[0]
        }
        fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
            DVector::from_element(1, -1.0 / (x[0] * x[0]))
        }
    }

    #[test]
    fn non_finite_evaluation_is_an_error() {
        let p = Problem::new("broken", DVector::from_element(1, 0.0), None, Arc::new(Broken));
        assert!(matches!(
            check_gradient(&p, p.x0(), 1e-6),
            Err(ProblemError::NonFinite { .. })
        ));
    }

    #[test]
    fn test_points_are_reproducible() {
        let p = rosenbrock();
        assert_eq!(test_points(&p, 10, 0), test_points(&p, 10, 0));
        assert_ne!(test_points(&p, 2, 0), test_points(&p, 2, 1));
    }
}
