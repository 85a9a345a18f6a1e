//! Model Hessians `B_k` for the trust-region model.
//!
//! All modes expose the product `B v` through [`SymmetricOperator`]:
//!
//! * `exact`: the objective's Hessian at the current iterate,
//! * `lbfgs`: limited-memory BFGS in the direct compact representation
//!   `B = sI - W M^{-1} W^T` with `W = [sS, Y]`,
//! * `lsr1`: limited-memory SR1 as a sum of stored rank-one corrections,
//! * `scripted`: a prescribed scalar sequence `B_k = b_k I`,
//! * `zero`: `B = 0`.
//!
//! [`HessianModel::operator_norm`] returns `|B|_2`, exactly for small or
//! dense models and by power iteration otherwise.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Lcg64;

/// Dimension up to which quasi-Newton norms come from a dense eigensolve.
pub const DENSE_NORM_MAX_DIM: usize = 64;
pub const POWER_MAX_ITERS: usize = 50;
pub const POWER_REL_TOL: f64 = 1e-6;
/// Applied to power-iteration estimates, which approach the norm from below.
pub const NORM_SAFETY_FACTOR: f64 = 1.01;
/// Relative tolerance of the BFGS curvature and SR1 denominator safeguards.
pub const PAIR_SAFEGUARD: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("vector has length {got}, model has dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("update step s must be nonzero")]
    ZeroStep,
    #[error("envelope log is empty")]
    EmptyLog,
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown Hessian mode `{0}` (expected exact, lbfgs, lsr1, scripted or zero)")]
    UnknownMode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianMode {
    Exact,
    Lbfgs,
    Lsr1,
    Scripted,
    Zero,
}

impl HessianMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Lbfgs => "lbfgs",
            Self::Lsr1 => "lsr1",
            Self::Scripted => "scripted",
            Self::Zero => "zero",
        }
    }
}

impl fmt::Display for HessianMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HessianMode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Self::Exact),
            "lbfgs" => Ok(Self::Lbfgs),
            "lsr1" => Ok(Self::Lsr1),
            "scripted" => Ok(Self::Scripted),
            "zero" => Ok(Self::Zero),
            other => Err(ModelError::UnknownMode(other.to_string())),
        }
    }
}

/// A symmetric linear operator `v -> B v`.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;

    /// `B v`. Callers guarantee `v.len() == self.dim()`.
    fn apply_to(&self, v: &DVector<f64>) -> DVector<f64>;
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply_to(&self, v: &DVector<f64>) -> DVector<f64> {
        self * v
    }
}

/// Forms the dense matrix of an operator column by column, symmetrized.
pub fn to_dense<O: SymmetricOperator + ?Sized>(op: &O) -> DMatrix<f64> {
    let n = op.dim();
    let mut m = DMatrix::zeros(n, n);
    let mut e = DVector::zeros(n);
    for j in 0..n {
        e[j] = 1.0;
        m.set_column(j, &op.apply_to(&e));
        e[j] = 0.0;
    }
    (&m + m.transpose()) * 0.5
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn dense_spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, l| acc.max(l.abs()))
}

/// Power-iteration estimate of `|B|_2` from a seeded start vector. The
/// estimate `|B v_k|` is non-decreasing in `k` and never exceeds the norm.
pub fn power_iteration_norm<O: SymmetricOperator + ?Sized>(op: &O, seed: u64) -> f64 {
    let n = op.dim();
    let mut rng = Lcg64::new(seed);
    let mut v = DVector::from_fn(n, |_, _| rng.uniform(-1.0, 1.0));
    let nv = v.norm();
    if nv == 0.0 {
        return 0.0;
    }
    v /= nv;
    let mut estimate = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let w = op.apply_to(&v);
        let next = w.norm();
        if next == 0.0 {
            return estimate;
        }
        v = w / next;
        let converged = (next - estimate).abs() <= POWER_REL_TOL * next;
        estimate = next;
        if converged {
            break;
        }
    }
    estimate
}

#[derive(Debug, Clone)]
struct Pair {
    s: DVector<f64>,
    y: DVector<f64>,
}

/// Cached pieces of `B = sigma I - W M^{-1} W^T`.
#[derive(Debug, Clone)]
struct CompactBfgs {
    w: DMatrix<f64>,
    m_inv: DMatrix<f64>,
}

#[derive(Debug, Clone)]
struct RankOne {
    u: DVector<f64>,
    inv_denominator: f64,
}

#[derive(Debug, Clone)]
pub struct HessianModel {
    mode: HessianMode,
    dim: usize,
    memory: usize,
    b0_scale: f64,
    sigma: f64,
    bb_scaling: bool,
    seed: u64,
    pairs: VecDeque<Pair>,
    compact: Option<CompactBfgs>,
    rank_one: Vec<RankOne>,
    exact: Option<DMatrix<f64>>,
    script: Vec<f64>,
    script_index: usize,
    norm_cache: Option<f64>,
}

impl HessianModel {
    fn base(mode: HessianMode, dim: usize) -> Self {
        assert!(dim > 0, "model dimension must be positive");
        Self {
            mode,
            dim,
            memory: 5,
            b0_scale: 1.0,
            sigma: 1.0,
            bb_scaling: false,
            seed: 0,
            pairs: VecDeque::new(),
            compact: None,
            rank_one: Vec::new(),
            exact: None,
            script: Vec::new(),
            script_index: 0,
            norm_cache: None,
        }
    }

    /// Exact Hessian pass-through. Starts as the zero matrix until
    /// [`set_exact`](Self::set_exact) is called.
    pub fn exact(dim: usize) -> Self {
        Self::base(HessianMode::Exact, dim)
    }

    pub fn lbfgs(dim: usize, memory: usize) -> Result<Self, ModelError> {
        Self::quasi_newton(HessianMode::Lbfgs, dim, memory)
    }

    pub fn lsr1(dim: usize, memory: usize) -> Result<Self, ModelError> {
        Self::quasi_newton(HessianMode::Lsr1, dim, memory)
    }

    fn quasi_newton(mode: HessianMode, dim: usize, memory: usize) -> Result<Self, ModelError> {
        if memory == 0 {
            return Err(ModelError::InvalidConfig("memory must be positive".into()));
        }
        let mut m = Self::base(mode, dim);
        m.memory = memory;
        Ok(m)
    }

    /// `B_k = values[min(k, len - 1)] I`, selected by
    /// [`select_iteration`](Self::select_iteration).
    pub fn scripted(dim: usize, values: Vec<f64>) -> Result<Self, ModelError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidConfig(
                "scripted values must be a nonempty finite sequence".into(),
            ));
        }
        let mut m = Self::base(HessianMode::Scripted, dim);
        m.script = values;
        Ok(m)
    }

    pub fn zero(dim: usize) -> Self {
        Self::base(HessianMode::Zero, dim)
    }

    /// Builds a model of the given mode; `scripted` is not constructible here.
    pub fn for_mode(mode: HessianMode, dim: usize, memory: usize) -> Result<Self, ModelError> {
        match mode {
            HessianMode::Exact => Ok(Self::exact(dim)),
            HessianMode::Lbfgs => Self::lbfgs(dim, memory),
            HessianMode::Lsr1 => Self::lsr1(dim, memory),
            HessianMode::Zero => Ok(Self::zero(dim)),
            HessianMode::Scripted => Err(ModelError::InvalidConfig(
                "scripted models need an explicit value sequence".into(),
            )),
        }
    }

    /// Initial diagonal `B_0 = scale I` for the quasi-Newton modes.
    pub fn with_b0_scale(mut self, scale: f64) -> Result<Self, ModelError> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(ModelError::InvalidConfig(format!(
                "b0 scale must be positive, got {scale}"
            )));
        }
        self.b0_scale = scale;
        self.sigma = scale;
        self.rebuild();
        Ok(self)
    }

    /// Rescale `B_0` to `s^T y / s^T s` of the newest pair after each update.
    pub fn with_bb_scaling(mut self, enabled: bool) -> Self {
        self.bb_scaling = enabled;
        self
    }

    /// Seed of the power-iteration start vector.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn mode(&self) -> HessianMode {
        self.mode
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&DVector<f64>, &DVector<f64>)> {
        self.pairs.iter().map(|p| (&p.s, &p.y))
    }

    /// Current `sigma` of the initial matrix `sigma I`.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `B v` with a dimension check.
    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        self.check_len(v)?;
        Ok(self.apply_to(v))
    }

    fn check_len(&self, v: &DVector<f64>) -> Result<(), ModelError> {
        if v.len() != self.dim {
            return Err(ModelError::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Replaces the exact Hessian. No effect outside `exact` mode.
    pub fn set_exact(&mut self, h: DMatrix<f64>) -> Result<(), ModelError> {
        if self.mode != HessianMode::Exact {
            return Ok(());
        }
        if h.nrows() != self.dim || h.ncols() != self.dim {
            return Err(ModelError::DimensionMismatch {
                expected: self.dim,
                got: h.nrows(),
            });
        }
        self.exact = Some(h);
        self.norm_cache = None;
        Ok(())
    }

    /// Selects `B_k` of a scripted model. No effect in other modes.
    pub fn select_iteration(&mut self, k: usize) {
        if self.mode == HessianMode::Scripted {
            let idx = k.min(self.script.len() - 1);
            if idx != self.script_index {
                self.script_index = idx;
                self.norm_cache = None;
            }
        }
    }

    pub fn scripted_value(&self) -> Option<f64> {
        (self.mode == HessianMode::Scripted).then(|| self.script[self.script_index])
    }

    /// Offers the pair `(s, y)`. BFGS keeps it iff `s^T y >= 1e-8 |s||y|`
    /// (and `s^T y > 0`); SR1 keeps it iff `|s^T r| >= 1e-8 |s||r|` with
    /// `r = y - B s` nonzero. The oldest pair is evicted when memory is full.
    /// Other modes store nothing and return `false`.
    pub fn update(&mut self, s: &DVector<f64>, y: &DVector<f64>) -> Result<bool, ModelError> {
        self.check_len(s)?;
        self.check_len(y)?;
        let s_norm = s.norm();
        if s_norm == 0.0 {
            return Err(ModelError::ZeroStep);
        }
        let accepted = match self.mode {
            HessianMode::Lbfgs => {
                let sy = s.dot(y);
                sy > 0.0 && sy >= PAIR_SAFEGUARD * s_norm * y.norm()
            }
            HessianMode::Lsr1 => {
                let r = y - self.apply_to(s);
                let denom = s.dot(&r);
                let r_norm = r.norm();
                r_norm > 0.0 && denom != 0.0 && denom.abs() >= PAIR_SAFEGUARD * s_norm * r_norm
            }
            _ => false,
        };
        if !accepted {
            return Ok(false);
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back(Pair {
            s: s.clone(),
            y: y.clone(),
        });
        if self.bb_scaling {
            let sy = s.dot(y);
            if sy > 0.0 {
                self.sigma = sy / s.norm_squared();
            }
        }
        self.rebuild();
        Ok(true)
    }

    fn rebuild(&mut self) {
        self.norm_cache = None;
        match self.mode {
            HessianMode::Lbfgs => self.rebuild_compact_bfgs(),
            HessianMode::Lsr1 => self.rebuild_rank_one(),
            _ => {}
        }
    }

    fn rebuild_compact_bfgs(&mut self) {
        loop {
            let m = self.pairs.len();
            if m == 0 {
                self.compact = None;
                return;
            }
            let n = self.dim;
            let sigma = self.sigma;
            let mut w = DMatrix::zeros(n, 2 * m);
            for (j, p) in self.pairs.iter().enumerate() {
                w.set_column(j, &(&p.s * sigma));
                w.set_column(m + j, &p.y);
            }
            // M = [[sigma S^T S, L], [L^T, -D]], L_ij = s_i^T y_j for i > j.
            let mut mid = DMatrix::zeros(2 * m, 2 * m);
            for (i, pi) in self.pairs.iter().enumerate() {
                for (j, pj) in self.pairs.iter().enumerate() {
                    mid[(i, j)] = sigma * pi.s.dot(&pj.s);
                    if i > j {
                        let l = pi.s.dot(&pj.y);
                        mid[(i, m + j)] = l;
                        mid[(m + j, i)] = l;
                    }
                }
                mid[(m + i, m + i)] = -pi.s.dot(&pi.y);
            }
            match mid.try_inverse() {
                Some(m_inv) if m_inv.iter().all(|v| v.is_finite()) => {
                    self.compact = Some(CompactBfgs { w, m_inv });
                    return;
                }
                // Numerically dependent pairs: drop the oldest and retry.
                _ => {
                    self.pairs.pop_front();
                }
            }
        }
    }

    fn rebuild_rank_one(&mut self) {
        self.rank_one.clear();
        let pairs: Vec<Pair> = self.pairs.iter().cloned().collect();
        for p in &pairs {
            let u = &p.y - self.apply_to(&p.s);
            let denom = p.s.dot(&u);
            let u_norm = u.norm();
            // After an eviction the recursion changes; a degenerate term is skipped.
            if u_norm > 0.0 && denom != 0.0 && denom.abs() >= PAIR_SAFEGUARD * p.s.norm() * u_norm {
                self.rank_one.push(RankOne {
                    u,
                    inv_denominator: 1.0 / denom,
                });
            }
        }
    }

    /// `|B|_2`, cached until the model changes. Exact, scripted and
    /// small quasi-Newton models are evaluated exactly; large quasi-Newton
    /// models use [`power_iteration_norm`] times [`NORM_SAFETY_FACTOR`].
    pub fn operator_norm(&mut self) -> f64 {
        if let Some(v) = self.norm_cache {
            return v;
        }
        let v = match self.mode {
            HessianMode::Zero => 0.0,
            HessianMode::Scripted => self.script[self.script_index].abs(),
            HessianMode::Exact => self.exact.as_ref().map_or(0.0, dense_spectral_norm),
            HessianMode::Lbfgs | HessianMode::Lsr1 => {
                if self.pairs.is_empty() {
                    self.sigma
                } else if self.dim <= DENSE_NORM_MAX_DIM {
                    dense_spectral_norm(&to_dense(self))
                } else {
                    NORM_SAFETY_FACTOR * power_iteration_norm(self, self.seed)
                }
            }
        };
        self.norm_cache = Some(v);
        v
    }

    /// Raw power-iteration estimate (no safety factor), for diagnostics.
    pub fn power_norm_estimate(&self) -> f64 {
        power_iteration_norm(self, self.seed)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        to_dense(self)
    }
}

impl SymmetricOperator for HessianModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply_to(&self, v: &DVector<f64>) -> DVector<f64> {
        match self.mode {
            HessianMode::Zero => DVector::zeros(self.dim),
            HessianMode::Scripted => v * self.script[self.script_index],
            HessianMode::Exact => match &self.exact {
                Some(h) => h * v,
                None => DVector::zeros(self.dim),
            },
            HessianMode::Lbfgs => {
                let mut out = v * self.sigma;
                if let Some(c) = &self.compact {
                    let z = &c.m_inv * c.w.tr_mul(v);
                    out -= &c.w * z;
                }
                out
            }
            HessianMode::Lsr1 => {
                let mut out = v * self.sigma;
                for t in &self.rank_one {
                    out.axpy(t.u.dot(v) * t.inv_denominator, &t.u, 1.0);
                }
                out
            }
        }
    }
}

/// Which counter drives the growth envelope `mu (1 + c_k^p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CounterKind {
    /// `c_k = |S_k|`, the number of successful iterations up to `k`.
    Successful,
    /// `c_k = k`.
    Iteration,
}

/// `max_{j<=k} |B_j| <= mu (1 + c_k^p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthEnvelope {
    pub mu: f64,
    pub p: f64,
    pub counter: CounterKind,
}

impl GrowthEnvelope {
    pub fn new(mu: f64, p: f64, counter: CounterKind) -> Result<Self, ModelError> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(ModelError::InvalidConfig(format!("mu must be positive, got {mu}")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(ModelError::InvalidConfig(format!("p must lie in [0, 1], got {p}")));
        }
        Ok(Self { mu, p, counter })
    }

    pub fn bound(&self, point: &EnvelopePoint) -> f64 {
        self.mu * (1.0 + point.counter(self.counter).powf(self.p))
    }

    pub fn holds(&self, log: &[EnvelopePoint]) -> bool {
        let mut running_max = 0.0f64;
        log.iter().all(|pt| {
            running_max = running_max.max(pt.bnorm);
            running_max <= self.bound(pt)
        })
    }
}

/// One iteration's `|B_k|` with its counters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopePoint {
    pub k: usize,
    pub bnorm: f64,
    pub n_succ: usize,
}

impl EnvelopePoint {
    fn counter(&self, kind: CounterKind) -> f64 {
        match kind {
            CounterKind::Successful => self.n_succ as f64,
            CounterKind::Iteration => self.k as f64,
        }
    }
}

/// Smallest `mu` for which the envelope holds over the whole log:
/// `max_k (max_{j<=k} |B_j|) / (1 + c_k^p)`.
pub fn measure_envelope(log: &[EnvelopePoint], p: f64, kind: CounterKind) -> Result<f64, ModelError> {
    if log.is_empty() {
        return Err(ModelError::EmptyLog);
    }
    let mut running_max = 0.0f64;
    let mut mu = 0.0f64;
    for pt in log {
        running_max = running_max.max(pt.bnorm);
        mu = mu.max(running_max / (1.0 + pt.counter(kind).powf(p)));
    }
    Ok(mu)
}
