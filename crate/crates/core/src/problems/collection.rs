//! Classic unconstrained test problems with analytic gradients and Hessians.
//!
//! The set is fixed in code; names are stable CLI identifiers. Least-squares
//! problems are written through their residuals `r`, giving `f = |r|^2`,
//! `grad f = 2 J^T r` and `hess f = 2 (J^T J + sum_i r_i hess r_i)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{Objective, Problem, ProblemError};

type Vector = DVector<f64>;
type Matrix = DMatrix<f64>;

struct LeastSquares {
    residuals: fn(&Vector) -> Vector,
    jacobian: fn(&Vector) -> Matrix,
    /// `sum_i r_i * hess r_i`
    residual_curvature: fn(&Vector, &Vector) -> Matrix,
}

impl Objective for LeastSquares {
    fn value(&self, x: &Vector) -> f64 {
        (self.residuals)(x).norm_squared()
    }

    fn gradient(&self, x: &Vector) -> Vector {
        let r = (self.residuals)(x);
        (self.jacobian)(x).tr_mul(&r) * 2.0
    }

    fn hessian(&self, x: &Vector) -> Option<Matrix> {
        let r = (self.residuals)(x);
        let j = (self.jacobian)(x);
        Some((j.tr_mul(&j) + (self.residual_curvature)(x, &r)) * 2.0)
    }
}

struct Explicit {
    value: fn(&Vector) -> f64,
    gradient: fn(&Vector) -> Vector,
    hessian: fn(&Vector) -> Matrix,
}

impl Objective for Explicit {
    fn value(&self, x: &Vector) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &Vector) -> Vector {
        (self.gradient)(x)
    }

    fn hessian(&self, x: &Vector) -> Option<Matrix> {
        Some((self.hessian)(x))
    }
}

fn ls(
    name: &str,
    x0: Vector,
    f_low: Option<f64>,
    residuals: fn(&Vector) -> Vector,
    jacobian: fn(&Vector) -> Matrix,
    residual_curvature: fn(&Vector, &Vector) -> Matrix,
) -> Problem {
    Problem::new(
        name,
        x0,
        f_low,
        Arc::new(LeastSquares {
            residuals,
            jacobian,
            residual_curvature,
        }),
    )
}

fn explicit(
    name: &str,
    x0: Vector,
    f_low: Option<f64>,
    value: fn(&Vector) -> f64,
    gradient: fn(&Vector) -> Vector,
    hessian: fn(&Vector) -> Matrix,
) -> Problem {
    Problem::new(
        name,
        x0,
        f_low,
        Arc::new(Explicit {
            value,
            gradient,
            hessian,
        }),
    )
}

fn alternating(n: usize, odd: f64, even: f64) -> Vector {
    Vector::from_fn(n, |i, _| if i % 2 == 0 { odd } else { even })
}

/// The built-in collection, in a fixed order.
pub fn builtin_collection() -> Vec<Problem> {
    vec![
        explicit(
            "sphere",
            Vector::from_vec(vec![1.0, 1.0]),
            Some(0.0),
            |x| x.norm_squared(),
            |x| x * 2.0,
            |x| Matrix::identity(x.len(), x.len()) * 2.0,
        ),
        ls(
            "rosenbrock",
            Vector::from_vec(vec![-1.2, 1.0]),
            Some(0.0),
            rosenbrock_residuals,
            rosenbrock_jacobian,
            rosenbrock_curvature,
        ),
        ls(
            "ext_rosenbrock",
            alternating(20, -1.2, 1.0),
            Some(0.0),
            rosenbrock_residuals,
            rosenbrock_jacobian,
            rosenbrock_curvature,
        ),
        ls(
            "chained_rosenbrock",
            alternating(10, -1.2, 1.0),
            Some(0.0),
            chained_rosenbrock_residuals,
            chained_rosenbrock_jacobian,
            chained_rosenbrock_curvature,
        ),
        ls(
            "beale",
            Vector::from_vec(vec![1.0, 1.0]),
            Some(0.0),
            beale_residuals,
            beale_jacobian,
            beale_curvature,
        ),
        ls(
            "himmelblau",
            Vector::from_vec(vec![1.0, 1.0]),
            Some(0.0),
            |x| Vector::from_vec(vec![x[0] * x[0] + x[1] - 11.0, x[0] + x[1] * x[1] - 7.0]),
            |x| Matrix::from_row_slice(2, 2, &[2.0 * x[0], 1.0, 1.0, 2.0 * x[1]]),
            |_, r| Matrix::from_diagonal(&Vector::from_vec(vec![2.0 * r[0], 2.0 * r[1]])),
        ),
        ls(
            "powell_singular",
            Vector::from_vec(vec![3.0, -1.0, 0.0, 1.0]),
            Some(0.0),
            powell_residuals,
            powell_jacobian,
            powell_curvature,
        ),
        ls(
            "ext_powell",
            Vector::from_fn(20, |i, _| [3.0, -1.0, 0.0, 1.0][i % 4]),
            Some(0.0),
            powell_residuals,
            powell_jacobian,
            powell_curvature,
        ),
        ls(
            "wood",
            Vector::from_vec(vec![-3.0, -1.0, -3.0, -1.0]),
            Some(0.0),
            wood_residuals,
            wood_jacobian,
            wood_curvature,
        ),
        ls(
            "freudenstein_roth",
            Vector::from_vec(vec![0.5, -2.0]),
            Some(0.0),
            freudenstein_roth_residuals,
            freudenstein_roth_jacobian,
            freudenstein_roth_curvature,
        ),
        ls(
            "dixon_price",
            Vector::from_element(10, 1.0),
            Some(0.0),
            dixon_price_residuals,
            dixon_price_jacobian,
            dixon_price_curvature,
        ),
        ls(
            "trigonometric",
            Vector::from_element(10, 0.1),
            Some(0.0),
            trigonometric_residuals,
            trigonometric_jacobian,
            trigonometric_curvature,
        ),
        ls(
            "penalty1",
            Vector::from_fn(10, |i, _| (i + 1) as f64),
            Some(0.0),
            penalty1_residuals,
            penalty1_jacobian,
            penalty1_curvature,
        ),
        ls(
            "booth",
            Vector::from_vec(vec![0.0, 0.0]),
            Some(0.0),
            |x| Vector::from_vec(vec![x[0] + 2.0 * x[1] - 7.0, 2.0 * x[0] + x[1] - 5.0]),
            |_| Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
            |_, _| Matrix::zeros(2, 2),
        ),
        explicit(
            "zakharov",
            Vector::from_element(10, 1.0),
            Some(0.0),
            zakharov_value,
            zakharov_gradient,
            zakharov_hessian,
        ),
        explicit(
            "nonconvex_quartic",
            Vector::zeros(5),
            // each coordinate term is >= -0.101
            Some(-0.2 * 5.0),
            |x| x.iter().map(|&t| (t * t - 1.0).powi(2) + 0.1 * t).sum(),
            |x| x.map(|t| 4.0 * t * (t * t - 1.0) + 0.1),
            |x| Matrix::from_diagonal(&x.map(|t| 12.0 * t * t - 4.0)),
        ),
        explicit(
            "three_hump_camel",
            Vector::from_vec(vec![2.0, -1.0]),
            Some(0.0),
            |v| {
                let (x, y) = (v[0], v[1]);
                2.0 * x * x - 1.05 * x.powi(4) + x.powi(6) / 6.0 + x * y + y * y
            },
            |v| {
                let (x, y) = (v[0], v[1]);
                Vector::from_vec(vec![4.0 * x - 4.2 * x.powi(3) + x.powi(5) + y, x + 2.0 * y])
            },
            |v| {
                let x = v[0];
                Matrix::from_row_slice(2, 2, &[4.0 - 12.6 * x * x + 5.0 * x.powi(4), 1.0, 1.0, 2.0])
            },
        ),
        explicit(
            "six_hump_camel",
            Vector::from_vec(vec![-1.5, 1.0]),
            Some(-1.0317),
            |v| {
                let (x, y) = (v[0], v[1]);
                (4.0 - 2.1 * x * x + x.powi(4) / 3.0) * x * x + x * y + (-4.0 + 4.0 * y * y) * y * y
            },
            |v| {
                let (x, y) = (v[0], v[1]);
                Vector::from_vec(vec![
                    8.0 * x - 8.4 * x.powi(3) + 2.0 * x.powi(5) + y,
                    x - 8.0 * y + 16.0 * y.powi(3),
                ])
            },
            |v| {
                let (x, y) = (v[0], v[1]);
                Matrix::from_row_slice(
                    2,
                    2,
                    &[8.0 - 25.2 * x * x + 10.0 * x.powi(4), 1.0, 1.0, -8.0 + 48.0 * y * y],
                )
            },
        ),
        explicit(
            "styblinski_tang",
            Vector::zeros(10),
            // per-coordinate minimum is -39.16617
            Some(-39.17 * 10.0),
            |x| 0.5 * x.iter().map(|&t| t.powi(4) - 16.0 * t * t + 5.0 * t).sum::<f64>(),
            |x| x.map(|t| 2.0 * t.powi(3) - 16.0 * t + 2.5),
            |x| Matrix::from_diagonal(&x.map(|t| 6.0 * t * t - 16.0)),
        ),
        explicit(
            "diag_quadratic",
            Vector::from_element(50, 1.0),
            Some(0.0),
            |x| x.iter().enumerate().map(|(i, &t)| (i + 1) as f64 * t * t).sum(),
            |x| Vector::from_fn(x.len(), |i, _| 2.0 * (i + 1) as f64 * x[i]),
            |x| Matrix::from_diagonal(&Vector::from_fn(x.len(), |i, _| 2.0 * (i + 1) as f64)),
        ),
        explicit(
            "tridiag_quadratic",
            Vector::zeros(100),
            None,
            |x| 0.5 * x.dot(&tridiag_apply(x)) - x.sum(),
            |x| tridiag_apply(x).add_scalar(-1.0),
            |x| {
                let n = x.len();
                Matrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
                    0 => 2.0,
                    1 => -1.0,
                    _ => 0.0,
                })
            },
        ),
        explicit(
            "arwhead",
            Vector::from_element(20, 1.0),
            Some(0.0),
            arwhead_value,
            arwhead_gradient,
            arwhead_hessian,
        ),
    ]
}

pub fn builtin_names() -> Vec<String> {
    builtin_collection().iter().map(|p| p.name().to_string()).collect()
}

pub fn find_builtin(name: &str) -> Result<Problem, ProblemError> {
    builtin_collection()
        .into_iter()
        .find(|p| p.name() == name)
        .ok_or_else(|| ProblemError::Unknown(name.to_string()))
}

// Rosenbrock on consecutive pairs (x_{2i}, x_{2i+1}): r = (10 (b - a^2), 1 - a).

fn rosenbrock_residuals(x: &Vector) -> Vector {
    let mut r = Vector::zeros(x.len());
    for i in (0..x.len()).step_by(2) {
        r[i] = 10.0 * (x[i + 1] - x[i] * x[i]);
        r[i + 1] = 1.0 - x[i];
    }
    r
}

fn rosenbrock_jacobian(x: &Vector) -> Matrix {
    let n = x.len();
    let mut j = Matrix::zeros(n, n);
    for i in (0..n).step_by(2) {
        j[(i, i)] = -20.0 * x[i];
        j[(i, i + 1)] = 10.0;
        j[(i + 1, i)] = -1.0;
    }
    j
}

fn rosenbrock_curvature(x: &Vector, r: &Vector) -> Matrix {
    let n = x.len();
    let mut c = Matrix::zeros(n, n);
    for i in (0..n).step_by(2) {
        c[(i, i)] = -20.0 * r[i];
    }
    c
}

fn chained_rosenbrock_residuals(x: &Vector) -> Vector {
    let n = x.len();
    let mut r = Vector::zeros(2 * (n - 1));
    for i in 0..n - 1 {
        r[2 * i] = 10.0 * (x[i + 1] - x[i] * x[i]);
        r[2 * i + 1] = 1.0 - x[i];
    }
    r
}

fn chained_rosenbrock_jacobian(x: &Vector) -> Matrix {
    let n = x.len();
    let mut j = Matrix::zeros(2 * (n - 1), n);
    for i in 0..n - 1 {
        j[(2 * i, i)] = -20.0 * x[i];
        j[(2 * i, i + 1)] = 10.0;
        j[(2 * i + 1, i)] = -1.0;
    }
    j
}

fn chained_rosenbrock_curvature(x: &Vector, r: &Vector) -> Matrix {
    let n = x.len();
    let mut c = Matrix::zeros(n, n);
    for i in 0..n - 1 {
        c[(i, i)] += -20.0 * r[2 * i];
    }
    c
}

const BEALE_TARGETS: [f64; 3] = [1.5, 2.25, 2.625];

fn beale_residuals(x: &Vector) -> Vector {
    Vector::from_fn(3, |i, _| BEALE_TARGETS[i] - x[0] * (1.0 - x[1].powi(i as i32 + 1)))
}

fn beale_jacobian(x: &Vector) -> Matrix {
    let mut j = Matrix::zeros(3, 2);
    for i in 0..3 {
        let e = i as i32 + 1;
        j[(i, 0)] = -(1.0 - x[1].powi(e));
        j[(i, 1)] = x[0] * e as f64 * x[1].powi(e - 1);
    }
    j
}

fn beale_curvature(x: &Vector, r: &Vector) -> Matrix {
    let mut c = Matrix::zeros(2, 2);
    for i in 0..3 {
        let e = i as i32 + 1;
        let cross = e as f64 * x[1].powi(e - 1);
        let yy = if e >= 2 {
            x[0] * (e * (e - 1)) as f64 * x[1].powi(e - 2)
        } else {
            0.0
        };
        c[(0, 1)] += r[i] * cross;
        c[(1, 0)] += r[i] * cross;
        c[(1, 1)] += r[i] * yy;
    }
    c
}

// Powell singular on blocks of four.

const SQRT5: f64 = 2.236_067_977_499_79;
const SQRT10: f64 = 3.162_277_660_168_379_5;

fn powell_residuals(x: &Vector) -> Vector {
    let mut r = Vector::zeros(x.len());
    for b in (0..x.len()).step_by(4) {
        r[b] = x[b] + 10.0 * x[b + 1];
        r[b + 1] = SQRT5 * (x[b + 2] - x[b + 3]);
        r[b + 2] = (x[b + 1] - 2.0 * x[b + 2]).powi(2);
        r[b + 3] = SQRT10 * (x[b] - x[b + 3]).powi(2);
    }
    r
}

fn powell_jacobian(x: &Vector) -> Matrix {
    let n = x.len();
    let mut j = Matrix::zeros(n, n);
    for b in (0..n).step_by(4) {
        j[(b, b)] = 1.0;
        j[(b, b + 1)] = 10.0;
        j[(b + 1, b + 2)] = SQRT5;
        j[(b + 1, b + 3)] = -SQRT5;
        let u = x[b + 1] - 2.0 * x[b + 2];
        j[(b + 2, b + 1)] = 2.0 * u;
        j[(b + 2, b + 2)] = -4.0 * u;
        let w = x[b] - x[b + 3];
        j[(b + 3, b)] = 2.0 * SQRT10 * w;
        j[(b + 3, b + 3)] = -2.0 * SQRT10 * w;
    }
    j
}

fn powell_curvature(x: &Vector, r: &Vector) -> Matrix {
    let n = x.len();
    let mut c = Matrix::zeros(n, n);
    for b in (0..n).step_by(4) {
        // hess r3 = 2 v v^T, v = (0, 1, -2, 0)
        let v = [(b + 1, 1.0), (b + 2, -2.0)];
        for &(i, vi) in &v {
            for &(k, vk) in &v {
                c[(i, k)] += r[b + 2] * 2.0 * vi * vk;
            }
        }
        // hess r4 = 2 sqrt(10) w w^T, w = (1, 0, 0, -1)
        let w = [(b, 1.0), (b + 3, -1.0)];
        for &(i, wi) in &w {
            for &(k, wk) in &w {
                c[(i, k)] += r[b + 3] * 2.0 * SQRT10 * wi * wk;
            }
        }
    }
    c
}

const SQRT90: f64 = 9.486_832_980_505_138;

fn wood_residuals(x: &Vector) -> Vector {
    Vector::from_vec(vec![
        10.0 * (x[1] - x[0] * x[0]),
        1.0 - x[0],
        SQRT90 * (x[3] - x[2] * x[2]),
        1.0 - x[2],
        SQRT10 * (x[1] + x[3] - 2.0),
        (x[1] - x[3]) / SQRT10,
    ])
}

fn wood_jacobian(x: &Vector) -> Matrix {
    let mut j = Matrix::zeros(6, 4);
    j[(0, 0)] = -20.0 * x[0];
    j[(0, 1)] = 10.0;
    j[(1, 0)] = -1.0;
    j[(2, 2)] = -2.0 * SQRT90 * x[2];
    j[(2, 3)] = SQRT90;
    j[(3, 2)] = -1.0;
    j[(4, 1)] = SQRT10;
    j[(4, 3)] = SQRT10;
    j[(5, 1)] = 1.0 / SQRT10;
    j[(5, 3)] = -1.0 / SQRT10;
    j
}

fn wood_curvature(_x: &Vector, r: &Vector) -> Matrix {
    let mut c = Matrix::zeros(4, 4);
    c[(0, 0)] = -20.0 * r[0];
    c[(2, 2)] = -2.0 * SQRT90 * r[2];
    c
}

fn freudenstein_roth_residuals(x: &Vector) -> Vector {
    let y = x[1];
    Vector::from_vec(vec![
        -13.0 + x[0] + ((5.0 - y) * y - 2.0) * y,
        -29.0 + x[0] + ((y + 1.0) * y - 14.0) * y,
    ])
}

fn freudenstein_roth_jacobian(x: &Vector) -> Matrix {
    let y = x[1];
    Matrix::from_row_slice(
        2,
        2,
        &[1.0, 10.0 * y - 3.0 * y * y - 2.0, 1.0, 3.0 * y * y + 2.0 * y - 14.0],
    )
}

fn freudenstein_roth_curvature(x: &Vector, r: &Vector) -> Matrix {
    let y = x[1];
    let mut c = Matrix::zeros(2, 2);
    c[(1, 1)] = r[0] * (10.0 - 6.0 * y) + r[1] * (6.0 * y + 2.0);
    c
}

// f = (x_1 - 1)^2 + sum_{i>=2} i (2 x_i^2 - x_{i-1})^2 with 1-based i.

fn dixon_price_residuals(x: &Vector) -> Vector {
    Vector::from_fn(x.len(), |i, _| {
        if i == 0 {
            x[0] - 1.0
        } else {
            ((i + 1) as f64).sqrt() * (2.0 * x[i] * x[i] - x[i - 1])
        }
    })
}

fn dixon_price_jacobian(x: &Vector) -> Matrix {
    let n = x.len();
    let mut j = Matrix::zeros(n, n);
    j[(0, 0)] = 1.0;
    for i in 1..n {
        let w = ((i + 1) as f64).sqrt();
        j[(i, i)] = 4.0 * w * x[i];
        j[(i, i - 1)] = -w;
    }
    j
}

fn dixon_price_curvature(x: &Vector, r: &Vector) -> Matrix {
    let n = x.len();
    let mut c = Matrix::zeros(n, n);
    for i in 1..n {
        c[(i, i)] = r[i] * 4.0 * ((i + 1) as f64).sqrt();
    }
    c
}

// r_i = n - sum_j cos x_j + i (1 - cos x_i) - sin x_i with 1-based i.

fn trigonometric_residuals(x: &Vector) -> Vector {
    let n = x.len();
    let cos_sum: f64 = x.iter().map(|t| t.cos()).sum();
    Vector::from_fn(n, |i, _| {
        n as f64 - cos_sum + (i + 1) as f64 * (1.0 - x[i].cos()) - x[i].sin()
    })
}

fn trigonometric_jacobian(x: &Vector) -> Matrix {
    let n = x.len();
    Matrix::from_fn(n, n, |i, j| {
        let mut v = x[j].sin();
        if i == j {
            v += (i + 1) as f64 * x[i].sin() - x[i].cos();
        }
        v
    })
}

fn trigonometric_curvature(x: &Vector, r: &Vector) -> Matrix {
    let n = x.len();
    let rsum = r.sum();
    let mut c = Matrix::zeros(n, n);
    for j in 0..n {
        c[(j, j)] = rsum * x[j].cos() + r[j] * ((j + 1) as f64 * x[j].cos() + x[j].sin());
    }
    c
}

const PENALTY1_WEIGHT: f64 = 1e-5;

fn penalty1_residuals(x: &Vector) -> Vector {
    let n = x.len();
    let w = PENALTY1_WEIGHT.sqrt();
    Vector::from_fn(n + 1, |i, _| {
        if i < n {
            w * (x[i] - 1.0)
        } else {
            x.norm_squared() - 0.25
        }
    })
}

fn penalty1_jacobian(x: &Vector) -> Matrix {
    let n = x.len();
    let w = PENALTY1_WEIGHT.sqrt();
    Matrix::from_fn(n + 1, n, |i, j| {
        if i < n {
            if i == j {
                w
            } else {
                0.0
            }
        } else {
            2.0 * x[j]
        }
    })
}

fn penalty1_curvature(x: &Vector, r: &Vector) -> Matrix {
    let n = x.len();
    Matrix::identity(n, n) * (2.0 * r[n])
}

fn zakharov_weights(n: usize) -> Vector {
    Vector::from_fn(n, |i, _| 0.5 * (i + 1) as f64)
}

fn zakharov_value(x: &Vector) -> f64 {
    let s = zakharov_weights(x.len()).dot(x);
    x.norm_squared() + s * s + s.powi(4)
}

fn zakharov_gradient(x: &Vector) -> Vector {
    let c = zakharov_weights(x.len());
    let s = c.dot(x);
    x * 2.0 + c * (2.0 * s + 4.0 * s.powi(3))
}

fn zakharov_hessian(x: &Vector) -> Matrix {
    let n = x.len();
    let c = zakharov_weights(n);
    let s = c.dot(x);
    Matrix::identity(n, n) * 2.0 + (&c * c.transpose()) * (2.0 + 12.0 * s * s)
}

fn tridiag_apply(x: &Vector) -> Vector {
    let n = x.len();
    Vector::from_fn(n, |i, _| {
        let mut v = 2.0 * x[i];
        if i > 0 {
            v -= x[i - 1];
        }
        if i + 1 < n {
            v -= x[i + 1];
        }
        v
    })
}

// f = sum_{i<n} ((x_i^2 + x_n^2)^2 - 4 x_i + 3)

fn arwhead_value(x: &Vector) -> f64 {
    let n = x.len();
    let xn2 = x[n - 1] * x[n - 1];
    (0..n - 1).map(|i| (x[i] * x[i] + xn2).powi(2) - 4.0 * x[i] + 3.0).sum()
}

fn arwhead_gradient(x: &Vector) -> Vector {
    let n = x.len();
    let xn = x[n - 1];
    let mut g = Vector::zeros(n);
    for i in 0..n - 1 {
        let q = x[i] * x[i] + xn * xn;
        g[i] = 4.0 * x[i] * q - 4.0;
        g[n - 1] += 4.0 * xn * q;
    }
    g
}

fn arwhead_hessian(x: &Vector) -> Matrix {
    let n = x.len();
    let xn = x[n - 1];
    let mut h = Matrix::zeros(n, n);
    for i in 0..n - 1 {
        h[(i, i)] = 12.0 * x[i] * x[i] + 4.0 * xn * xn;
        h[(i, n - 1)] = 8.0 * x[i] * xn;
        h[(n - 1, i)] = 8.0 * x[i] * xn;
        h[(n - 1, n - 1)] += 4.0 * x[i] * x[i] + 12.0 * xn * xn;
    }
    h
}
