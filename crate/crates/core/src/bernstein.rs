//! Bernstein/Bézier algebra on `[0, 1]`.
//!
//! Everything downstream (areas, shape energies, patch energies, Jacobian
//! coefficients) is assembled from the handful of exact operations here:
//! products, integrals, degree elevation, hodographs and de Casteljau splits.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;

/// Highest order held by the shared binomial table. `C(56, 28) < 2^53`, so every
/// entry is an exactly representable integer.
pub const MAX_BINOMIAL_ORDER: usize = 56;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BernsteinError {
    #[error("basis index {index} out of range for degree {degree}")]
    IndexOutOfRange { index: usize, degree: usize },
    #[error("target degree {target} is below current degree {current}")]
    DegreeTooLow { current: usize, target: usize },
    #[error("parameter {0} outside the open interval (0, 1)")]
    ParameterOutOfRange(f64),
    #[error("degree-0 input has no derivative")]
    ZeroDegree,
    #[error("empty coefficient list")]
    Empty,
    #[error("non-finite coefficient at index {0}")]
    NonFinite(usize),
    #[error("coefficient grid has {got} entries, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("degree {0} exceeds the binomial table order {MAX_BINOMIAL_ORDER}")]
    DegreeTooHigh(usize),
}

/// Pascal triangle up to a fixed order, with `C(n, k) = 0` outside `0 <= k <= n`.
#[derive(Debug, Clone)]
pub struct BinomialTable {
    max_order: usize,
    rows: Vec<Vec<f64>>,
}

impl BinomialTable {
    pub fn new(max_order: usize) -> Self {
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(max_order + 1);
        for n in 0..=max_order {
            let mut row = vec![1.0; n + 1];
            for k in 1..n {
                row[k] = rows[n - 1][k - 1] + rows[n - 1][k];
            }
            rows.push(row);
        }
        Self { max_order, rows }
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// `C(n, k)`; zero for `k < 0`, `k > n` or `n < 0`.
    ///
    /// # Panics
    /// When `n` exceeds the table order.
    #[inline]
    pub fn get(&self, n: i64, k: i64) -> f64 {
        if n < 0 || k < 0 || k > n {
            return 0.0;
        }
        assert!(
            (n as usize) <= self.max_order,
            "binomial order {n} exceeds table order {}",
            self.max_order
        );
        self.rows[n as usize][k as usize]
    }
}

fn table() -> &'static BinomialTable {
    static TABLE: OnceLock<BinomialTable> = OnceLock::new();
    TABLE.get_or_init(|| BinomialTable::new(MAX_BINOMIAL_ORDER))
}

/// Shared-table binomial coefficient with the zero-outside-range convention.
#[inline]
pub fn binomial(n: i64, k: i64) -> f64 {
    table().get(n, k)
}

/// `B_i^n(t) = C(n,i) t^i (1-t)^(n-i)`.
pub fn bernstein_eval(i: usize, n: usize, t: f64) -> Result<f64, BernsteinError> {
    if i > n {
        return Err(BernsteinError::IndexOutOfRange {
            index: i,
            degree: n,
        });
    }
    if n > MAX_BINOMIAL_ORDER {
        return Err(BernsteinError::DegreeTooHigh(n));
    }
    Ok(binomial(n as i64, i as i64) * t.powi(i as i32) * (1.0 - t).powi((n - i) as i32))
}

/// All `n+1` basis values at `t`, by the triangular recurrence.
pub fn bernstein_all(n: usize, t: f64) -> Vec<f64> {
    let mut b = vec![0.0; n + 1];
    b[0] = 1.0;
    let s = 1.0 - t;
    for j in 1..=n {
        let mut saved = 0.0;
        for k in 0..j {
            let tmp = b[k];
            b[k] = saved + s * tmp;
            saved = t * tmp;
        }
        b[j] = saved;
    }
    b
}

/// Scalar polynomial in the Bernstein basis of its degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial1D {
    coeffs: Vec<f64>,
}

impl Polynomial1D {
    pub fn new(coeffs: Vec<f64>) -> Result<Self, BernsteinError> {
        if coeffs.is_empty() {
            return Err(BernsteinError::Empty);
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(BernsteinError::NonFinite(i));
        }
        if coeffs.len() - 1 > MAX_BINOMIAL_ORDER {
            return Err(BernsteinError::DegreeTooHigh(coeffs.len() - 1));
        }
        Ok(Self { coeffs })
    }

    /// Unchecked constructor for internally produced coefficient lists.
    pub(crate) fn from_vec(coeffs: Vec<f64>) -> Self {
        debug_assert!(!coeffs.is_empty());
        Self { coeffs }
    }

    /// The basis polynomial `B_i^n` itself.
    pub fn basis(i: usize, n: usize) -> Result<Self, BernsteinError> {
        if i > n {
            return Err(BernsteinError::IndexOutOfRange {
                index: i,
                degree: n,
            });
        }
        let mut c = vec![0.0; n + 1];
        c[i] = 1.0;
        Self::new(c)
    }

    pub fn constant(value: f64, degree: usize) -> Self {
        Self::from_vec(vec![value; degree + 1])
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, t: f64) -> f64 {
        de_casteljau(&self.coeffs, t)
    }

    /// Exact product in the Bernstein basis of degree `l1 + l2`.
    pub fn product(&self, other: &Polynomial1D) -> Polynomial1D {
        Polynomial1D::from_vec(bernstein_product(&self.coeffs, &other.coeffs))
    }

    /// `∫_0^1 S(t) dt = (Σ c_i) / (m + 1)`.
    pub fn integral(&self) -> f64 {
        self.coeffs.iter().sum::<f64>() / self.coeffs.len() as f64
    }

    pub fn elevate(&self, target: usize) -> Result<Polynomial1D, BernsteinError> {
        let current = self.degree();
        if target < current {
            return Err(BernsteinError::DegreeTooLow { current, target });
        }
        let mut c = self.coeffs.clone();
        for _ in current..target {
            c = elevate_once(&c);
        }
        Ok(Polynomial1D::from_vec(c))
    }

    pub fn derivative(&self) -> Result<Polynomial1D, BernsteinError> {
        let n = self.degree();
        if n == 0 {
            return Err(BernsteinError::ZeroDegree);
        }
        Ok(Polynomial1D::from_vec(
            (0..n)
                .map(|i| n as f64 * (self.coeffs[i + 1] - self.coeffs[i]))
                .collect(),
        ))
    }

    /// Sum after elevating both operands to the common degree.
    pub fn add(&self, other: &Polynomial1D) -> Polynomial1D {
        let d = self.degree().max(other.degree());
        let a = self.elevate(d).expect("elevation to a higher degree");
        let b = other.elevate(d).expect("elevation to a higher degree");
        Polynomial1D::from_vec(a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x + y).collect())
    }

    pub fn scale(&self, s: f64) -> Polynomial1D {
        Polynomial1D::from_vec(self.coeffs.iter().map(|c| c * s).collect())
    }
}

/// Product coefficients: `c_k = Σ_{i+j=k} C(l1,i)C(l2,j)/C(l1+l2,k) a_i b_j`.
pub fn bernstein_product(a: &[f64], b: &[f64]) -> Vec<f64> {
    let l1 = a.len() - 1;
    let l2 = b.len() - 1;
    let m = l1 + l2;
    let mut c = vec![0.0; m + 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        let ci = binomial(l1 as i64, i as i64);
        for (j, &bj) in b.iter().enumerate() {
            c[i + j] += ci * binomial(l2 as i64, j as i64) * ai * bj;
        }
    }
    for (k, ck) in c.iter_mut().enumerate() {
        *ck /= binomial(m as i64, k as i64);
    }
    c
}

fn elevate_once(c: &[f64]) -> Vec<f64> {
    let n = c.len() - 1;
    let np1 = (n + 1) as f64;
    let mut out = Vec::with_capacity(n + 2);
    out.push(c[0]);
    for i in 1..=n {
        let a = i as f64 / np1;
        out.push(a * c[i - 1] + (1.0 - a) * c[i]);
    }
    out.push(c[n]);
    out
}

fn de_casteljau(c: &[f64], t: f64) -> f64 {
    let mut w = c.to_vec();
    let s = 1.0 - t;
    let n = w.len();
    for r in 1..n {
        for i in 0..n - r {
            w[i] = s * w[i] + t * w[i + 1];
        }
    }
    w[0]
}

/// `G[r][s] = ∫_0^1 B_r^{n(a)}(t) · B_s^{n(b)}(t) dt` for the `a`-th and `b`-th
/// derivatives of the degree-`n` basis. Row-major `(n+1)×(n+1)`.
pub fn derivative_gram(n: usize, a: usize, b: usize) -> Vec<f64> {
    let deriv = |k: usize, order: usize| -> Option<Polynomial1D> {
        let mut p = Polynomial1D::basis(k, n).ok()?;
        for _ in 0..order {
            p = p.derivative().ok()?;
        }
        Some(p)
    };
    let mut g = vec![0.0; (n + 1) * (n + 1)];
    for r in 0..=n {
        let Some(pr) = deriv(r, a) else { continue };
        for s in 0..=n {
            let Some(ps) = deriv(s, b) else { continue };
            g[r * (n + 1) + s] = pr.product(&ps).integral();
        }
    }
    g
}

/// Tensor-product polynomial with coefficients `c[i*(dv+1) + j]` on `B_i^du(u) B_j^dv(v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial2D {
    du: usize,
    dv: usize,
    coeffs: Vec<f64>,
}

impl Polynomial2D {
    pub fn new(du: usize, dv: usize, coeffs: Vec<f64>) -> Result<Self, BernsteinError> {
        let expected = (du + 1) * (dv + 1);
        if coeffs.len() != expected {
            return Err(BernsteinError::ShapeMismatch {
                expected,
                got: coeffs.len(),
            });
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(BernsteinError::NonFinite(i));
        }
        Ok(Self { du, dv, coeffs })
    }

    pub fn degrees(&self) -> (usize, usize) {
        (self.du, self.dv)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    #[inline]
    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        self.coeffs[i * (self.dv + 1) + j]
    }

    pub fn eval(&self, u: f64, v: f64) -> f64 {
        let bu = bernstein_all(self.du, u);
        let bv = bernstein_all(self.dv, v);
        let mut s = 0.0;
        for (i, bi) in bu.iter().enumerate() {
            let row = &self.coeffs[i * (self.dv + 1)..(i + 1) * (self.dv + 1)];
            s += bi * row.iter().zip(&bv).map(|(c, b)| c * b).sum::<f64>();
        }
        s
    }

    /// Exact tensor product: degree `(du1+du2, dv1+dv2)`.
    pub fn product(&self, other: &Polynomial2D) -> Polynomial2D {
        let (du, dv) = (self.du + other.du, self.dv + other.dv);
        let mut c = vec![0.0; (du + 1) * (dv + 1)];
        for i1 in 0..=self.du {
            let cu1 = binomial(self.du as i64, i1 as i64);
            for j1 in 0..=self.dv {
                let a = self.coeff(i1, j1);
                if a == 0.0 {
                    continue;
                }
                let w1 = cu1 * binomial(self.dv as i64, j1 as i64) * a;
                for i2 in 0..=other.du {
                    let cu2 = binomial(other.du as i64, i2 as i64);
                    for j2 in 0..=other.dv {
                        let b = other.coeff(i2, j2);
                        c[(i1 + i2) * (dv + 1) + j1 + j2] +=
                            w1 * cu2 * binomial(other.dv as i64, j2 as i64) * b;
                    }
                }
            }
        }
        for i in 0..=du {
            let bi = binomial(du as i64, i as i64);
            for j in 0..=dv {
                c[i * (dv + 1) + j] /= bi * binomial(dv as i64, j as i64);
            }
        }
        Polynomial2D { du, dv, coeffs: c }
    }

    pub fn integral(&self) -> f64 {
        self.coeffs.iter().sum::<f64>() / ((self.du + 1) * (self.dv + 1)) as f64
    }

    pub fn min_coeff(&self) -> f64 {
        self.coeffs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Partial derivative in `u`, degree `(du-1, dv)`.
    pub fn derivative_u(&self) -> Result<Polynomial2D, BernsteinError> {
        if self.du == 0 {
            return Err(BernsteinError::ZeroDegree);
        }
        let n = self.du as f64;
        let dv = self.dv;
        let mut c = Vec::with_capacity(self.du * (dv + 1));
        for i in 0..self.du {
            for j in 0..=dv {
                c.push(n * (self.coeff(i + 1, j) - self.coeff(i, j)));
            }
        }
        Ok(Polynomial2D {
            du: self.du - 1,
            dv,
            coeffs: c,
        })
    }

    /// Partial derivative in `v`, degree `(du, dv-1)`.
    pub fn derivative_v(&self) -> Result<Polynomial2D, BernsteinError> {
        if self.dv == 0 {
            return Err(BernsteinError::ZeroDegree);
        }
        let m = self.dv as f64;
        let mut c = Vec::with_capacity((self.du + 1) * self.dv);
        for i in 0..=self.du {
            for j in 0..self.dv {
                c.push(m * (self.coeff(i, j + 1) - self.coeff(i, j)));
            }
        }
        Ok(Polynomial2D {
            du: self.du,
            dv: self.dv - 1,
            coeffs: c,
        })
    }

    /// Difference of two fields of equal degree.
    pub fn sub(&self, other: &Polynomial2D) -> Polynomial2D {
        assert_eq!((self.du, self.dv), (other.du, other.dv), "degree mismatch");
        Polynomial2D {
            du: self.du,
            dv: self.dv,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

/// Planar Bézier curve of degree `control_points.len() - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BezierCurve {
    pub control_points: Vec<Point2>,
}

impl BezierCurve {
    pub fn new(control_points: Vec<Point2>) -> Result<Self, BernsteinError> {
        if control_points.is_empty() {
            return Err(BernsteinError::Empty);
        }
        if let Some(i) = control_points.iter().position(|p| !p.is_finite()) {
            return Err(BernsteinError::NonFinite(i));
        }
        Ok(Self { control_points })
    }

    /// Straight segment with equally spaced control points.
    pub fn line(a: Point2, b: Point2, degree: usize) -> Self {
        let n = degree.max(1);
        // endpoints are copied, not interpolated, so curves meeting at a vertex agree bitwise
        let mut control_points: Vec<Point2> =
            (0..=n).map(|i| a.lerp(b, i as f64 / n as f64)).collect();
        control_points[0] = a;
        control_points[n] = b;
        Self { control_points }
    }

    pub fn degree(&self) -> usize {
        self.control_points.len() - 1
    }

    pub fn start(&self) -> Point2 {
        self.control_points[0]
    }

    pub fn end(&self) -> Point2 {
        *self
            .control_points
            .last()
            .expect("non-empty control polygon")
    }

    pub fn eval(&self, t: f64) -> Point2 {
        let mut w = self.control_points.clone();
        let s = 1.0 - t;
        let n = w.len();
        for r in 1..n {
            for i in 0..n - r {
                w[i] = w[i] * s + w[i + 1] * t;
            }
        }
        w[0]
    }

    /// de Casteljau split at `t ∈ (0,1)`; the halves share the split point bitwise.
    pub fn split(&self, t: f64) -> Result<(BezierCurve, BezierCurve), BernsteinError> {
        if !(t > 0.0 && t < 1.0) {
            return Err(BernsteinError::ParameterOutOfRange(t));
        }
        let n = self.degree();
        let mut w = self.control_points.clone();
        let mut left = Vec::with_capacity(n + 1);
        let mut right = Vec::with_capacity(n + 1);
        left.push(w[0]);
        right.push(w[n]);
        let s = 1.0 - t;
        for r in 1..=n {
            for i in 0..=n - r {
                w[i] = w[i] * s + w[i + 1] * t;
            }
            left.push(w[0]);
            right.push(w[n - r]);
        }
        right.reverse();
        Ok((
            BezierCurve {
                control_points: left,
            },
            BezierCurve {
                control_points: right,
            },
        ))
    }

    pub fn elevate(&self, target: usize) -> Result<BezierCurve, BernsteinError> {
        let current = self.degree();
        if target < current {
            return Err(BernsteinError::DegreeTooLow { current, target });
        }
        let mut p = self.control_points.clone();
        for _ in current..target {
            let n = p.len() - 1;
            let np1 = (n + 1) as f64;
            let mut q = Vec::with_capacity(n + 2);
            q.push(p[0]);
            for i in 1..=n {
                let a = i as f64 / np1;
                q.push(p[i - 1] * a + p[i] * (1.0 - a));
            }
            q.push(p[n]);
            p = q;
        }
        Ok(BezierCurve { control_points: p })
    }

    /// Hodograph: degree `n-1` with control points `n (P_{i+1} - P_i)`.
    pub fn derivative(&self) -> Result<BezierCurve, BernsteinError> {
        let n = self.degree();
        if n == 0 {
            return Err(BernsteinError::ZeroDegree);
        }
        Ok(BezierCurve {
            control_points: self
                .control_points
                .windows(2)
                .map(|w| (w[1] - w[0]) * n as f64)
                .collect(),
        })
    }

    pub fn reversed(&self) -> BezierCurve {
        let mut p = self.control_points.clone();
        p.reverse();
        BezierCurve { control_points: p }
    }

    pub fn x_poly(&self) -> Polynomial1D {
        Polynomial1D::from_vec(self.control_points.iter().map(|p| p.x).collect())
    }

    pub fn y_poly(&self) -> Polynomial1D {
        Polynomial1D::from_vec(self.control_points.iter().map(|p| p.y).collect())
    }

    /// Length of the control polygon (an upper bound on arc length).
    pub fn polygon_length(&self) -> f64 {
        self.control_points
            .windows(2)
            .map(|w| w[0].distance(w[1]))
            .sum()
    }

    /// Arc length by composite Gauss–Legendre quadrature (5 points on `pieces` intervals).
    pub fn arc_length(&self, pieces: usize) -> f64 {
        const X: [f64; 5] = [
            -0.906_179_845_938_664,
            -0.538_469_310_105_683,
            0.0,
            0.538_469_310_105_683,
            0.906_179_845_938_664,
        ];
        const W: [f64; 5] = [
            0.236_926_885_056_189,
            0.478_628_670_499_366,
            0.568_888_888_888_889,
            0.478_628_670_499_366,
            0.236_926_885_056_189,
        ];
        let Ok(d) = self.derivative() else { return 0.0 };
        let h = 1.0 / pieces.max(1) as f64;
        let mut total = 0.0;
        for k in 0..pieces.max(1) {
            let a = k as f64 * h;
            for (x, w) in X.iter().zip(W) {
                total += w * 0.5 * h * d.eval(a + 0.5 * h * (x + 1.0)).norm();
            }
        }
        total
    }
}
