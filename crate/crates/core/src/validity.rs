//! Injectivity certificate from the Bernstein coefficients of the Jacobian, and
//! repair of invalid patches by a log-barrier method on the interior control points.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bernstein::Polynomial2D;
use crate::geometry::Point2;
use crate::patchfit::{BezierPatch, EnergySystem};
use crate::segmentation::curve_area_term;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RepairConfig {
    /// Initial barrier weight relative to `E / count(α)`.
    pub mu_scale: f64,
    pub mu_decrease: f64,
    pub stages: usize,
    pub inner_max_iter: usize,
    /// Inner convergence on `‖∇Φ‖∞`, relative to `1 + |Φ|`.
    pub grad_tol: f64,
    /// Smoothing threshold of the barrier, relative to the patch area.
    pub eps0: f64,
    pub restarts: usize,
}

impl Default for RepairConfig {
    fn default() -> Self {
        Self {
            mu_scale: 1e-2,
            mu_decrease: 0.1,
            stages: 5,
            inner_max_iter: 100,
            grad_tol: 1e-9,
            eps0: 1e-8,
            restarts: 4,
        }
    }
}

/// Bernstein coefficients of `J = x_u y_v − x_v y_u`, degree `2n−1` in each direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianField {
    pub poly: Polynomial2D,
}

impl JacobianField {
    pub fn degree(&self) -> usize {
        self.poly.degrees().0
    }

    pub fn coeffs(&self) -> &[f64] {
        self.poly.coeffs()
    }

    pub fn min(&self) -> f64 {
        self.poly.min_coeff()
    }

    pub fn max(&self) -> f64 {
        self.poly.max_coeff()
    }

    pub fn eval(&self, u: f64, v: f64) -> f64 {
        self.poly.eval(u, v)
    }
}

pub fn jacobian_coeffs(patch: &BezierPatch) -> JacobianField {
    let (x, y) = (patch.x_poly(), patch.y_poly());
    let (xu, xv) = (
        x.derivative_u().expect("degree ≥ 1"),
        x.derivative_v().expect("degree ≥ 1"),
    );
    let (yu, yv) = (
        y.derivative_u().expect("degree ≥ 1"),
        y.derivative_v().expect("degree ≥ 1"),
    );
    JacobianField {
        poly: xu.product(&yv).sub(&xv.product(&yu)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Validity {
    Valid,
    Invalid,
}

/// Valid iff every Jacobian coefficient is strictly positive.
pub fn classify_patch(f: &JacobianField) -> Validity {
    if f.min() > 0.0 {
        Validity::Valid
    } else {
        Validity::Invalid
    }
}

/// `−ln α` continued below `ε₀` by its second-order Taylor polynomial.
fn barrier(a: f64, eps: f64) -> (f64, f64, f64) {
    if a >= eps {
        (-a.ln(), -1.0 / a, 1.0 / (a * a))
    } else {
        let d = a - eps;
        (
            -eps.ln() - d / eps + d * d / (2.0 * eps * eps),
            -1.0 / eps + d / (eps * eps),
            1.0 / (eps * eps),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairOutcome {
    pub success: bool,
    pub min_alpha_before: f64,
    pub min_alpha_after: f64,
    pub energy_before: f64,
    pub energy_after: f64,
    /// Starts tried (1 = the original interior).
    pub attempts: usize,
    pub newton_steps: usize,
    /// Barrier objective after each accepted Newton step (first entry: stage start), one
    /// list per μ stage, for the returned attempt.
    #[serde(default)]
    pub barrier_trace: Vec<Vec<f64>>,
}

/// Barrier problem over the interior control points of one patch.
struct BarrierProblem<'a> {
    sys: &'a EnergySystem,
    base: BezierPatch,
    /// Per unknown: `∂_u B`, `∂_v B` of its tensor basis function.
    basis_du: Vec<Polynomial2D>,
    basis_dv: Vec<Polynomial2D>,
    eps: f64,
}

impl<'a> BarrierProblem<'a> {
    fn new(sys: &'a EnergySystem, base: &BezierPatch, eps: f64) -> Self {
        let n = sys.degree;
        let m = n + 1;
        let (mut basis_du, mut basis_dv) = (Vec::new(), Vec::new());
        for &idx in &sys.interior {
            let mut c = vec![0.0; m * m];
            c[idx] = 1.0;
            let b = Polynomial2D::new(n, n, c).expect("size");
            basis_du.push(b.derivative_u().expect("degree ≥ 1"));
            basis_dv.push(b.derivative_v().expect("degree ≥ 1"));
        }
        Self {
            sys,
            base: base.clone(),
            basis_du,
            basis_dv,
            eps,
        }
    }

    fn patch(&self, z: &[f64]) -> BezierPatch {
        let mut p = self.base.clone();
        for (r, &idx) in self.sys.interior.iter().enumerate() {
            p.net[idx] = Point2::new(z[2 * r], z[2 * r + 1]);
        }
        p
    }

    fn start(&self) -> Vec<f64> {
        self.sys
            .interior
            .iter()
            .flat_map(|&i| [self.base.net[i].x, self.base.net[i].y])
            .collect()
    }

    fn value(&self, z: &[f64], mu: f64) -> f64 {
        let p = self.patch(z);
        let j = jacobian_coeffs(&p);
        self.sys.energy(&p)
            + mu * j
                .coeffs()
                .iter()
                .map(|&a| barrier(a, self.eps).0)
                .sum::<f64>()
    }

    /// Value, gradient and Gauss–Newton Hessian of `E + μ Σ φ(α)`.
    fn model(&self, z: &[f64], mu: f64) -> (f64, DVector<f64>, DMatrix<f64>) {
        let p = self.patch(z);
        let nv = z.len();
        let (x, y) = (p.x_poly(), p.y_poly());
        let (xu, xv) = (
            x.derivative_u().expect("deg"),
            x.derivative_v().expect("deg"),
        );
        let (yu, yv) = (
            y.derivative_u().expect("deg"),
            y.derivative_v().expect("deg"),
        );
        let alpha = xu.product(&yv).sub(&xv.product(&yu));
        // ∂α/∂x_a = B_a,u·y_v − B_a,v·y_u ; ∂α/∂y_a = x_u·B_a,v − x_v·B_a,u
        let mut jac = DMatrix::zeros(alpha.coeffs().len(), nv);
        for r in 0..self.sys.interior.len() {
            let (bu, bv) = (&self.basis_du[r], &self.basis_dv[r]);
            let dx = bu.product(&yv).sub(&bv.product(&yu));
            let dy = xu.product(bv).sub(&xv.product(bu));
            for (k, (&a, &b)) in dx.coeffs().iter().zip(dy.coeffs()).enumerate() {
                jac[(k, 2 * r)] = a;
                jac[(k, 2 * r + 1)] = b;
            }
        }
        let mut value = self.sys.energy(&p);
        let ge = self.sys.interior_gradient(&p);
        let mut grad = DVector::from_iterator(nv, ge.iter().flat_map(|g| [g.x, g.y]));
        let mut hess = DMatrix::zeros(nv, nv);
        for a in 0..self.sys.interior.len() {
            for b in 0..self.sys.interior.len() {
                hess[(2 * a, 2 * b)] = self.sys.hessian[(a, b)];
                hess[(2 * a + 1, 2 * b + 1)] = self.sys.hessian[(a, b)];
            }
        }
        let mut w1 = DVector::zeros(alpha.coeffs().len());
        let mut w2 = DVector::zeros(alpha.coeffs().len());
        for (k, &a) in alpha.coeffs().iter().enumerate() {
            let (f, d1, d2) = barrier(a, self.eps);
            value += mu * f;
            w1[k] = mu * d1;
            w2[k] = mu * d2;
        }
        grad += jac.transpose() * &w1;
        let scaled = DMatrix::from_fn(jac.nrows(), nv, |k, c| jac[(k, c)] * w2[k]);
        hess += jac.transpose() * scaled;
        (value, grad, hess)
    }
}

/// Damped Gauss–Newton minimization of one barrier stage; the objective never increases.
/// Returns the step count and the objective after each accepted step.
fn newton_stage(
    prob: &BarrierProblem,
    z: &mut Vec<f64>,
    mu: f64,
    cfg: &RepairConfig,
) -> (usize, Vec<f64>) {
    let mut steps = 0;
    let mut trace = vec![prob.value(z, mu)];
    for _ in 0..cfg.inner_max_iter {
        let (f, g, mut h) = prob.model(z, mu);
        if g.amax() <= cfg.grad_tol * (1.0 + f.abs()) {
            break;
        }
        let reg = 1e-12 * h.diagonal().amax().max(1e-300);
        for i in 0..h.nrows() {
            h[(i, i)] += reg;
        }
        let d = match h.cholesky() {
            Some(c) => -c.solve(&g),
            None => -g.clone(),
        };
        let slope = g.dot(&d);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..50 {
            let trial: Vec<f64> = z.iter().zip(d.iter()).map(|(a, b)| a + t * b).collect();
            let ft = prob.value(&trial, mu);
            // the model value and the plain value may differ in the last bits; compare
            // against the last accepted value so round-off cannot creep uphill
            let current = trace[trace.len() - 1];
            if ft.is_finite() && ft < current && ft <= f + 1e-4 * t * slope {
                *z = trial;
                trace.push(ft);
                moved = true;
                break;
            }
            t *= 0.5;
        }
        steps += 1;
        if !moved {
            break;
        }
    }
    (steps, trace)
}

/// Log-barrier repair over the interior control points (`2 ≤ i, j ≤ n−2`). Valid inputs are
/// returned unchanged; the outer two layers are never modified.
pub fn repair_patch(
    patch: &BezierPatch,
    sys: &EnergySystem,
    cfg: &RepairConfig,
    seed: u64,
) -> (BezierPatch, RepairOutcome) {
    let field = jacobian_coeffs(patch);
    let energy_before = sys.energy(patch);
    let mut outcome = RepairOutcome {
        success: true,
        min_alpha_before: field.min(),
        min_alpha_after: field.min(),
        energy_before,
        energy_after: energy_before,
        attempts: 0,
        newton_steps: 0,
        barrier_trace: Vec::new(),
    };
    if classify_patch(&field) == Validity::Valid {
        return (patch.clone(), outcome);
    }
    let n = patch.degree;
    let area: f64 = (0..4).map(|k| curve_area_term(&patch.side_curve(k))).sum();
    let scale = area.abs().max(f64::MIN_POSITIVE);
    let eps = cfg.eps0 * scale;
    let count = field.coeffs().len() as f64;
    let centroid = {
        let b: Vec<Point2> = (0..4)
            .flat_map(|k| patch.side_curve(k).control_points)
            .collect();
        b.iter().fold(Point2::ZERO, |a, &p| a + p) / b.len() as f64
    };
    let size = scale.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(BezierPatch, f64, Vec<Vec<f64>>)> = None;
    for attempt in 0..=cfg.restarts {
        outcome.attempts = attempt + 1;
        let mut start = patch.clone();
        let lambda = match attempt {
            0 => 0.0,
            1 => 0.5,
            _ => 1.0,
        };
        for &idx in &sys.interior {
            let mut p = start.net[idx] * (1.0 - lambda) + centroid * lambda;
            if attempt >= 3 {
                p += Point2::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05))
                    * size;
            }
            start.net[idx] = p;
        }
        let prob = BarrierProblem::new(sys, &start, eps);
        let mut z = prob.start();
        let mut mu = cfg.mu_scale * sys.energy(&start).max(f64::MIN_POSITIVE) / count;
        let mut trace = Vec::with_capacity(cfg.stages);
        for stage in 0..cfg.stages {
            let (steps, values) = newton_stage(&prob, &mut z, mu, cfg);
            outcome.newton_steps += steps;
            trace.push(values);
            debug!("repair attempt {attempt} stage {stage}: μ = {mu:.3e}");
            mu *= cfg.mu_decrease;
        }
        let out = prob.patch(&z);
        let min_a = jacobian_coeffs(&out).min();
        if best.as_ref().is_none_or(|(_, m, _)| min_a > *m) {
            best = Some((out, min_a, trace));
        }
        if min_a > 0.0 {
            break;
        }
    }
    let (out, min_a, trace) = best.expect("at least one attempt");
    outcome.barrier_trace = trace;
    outcome.success = min_a > 0.0;
    outcome.min_alpha_after = min_a;
    outcome.energy_after = sys.energy(&out);
    if !outcome.success {
        warn!("repair of a degree-{n} patch failed: min Jacobian coefficient {min_a:.3e}");
        return (patch.clone(), outcome);
    }
    (out, outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_mirror_coefficients() {
        for n in 4..=6 {
            let id = BezierPatch::identity(n);
            let f = jacobian_coeffs(&id);
            assert_eq!(f.degree(), 2 * n - 1);
            assert!(f.coeffs().iter().all(|&a| (a - 1.0).abs() < 1e-12));
            assert_eq!(classify_patch(&f), Validity::Valid);
            let mut m = id.clone();
            for p in &mut m.net {
                *p = Point2::new(p.y, p.x);
            }
            let f = jacobian_coeffs(&m);
            assert!(f.coeffs().iter().all(|&a| (a + 1.0).abs() < 1e-12));
            assert_eq!(classify_patch(&f), Validity::Invalid);
        }
    }

    #[test]
    fn valid_patch_is_untouched() {
        let id = BezierPatch::identity(5);
        let sys = EnergySystem::assemble(5, 2.0, 1.5).unwrap();
        let (out, o) = repair_patch(&id, &sys, &RepairConfig::default(), 0);
        assert_eq!(out, id);
        assert_eq!(o.attempts, 0);
    }

    #[test]
    fn dragged_interior_point_is_repaired() {
        let sys = EnergySystem::assemble(5, 2.0, 1.5).unwrap();
        let mut p = BezierPatch::identity(5);
        p.set(2, 2, Point2::new(1.6, 1.4));
        assert_eq!(classify_patch(&jacobian_coeffs(&p)), Validity::Invalid);
        let (out, o) = repair_patch(&p, &sys, &RepairConfig::default(), 7);
        assert!(o.success, "{o:?}");
        assert!(jacobian_coeffs(&out).min() > 0.0);
        for (i, q) in p.net.iter().enumerate() {
            if !sys.interior.contains(&i) {
                assert_eq!(out.net[i], *q);
            }
        }
    }
}
