//! Patch control nets: second layer, interface continuity, energy-minimizing interior.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bernstein::{derivative_gram, BezierCurve, Polynomial1D, Polynomial2D};
use crate::geometry::Point2;
use crate::segmentation::PatchLayout;

/// Damping of the second-layer orthogonality step, relative to the mean Hessian diagonal.
const ORTHO_DAMPING: f64 = 1.0;
/// Determinant threshold below which the vertex system falls back to least squares.
const G1_DET_MIN: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PatchfitError {
    #[error("patch degree {0} is below the minimum of 4")]
    DegreeTooLow(usize),
    #[error("energy system matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("patch degree {found} does not match the system degree {expected}")]
    DegreeMismatch { found: usize, expected: usize },
}

/// Tensor-product Bézier patch; `net[i*(n+1)+j]` is `P_{i,j}` (`i` along `u`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BezierPatch {
    pub degree: usize,
    pub net: Vec<Point2>,
    /// Curve and reversal flag of each side (see [`PatchLayout::quad_curves`]).
    pub sides: [(usize, bool); 4],
}

impl BezierPatch {
    pub fn from_fn(degree: usize, f: impl Fn(usize, usize) -> Point2) -> Self {
        let net = (0..=degree)
            .flat_map(|i| (0..=degree).map(move |j| (i, j)))
            .map(|(i, j)| f(i, j))
            .collect();
        Self {
            degree,
            net,
            sides: [(0, false); 4],
        }
    }

    /// `r(u,v) = (u, v)` on the unit square.
    pub fn identity(degree: usize) -> Self {
        let n = degree as f64;
        Self::from_fn(degree, |i, j| Point2::new(i as f64 / n, j as f64 / n))
    }

    pub fn at(&self, i: usize, j: usize) -> Point2 {
        self.net[i * (self.degree + 1) + j]
    }

    pub fn set(&mut self, i: usize, j: usize, p: Point2) {
        let m = self.degree + 1;
        self.net[i * m + j] = p;
    }

    pub fn x_poly(&self) -> Polynomial2D {
        Polynomial2D::new(
            self.degree,
            self.degree,
            self.net.iter().map(|p| p.x).collect(),
        )
        .expect("net size")
    }

    pub fn y_poly(&self) -> Polynomial2D {
        Polynomial2D::new(
            self.degree,
            self.degree,
            self.net.iter().map(|p| p.y).collect(),
        )
        .expect("net size")
    }

    pub fn eval(&self, u: f64, v: f64) -> Point2 {
        Point2::new(self.x_poly().eval(u, v), self.y_poly().eval(u, v))
    }

    /// Boundary curve of side `k`, oriented from corner `k` to corner `k+1`.
    pub fn side_curve(&self, k: usize) -> BezierCurve {
        let n = self.degree;
        BezierCurve {
            control_points: (0..=n).map(|t| self.net[boundary_index(n, k, t)]).collect(),
        }
    }

    /// Net indices of the energy unknowns `P_{i,j}`, `2 ≤ i, j ≤ n−2`.
    pub fn interior_indices(&self) -> Vec<usize> {
        let n = self.degree;
        (2..=n.saturating_sub(2))
            .flat_map(|i| (2..=n - 2).map(move |j| i * (n + 1) + j))
            .collect()
    }
}

/// Net index of position `t` (along the side, corner `k` → `k+1`) on side `k`.
pub fn boundary_index(n: usize, k: usize, t: usize) -> usize {
    let (i, j) = match k {
        0 => (t, 0),
        1 => (n, t),
        2 => (n - t, n),
        _ => (0, n - t),
    };
    i * (n + 1) + j
}

/// Net index of the second-layer point next to position `t` of side `k`.
pub fn layer_index(n: usize, k: usize, t: usize) -> usize {
    let (i, j) = match k {
        0 => (t, 1),
        1 => (n - 1, t),
        2 => (n - t, n - 1),
        _ => (1, n - t),
    };
    i * (n + 1) + j
}

/// Net index of the opposite-side point facing position `t` of side `k`.
fn opposite_index(n: usize, k: usize, t: usize) -> usize {
    let (i, j) = match k {
        0 => (t, n),
        1 => (0, t),
        2 => (n - t, 0),
        _ => (n, n - t),
    };
    i * (n + 1) + j
}

/// Net index of the point diagonally inside corner `k`.
pub fn corner_inner_index(n: usize, k: usize) -> usize {
    layer_index(n, k, 1)
}

/// Patch of quad `q` with its four boundary curves set and everything else zero.
pub fn patch_boundary(layout: &PatchLayout, q: usize) -> BezierPatch {
    let n = layout.degree;
    let mut p = BezierPatch {
        degree: n,
        net: vec![Point2::ZERO; (n + 1) * (n + 1)],
        sides: layout.quad_curves[q],
    };
    for k in 0..4 {
        let pts = layout.side_points(q, k);
        for (t, pt) in pts.into_iter().enumerate() {
            p.net[boundary_index(n, k, t)] = pt;
        }
    }
    p
}

/// `∫₀¹ ⟨r_along, r_across⟩²` along side `k`: tangential derivative of the boundary curve
/// against the cross derivative `n·(layer − boundary)`.
pub fn side_orthogonality(patch: &BezierPatch, k: usize) -> f64 {
    let (g0, _) = side_system(patch, k);
    g0.product(&g0).integral()
}

/// The inner product `g(s)` along side `k` and, for each free layer point
/// `t = 2..n−2`, the coordinate sensitivities `(∂g/∂x_t, ∂g/∂y_t)`.
fn side_system(patch: &BezierPatch, k: usize) -> (Polynomial1D, Vec<(Polynomial1D, Polynomial1D)>) {
    let n = patch.degree;
    let side = patch.side_curve(k);
    let d = side.derivative().expect("degree ≥ 1");
    let (dx, dy) = (d.x_poly(), d.y_poly());
    let nf = n as f64;
    let diff: Vec<Point2> = (0..=n)
        .map(|t| (patch.net[layer_index_or_corner(n, k, t)] - side.control_points[t]) * nf)
        .collect();
    let cx = Polynomial1D::new(diff.iter().map(|p| p.x).collect()).expect("finite");
    let cy = Polynomial1D::new(diff.iter().map(|p| p.y).collect()).expect("finite");
    let g0 = dx.product(&cx).add(&dy.product(&cy));
    let sens = (2..n - 1)
        .map(|t| {
            let b = Polynomial1D::basis(t, n).expect("t ≤ n").scale(nf);
            (dx.product(&b), dy.product(&b))
        })
        .collect();
    (g0, sens)
}

/// Layer points along a side run from the corner points themselves (`t = 0, n`) through
/// the second layer.
fn layer_index_or_corner(n: usize, k: usize, t: usize) -> usize {
    if t == 0 || t == n {
        // cross derivative at a corner follows the adjacent side's first leg
        let other = if t == 0 { (k + 3) % 4 } else { (k + 1) % 4 };
        let pos = if t == 0 { n - 1 } else { 1 };
        boundary_index(n, other, pos)
    } else {
        layer_index(n, k, t)
    }
}

/// Result of the second-layer construction on one patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub before: [f64; 4],
    pub after: [f64; 4],
    pub kept_offset: usize,
}

/// Offset initialization `P = B + (O − B)/n` of all four second-layer rows (corner-inner
/// points averaged), then per side one damped Newton step on the orthogonality integral over
/// the non-corner layer points (kept only if it decreases the integral).
pub fn init_second_layer(patch: &BezierPatch) -> (BezierPatch, LayerReport) {
    let n = patch.degree;
    let nf = n as f64;
    let mut out = patch.clone();
    let mut acc: BTreeMap<usize, (Point2, f64)> = BTreeMap::new();
    for k in 0..4 {
        for t in 1..n {
            let b = patch.net[boundary_index(n, k, t)];
            let o = patch.net[opposite_index(n, k, t)];
            let e = acc
                .entry(layer_index(n, k, t))
                .or_insert((Point2::ZERO, 0.0));
            e.0 = e.0 + b + (o - b) / nf;
            e.1 += 1.0;
        }
    }
    for (idx, (s, c)) in acc {
        out.net[idx] = s / c;
    }
    let mut report = LayerReport {
        before: [0.0; 4],
        after: [0.0; 4],
        kept_offset: 0,
    };
    for k in 0..4 {
        let before = side_orthogonality(&out, k);
        report.before[k] = before;
        let (g0, sens) = side_system(&out, k);
        let m = 2 * sens.len();
        if m == 0 {
            report.after[k] = before;
            continue;
        }
        let polys: Vec<&Polynomial1D> = sens.iter().flat_map(|(a, b)| [a, b]).collect();
        let h = DMatrix::from_fn(m, m, |a, b| 2.0 * polys[a].product(polys[b]).integral());
        let g = DVector::from_fn(m, |a, _| 2.0 * g0.product(polys[a]).integral());
        // Levenberg damping: the side integral usually cannot vanish (the corner legs
        // are fixed), and the undamped minimizer may sit far outside the patch
        let lambda = ORTHO_DAMPING * h.trace() / m as f64;
        let damped = &h + DMatrix::identity(m, m) * lambda.max(f64::MIN_POSITIVE);
        let step = match damped.cholesky() {
            Some(c) => -c.solve(&g),
            None => DVector::zeros(m),
        };
        let mut trial = out.clone();
        for (s, t) in (2..n - 1).enumerate() {
            let idx = layer_index(n, k, t);
            trial.net[idx] += Point2::new(step[2 * s], step[2 * s + 1]);
        }
        let after = side_orthogonality(&trial, k);
        if after.is_finite() && after <= before {
            out = trial;
            report.after[k] = after;
        } else {
            warn!("second-layer orthogonality step did not descend on side {k}; keeping the offset layer");
            report.after[k] = before;
            report.kept_offset += 1;
        }
    }
    (out, report)
}

/// Flanking pair of one continuity constraint: the two second-layer points on either
/// side of curve point `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Flank {
    curve: usize,
    j: usize,
    a: (usize, usize),
    b: (usize, usize),
}

/// For each interior curve, the two quads and their sides that share it.
fn curve_quads(layout: &PatchLayout) -> BTreeMap<usize, Vec<(usize, usize, bool)>> {
    let mut m: BTreeMap<usize, Vec<(usize, usize, bool)>> = BTreeMap::new();
    for (q, sides) in layout.quad_curves.iter().enumerate() {
        for (k, &(c, rev)) in sides.iter().enumerate() {
            m.entry(c).or_default().push((q, k, rev));
        }
    }
    m.retain(|&c, v| !layout.curves[c].fixed && v.len() == 2);
    m
}

fn irregular_vertices(layout: &PatchLayout) -> BTreeMap<usize, usize> {
    layout
        .vertex_stars()
        .into_iter()
        .filter(|s| s.valence() != 4)
        .map(|s| (s.vertex, s.valence()))
        .collect()
}

/// Continuity constraints `2s_j = P_j + Q_j`, `j = 1..n−1`, on free interior curves;
/// the `j` next to an irregular vertex is left to the vertex system.
fn c1_flanks(layout: &PatchLayout) -> Vec<Flank> {
    let n = layout.degree;
    let irregular = irregular_vertices(layout);
    let mut out = Vec::new();
    for (c, qs) in curve_quads(layout) {
        let ends = layout.curves[c].ends;
        let pos = |(q, k, rev): (usize, usize, bool), j: usize| {
            (q, layer_index(n, k, if rev { n - j } else { j }))
        };
        for j in 1..n {
            if (j == 1 && irregular.contains_key(&ends[0]))
                || (j == n - 1 && irregular.contains_key(&ends[1]))
            {
                continue;
            }
            out.push(Flank {
                curve: c,
                j,
                a: pos(qs[0], j),
                b: pos(qs[1], j),
            });
        }
    }
    out
}

/// Replaces the flanking second-layer points by the least-change solution of all
/// continuity constraints, solved jointly per connected group of coupled points.
pub fn enforce_c1(layout: &PatchLayout, patches: &mut [BezierPatch]) {
    let flanks = c1_flanks(layout);
    // union-find over the involved points
    let mut ids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for f in &flanks {
        for p in [f.a, f.b] {
            let l = ids.len();
            ids.entry(p).or_insert(l);
        }
    }
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for f in &flanks {
        let (a, b) = (find(&mut parent, ids[&f.a]), find(&mut parent, ids[&f.b]));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: BTreeMap<usize, Vec<&Flank>> = BTreeMap::new();
    for f in &flanks {
        let r = find(&mut parent, ids[&f.a]);
        groups.entry(r).or_default().push(f);
    }
    for (_, cons) in groups {
        let mut local: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for f in &cons {
            for p in [f.a, f.b] {
                let l = local.len();
                local.entry(p).or_insert(l);
            }
        }
        let (m, v) = (cons.len(), local.len());
        let mut a = DMatrix::zeros(m, v);
        let mut bx = DVector::zeros(m);
        let mut by = DVector::zeros(m);
        for (r, f) in cons.iter().enumerate() {
            a[(r, local[&f.a])] = 1.0;
            a[(r, local[&f.b])] = 1.0;
            let s = layout.curves[f.curve].curve.control_points[f.j] * 2.0;
            bx[r] = s.x;
            by[r] = s.y;
        }
        let mut xs = DVector::zeros(v);
        let mut ys = DVector::zeros(v);
        for (&(q, idx), &i) in &local {
            xs[i] = patches[q].net[idx].x;
            ys[i] = patches[q].net[idx].y;
        }
        let aat = &a * a.transpose();
        let pinv = aat
            .clone()
            .pseudo_inverse(1e-10)
            .expect("eps is non-negative");
        let dx = a.transpose() * (&pinv * (&bx - &a * &xs));
        let dy = a.transpose() * (&pinv * (&by - &a * &ys));
        for (&(q, idx), &i) in &local {
            patches[q].net[idx] = Point2::new(xs[i] + dx[i], ys[i] + dy[i]);
        }
    }
}

/// Largest `‖2s_j − P_j − Q_j‖` over all continuity constraints.
pub fn c1_residual(layout: &PatchLayout, patches: &[BezierPatch]) -> f64 {
    c1_flanks(layout)
        .iter()
        .map(|f| {
            let s = layout.curves[f.curve].curve.control_points[f.j];
            (s * 2.0 - patches[f.a.0].net[f.a.1] - patches[f.b.0].net[f.b.1]).norm()
        })
        .fold(0.0, f64::max)
}

/// Irregular interior vertex: centre and the first two interior control points of each
/// incident curve (counter-clockwise), seen from the centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrregularStar {
    pub degree: usize,
    pub center: Point2,
    pub s1: Vec<Point2>,
    pub s2: Vec<Point2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G1Solution {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// `Πα + (−1)^{M+1} Πβ`, the determinant of the cyclic system.
    pub determinant: f64,
    /// Inner corner point of sector `i` (between curves `i` and `i+1`).
    pub points: Vec<Point2>,
    pub least_squares: bool,
}

impl IrregularStar {
    pub fn valence(&self) -> usize {
        self.s1.len()
    }

    /// Residual of the tangent-plane relation `u_i = α_i u_{i+1} + β_i u_{i−1}`.
    pub fn tangent_residual(&self, alpha: &[f64], beta: &[f64]) -> f64 {
        let m = self.valence();
        let u = |i: usize| self.s1[i % m] - self.center;
        (0..m)
            .map(|i| (u(i) - u(i + 1) * alpha[i] - u(i + m - 1) * beta[i]).norm())
            .fold(0.0, f64::max)
    }

    /// Residual of the first-row continuity relation at every curve `i`.
    pub fn continuity_residual(&self, sol: &G1Solution) -> f64 {
        let m = self.valence();
        let n = self.degree as f64;
        (0..m)
            .map(|i| {
                let (s1, s2) = (self.s1[i], self.s2[i]);
                let r = (sol.points[i] - s1) * (n * sol.alpha[i])
                    + (sol.points[(i + m - 1) % m] - s1) * (n * sol.beta[i])
                    - (s2 - s1) * (n - 1.0)
                    + (s1 - self.center);
                r.norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Solves the per-curve 2×2 systems for `α_i, β_i`, then the cyclic `M×M` system for the
/// sector inner points.
pub fn enforce_g1(star: &IrregularStar) -> G1Solution {
    let m = star.valence();
    let n = star.degree as f64;
    let u = |i: usize| star.s1[i % m] - star.center;
    let mut alpha = vec![0.0; m];
    let mut beta = vec![0.0; m];
    for i in 0..m {
        let (a, b, c) = (u(i + 1), u(i + m - 1), u(i));
        let det = a.cross(b);
        if det.abs() > 0.0 {
            alpha[i] = c.cross(b) / det;
            beta[i] = a.cross(c) / det;
        } else {
            warn!("irregular vertex: collinear neighbour tangents around curve {i}");
        }
    }
    let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
    let determinant = alpha.iter().product::<f64>() + sign * beta.iter().product::<f64>();
    let h: Vec<Point2> = (0..m)
        .map(|i| {
            star.s1[i] * (alpha[i] + beta[i] - 1.0) + star.s2[i] * (1.0 - 1.0 / n) + star.center / n
        })
        .collect();
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        a[(i, i)] += alpha[i];
        a[(i, (i + m - 1) % m)] += beta[i];
    }
    let hx = DVector::from_fn(m, |i, _| h[i].x);
    let hy = DVector::from_fn(m, |i, _| h[i].y);
    let least_squares = determinant.abs() < G1_DET_MIN;
    let (x, y) = if least_squares {
        warn!(
            "irregular vertex system is singular (|det| = {:.3e}); using least squares",
            determinant.abs()
        );
        let p = a.pseudo_inverse(1e-12).expect("eps is non-negative");
        (&p * hx, &p * hy)
    } else {
        let lu = a.lu();
        (
            lu.solve(&hx).expect("non-singular"),
            lu.solve(&hy).expect("non-singular"),
        )
    };
    let points = (0..m).map(|i| Point2::new(x[i], y[i])).collect();
    G1Solution {
        alpha,
        beta,
        determinant,
        points,
        least_squares,
    }
}

/// Stars of the irregular interior vertices of a layout, with their sectors.
pub fn irregular_stars(layout: &PatchLayout) -> Vec<(IrregularStar, Vec<(usize, usize)>)> {
    let n = layout.degree;
    layout
        .vertex_stars()
        .into_iter()
        .filter(|s| s.valence() != 4)
        .map(|s| {
            let pt = |c: usize, st: bool, k: usize| {
                layout.curves[c].curve.control_points[if st { k } else { n - k }]
            };
            let star = IrregularStar {
                degree: n,
                center: layout.mesh.vertices[s.vertex],
                s1: s.curves.iter().map(|&(c, st)| pt(c, st, 1)).collect(),
                s2: s.curves.iter().map(|&(c, st)| pt(c, st, 2)).collect(),
            };
            (star, s.sectors)
        })
        .collect()
}

/// Applies [`enforce_g1`] at every irregular vertex; returns the solutions.
pub fn enforce_g1_all(layout: &PatchLayout, patches: &mut [BezierPatch]) -> Vec<G1Solution> {
    let n = layout.degree;
    irregular_stars(layout)
        .into_iter()
        .map(|(star, sectors)| {
            let sol = enforce_g1(&star);
            for (i, &(q, k)) in sectors.iter().enumerate() {
                patches[q].net[corner_inner_index(n, k)] = sol.points[i];
            }
            sol
        })
        .collect()
}

/// Largest continuity residual over all irregular vertices, read back from the patches.
pub fn g1_residual(layout: &PatchLayout, patches: &[BezierPatch]) -> f64 {
    let n = layout.degree;
    irregular_stars(layout)
        .into_iter()
        .map(|(star, sectors)| {
            let mut sol = enforce_g1(&star);
            sol.points = sectors
                .iter()
                .map(|&(q, k)| patches[q].net[corner_inner_index(n, k)])
                .collect();
            star.continuity_residual(&sol)
        })
        .fold(0.0, f64::max)
}

/// Quadratic patch energy `∫∫ τ₁(‖r_u‖²+‖r_v‖²) + τ₂(‖r_uu‖²+2‖r_uv‖²+‖r_vv‖²)` as the
/// `(n+1)²` matrix `K` with `E = xᵀKx + yᵀKy`, and the interior solve.
#[derive(Debug, Clone)]
pub struct EnergySystem {
    pub degree: usize,
    pub tau1: f64,
    pub tau2: f64,
    /// Full `K`, row-major over net indices.
    pub k: DMatrix<f64>,
    /// Net indices of the unknowns (`2 ≤ i, j ≤ n−2`) and of the fixed points.
    pub interior: Vec<usize>,
    pub fixed: Vec<usize>,
    /// `2·K_II`: Hessian of `E` in either coordinate of the unknowns.
    pub hessian: DMatrix<f64>,
    k_ib: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl EnergySystem {
    pub fn assemble(n: usize, tau1: f64, tau2: f64) -> Result<Self, PatchfitError> {
        if n < 4 {
            return Err(PatchfitError::DegreeTooLow(n));
        }
        let m = n + 1;
        let g = |a: usize| DMatrix::from_row_slice(m, m, &derivative_gram(n, a, a));
        let (g0, g1, g2) = (g(0), g(1), g(2));
        let k = (g1.kronecker(&g0) + g0.kronecker(&g1)) * tau1
            + (g2.kronecker(&g0) + g1.kronecker(&g1) * 2.0 + g0.kronecker(&g2)) * tau2;
        let interior: Vec<usize> = (2..=n - 2)
            .flat_map(|i| (2..=n - 2).map(move |j| i * m + j))
            .collect();
        let fixed: Vec<usize> = (0..m * m).filter(|i| !interior.contains(i)).collect();
        let k_ii = k.select_rows(&interior).select_columns(&interior);
        let k_ib = k.select_rows(&interior).select_columns(&fixed);
        let hessian = &k_ii * 2.0;
        let chol = k_ii.cholesky().ok_or(PatchfitError::NotPositiveDefinite)?;
        Ok(Self {
            degree: n,
            tau1,
            tau2,
            k,
            interior,
            fixed,
            hessian,
            k_ib,
            chol,
        })
    }

    /// Exact energy through the assembled quadratic form.
    pub fn energy(&self, patch: &BezierPatch) -> f64 {
        let x = DVector::from_iterator(patch.net.len(), patch.net.iter().map(|p| p.x));
        let y = DVector::from_iterator(patch.net.len(), patch.net.iter().map(|p| p.y));
        x.dot(&(&self.k * &x)) + y.dot(&(&self.k * &y))
    }

    /// Gradient of the energy with respect to the interior coordinates `(x, y)`.
    pub fn interior_gradient(&self, patch: &BezierPatch) -> Vec<Point2> {
        let x = DVector::from_iterator(patch.net.len(), patch.net.iter().map(|p| p.x));
        let y = DVector::from_iterator(patch.net.len(), patch.net.iter().map(|p| p.y));
        let (kx, ky) = (&self.k * x * 2.0, &self.k * y * 2.0);
        self.interior
            .iter()
            .map(|&i| Point2::new(kx[i], ky[i]))
            .collect()
    }

    /// Interior points minimizing the energy with the two outer layers fixed.
    pub fn solve_inner_points(&self, patch: &BezierPatch) -> Result<BezierPatch, PatchfitError> {
        if patch.degree != self.degree {
            return Err(PatchfitError::DegreeMismatch {
                found: patch.degree,
                expected: self.degree,
            });
        }
        let xb =
            DVector::from_iterator(self.fixed.len(), self.fixed.iter().map(|&i| patch.net[i].x));
        let yb =
            DVector::from_iterator(self.fixed.len(), self.fixed.iter().map(|&i| patch.net[i].y));
        let xi = self.chol.solve(&(-(&self.k_ib * xb)));
        let yi = self.chol.solve(&(-(&self.k_ib * yb)));
        let mut out = patch.clone();
        for (r, &i) in self.interior.iter().enumerate() {
            out.net[i] = Point2::new(xi[r], yi[r]);
        }
        Ok(out)
    }
}

/// Patch energy integrated exactly from Bernstein products of the partial derivatives.
pub fn energy_value(patch: &BezierPatch, tau1: f64, tau2: f64) -> f64 {
    let mut e = 0.0;
    for p in [patch.x_poly(), patch.y_poly()] {
        let sq = |q: &Polynomial2D| q.product(q).integral();
        let pu = p.derivative_u().expect("degree ≥ 1");
        let pv = p.derivative_v().expect("degree ≥ 1");
        e += tau1 * (sq(&pu) + sq(&pv));
        let puu = pu.derivative_u().expect("degree ≥ 2");
        let puv = pu.derivative_v().expect("degree ≥ 2");
        let pvv = pv.derivative_v().expect("degree ≥ 2");
        e += tau2 * (sq(&puu) + 2.0 * sq(&puv) + sq(&pvv));
    }
    e
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub layers: Vec<LayerReport>,
    pub c1_residual: f64,
    pub g1_residual: f64,
    /// Valence of each irregular vertex and its system determinant.
    pub stars: Vec<(usize, f64)>,
    pub g1_least_squares: usize,
}

/// Second layers → C1 interfaces → vertex systems → interior points, for every quad.
pub fn fit_patches(
    layout: &PatchLayout,
    sys: &EnergySystem,
) -> Result<(Vec<BezierPatch>, FitReport), PatchfitError> {
    let init: Vec<(BezierPatch, LayerReport)> = (0..layout.quad_curves.len())
        .into_par_iter()
        .map(|q| init_second_layer(&patch_boundary(layout, q)))
        .collect();
    let (mut patches, layers): (Vec<BezierPatch>, Vec<LayerReport>) = init.into_iter().unzip();
    enforce_c1(layout, &mut patches);
    let sols = enforce_g1_all(layout, &mut patches);
    let patches = patches
        .par_iter()
        .map(|p| sys.solve_inner_points(p))
        .collect::<Result<Vec<_>, _>>()?;
    let report = FitReport {
        layers,
        c1_residual: c1_residual(layout, &patches),
        g1_residual: g1_residual(layout, &patches),
        stars: sols
            .iter()
            .map(|s| (s.alpha.len(), s.determinant))
            .collect(),
        g1_least_squares: sols.iter().filter(|s| s.least_squares).count(),
    };
    Ok((patches, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::tests::grid_layout;

    fn star(m: usize, n: usize) -> IrregularStar {
        let dir = |i: usize| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / m as f64;
            Point2::new(a.cos(), a.sin())
        };
        IrregularStar {
            degree: n,
            center: Point2::ZERO,
            s1: (0..m).map(dir).collect(),
            s2: (0..m).map(|i| dir(i) * 2.0).collect(),
        }
    }

    #[test]
    fn symmetric_three_star() {
        let s = star(3, 4);
        let sol = enforce_g1(&s);
        for i in 0..3 {
            assert!((sol.alpha[i] + 1.0).abs() < 1e-12 && (sol.beta[i] + 1.0).abs() < 1e-12);
        }
        assert!((sol.determinant + 2.0).abs() < 1e-12);
        assert!(s.continuity_residual(&sol) < 1e-10);
    }

    #[test]
    fn symmetric_five_star() {
        let s = star(5, 5);
        let sol = enforce_g1(&s);
        let phi = 1.0 / (2.0 * 72f64.to_radians().cos());
        assert!((sol.alpha[0] - phi).abs() < 1e-12);
        assert!((sol.determinant - 2.0 * phi.powi(5)).abs() < 1e-9);
        assert!(s.continuity_residual(&sol) < 1e-10);
    }

    #[test]
    fn c1_projection_example() {
        // two unit-square patches side by side share the curve x = 1
        let layout = grid_layout(2, 2.0, 4);
        let sys = EnergySystem::assemble(4, 2.0, 1.5).unwrap();
        let (patches, rep) = fit_patches(&layout, &sys).unwrap();
        assert!(rep.c1_residual < 1e-12);
        // a straight grid reproduces itself
        for p in &patches {
            let base = p.at(0, 0);
            for i in 0..=4 {
                for j in 0..=4 {
                    let e = base + Point2::new(i as f64 / 4.0, j as f64 / 4.0);
                    assert!(p.at(i, j).distance(e) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn minimal_change_pair() {
        // s=(0,0), P̄=(1,0), Q̄=(0,1) → P=(0.5,−0.5), Q=(−0.5,0.5)
        let (s, p, q) = (Point2::ZERO, Point2::new(1.0, 0.0), Point2::new(0.0, 1.0));
        let d = (s * 2.0 - p - q) / 2.0;
        assert_eq!(p + d, Point2::new(0.5, -0.5));
        assert_eq!(q + d, Point2::new(-0.5, 0.5));
    }

    #[test]
    fn identity_second_layer_is_unchanged() {
        for n in 4..=6 {
            let id = BezierPatch::identity(n);
            let mut b = id.clone();
            for i in 1..n {
                for j in 1..n {
                    b.set(i, j, Point2::ZERO);
                }
            }
            let (out, rep) = init_second_layer(&b);
            for k in 0..4 {
                for t in 1..n {
                    let idx = layer_index(n, k, t);
                    assert!(out.net[idx].distance(id.net[idx]) < 1e-14);
                }
                assert!(rep.after[k] < 1e-28);
            }
        }
    }

    #[test]
    fn identity_energy_and_interior() {
        let id = BezierPatch::identity(4);
        assert!((energy_value(&id, 1.0, 1.5) - 2.0).abs() < 1e-12);
        let sys = EnergySystem::assemble(4, 2.0, 1.5).unwrap();
        assert_eq!(sys.interior.len(), 1);
        let mut p = id.clone();
        p.set(2, 2, Point2::new(0.9, 0.1));
        let s = sys.solve_inner_points(&p).unwrap();
        assert!(s.at(2, 2).distance(Point2::new(0.5, 0.5)) < 1e-10);
        assert!((sys.energy(&id) - energy_value(&id, 2.0, 1.5)).abs() < 1e-12);
    }
}
