//! Segmentation curves: one Bézier curve per quad-mesh edge, optimized for area
//! uniformity, fairness and tangent-angle balance at interior vertices.

use std::collections::BTreeMap;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bernstein::{binomial, derivative_gram, BezierCurve};
use crate::config::PipelineConfig;
use crate::geometry::{triangles_overlap, Point2};
use crate::lbfgs::{minimize, LbfgsConfig, Termination, TraceRow};
use crate::splines::SegmentChain;
use crate::topology::{EdgeKind, QuadMesh};

/// Relative tolerance on loop closure in [`region_area`].
const CLOSURE_TOL: f64 = 1e-9;
/// Penalty of one tangent term whose tangent vector vanishes.
const ZERO_TANGENT_PENALTY: f64 = 4.0;
/// Shrink factor of the triangle disjointness test (contact at a shared vertex is allowed).
const TRIANGLE_SHRINK: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentationError {
    #[error("curve loop is open between curve {0} and its successor")]
    OpenLoop(usize),
    #[error("boundary edge {edge} does not match its boundary segment")]
    BoundaryMismatch { edge: usize },
    #[error("boundary segment degree {found} differs from the layout degree {expected}")]
    DegreeMismatch { found: usize, expected: usize },
}

/// A Bézier curve realizing one quad-mesh edge, running from `ends[0]` to `ends[1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationCurve {
    pub curve: BezierCurve,
    pub ends: [usize; 2],
    pub kind: EdgeKind,
    /// Boundary and slit curves are never optimized.
    pub fixed: bool,
}

/// Interior vertex with its incident curves in counter-clockwise order. Sector `i`
/// is the quad between `curves[i]` and `curves[i + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexStar {
    pub vertex: usize,
    /// `(curve, starts_here)`.
    pub curves: Vec<(usize, bool)>,
    /// `(quad, corner)`.
    pub sectors: Vec<(usize, usize)>,
}

impl VertexStar {
    pub fn valence(&self) -> usize {
        self.curves.len()
    }
}

/// Quad topology plus one curve per mesh edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchLayout {
    pub mesh: QuadMesh,
    /// Indexed like `mesh.edges`.
    pub curves: Vec<SegmentationCurve>,
    /// Side `k` of quad `q` (corner `k` to `k+1`): curve index and whether the quad
    /// traverses the curve against its stored direction.
    pub quad_curves: Vec<[(usize, bool); 4]>,
    pub degree: usize,
}

impl PatchLayout {
    /// Control points of quad side `k` oriented from corner `k` to corner `k+1`.
    pub fn side_points(&self, q: usize, k: usize) -> Vec<Point2> {
        let (c, rev) = self.quad_curves[q][k];
        let mut p = self.curves[c].curve.control_points.clone();
        if rev {
            p.reverse();
        }
        p
    }

    pub fn free_curves(&self) -> Vec<usize> {
        (0..self.curves.len())
            .filter(|&c| !self.curves[c].fixed)
            .collect()
    }

    /// Stars of all interior vertices, in vertex order.
    pub fn vertex_stars(&self) -> Vec<VertexStar> {
        let map = self.mesh.edge_map();
        let edge = |a: usize, b: usize| map[&(a.min(b), a.max(b))];
        // around v, the sector of quad f at corner k runs counter-clockwise from the
        // edge to f[k+1] to the edge to f[k-1]
        let mut succ: BTreeMap<usize, BTreeMap<usize, (usize, usize, usize)>> = BTreeMap::new();
        for (q, f) in self.mesh.quads.iter().enumerate() {
            for k in 0..4 {
                let v = f[k];
                if self.mesh.boundary[v] {
                    continue;
                }
                let e_next = edge(v, f[(k + 1) % 4]);
                let e_prev = edge(v, f[(k + 3) % 4]);
                succ.entry(v).or_default().insert(e_next, (e_prev, q, k));
            }
        }
        let mut stars = Vec::with_capacity(succ.len());
        for (v, s) in succ {
            let Some(&start) = s.keys().next() else {
                continue;
            };
            let mut curves = Vec::new();
            let mut sectors = Vec::new();
            let mut e = start;
            loop {
                curves.push((e, self.curves[e].ends[0] == v));
                let Some(&(next, q, k)) = s.get(&e) else {
                    break;
                };
                sectors.push((q, k));
                e = next;
                if e == start || curves.len() > s.len() {
                    break;
                }
            }
            if sectors.len() != curves.len() {
                warn!("vertex {v}: incident quads do not close a fan");
                continue;
            }
            stars.push(VertexStar {
                vertex: v,
                curves,
                sectors,
            });
        }
        stars
    }

    /// Signed area of every quad's curve loop.
    pub fn quad_areas(&self) -> Vec<f64> {
        (0..self.quad_curves.len())
            .map(|q| {
                self.quad_curves[q]
                    .iter()
                    .map(|&(c, rev)| {
                        let a = curve_area_term(&self.curves[c].curve);
                        if rev {
                            -a
                        } else {
                            a
                        }
                    })
                    .sum()
            })
            .collect()
    }
}

/// Builds the initial layout: straight equally spaced interior curves, verbatim
/// boundary segments, straight slit curves.
pub fn init_segmentation_curves(
    mesh: &QuadMesh,
    chains: &[SegmentChain],
    degree: usize,
) -> Result<PatchLayout, SegmentationError> {
    let mut mesh = mesh.clone();
    let mut curves = Vec::with_capacity(mesh.edges.len());
    // boundary segments first: snap the mesh vertices onto their endpoints
    for (ei, e) in mesh.edges.clone().iter().enumerate() {
        if let EdgeKind::Boundary { ring, segment } = e.kind {
            let seg = &chains[ring].segments[segment];
            if seg.degree() != degree {
                return Err(SegmentationError::DegreeMismatch {
                    found: seg.degree(),
                    expected: degree,
                });
            }
            let scale = 1.0 + seg.start().norm().max(seg.end().norm());
            if mesh.vertices[e.v[0]].distance(seg.start()) > 1e-9 * scale
                || mesh.vertices[e.v[1]].distance(seg.end()) > 1e-9 * scale
            {
                return Err(SegmentationError::BoundaryMismatch { edge: ei });
            }
            mesh.vertices[e.v[0]] = seg.start();
            mesh.vertices[e.v[1]] = seg.end();
        }
    }
    for e in &mesh.edges {
        let (curve, fixed) = match e.kind {
            EdgeKind::Boundary { ring, segment } => (chains[ring].segments[segment].clone(), true),
            EdgeKind::Slit { .. } => (
                BezierCurve::line(mesh.vertices[e.v[0]], mesh.vertices[e.v[1]], degree),
                true,
            ),
            EdgeKind::Interior => (
                BezierCurve::line(mesh.vertices[e.v[0]], mesh.vertices[e.v[1]], degree),
                false,
            ),
        };
        curves.push(SegmentationCurve {
            curve,
            ends: e.v,
            kind: e.kind,
            fixed,
        });
    }
    let map = mesh.edge_map();
    let quad_curves = (0..mesh.quads.len())
        .map(|q| mesh.quad_sides(&map, q))
        .collect();
    Ok(PatchLayout {
        mesh,
        curves,
        quad_curves,
        degree,
    })
}

/// `½∮(x dy − y dx)` along one curve: `¼ Σ_j (c_j − d_j)` with the degree-(2n−1)
/// Bernstein coefficients `c_j` of `x·Δy` and `d_j` of `y·Δx`.
pub fn curve_area_term(c: &BezierCurve) -> f64 {
    let n = c.degree();
    if n == 0 {
        return 0.0;
    }
    let p = &c.control_points;
    let dx: Vec<f64> = (0..n).map(|i| p[i + 1].x - p[i].x).collect();
    let dy: Vec<f64> = (0..n).map(|i| p[i + 1].y - p[i].y).collect();
    let (ni, m) = (n as i64, 2 * n as i64 - 1);
    let mut sum = 0.0;
    for j in 0..=m {
        let denom = binomial(m, j);
        let (mut cj, mut dj) = (0.0, 0.0);
        for r in 0..=ni.min(j) {
            let s = j - r;
            if s > ni - 1 {
                continue;
            }
            let w = binomial(ni, r) * binomial(ni - 1, s) / denom;
            cj += w * p[r as usize].x * dy[s as usize];
            dj += w * p[r as usize].y * dx[s as usize];
        }
        sum += cj - dj;
    }
    0.25 * sum
}

/// Signed area enclosed by a closed loop of curves; `true` traverses a curve reversed.
pub fn region_area(curves: &[(&BezierCurve, bool)]) -> Result<f64, SegmentationError> {
    let ends = |&(c, rev): &(&BezierCurve, bool)| {
        if rev {
            (c.end(), c.start())
        } else {
            (c.start(), c.end())
        }
    };
    let scale = curves
        .iter()
        .flat_map(|(c, _)| c.control_points.iter())
        .fold(0.0f64, |m, p| m.max(p.norm()))
        .max(1.0);
    for i in 0..curves.len() {
        let (_, e) = ends(&curves[i]);
        let (s, _) = ends(&curves[(i + 1) % curves.len()]);
        if e.distance(s) > CLOSURE_TOL * scale {
            return Err(SegmentationError::OpenLoop(i));
        }
    }
    Ok(curves
        .iter()
        .map(|&(c, rev)| {
            let a = curve_area_term(c);
            if rev {
                -a
            } else {
                a
            }
        })
        .sum())
}

/// Per-curve control-point gradient, indexed like `layout.curves`.
pub type CurveGradient = Vec<Vec<Point2>>;

fn zero_gradient(layout: &PatchLayout) -> CurveGradient {
    layout
        .curves
        .iter()
        .map(|c| vec![Point2::ZERO; c.curve.control_points.len()])
        .collect()
}

/// Degree-dependent matrices shared by the objective terms.
#[derive(Debug, Clone)]
struct Kernels {
    n: usize,
    /// `½(D − Dᵀ)` with `D[r][s] = ∫B_r B_s'`: curve area term is `xᵀ S y`.
    area: Vec<f64>,
    g1: Vec<f64>,
    g2: Vec<f64>,
}

impl Kernels {
    fn new(n: usize) -> Self {
        let d = derivative_gram(n, 0, 1);
        let m = n + 1;
        let area = (0..m * m)
            .map(|k| 0.5 * (d[k] - d[(k % m) * m + k / m]))
            .collect();
        Self {
            n,
            area,
            g1: derivative_gram(n, 1, 1),
            g2: derivative_gram(n, 2, 2),
        }
    }

    fn mat_vec(&self, a: &[f64], v: &[f64]) -> Vec<f64> {
        let m = self.n + 1;
        (0..m)
            .map(|r| (0..m).map(|s| a[r * m + s] * v[s]).sum())
            .collect()
    }

    fn mat_t_vec(&self, a: &[f64], v: &[f64]) -> Vec<f64> {
        let m = self.n + 1;
        (0..m)
            .map(|s| (0..m).map(|r| a[r * m + s] * v[r]).sum())
            .collect()
    }
}

fn coords(c: &BezierCurve) -> (Vec<f64>, Vec<f64>) {
    (
        c.control_points.iter().map(|p| p.x).collect(),
        c.control_points.iter().map(|p| p.y).collect(),
    )
}

/// Variance of the quad areas around their mean `A(Ω)/L`.
pub fn f_uniform(layout: &PatchLayout) -> f64 {
    let areas = layout.quad_areas();
    let l = areas.len() as f64;
    if areas.is_empty() {
        return 0.0;
    }
    let ave = areas.iter().sum::<f64>() / l;
    areas.iter().map(|a| (a - ave).powi(2)).sum::<f64>() / l
}

/// [`f_uniform`] and its control-point gradient.
pub fn f_uniform_with_gradient(layout: &PatchLayout) -> (f64, CurveGradient) {
    let k = Kernels::new(layout.degree);
    uniform_terms(layout, &k)
}

fn uniform_terms(layout: &PatchLayout, k: &Kernels) -> (f64, CurveGradient) {
    let mut grad = zero_gradient(layout);
    let areas = layout.quad_areas();
    if areas.is_empty() {
        return (0.0, grad);
    }
    let l = areas.len() as f64;
    let ave = areas.iter().sum::<f64>() / l;
    let value = areas.iter().map(|a| (a - ave).powi(2)).sum::<f64>() / l;
    // the mean is invariant (interior curves cancel), so dF/dA_q = 2(A_q − Ā)/L
    let mut weight = vec![0.0; layout.curves.len()];
    for (q, sides) in layout.quad_curves.iter().enumerate() {
        let w = 2.0 * (areas[q] - ave) / l;
        for &(c, rev) in sides {
            weight[c] += if rev { -w } else { w };
        }
    }
    for (c, sc) in layout.curves.iter().enumerate() {
        if weight[c] == 0.0 || sc.curve.degree() != k.n {
            continue;
        }
        let (x, y) = coords(&sc.curve);
        let gx = k.mat_vec(&k.area, &y);
        let gy = k.mat_t_vec(&k.area, &x);
        for i in 0..=k.n {
            grad[c][i] = Point2::new(weight[c] * gx[i], weight[c] * gy[i]);
        }
    }
    (value, grad)
}

/// `Σ ∫ σ₁‖S′‖² + σ₂‖S″‖²` over the given curves, integrated exactly.
pub fn f_shape(curves: &[&BezierCurve], sigma1: f64, sigma2: f64) -> f64 {
    curves
        .iter()
        .map(|c| {
            let sq = |h: &BezierCurve| {
                let (x, y) = (h.x_poly(), h.y_poly());
                x.product(&x).integral() + y.product(&y).integral()
            };
            let mut v = 0.0;
            if let Ok(d1) = c.derivative() {
                v += sigma1 * sq(&d1);
                if let Ok(d2) = d1.derivative() {
                    v += sigma2 * sq(&d2);
                }
            }
            v
        })
        .sum()
}

/// Shape energy of the free curves with per-curve weight multipliers, and its gradient.
pub fn f_shape_with_gradient(
    layout: &PatchLayout,
    sigma1: f64,
    sigma2: f64,
    weights: &[f64],
) -> (f64, CurveGradient) {
    let k = Kernels::new(layout.degree);
    shape_terms(layout, &k, sigma1, sigma2, weights)
}

fn shape_terms(
    layout: &PatchLayout,
    k: &Kernels,
    sigma1: f64,
    sigma2: f64,
    weights: &[f64],
) -> (f64, CurveGradient) {
    let mut grad = zero_gradient(layout);
    let m = k.n + 1;
    let g: Vec<f64> = (0..m * m)
        .map(|i| sigma1 * k.g1[i] + sigma2 * k.g2[i])
        .collect();
    let mut value = 0.0;
    for (c, sc) in layout.curves.iter().enumerate() {
        if sc.fixed {
            continue;
        }
        let w = weights.get(c).copied().unwrap_or(1.0);
        let (x, y) = coords(&sc.curve);
        let gx = k.mat_vec(&g, &x);
        let gy = k.mat_vec(&g, &y);
        value += w
            * (x.iter().zip(&gx).map(|(a, b)| a * b).sum::<f64>()
                + y.iter().zip(&gy).map(|(a, b)| a * b).sum::<f64>());
        for i in 0..m {
            grad[c][i] = Point2::new(2.0 * w * gx[i], 2.0 * w * gy[i]);
        }
    }
    (value, grad)
}

/// Tangent of `curve` at one end, pointing away from that end.
fn end_tangent(c: &BezierCurve, at_start: bool) -> Point2 {
    let p = &c.control_points;
    let n = c.degree() as f64;
    if at_start {
        (p[1] - p[0]) * n
    } else {
        (p[p.len() - 2] - p[p.len() - 1]) * n
    }
}

/// `Σ_v Σ_i (cos∠(T_i, T_{i+1}) − cos(2π/ρ_v))²` over interior vertices.
pub fn f_tangent(layout: &PatchLayout) -> f64 {
    let (v, _, zero) = tangent_terms(layout, &layout.vertex_stars(), false);
    if zero > 0 {
        warn!("{zero} zero tangent vector(s) penalized in the tangent term");
    }
    v
}

/// [`f_tangent`] and its control-point gradient.
pub fn f_tangent_with_gradient(layout: &PatchLayout) -> (f64, CurveGradient) {
    let (v, g, _) = tangent_terms(layout, &layout.vertex_stars(), true);
    (v, g)
}

fn tangent_terms(
    layout: &PatchLayout,
    stars: &[VertexStar],
    want_grad: bool,
) -> (f64, CurveGradient, usize) {
    let mut grad = if want_grad {
        zero_gradient(layout)
    } else {
        Vec::new()
    };
    let mut value = 0.0;
    let mut zero = 0;
    for star in stars {
        let rho = star.valence();
        let target = (2.0 * std::f64::consts::PI / rho as f64).cos();
        let t: Vec<Point2> = star
            .curves
            .iter()
            .map(|&(c, s)| end_tangent(&layout.curves[c].curve, s))
            .collect();
        for i in 0..rho {
            let j = (i + 1) % rho;
            let (a, b) = (t[i], t[j]);
            let (na, nb) = (a.norm(), b.norm());
            if na == 0.0 || nb == 0.0 {
                value += ZERO_TANGENT_PENALTY;
                zero += 1;
                continue;
            }
            let cos = a.dot(b) / (na * nb);
            let r = cos - target;
            value += r * r;
            if !want_grad {
                continue;
            }
            let da = b / (na * nb) - a * (cos / (na * na));
            let db = a / (na * nb) - b * (cos / (nb * nb));
            for (idx, d) in [(i, da), (j, db)] {
                let (c, s) = star.curves[idx];
                let n = layout.curves[c].curve.degree();
                let g = d * (2.0 * r * n as f64);
                // T = n(P1 − P0) at the start, n(P_{n−1} − P_n) at the end
                let (near, far) = if s { (1, 0) } else { (n - 1, n) };
                grad[c][near] += g;
                grad[c][far] -= g;
            }
        }
    }
    (value, grad, zero)
}

/// Weights and optimizer settings of the global objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalObjectiveConfig {
    pub sigma1: f64,
    pub sigma2: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub omega3: f64,
    pub lbfgs: LbfgsConfig,
}

impl From<&PipelineConfig> for GlobalObjectiveConfig {
    fn from(c: &PipelineConfig) -> Self {
        Self {
            sigma1: c.sigma1,
            sigma2: c.sigma2,
            omega1: c.omega1,
            omega2: c.omega2,
            omega3: c.omega3,
            lbfgs: c.lbfgs,
        }
    }
}

/// Values of the three objective terms and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    pub uniform: f64,
    pub shape: f64,
    pub tangent: f64,
    pub total: f64,
}

pub fn objective_terms(layout: &PatchLayout, cfg: &GlobalObjectiveConfig) -> ObjectiveTerms {
    let uniform = f_uniform(layout);
    let free: Vec<&BezierCurve> = layout
        .curves
        .iter()
        .filter(|c| !c.fixed)
        .map(|c| &c.curve)
        .collect();
    let shape = f_shape(&free, cfg.sigma1, cfg.sigma2);
    let (tangent, _, _) = tangent_terms(layout, &layout.vertex_stars(), false);
    ObjectiveTerms {
        uniform,
        shape,
        tangent,
        total: cfg.omega1 * uniform + cfg.omega2 * shape + cfg.omega3 * tangent,
    }
}

/// Linear map from optimizer variables to the interior control points of the free
/// curves. At every valence-4 interior vertex the first interior control points
/// `a, b, c, d` of the four curves (counter-clockwise) are tied by `a + c = b + d`,
/// which makes the corner conditions of the patch interfaces solvable; `d` is then
/// eliminated as `a + c − b`.
/// Signed combination of independent-point slots.
type Combination = Vec<(usize, f64)>;

#[derive(Debug, Clone)]
struct VariableMap {
    /// `(curve, index)` of each independent point.
    free: Vec<(usize, usize)>,
    /// Dependent point and its signed combination of independent-point slots.
    dependent: Vec<((usize, usize), Combination)>,
}

impl VariableMap {
    fn new(layout: &PatchLayout, stars: &[VertexStar]) -> Self {
        let n = layout.degree;
        let mut dep_of: BTreeMap<(usize, usize), [(usize, usize); 3]> = BTreeMap::new();
        for s in stars.iter().filter(|s| s.valence() == 4) {
            if s.curves.iter().any(|&(c, _)| layout.curves[c].fixed) {
                continue;
            }
            let p = |i: usize| {
                let (c, st) = s.curves[i];
                (c, if st { 1 } else { n - 1 })
            };
            dep_of.insert(p(3), [p(0), p(2), p(1)]);
        }
        let mut free = Vec::new();
        let mut slot = BTreeMap::new();
        for c in layout.free_curves() {
            for i in 1..n {
                if !dep_of.contains_key(&(c, i)) {
                    slot.insert((c, i), free.len());
                    free.push((c, i));
                }
            }
        }
        let dependent = dep_of
            .into_iter()
            .map(|(d, [a, c, b])| (d, vec![(slot[&a], 1.0), (slot[&c], 1.0), (slot[&b], -1.0)]))
            .collect();
        Self { free, dependent }
    }

    fn gather(&self, layout: &PatchLayout) -> Vec<f64> {
        self.free
            .iter()
            .flat_map(|&(c, i)| {
                let p = layout.curves[c].curve.control_points[i];
                [p.x, p.y]
            })
            .collect()
    }

    fn scatter(&self, z: &[f64], layout: &mut PatchLayout) {
        for (k, &(c, i)) in self.free.iter().enumerate() {
            layout.curves[c].curve.control_points[i] = Point2::new(z[2 * k], z[2 * k + 1]);
        }
        for ((c, i), combo) in &self.dependent {
            let p = combo.iter().fold(Point2::ZERO, |acc, &(s, w)| {
                acc + Point2::new(z[2 * s], z[2 * s + 1]) * w
            });
            layout.curves[*c].curve.control_points[*i] = p;
        }
    }

    fn pull_back(&self, g: &CurveGradient, out: &mut [f64]) {
        for (k, &(c, i)) in self.free.iter().enumerate() {
            out[2 * k] = g[c][i].x;
            out[2 * k + 1] = g[c][i].y;
        }
        for ((c, i), combo) in &self.dependent {
            for &(s, w) in combo {
                out[2 * s] += w * g[*c][*i].x;
                out[2 * s + 1] += w * g[*c][*i].y;
            }
        }
    }

    /// Projects the current layout onto the constraint set with the least change
    /// (the residual of `a + c − b − d` is spread equally).
    fn project(&self, layout: &mut PatchLayout) {
        for ((dc, di), combo) in &self.dependent {
            let pts: Vec<(Point2, f64, (usize, usize))> = combo
                .iter()
                .map(|&(s, w)| {
                    (
                        layout.curves[self.free[s].0].curve.control_points[self.free[s].1],
                        w,
                        self.free[s],
                    )
                })
                .collect();
            let d = layout.curves[*dc].curve.control_points[*di];
            let r = pts.iter().fold(Point2::ZERO, |acc, &(p, w, _)| acc + p * w) - d;
            for &(p, w, (c, i)) in &pts {
                layout.curves[c].curve.control_points[i] = p - r * (w / 4.0);
            }
            layout.curves[*dc].curve.control_points[*di] = d + r / 4.0;
        }
    }
}

/// Pair of curves whose control triangles overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CurveConflict {
    pub a: usize,
    pub b: usize,
}

/// Disjointness of the control triangles `△s_{i−1}s_i s_{i+1}` between every free curve
/// and every curve sharing an endpoint with it. An empty result certifies that the
/// curves meet only at their shared endpoints.
pub fn check_layout_validity(layout: &PatchLayout) -> Vec<CurveConflict> {
    let mut at_vertex: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (c, sc) in layout.curves.iter().enumerate() {
        at_vertex.entry(sc.ends[0]).or_default().push(c);
        at_vertex.entry(sc.ends[1]).or_default().push(c);
    }
    let triangles = |c: usize| -> Vec<[Point2; 3]> {
        let p = &layout.curves[c].curve.control_points;
        (1..p.len() - 1)
            .map(|i| [p[i - 1], p[i], p[i + 1]])
            .collect()
    };
    let mut out = Vec::new();
    for c in layout.free_curves() {
        let mut nbrs: Vec<usize> = layout.curves[c]
            .ends
            .iter()
            .flat_map(|v| at_vertex[v].iter().copied())
            .filter(|&o| o != c && (layout.curves[o].fixed || o > c))
            .collect();
        nbrs.sort_unstable();
        nbrs.dedup();
        let tc = triangles(c);
        for o in nbrs {
            let to = triangles(o);
            if tc.iter().any(|a| {
                to.iter()
                    .any(|b| triangles_overlap(*a, *b, TRIANGLE_SHRINK))
            }) {
                out.push(CurveConflict {
                    a: c.min(o),
                    b: c.max(o),
                });
            }
        }
    }
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationReport {
    pub initial: ObjectiveTerms,
    pub final_terms: ObjectiveTerms,
    pub iterations: usize,
    pub termination: Termination,
    /// Penalty restarts performed after disjointness violations.
    pub restarts: usize,
    /// Remaining violations (empty unless `reverted`).
    pub conflicts: Vec<CurveConflict>,
    /// True when all restarts failed and the straight initial curves were kept.
    pub reverted: bool,
    pub trace: Vec<TraceRow>,
}

/// Minimizes `ω₁F_uniform + ω₂F_shape + ω₃F_tangent` over the interior control points of
/// the free curves, restarting with doubled shape weight on curves whose control
/// triangles overlap.
pub fn optimize_segmentation(
    layout: &PatchLayout,
    cfg: &GlobalObjectiveConfig,
    restarts: usize,
) -> (PatchLayout, SegmentationReport) {
    let stars = layout.vertex_stars();
    let vars = VariableMap::new(layout, &stars);
    let kernels = Kernels::new(layout.degree);
    let mut start = layout.clone();
    vars.project(&mut start);
    let initial = objective_terms(&start, cfg);
    let mut weights = vec![1.0; layout.curves.len()];
    let mut attempt = 0;
    loop {
        let mut work = start.clone();
        let z0 = vars.gather(&work);
        let result = minimize(
            |z, g| {
                vars.scatter(z, &mut work);
                let (fu, gu) = uniform_terms(&work, &kernels);
                let (fs, gs) = shape_terms(&work, &kernels, cfg.sigma1, cfg.sigma2, &weights);
                let (ft, gt, _) = tangent_terms(&work, &stars, true);
                let total: CurveGradient = (0..work.curves.len())
                    .map(|c| {
                        (0..gu[c].len())
                            .map(|i| {
                                gu[c][i] * cfg.omega1
                                    + gs[c][i] * cfg.omega2
                                    + gt[c][i] * cfg.omega3
                            })
                            .collect()
                    })
                    .collect();
                vars.pull_back(&total, g);
                cfg.omega1 * fu + cfg.omega2 * fs + cfg.omega3 * ft
            },
            z0,
            &cfg.lbfgs,
        );
        let mut out = start.clone();
        vars.scatter(&result.x, &mut out);
        let conflicts = check_layout_validity(&out);
        info!(
            "segmentation attempt {attempt}: F {:.6e} → {:.6e} in {} iterations, {} conflict(s)",
            result.initial_value,
            result.value,
            result.iterations,
            conflicts.len()
        );
        if conflicts.is_empty() || attempt >= restarts {
            let reverted = !conflicts.is_empty();
            if reverted {
                warn!("segmentation curves still overlap after {attempt} restarts; keeping straight curves");
                out = start.clone();
            }
            let final_terms = objective_terms(&out, cfg);
            let report = SegmentationReport {
                initial,
                final_terms,
                iterations: result.iterations,
                termination: result.termination,
                restarts: attempt,
                conflicts: if reverted {
                    check_layout_validity(&out)
                } else {
                    Vec::new()
                },
                reverted,
                trace: result.trace,
            };
            return (out, report);
        }
        for c in &conflicts {
            for k in [c.a, c.b] {
                if !layout.curves[k].fixed {
                    weights[k] *= 2.0;
                }
            }
        }
        attempt += 1;
    }
}

/// Residual `max ‖a + c − b − d‖` of the first-interior-point condition at regular
/// interior vertices.
pub fn twist_residual(layout: &PatchLayout) -> f64 {
    let n = layout.degree;
    layout
        .vertex_stars()
        .iter()
        .filter(|s| s.valence() == 4)
        .map(|s| {
            let p: Vec<Point2> = s
                .curves
                .iter()
                .map(|&(c, st)| layout.curves[c].curve.control_points[if st { 1 } else { n - 1 }])
                .collect();
            (p[0] + p[2] - p[1] - p[3]).norm()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::splines::{LoopRole, SegmentOrigin};
    use crate::topology::MeshEdge;

    /// `k×k` grid layout on `[0,s]²` with boundary chain of `4k` straight segments.
    pub(crate) fn grid_layout(k: usize, s: f64, n: usize) -> PatchLayout {
        let id = |i: usize, j: usize| j * (k + 1) + i;
        let h = s / k as f64;
        let mut vertices = Vec::new();
        let mut boundary = Vec::new();
        for j in 0..=k {
            for i in 0..=k {
                vertices.push(Point2::new(i as f64 * h, j as f64 * h));
                boundary.push(i == 0 || j == 0 || i == k || j == k);
            }
        }
        // boundary ring counter-clockwise
        let mut ring = Vec::new();
        ring.extend((0..k).map(|i| id(i, 0)));
        ring.extend((0..k).map(|j| id(k, j)));
        ring.extend((0..k).map(|i| id(k - i, k)));
        ring.extend((0..k).map(|j| id(0, k - j)));
        let segs: Vec<BezierCurve> = (0..ring.len())
            .map(|t| BezierCurve::line(vertices[ring[t]], vertices[ring[(t + 1) % ring.len()]], n))
            .collect();
        let origins = (0..segs.len())
            .map(|t| SegmentOrigin {
                piece: t,
                span: 0,
                t0: 0.0,
                t1: 1.0,
            })
            .collect();
        let chain = SegmentChain {
            role: LoopRole::Outer,
            segments: segs,
            origins,
        };
        let mut edges = Vec::new();
        for t in 0..ring.len() {
            edges.push(MeshEdge {
                v: [ring[t], ring[(t + 1) % ring.len()]],
                kind: EdgeKind::Boundary {
                    ring: 0,
                    segment: t,
                },
            });
        }
        for j in 0..=k {
            for i in 0..=k {
                if i < k && j > 0 && j < k {
                    edges.push(MeshEdge {
                        v: [id(i, j), id(i + 1, j)],
                        kind: EdgeKind::Interior,
                    });
                }
                if j < k && i > 0 && i < k {
                    edges.push(MeshEdge {
                        v: [id(i, j), id(i, j + 1)],
                        kind: EdgeKind::Interior,
                    });
                }
            }
        }
        let mut quads = Vec::new();
        for j in 0..k {
            for i in 0..k {
                quads.push([id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let mesh = QuadMesh {
            vertices,
            boundary,
            quads,
            edges,
            fallback_pieces: 0,
        };
        mesh.check().unwrap();
        init_segmentation_curves(&mesh, &[chain], n).unwrap()
    }

    #[test]
    fn straight_initial_curve_is_equally_spaced() {
        let l = grid_layout(2, 8.0, 4);
        let c = l
            .curves
            .iter()
            .find(|c| !c.fixed && c.ends == [3, 4])
            .unwrap();
        let xs: Vec<f64> = c.curve.control_points.iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn unit_square_area_and_orientation() {
        let p = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        let cs: Vec<BezierCurve> = (0..4)
            .map(|i| BezierCurve::line(p[i], p[(i + 1) % 4], 4))
            .collect();
        let fwd: Vec<(&BezierCurve, bool)> = cs.iter().map(|c| (c, false)).collect();
        assert!((region_area(&fwd).unwrap() - 1.0).abs() < 1e-12);
        let bwd: Vec<(&BezierCurve, bool)> = cs.iter().rev().map(|c| (c, true)).collect();
        assert!((region_area(&bwd).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(region_area(&fwd[..3]), Err(SegmentationError::OpenLoop(2)));
    }

    #[test]
    fn area_kernel_matches_coefficient_formula() {
        let c = BezierCurve::new(vec![
            Point2::new(0.1, 0.3),
            Point2::new(1.0, -0.5),
            Point2::new(2.0, 0.7),
            Point2::new(2.5, 2.0),
            Point2::new(3.0, 1.0),
        ])
        .unwrap();
        let k = Kernels::new(4);
        let (x, y) = coords(&c);
        let sy = k.mat_vec(&k.area, &y);
        let a: f64 = x.iter().zip(&sy).map(|(a, b)| a * b).sum();
        assert!((a - curve_area_term(&c)).abs() < 1e-13);
    }

    #[test]
    fn uniform_of_equal_areas_is_zero() {
        let l = grid_layout(2, 2.0, 4);
        assert!(f_uniform(&l).abs() < 1e-24);
    }

    #[test]
    fn straight_unit_curve_shape_energy() {
        for n in [1, 3, 4, 7] {
            let c = BezierCurve::line(Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), n);
            assert!((f_shape(&[&c], 2.0, 1.0) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tangent_term_examples() {
        let l = grid_layout(2, 2.0, 4);
        assert!(f_tangent(&l) < 1e-24);
        // 80/100 degree cross
        let mut m = l.clone();
        let stars = m.vertex_stars();
        assert_eq!(stars.len(), 1);
        let s = &stars[0];
        let centre = m.mesh.vertices[s.vertex];
        let first = end_tangent(&m.curves[s.curves[0].0].curve, s.curves[0].1).angle();
        for (i, &(c, st)) in s.curves.iter().enumerate() {
            let ang = first + [0.0f64, 80.0, 180.0, 260.0][i].to_radians();
            let dir = Point2::new(ang.cos(), ang.sin()) * 0.25;
            let idx = if st { 1 } else { 3 };
            m.curves[c].curve.control_points[idx] = centre + dir;
        }
        let expected =
            2.0 * 80f64.to_radians().cos().powi(2) + 2.0 * 100f64.to_radians().cos().powi(2);
        assert!((f_tangent(&m) - expected).abs() < 1e-12);
        assert!((expected - 0.1206).abs() < 1e-4);
    }

    #[test]
    fn stars_are_counter_clockwise() {
        let l = grid_layout(2, 2.0, 4);
        let s = &l.vertex_stars()[0];
        let ang: Vec<f64> = s
            .curves
            .iter()
            .map(|&(c, st)| end_tangent(&l.curves[c].curve, st).angle())
            .collect();
        for i in 0..4 {
            let mut d = ang[(i + 1) % 4] - ang[i];
            if d < 0.0 {
                d += 2.0 * std::f64::consts::PI;
            }
            assert!((d - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_square_stays_an_orthogonal_cross() {
        let l = grid_layout(2, 2.0, 4);
        let cfg = GlobalObjectiveConfig::from(&PipelineConfig::default());
        let (out, rep) = optimize_segmentation(&l, &cfg, 4);
        assert!(rep.final_terms.total <= rep.initial.total + 1e-15);
        assert!(rep.final_terms.tangent < 1e-8);
        for c in out.curves.iter().filter(|c| !c.fixed) {
            let (a, b) = (c.curve.start(), c.curve.end());
            for p in &c.curve.control_points {
                assert!(crate::geometry::point_line_distance(*p, a, b) < 1e-9);
            }
        }
        assert!(check_layout_validity(&out).is_empty());
    }

    #[test]
    fn crossing_curves_are_reported() {
        let mut l = grid_layout(2, 2.0, 4);
        let free = l.free_curves();
        let (c0, c1) = (free[0], free[1]);
        // bend one curve across a neighbour sharing its endpoint
        let other = l.curves[c1].curve.clone();
        l.curves[c0].curve.control_points[2] =
            other.eval(0.5) + (other.eval(0.5) - l.curves[c0].curve.eval(0.5));
        assert!(!check_layout_validity(&l).is_empty());
        assert!(check_layout_validity(&grid_layout(2, 2.0, 4)).is_empty());
    }
}
