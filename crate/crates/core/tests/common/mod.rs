//! Shared helpers for the integration tests: asset loading, random instances and
//! independent reference implementations ("oracles") that share no code with the
//! library paths they check.

#![allow(dead_code)]

use iga_partition::io::load_boundary;
use iga_partition::patchfit::BezierPatch;
use iga_partition::pipeline::{stage_preprocess, stage_topology};
use iga_partition::segmentation::{init_segmentation_curves, PatchLayout};
use iga_partition::splines::{BSplineCurve, BoundaryLoop};
use iga_partition::{PipelineConfig, Point2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ASSETS: [&str; 4] = ["square", "lshape", "annulus", "two_holes"];

pub fn asset(name: &str) -> Vec<BoundaryLoop> {
    load_boundary(format!("{}/assets/{name}.json", env!("CARGO_MANIFEST_DIR")))
        .expect("shipped asset loads")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Straight-curve segmentation layout of a shipped asset at the default configuration.
pub fn straight_layout(name: &str) -> PatchLayout {
    let cfg = PipelineConfig::default();
    let pre = stage_preprocess(&asset(name), &cfg).expect("preprocess");
    let topo = stage_topology(&pre, &cfg).expect("topology");
    init_segmentation_curves(&topo.mesh, &topo.chains, pre.degree).expect("segmentation curves")
}

/// Moves every interior control point of every free curve by up to `amp` times the
/// curve's chord length.
pub fn perturb_free_curves(layout: &mut PatchLayout, amp: f64, rng: &mut ChaCha8Rng) {
    for c in layout.curves.iter_mut().filter(|c| !c.fixed) {
        let pts = &mut c.curve.control_points;
        let chord = (pts[pts.len() - 1] - pts[0]).norm();
        let last = pts.len() - 1;
        for p in &mut pts[1..last] {
            *p += Point2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                * (amp * chord);
        }
    }
}

/// Identity net of degree `n` with every control point jittered by up to `amp`.
pub fn random_patch(n: usize, amp: f64, rng: &mut ChaCha8Rng) -> BezierPatch {
    let mut p = BezierPatch::identity(n);
    for q in &mut p.net {
        *q += Point2::new(rng.random_range(-amp..amp), rng.random_range(-amp..amp));
    }
    p
}

/// `C(n, k)` by the multiplicative formula.
pub fn choose(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Bernstein basis by its closed form.
pub fn bernstein(i: usize, n: usize, t: f64) -> f64 {
    choose(n, i) * t.powi(i as i32) * (1.0 - t).powi((n - i) as i32)
}

pub fn bezier_point(cps: &[Point2], t: f64) -> Point2 {
    let n = cps.len() - 1;
    cps.iter()
        .enumerate()
        .fold(Point2::ZERO, |acc, (i, &p)| acc + p * bernstein(i, n, t))
}

/// Jacobian determinant from the closed-form partial derivatives of the net.
pub fn jacobian_at(p: &BezierPatch, u: f64, v: f64) -> f64 {
    let n = p.degree;
    let at = |i: usize, j: usize| p.net[i * (n + 1) + j];
    let (mut ru, mut rv) = (Point2::ZERO, Point2::ZERO);
    for i in 0..n {
        for j in 0..=n {
            ru += (at(i + 1, j) - at(i, j))
                * (n as f64 * bernstein(i, n - 1, u) * bernstein(j, n, v));
        }
    }
    for i in 0..=n {
        for j in 0..n {
            rv += (at(i, j + 1) - at(i, j))
                * (n as f64 * bernstein(i, n, u) * bernstein(j, n - 1, v));
        }
    }
    ru.x * rv.y - ru.y * rv.x
}

/// Cox–de Boor evaluation through the recursive basis functions.
pub fn de_boor(c: &BSplineCurve, t: f64) -> Point2 {
    let p = c.degree;
    let k = &c.knots;
    let m = c.control_points.len();
    let last = k[k.len() - 1];
    fn basis(k: &[f64], i: usize, p: usize, t: f64, last: f64) -> f64 {
        if p == 0 {
            let inside = k[i] <= t && t < k[i + 1];
            let at_end = t == last && k[i] < k[i + 1] && k[i + 1] == last;
            return if inside || at_end { 1.0 } else { 0.0 };
        }
        let mut s = 0.0;
        let d1 = k[i + p] - k[i];
        if d1 > 0.0 {
            s += (t - k[i]) / d1 * basis(k, i, p - 1, t, last);
        }
        let d2 = k[i + p + 1] - k[i + 1];
        if d2 > 0.0 {
            s += (k[i + p + 1] - t) / d2 * basis(k, i + 1, p - 1, t, last);
        }
        s
    }
    (0..m).fold(Point2::ZERO, |acc, i| {
        acc + c.control_points[i] * basis(k, i, p, t, last)
    })
}

/// Random clamped B-spline: degree 1–5, 0–6 interior knots (some repeated).
pub fn random_bspline(rng: &mut ChaCha8Rng) -> BSplineCurve {
    let p = rng.random_range(1..=5usize);
    let mut interior: Vec<f64> = (0..rng.random_range(0..=6usize))
        .map(|_| rng.random_range(0.05..0.95))
        .collect();
    if p >= 2 && !interior.is_empty() && rng.random_bool(0.3) {
        let dup = interior[0];
        interior.push(dup);
    }
    interior.sort_by(f64::total_cmp);
    let (a, b) = (rng.random_range(-2.0..0.0), rng.random_range(0.5..3.0));
    let mut knots = vec![a; p + 1];
    knots.extend(interior.iter().map(|t| a + (b - a) * t));
    knots.extend(std::iter::repeat_n(b, p + 1));
    let m = knots.len() - p - 1;
    let cps = (0..m)
        .map(|_| Point2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
        .collect();
    BSplineCurve::new(p, knots, cps).expect("random spline is well formed")
}

/// Shoelace area of a closed polyline.
pub fn shoelace(points: &[Point2]) -> f64 {
    let m = points.len();
    0.5 * (0..m)
        .map(|i| points[i].cross(points[(i + 1) % m]))
        .sum::<f64>()
}

/// Interior-vertex valences of a quad mesh, computed from its quads.
pub fn interior_valences(mesh: &iga_partition::topology::QuadMesh) -> Vec<usize> {
    let mut nb: Vec<std::collections::BTreeSet<usize>> =
        vec![Default::default(); mesh.vertices.len()];
    for q in &mesh.quads {
        for k in 0..4 {
            nb[q[k]].insert(q[(k + 1) % 4]);
            nb[q[(k + 1) % 4]].insert(q[k]);
        }
    }
    (0..mesh.vertices.len())
        .filter(|&v| !mesh.boundary[v] && !nb[v].is_empty())
        .map(|v| nb[v].len())
        .collect()
}
