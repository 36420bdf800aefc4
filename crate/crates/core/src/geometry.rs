//! Planar points and the handful of predicates the mesher and validity checks need.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// A point (or vector) in the plane. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ZERO: Point2 = Point2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn distance(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    #[inline]
    pub fn lerp(self, o: Point2, t: f64) -> Point2 {
        self + (o - self) * t
    }

    /// Counter-clockwise rotation by 90 degrees.
    #[inline]
    pub fn perp(self) -> Point2 {
        Point2::new(-self.y, self.x)
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Polar angle in `(-pi, pi]`.
    #[inline]
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point2 {
    type Output = Point2;
    #[inline]
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Point2 {
    #[inline]
    fn add_assign(&mut self, o: Point2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Point2 {
    type Output = Point2;
    #[inline]
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Point2 {
    #[inline]
    fn sub_assign(&mut self, o: Point2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    #[inline]
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Mul<Point2> for f64 {
    type Output = Point2;
    #[inline]
    fn mul(self, p: Point2) -> Point2 {
        p * self
    }
}

impl Div<f64> for Point2 {
    type Output = Point2;
    #[inline]
    fn div(self, s: f64) -> Point2 {
        Point2::new(self.x / s, self.y / s)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    #[inline]
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

impl std::iter::Sum for Point2 {
    fn sum<I: Iterator<Item = Point2>>(iter: I) -> Point2 {
        iter.fold(Point2::ZERO, |a, b| a + b)
    }
}

/// Twice the signed area of triangle `abc` (positive when counter-clockwise).
#[inline]
pub fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

/// Signed area of a closed polygon (shoelace).
pub fn polygon_area(points: &[Point2]) -> f64 {
    let n = points.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        s += points[i].cross(points[(i + 1) % n]);
    }
    0.5 * s
}

/// Area centroid of a simple polygon; falls back to the vertex mean when degenerate.
pub fn polygon_centroid(points: &[Point2]) -> Point2 {
    let n = points.len();
    let a = polygon_area(points);
    if a.abs() < 1e-14 {
        return points.iter().copied().sum::<Point2>() / n as f64;
    }
    let mut c = Point2::ZERO;
    for i in 0..n {
        let p = points[i];
        let q = points[(i + 1) % n];
        let w = p.cross(q);
        c += (p + q) * w;
    }
    c / (6.0 * a)
}

/// Axis-aligned bounding box diagonal.
pub fn bbox_diagonal(points: &[Point2]) -> f64 {
    let (mut lo, mut hi) = (
        Point2::new(f64::INFINITY, f64::INFINITY),
        Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
    );
    for p in points {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    if points.is_empty() {
        0.0
    } else {
        (hi - lo).norm()
    }
}

/// Distance from `p` to the closed segment `ab`.
pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let d = b - a;
    let l2 = d.norm_squared();
    if l2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(d) / l2).clamp(0.0, 1.0);
    p.distance(a + d * t)
}

/// Distance from `p` to the infinite line through `a` and `b`.
pub fn point_line_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let d = b - a;
    let l = d.norm();
    if l == 0.0 {
        return p.distance(a);
    }
    (p - a).cross(d).abs() / l
}

/// True when the open segments `ab` and `cd` cross at a single interior point.
pub fn segments_cross(a: Point2, b: Point2, c: Point2, d: Point2, tol: f64) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    let s = (b - a).norm() * (d - c).norm() * tol;
    ((d1 > s && d2 < -s) || (d1 < -s && d2 > s)) && ((d3 > s && d4 < -s) || (d3 < -s && d4 > s))
}

/// True when the closed segments `ab` and `cd` share at least one point.
pub fn segments_touch(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |p: Point2, q: Point2, r: Point2, o: f64| {
        o == 0.0
            && r.x >= p.x.min(q.x)
            && r.x <= p.x.max(q.x)
            && r.y >= p.y.min(q.y)
            && r.y <= p.y.max(q.y)
    };
    on(c, d, a, d1) || on(c, d, b, d2) || on(a, b, c, d3) || on(a, b, d, d4)
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: Point2, poly: &[Point2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Interior angle at `v` of a counter-clockwise polygon walking `prev -> v -> next`,
/// in `[0, 2pi)`.
pub fn interior_angle(prev: Point2, v: Point2, next: Point2) -> f64 {
    let a = (next - v).angle();
    let b = (prev - v).angle();
    let mut t = b - a;
    while t < 0.0 {
        t += std::f64::consts::TAU;
    }
    while t >= std::f64::consts::TAU {
        t -= std::f64::consts::TAU;
    }
    t
}

/// True when direction `d` leaves `v` strictly inside the interior wedge at `v`
/// (counter-clockwise polygon), with an angular margin `margin`.
pub fn direction_in_wedge(prev: Point2, v: Point2, next: Point2, d: Point2, margin: f64) -> bool {
    let wedge = interior_angle(prev, v, next);
    let a0 = (next - v).angle();
    let mut t = d.angle() - a0;
    while t < 0.0 {
        t += std::f64::consts::TAU;
    }
    while t >= std::f64::consts::TAU {
        t -= std::f64::consts::TAU;
    }
    t > margin && t < wedge - margin
}

/// Counter-clockwise convex hull (Andrew's monotone chain), collinear points dropped.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && orient(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && orient(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Separating-axis test for two (possibly degenerate) triangles.
///
/// Each triangle is first shrunk toward its centroid by the relative factor `shrink`, so
/// that contact confined to a shared vertex or edge does not count as overlap.
pub fn triangles_overlap(t1: [Point2; 3], t2: [Point2; 3], shrink: f64) -> bool {
    let shrunk = |t: [Point2; 3]| {
        let c = (t[0] + t[1] + t[2]) / 3.0;
        t.map(|p| c + (p - c) * (1.0 - shrink))
    };
    let a = shrunk(t1);
    let b = shrunk(t2);
    let mut axes: Vec<Point2> = Vec::with_capacity(12);
    for t in [&a, &b] {
        for i in 0..3 {
            let e = t[(i + 1) % 3] - t[i];
            if e.norm_squared() > 0.0 {
                axes.push(e.perp());
                axes.push(e);
            }
        }
    }
    if axes.is_empty() {
        return a[0] == b[0];
    }
    for ax in axes {
        let (mut lo1, mut hi1) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut lo2, mut hi2) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in a {
            let v = p.dot(ax);
            lo1 = lo1.min(v);
            hi1 = hi1.max(v);
        }
        for p in b {
            let v = p.dot(ax);
            lo2 = lo2.min(v);
            hi2 = hi2.max(v);
        }
        if hi1 < lo2 || hi2 < lo1 {
            return false;
        }
    }
    true
}
