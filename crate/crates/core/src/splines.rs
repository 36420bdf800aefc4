//! B-spline boundary ingestion: Bézier extraction, adaptive subdivision and the
//! global degree policy.

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bernstein::{BernsteinError, BezierCurve};
use crate::config::PipelineConfig;
use crate::geometry::{bbox_diagonal, point_line_distance, polygon_area, Point2};

/// Patches below this degree cannot always satisfy the continuity systems.
pub const MIN_DEGREE: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("piece has degree 0")]
    ZeroDegree,
    #[error("expected {expected} knots for {control_points} control points of degree {degree}, got {got}")]
    KnotCount {
        degree: usize,
        control_points: usize,
        expected: usize,
        got: usize,
    },
    #[error("knot vector decreases at index {0}")]
    NonMonotoneKnots(usize),
    #[error("knot vector is not clamped (end multiplicities must be degree + 1)")]
    Unclamped,
    #[error("interior knot {value} has multiplicity {multiplicity} > degree {degree}")]
    InteriorMultiplicity {
        value: f64,
        multiplicity: usize,
        degree: usize,
    },
    #[error("knot vector has zero length parameter range")]
    EmptyDomain,
    #[error("non-finite value in piece data")]
    NonFinite,
    #[error("loop {loop_index}: piece {piece} ends at ({ex}, {ey}) but next piece starts at ({sx}, {sy})")]
    OpenLoop {
        loop_index: usize,
        piece: usize,
        ex: f64,
        ey: f64,
        sx: f64,
        sy: f64,
    },
    #[error("loop {0} encloses zero area")]
    DegenerateLoop(usize),
    #[error("loop {0} has no pieces")]
    EmptyLoop(usize),
    #[error("expected exactly one outer loop, found {0}")]
    OuterCount(usize),
    #[error("degree {0} exceeds the supported maximum")]
    DegreeTooHigh(usize),
    #[error(transparent)]
    Bernstein(#[from] BernsteinError),
}

/// Clamped B-spline curve in the plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineCurve {
    pub degree: usize,
    pub knots: Vec<f64>,
    pub control_points: Vec<Point2>,
}

impl BSplineCurve {
    pub fn new(
        degree: usize,
        knots: Vec<f64>,
        control_points: Vec<Point2>,
    ) -> Result<Self, SplineError> {
        let c = Self {
            degree,
            knots,
            control_points,
        };
        c.validate()?;
        Ok(c)
    }

    /// A single Bézier segment as a B-spline (knots `[0^(p+1), 1^(p+1)]`).
    pub fn from_bezier(b: &BezierCurve) -> Self {
        let p = b.degree();
        let mut knots = vec![0.0; p + 1];
        knots.extend(std::iter::repeat_n(1.0, p + 1));
        Self {
            degree: p,
            knots,
            control_points: b.control_points.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), SplineError> {
        let p = self.degree;
        if p == 0 {
            return Err(SplineError::ZeroDegree);
        }
        if p > 28 {
            return Err(SplineError::DegreeTooHigh(p));
        }
        let expected = self.control_points.len() + p + 1;
        if self.knots.len() != expected || self.control_points.len() < p + 1 {
            return Err(SplineError::KnotCount {
                degree: p,
                control_points: self.control_points.len(),
                expected,
                got: self.knots.len(),
            });
        }
        if self.knots.iter().any(|k| !k.is_finite())
            || self.control_points.iter().any(|q| !q.is_finite())
        {
            return Err(SplineError::NonFinite);
        }
        if let Some(i) = self.knots.windows(2).position(|w| w[1] < w[0]) {
            return Err(SplineError::NonMonotoneKnots(i + 1));
        }
        let (a, b) = (self.knots[0], self.knots[self.knots.len() - 1]);
        if b <= a {
            return Err(SplineError::EmptyDomain);
        }
        let m = self.knots.len();
        if self.knots[..=p].iter().any(|&k| k != a)
            || self.knots[m - p - 1..].iter().any(|&k| k != b)
        {
            return Err(SplineError::Unclamped);
        }
        for (value, multiplicity) in distinct_interior(&self.knots, p) {
            if multiplicity > p {
                return Err(SplineError::InteriorMultiplicity {
                    value,
                    multiplicity,
                    degree: p,
                });
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    /// de Boor evaluation.
    pub fn eval(&self, t: f64) -> Point2 {
        let p = self.degree;
        let u = &self.knots;
        let (a, b) = self.domain();
        let t = t.clamp(a, b);
        let nctrl = self.control_points.len();
        // span k with u[k] <= t < u[k+1], the last non-empty span at the right end
        let mut k = p;
        while k + 1 < nctrl && u[k + 1] <= t {
            k += 1;
        }
        let mut d: Vec<Point2> = (0..=p).map(|j| self.control_points[j + k - p]).collect();
        for r in 1..=p {
            for j in (r..=p).rev() {
                let i = j + k - p;
                let denom = u[i + p + 1 - r] - u[i];
                let alpha = if denom == 0.0 {
                    0.0
                } else {
                    (t - u[i]) / denom
                };
                d[j] = d[j - 1] * (1.0 - alpha) + d[j] * alpha;
            }
        }
        d[p]
    }

    /// Boehm insertion of a single knot; returns the refined curve.
    pub fn insert_knot(&self, t: f64) -> BSplineCurve {
        let p = self.degree;
        let u = &self.knots;
        let nctrl = self.control_points.len();
        let mut k = p;
        while k + 1 < nctrl && u[k + 1] <= t {
            k += 1;
        }
        let s = u.iter().filter(|&&x| x == t).count();
        let q = &self.control_points;
        let mut out = Vec::with_capacity(nctrl + 1);
        for i in 0..=nctrl {
            let pt = if i + p <= k {
                q[i]
            } else if i + s <= k {
                let a = (t - u[i]) / (u[i + p] - u[i]);
                q[i - 1] * (1.0 - a) + q[i] * a
            } else {
                q[i - 1]
            };
            out.push(pt);
        }
        let mut knots = u.clone();
        knots.insert(k + 1, t);
        BSplineCurve {
            degree: p,
            knots,
            control_points: out,
        }
    }

    /// One Bézier segment per non-empty knot span, obtained by raising every
    /// interior knot to multiplicity `p`.
    pub fn bezier_extract(&self) -> Result<Vec<BezierCurve>, SplineError> {
        self.validate()?;
        let p = self.degree;
        let mut c = self.clone();
        for (value, multiplicity) in distinct_interior(&self.knots, p) {
            for _ in multiplicity..p {
                c = c.insert_knot(value);
            }
        }
        let spans = (c.control_points.len() - 1) / p;
        debug_assert_eq!(spans * p + 1, c.control_points.len());
        Ok((0..spans)
            .map(|s| BezierCurve {
                control_points: c.control_points[s * p..=s * p + p].to_vec(),
            })
            .collect())
    }

    /// The same point set traversed backwards.
    pub fn reversed(&self) -> BSplineCurve {
        let (a, b) = self.domain();
        let knots = self.knots.iter().rev().map(|k| a + b - k).collect();
        let mut cp = self.control_points.clone();
        cp.reverse();
        BSplineCurve {
            degree: self.degree,
            knots,
            control_points: cp,
        }
    }

    pub fn start(&self) -> Point2 {
        self.control_points[0]
    }

    pub fn end(&self) -> Point2 {
        self.control_points[self.control_points.len() - 1]
    }
}

/// Distinct interior knot values with their multiplicities.
fn distinct_interior(knots: &[f64], p: usize) -> Vec<(f64, usize)> {
    let m = knots.len();
    let mut out: Vec<(f64, usize)> = Vec::new();
    for &k in &knots[p + 1..m - p - 1] {
        match out.last_mut() {
            Some((v, mult)) if *v == k => *mult += 1,
            _ => out.push((k, 1)),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopRole {
    Outer,
    Hole,
}

/// One closed boundary loop made of B-spline pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLoop {
    pub role: LoopRole,
    pub pieces: Vec<BSplineCurve>,
}

impl BoundaryLoop {
    /// Validates each piece and the closure of the loop.
    pub fn validate(&self, loop_index: usize) -> Result<(), SplineError> {
        if self.pieces.is_empty() {
            return Err(SplineError::EmptyLoop(loop_index));
        }
        for piece in &self.pieces {
            piece.validate()?;
        }
        let pts: Vec<Point2> = self
            .pieces
            .iter()
            .flat_map(|p| p.control_points.iter().copied())
            .collect();
        let tol = 1e-9 * bbox_diagonal(&pts).max(f64::MIN_POSITIVE);
        let n = self.pieces.len();
        for i in 0..n {
            let e = self.pieces[i].end();
            let s = self.pieces[(i + 1) % n].start();
            if e.distance(s) > tol {
                return Err(SplineError::OpenLoop {
                    loop_index,
                    piece: i,
                    ex: e.x,
                    ey: e.y,
                    sx: s.x,
                    sy: s.y,
                });
            }
        }
        Ok(())
    }

    /// Signed area of a dense polyline sampling of the loop.
    pub fn sampled_area(&self, per_span: usize) -> f64 {
        let mut pts = Vec::new();
        for piece in &self.pieces {
            let (a, b) = piece.domain();
            let spans = piece.control_points.len();
            let k = per_span * spans;
            for i in 0..k {
                pts.push(piece.eval(a + (b - a) * i as f64 / k as f64));
            }
        }
        polygon_area(&pts)
    }

    pub fn reversed(&self) -> BoundaryLoop {
        BoundaryLoop {
            role: self.role,
            pieces: self
                .pieces
                .iter()
                .rev()
                .map(BSplineCurve::reversed)
                .collect(),
        }
    }
}

/// Where a Bézier segment of a chain came from: source piece, knot span within the
/// piece, and the sub-interval `[t0, t1]` of that span after subdivision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentOrigin {
    pub piece: usize,
    pub span: usize,
    pub t0: f64,
    pub t1: f64,
}

/// Closed chain of equal-degree Bézier segments for one boundary loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentChain {
    pub role: LoopRole,
    pub segments: Vec<BezierCurve>,
    pub origins: Vec<SegmentOrigin>,
}

impl SegmentChain {
    pub fn degree(&self) -> usize {
        self.segments.first().map_or(0, BezierCurve::degree)
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Splits segment `idx` at `t = 0.5`; the halves occupy `idx` and `idx + 1`.
    pub fn split_segment(&mut self, idx: usize) {
        let (a, b) = self.segments[idx].split(0.5).expect("0.5 is interior");
        let o = self.origins[idx];
        let mid = 0.5 * (o.t0 + o.t1);
        self.segments[idx] = a;
        self.segments.insert(idx + 1, b);
        self.origins[idx] = SegmentOrigin { t1: mid, ..o };
        self.origins.insert(idx + 1, SegmentOrigin { t0: mid, ..o });
    }

    /// True when consecutive segments share their endpoint bitwise and the chain closes.
    pub fn is_closed(&self) -> bool {
        let n = self.segments.len();
        (0..n).all(|i| self.segments[i].end() == self.segments[(i + 1) % n].start())
    }

    /// Signed area of the polygon through the segment endpoints, refined by 8 samples
    /// per segment so two-segment loops are not degenerate.
    pub fn sampled_area(&self) -> f64 {
        let pts: Vec<Point2> = self
            .segments
            .iter()
            .flat_map(|s| (0..8).map(move |i| s.eval(i as f64 / 8.0)))
            .collect();
        polygon_area(&pts)
    }
}

/// Hull bound on the distance from the curve to its chord: the largest
/// control-point distance to the chord line (or to the start point for a closed
/// chord).
pub fn chord_deviation(c: &BezierCurve) -> f64 {
    let a = c.start();
    let b = c.end();
    if a.distance(b) == 0.0 {
        return c
            .control_points
            .iter()
            .map(|p| p.distance(a))
            .fold(0.0, f64::max);
    }
    c.control_points
        .iter()
        .map(|&p| point_line_distance(p, a, b))
        .fold(0.0, f64::max)
}

/// Largest componentwise second difference of the control polygon.
pub fn second_difference_max(c: &BezierCurve) -> f64 {
    c.control_points
        .windows(3)
        .map(|w| {
            let d = w[0] - w[1] * 2.0 + w[2];
            d.x.abs().max(d.y.abs())
        })
        .fold(0.0, f64::max)
}

/// Upper bound on the number of halvings needed so that the curve lies within
/// `l_ave` of its chord: `max(0, ceil(log4(√3 n(n−1) η / (8 L_ave))))`.
pub fn subdivision_depth(c: &BezierCurve, l_ave: f64) -> u32 {
    let n = c.degree() as f64;
    let eta = second_difference_max(c);
    if eta == 0.0 || n < 2.0 {
        return 0;
    }
    let ratio = 3f64.sqrt() * n * (n - 1.0) * eta / (8.0 * l_ave);
    if ratio <= 1.0 {
        return 0;
    }
    // guard against log rounding pushing exact powers of four up one level
    let g = ratio.log(4.0) - 1e-12;
    g.ceil().max(0.0) as u32
}

/// Output of boundary pre-processing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessedBoundary {
    pub chains: Vec<SegmentChain>,
    /// Average chord length of the extracted segments, frozen before splitting.
    pub l_ave: f64,
    pub degree: usize,
    /// Per extracted segment (flattened over loops): number of halvings applied
    /// along the deepest branch, and the a-priori bound.
    pub split_depths: Vec<(u32, u32)>,
    /// How many times `L_ave` was evaluated (always 1).
    pub l_ave_evaluations: usize,
}

/// Normalizes orientation (outer counter-clockwise, holes clockwise).
pub fn normalize_orientation(loops: &[BoundaryLoop]) -> Result<Vec<BoundaryLoop>, SplineError> {
    let outer = loops.iter().filter(|l| l.role == LoopRole::Outer).count();
    if outer != 1 {
        return Err(SplineError::OuterCount(outer));
    }
    let mut out = Vec::with_capacity(loops.len());
    for (i, l) in loops.iter().enumerate() {
        l.validate(i)?;
        let area = l.sampled_area(16);
        let pts: Vec<Point2> = l
            .pieces
            .iter()
            .flat_map(|p| p.control_points.iter().copied())
            .collect();
        let diag = bbox_diagonal(&pts);
        if area.abs() <= 1e-12 * diag * diag {
            return Err(SplineError::DegenerateLoop(i));
        }
        let want_ccw = l.role == LoopRole::Outer;
        if (area > 0.0) != want_ccw {
            debug!("reversing loop {i} to normalize orientation");
            out.push(l.reversed());
        } else {
            out.push(l.clone());
        }
    }
    // outer loop first
    out.sort_by_key(|l| l.role != LoopRole::Outer);
    Ok(out)
}

/// Extraction → frozen `L_ave` → hull-criterion halving → elevation to the common degree.
pub fn preprocess_boundary(
    loops: &[BoundaryLoop],
    cfg: &PipelineConfig,
) -> Result<PreprocessedBoundary, SplineError> {
    let loops = normalize_orientation(loops)?;

    // (a) extraction
    let mut extracted: Vec<Vec<(BezierCurve, SegmentOrigin)>> = Vec::with_capacity(loops.len());
    let mut max_degree = 0;
    for l in &loops {
        let mut segs = Vec::new();
        for (pi, piece) in l.pieces.iter().enumerate() {
            max_degree = max_degree.max(piece.degree);
            for (si, b) in piece.bezier_extract()?.into_iter().enumerate() {
                segs.push((
                    b,
                    SegmentOrigin {
                        piece: pi,
                        span: si,
                        t0: 0.0,
                        t1: 1.0,
                    },
                ));
            }
        }
        extracted.push(segs);
    }

    // (b) L_ave, computed exactly once
    let mut l_ave_evaluations = 0;
    let l_ave = {
        l_ave_evaluations += 1;
        let (sum, count) = extracted
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, c), (b, _)| {
                (s + b.start().distance(b.end()), c + 1)
            });
        sum / count as f64
    };
    if !(l_ave > 0.0) {
        return Err(SplineError::DegenerateLoop(0));
    }

    // (c) split while the hull bound exceeds L_ave
    let degree = MIN_DEGREE.max(max_degree).max(cfg.degree.unwrap_or(0));
    if degree > 28 {
        return Err(SplineError::DegreeTooHigh(degree));
    }
    let mut split_depths = Vec::new();
    let mut chains = Vec::with_capacity(loops.len());
    for (l, segs) in loops.iter().zip(extracted) {
        let mut out_segs = Vec::new();
        let mut origins = Vec::new();
        for (b, o) in segs {
            let bound = subdivision_depth(&b, l_ave);
            let mut deepest = 0;
            split_recursive(&b, o, l_ave, 0, &mut deepest, &mut out_segs, &mut origins);
            if deepest > bound {
                warn!("segment needed {deepest} halvings, a-priori bound {bound}");
            }
            split_depths.push((deepest, bound));
        }
        // exact endpoint sharing, then (d) elevation
        let n = out_segs.len();
        for i in 0..n {
            let next_start = out_segs[(i + 1) % n].start();
            let last = out_segs[i].control_points.len() - 1;
            out_segs[i].control_points[last] = next_start;
        }
        let segments = out_segs
            .iter()
            .map(|s| s.elevate(degree))
            .collect::<Result<Vec<_>, _>>()?;
        chains.push(SegmentChain {
            role: l.role,
            segments,
            origins,
        });
    }
    Ok(PreprocessedBoundary {
        chains,
        l_ave,
        degree,
        split_depths,
        l_ave_evaluations,
    })
}

fn split_recursive(
    b: &BezierCurve,
    o: SegmentOrigin,
    l_ave: f64,
    depth: u32,
    deepest: &mut u32,
    segs: &mut Vec<BezierCurve>,
    origins: &mut Vec<SegmentOrigin>,
) {
    *deepest = (*deepest).max(depth);
    if chord_deviation(b) <= l_ave || depth >= 32 {
        segs.push(b.clone());
        origins.push(o);
        return;
    }
    let (l, r) = b.split(0.5).expect("0.5 is interior");
    let mid = 0.5 * (o.t0 + o.t1);
    split_recursive(
        &l,
        SegmentOrigin { t1: mid, ..o },
        l_ave,
        depth + 1,
        deepest,
        segs,
        origins,
    );
    split_recursive(
        &r,
        SegmentOrigin { t0: mid, ..o },
        l_ave,
        depth + 1,
        deepest,
        segs,
        origins,
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    #[test]
    fn single_span_extraction_is_identity() {
        let c = BSplineCurve::new(
            3,
            vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0],
            vec![p(0.0, 0.0), p(1.0, 1.0), p(2.0, -1.0), p(3.0, 0.0)],
        )
        .unwrap();
        let segs = c.bezier_extract().unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].control_points, c.control_points);
    }

    #[test]
    fn two_span_extraction_matches_de_boor() {
        let c = BSplineCurve::new(
            3,
            vec![0.0, 0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0, 1.0],
            vec![
                p(0.0, 0.0),
                p(1.0, 2.0),
                p(2.0, -1.0),
                p(3.0, 1.0),
                p(4.0, 0.0),
            ],
        )
        .unwrap();
        let segs = c.bezier_extract().unwrap();
        assert_eq!(segs.len(), 2);
        for k in 0..=100 {
            let t = k as f64 / 100.0;
            let q = if t < 0.5 {
                segs[0].eval(2.0 * t)
            } else {
                segs[1].eval(2.0 * t - 1.0)
            };
            assert!(q.distance(c.eval(t)) < 1e-12, "t={t}");
        }
    }

    #[test]
    fn triple_knot_gives_c0_join() {
        let c = BSplineCurve::new(
            3,
            vec![0.0, 0.0, 0.0, 0.0, 0.4, 0.4, 0.4, 1.0, 1.0, 1.0, 1.0],
            vec![
                p(0.0, 0.0),
                p(1.0, 2.0),
                p(2.0, -1.0),
                p(3.0, 1.0),
                p(4.0, 0.0),
                p(5.0, 2.0),
                p(6.0, 0.0),
            ],
        )
        .unwrap();
        let segs = c.bezier_extract().unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].end(), segs[1].start());
        assert!(segs[0].end().distance(c.eval(0.4)) < 1e-14);
    }

    #[test]
    fn rejects_bad_knots() {
        let cp = vec![p(0.0, 0.0), p(1.0, 1.0), p(2.0, 0.0), p(3.0, 1.0)];
        let err =
            BSplineCurve::new(3, vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0], cp.clone()).unwrap_err();
        assert!(matches!(err, SplineError::KnotCount { .. }));
        let err =
            BSplineCurve::new(3, vec![0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0, 1.0], cp).unwrap_err();
        assert_eq!(err, SplineError::Unclamped);
    }

    #[test]
    fn chord_deviation_examples() {
        let line = BezierCurve::line(p(0.0, 0.0), p(3.0, 1.0), 4);
        assert!(chord_deviation(&line) < 1e-15);
        let q = BezierCurve::new(vec![p(0.0, 0.0), p(1.0, 2.0), p(2.0, 0.0)]).unwrap();
        assert_eq!(chord_deviation(&q), 2.0);
        let sampled = (0..=1000)
            .map(|i| point_line_distance(q.eval(i as f64 / 1000.0), p(0.0, 0.0), p(2.0, 0.0)))
            .fold(0.0, f64::max);
        assert!((sampled - 1.0).abs() < 1e-12);
    }

    #[test]
    fn subdivision_depth_examples() {
        let line = BezierCurve::line(p(0.0, 0.0), p(3.0, 0.0), 3);
        assert_eq!(subdivision_depth(&line, 1.0), 0);
        // η chosen so the log argument is exactly 4
        let l_ave = 1.0;
        let eta = 8.0 * l_ave * 4.0 / (3f64.sqrt() * 6.0);
        let c = BezierCurve::new(vec![p(0.0, 0.0), p(1.0, 0.0), p(2.0, eta), p(3.0, 0.0)]).unwrap();
        assert!(
            (second_difference_max(&c) - 2.0 * eta).abs() < 1e-12
                || second_difference_max(&c) >= eta
        );
        let c = BezierCurve::new(vec![
            p(0.0, 0.0),
            p(1.0, 0.0),
            p(2.0, eta),
            p(3.0, 2.0 * eta),
        ])
        .unwrap();
        assert!((second_difference_max(&c) - eta).abs() < 1e-12);
        assert_eq!(subdivision_depth(&c, l_ave), 1);
    }

    #[test]
    fn reversed_spline_traces_same_points() {
        let c = BSplineCurve::new(
            2,
            vec![0.0, 0.0, 0.0, 0.3, 1.0, 1.0, 1.0],
            vec![p(0.0, 0.0), p(1.0, 2.0), p(2.0, -1.0), p(4.0, 0.0)],
        )
        .unwrap();
        let r = c.reversed();
        for k in 0..=20 {
            let t = k as f64 / 20.0;
            assert!(c.eval(t).distance(r.eval(1.0 - t)) < 1e-13);
        }
    }
}
