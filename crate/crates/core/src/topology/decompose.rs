//! Approximate convex decomposition by straight diagonals between polygon
//! vertices, followed by a conditioning pass that prepares pieces for the
//! quadrangulation templates.

use std::f64::consts::{FRAC_PI_2, PI};

use log::debug;
use serde::{Deserialize, Serialize};

use super::boundary::BridgedPolygon;
use crate::geometry::{
    bbox_diagonal, convex_hull, direction_in_wedge, interior_angle, point_segment_distance,
    segments_cross, segments_touch, Point2,
};

/// Reflex corners sharper than this (beyond a straight angle) are always cut.
pub const REFLEX_CUT_MARGIN: f64 = 10.0 * PI / 180.0;
/// A vertex turning by more than this counts as a corner.
pub const CORNER_TURN: f64 = 45.0 * PI / 180.0;
/// Templates exist for pieces with 3 to 5 corners.
pub const MAX_CORNERS: usize = 5;

/// Straight interior cut between two occurrences of the bridged polygon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cut {
    pub a: usize,
    pub b: usize,
}

/// Edge of a piece: a polygon edge (traversed in polygon order) or a cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PieceEdge {
    Polygon(usize),
    /// `forward` when traversed from `cut.a` to `cut.b`.
    Cut {
        cut: usize,
        forward: bool,
    },
}

/// Counter-clockwise sub-polygon; `edges[k]` joins `verts[k]` to `verts[k+1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiConvexPiece {
    pub verts: Vec<usize>,
    pub edges: Vec<PieceEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub pieces: Vec<QuasiConvexPiece>,
    pub cuts: Vec<Cut>,
}

impl QuasiConvexPiece {
    pub fn positions(&self, poly: &BridgedPolygon) -> Vec<Point2> {
        self.verts.iter().map(|&v| poly.points[v]).collect()
    }

    /// Interior angle at local vertex `k`.
    pub fn angle(&self, poly: &BridgedPolygon, k: usize) -> f64 {
        let n = self.verts.len();
        interior_angle(
            poly.points[self.verts[(k + n - 1) % n]],
            poly.points[self.verts[k]],
            poly.points[self.verts[(k + 1) % n]],
        )
    }

    pub fn angles(&self, poly: &BridgedPolygon) -> Vec<f64> {
        (0..self.verts.len()).map(|k| self.angle(poly, k)).collect()
    }

    /// Normalized concavity of each vertex: distance to the convex-hull boundary over
    /// the hull's bounding-box diagonal.
    pub fn concavity(&self, poly: &BridgedPolygon) -> Vec<f64> {
        let pts = self.positions(poly);
        let hull = convex_hull(&pts);
        let diag = bbox_diagonal(&hull).max(f64::MIN_POSITIVE);
        pts.iter()
            .map(|&p| {
                let m = hull.len();
                (0..m)
                    .map(|i| point_segment_distance(p, hull[i], hull[(i + 1) % m]))
                    .fold(f64::INFINITY, f64::min)
                    / diag
            })
            .collect()
    }

    /// True when both traversals of some bridge edge lie in this piece.
    pub fn wraps_slit(&self, poly: &BridgedPolygon) -> bool {
        self.edges.iter().any(|e| match *e {
            PieceEdge::Polygon(i) => poly
                .twin(i)
                .is_some_and(|t| self.edges.contains(&PieceEdge::Polygon(t))),
            PieceEdge::Cut { .. } => false,
        })
    }

    fn split(&self, i: usize, j: usize, cut: usize) -> (QuasiConvexPiece, QuasiConvexPiece) {
        let (i, j) = (i.min(j), i.max(j));
        let n = self.verts.len();
        // piece A: i..=j then back along the cut (b -> a), cut stored as a = verts[i], b = verts[j]
        let mut av: Vec<usize> = self.verts[i..=j].to_vec();
        let mut ae: Vec<PieceEdge> = self.edges[i..j].to_vec();
        ae.push(PieceEdge::Cut {
            cut,
            forward: false,
        });
        // piece B: j..n, 0..=i then the cut forward (a -> b)
        let mut bv: Vec<usize> = self.verts[j..n].to_vec();
        bv.extend_from_slice(&self.verts[..=i]);
        let mut be: Vec<PieceEdge> = self.edges[j..n].to_vec();
        be.extend_from_slice(&self.edges[..i]);
        be.push(PieceEdge::Cut { cut, forward: true });
        av.shrink_to_fit();
        ae.shrink_to_fit();
        (
            QuasiConvexPiece {
                verts: av,
                edges: ae,
            },
            QuasiConvexPiece {
                verts: bv,
                edges: be,
            },
        )
    }
}

/// True when local vertices `i` and `j` can be joined by a straight interior cut.
pub fn diagonal_is_valid(
    piece: &QuasiConvexPiece,
    poly: &BridgedPolygon,
    i: usize,
    j: usize,
) -> bool {
    let n = piece.verts.len();
    if i == j || (i + 1) % n == j || (j + 1) % n == i {
        return false;
    }
    let pts = piece.positions(poly);
    let a = pts[i];
    let b = pts[j];
    let len = a.distance(b);
    let scale = bbox_diagonal(&pts);
    if len <= 1e-12 * scale {
        return false;
    }
    let margin = 1e-3;
    if !direction_in_wedge(pts[(i + n - 1) % n], a, pts[(i + 1) % n], b - a, margin) {
        return false;
    }
    if !direction_in_wedge(pts[(j + n - 1) % n], b, pts[(j + 1) % n], a - b, margin) {
        return false;
    }
    let tol = 1e-9 * scale;
    for k in 0..n {
        let p = pts[k];
        let q = pts[(k + 1) % n];
        let touches_end = p == a || p == b || q == a || q == b;
        if touches_end {
            if segments_cross(a, b, p, q, 1e-12) {
                return false;
            }
            for o in [p, q] {
                if o != a && o != b && point_segment_distance(o, a, b) < tol {
                    return false;
                }
            }
            for o in [a, b] {
                if o != p && o != q && point_segment_distance(o, p, q) < tol {
                    return false;
                }
            }
        } else if segments_touch(a, b, p, q) {
            return false;
        }
    }
    true
}

/// Penalty of a sub-angle created by a cut: zero at right and straight angles.
fn subangle_cost(theta: f64) -> f64 {
    if theta > PI {
        4.0 * (theta - PI)
    } else {
        (theta - FRAC_PI_2).abs().min(PI - theta).powi(2)
    }
}

fn split_angles(piece: &QuasiConvexPiece, poly: &BridgedPolygon, i: usize, j: usize) -> [f64; 4] {
    let n = piece.verts.len();
    let p = |k: usize| poly.points[piece.verts[k % n]];
    [
        interior_angle(p(i + n - 1), p(i), p(j)),
        interior_angle(p(j), p(i), p(i + 1)),
        interior_angle(p(j + n - 1), p(j), p(i)),
        interior_angle(p(i), p(j), p(j + 1)),
    ]
}

fn diagonal_cost(
    piece: &QuasiConvexPiece,
    poly: &BridgedPolygon,
    i: usize,
    j: usize,
    scale: f64,
) -> f64 {
    let ang = split_angles(piece, poly, i, j);
    let len = poly.points[piece.verts[i]].distance(poly.points[piece.verts[j]]);
    ang.iter().map(|&t| subangle_cost(t)).sum::<f64>() + 0.1 * len / scale
}

/// Cheapest valid cut from local vertex `i`.
fn best_cut_from(
    piece: &QuasiConvexPiece,
    poly: &BridgedPolygon,
    i: usize,
) -> Option<(usize, f64)> {
    let scale = bbox_diagonal(&piece.positions(poly));
    let n = piece.verts.len();
    let mut best: Option<(usize, f64)> = None;
    for j in 0..n {
        if !diagonal_is_valid(piece, poly, i, j) {
            continue;
        }
        let c = diagonal_cost(piece, poly, i, j, scale);
        if best.is_none_or(|(_, bc)| c < bc) {
            best = Some((j, c));
        }
    }
    best
}

fn cut_piece(
    pieces: &mut Vec<QuasiConvexPiece>,
    cuts: &mut Vec<Cut>,
    idx: usize,
    i: usize,
    j: usize,
) {
    let piece = pieces[idx].clone();
    let (i, j) = (i.min(j), i.max(j));
    let cut = cuts.len();
    cuts.push(Cut {
        a: piece.verts[i],
        b: piece.verts[j],
    });
    let (a, b) = piece.split(i, j, cut);
    debug!(
        "cut {cut}: occurrences {} - {}",
        piece.verts[i], piece.verts[j]
    );
    pieces[idx] = a;
    pieces.insert(idx + 1, b);
}

/// Reflex vertices ordered by decreasing concavity.
fn reflex_by_concavity(piece: &QuasiConvexPiece, poly: &BridgedPolygon) -> Vec<(usize, f64)> {
    let ang = piece.angles(poly);
    let conc = piece.concavity(poly);
    let mut r: Vec<(usize, f64)> = (0..piece.verts.len())
        .filter(|&k| ang[k] > PI + 1e-9)
        .map(|k| (k, conc[k]))
        .collect();
    r.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    r
}

/// Largest normalized concavity over the reflex vertices of a piece; infinite when
/// the piece wraps around a bridge slit.
pub fn piece_concavity(piece: &QuasiConvexPiece, poly: &BridgedPolygon) -> f64 {
    if piece.wraps_slit(poly) {
        return f64::INFINITY;
    }
    reflex_by_concavity(piece, poly)
        .first()
        .map_or(0.0, |r| r.1)
}

/// Cuts the worst reflex vertex of any piece whose concavity exceeds `epsilon`,
/// until every piece is within tolerance.
pub fn approx_convex_decompose(poly: &BridgedPolygon, epsilon: f64) -> Decomposition {
    let whole = QuasiConvexPiece {
        verts: (0..poly.len()).collect(),
        edges: (0..poly.len()).map(PieceEdge::Polygon).collect(),
    };
    let mut pieces = vec![whole];
    let mut cuts = Vec::new();
    let mut guard = 0;
    'outer: while guard < 10 * poly.len() + 10 {
        guard += 1;
        for idx in 0..pieces.len() {
            let piece = &pieces[idx];
            let wraps = piece.wraps_slit(poly);
            let reflex = reflex_by_concavity(piece, poly);
            let worst = reflex.first().map_or(0.0, |r| r.1);
            if !(wraps || worst > epsilon) {
                continue;
            }
            for &(k, c) in &reflex {
                if !wraps && c <= epsilon {
                    break;
                }
                if let Some((j, _)) = best_cut_from(piece, poly, k) {
                    cut_piece(&mut pieces, &mut cuts, idx, k, j);
                    continue 'outer;
                }
            }
        }
        break;
    }
    Decomposition { pieces, cuts }
}

/// Number of corners (turning by more than [`CORNER_TURN`]).
pub fn corner_count(piece: &QuasiConvexPiece, poly: &BridgedPolygon) -> usize {
    piece
        .angles(poly)
        .iter()
        .filter(|&&a| (PI - a).abs() > CORNER_TURN)
        .count()
}

/// Cuts remaining sharp reflex corners and splits pieces with too many corners.
pub fn condition_pieces(poly: &BridgedPolygon, mut d: Decomposition) -> Decomposition {
    let mut guard = 0;
    'outer: while guard < 10 * poly.len() + 10 {
        guard += 1;
        for idx in 0..d.pieces.len() {
            let piece = d.pieces[idx].clone();
            let ang = piece.angles(poly);
            // sharp reflex corners first, sharpest first
            let mut reflex: Vec<usize> = (0..ang.len())
                .filter(|&k| ang[k] > PI + REFLEX_CUT_MARGIN)
                .collect();
            reflex.sort_by(|&a, &b| ang[b].total_cmp(&ang[a]).then(a.cmp(&b)));
            for k in reflex {
                if let Some((j, _)) = best_cut_from(&piece, poly, k) {
                    cut_piece(&mut d.pieces, &mut d.cuts, idx, k, j);
                    continue 'outer;
                }
            }
            if corner_count(&piece, poly) > MAX_CORNERS {
                if let Some((i, j)) = best_balancing_cut(&piece, poly) {
                    cut_piece(&mut d.pieces, &mut d.cuts, idx, i, j);
                    continue 'outer;
                }
            }
        }
        break;
    }
    d
}

fn best_balancing_cut(piece: &QuasiConvexPiece, poly: &BridgedPolygon) -> Option<(usize, usize)> {
    let n = piece.verts.len();
    let scale = bbox_diagonal(&piece.positions(poly));
    let ang = piece.angles(poly);
    let is_corner = |a: f64| (PI - a).abs() > CORNER_TURN;
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..n {
        for j in i + 2..n {
            if !diagonal_is_valid(piece, poly, i, j) {
                continue;
            }
            let sa = split_angles(piece, poly, i, j);
            // corners of the two halves
            let inner_a = (i + 1..j).filter(|&k| is_corner(ang[k])).count();
            let inner_b = (j + 1..n + i).filter(|&k| is_corner(ang[k % n])).count();
            let ca = inner_a + usize::from(is_corner(sa[1])) + usize::from(is_corner(sa[2]));
            let cb = inner_b + usize::from(is_corner(sa[0])) + usize::from(is_corner(sa[3]));
            let off = |c: usize| {
                if (3..=MAX_CORNERS).contains(&c) {
                    0.0
                } else {
                    1.0 + (c as f64 - 4.0).abs()
                }
            };
            let cost = diagonal_cost(piece, poly, i, j, scale)
                + 5.0 * (off(ca) + off(cb))
                + 0.2 * ((ca as f64 - 4.0).abs() + (cb as f64 - 4.0).abs());
            if best.is_none_or(|b| cost < b.2) {
                best = Some((i, j, cost));
            }
        }
    }
    best.map(|b| (b.0, b.1))
}
