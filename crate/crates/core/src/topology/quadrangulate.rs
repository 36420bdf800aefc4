//! Template quadrangulation of quasi-convex pieces.
//!
//! Each piece picks 3, 4 or 5 corners. Four corners give a structured grid (opposite
//! sides need equal edge counts); three or five give a fan around one central
//! vertex of valence 3 or 5, built from `M` small grids. Edge counts on polygon
//! edges and cuts are chosen jointly by a budgeted depth-first search so that every
//! piece's template constraints hold. A piece with no admissible template is
//! triangulated and midpoint-split.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::boundary::{BridgedPolygon, PolyEdge};
use super::decompose::{Decomposition, PieceEdge, QuasiConvexPiece};
use super::mesh::{EdgeKind, MeshEdge, QuadMesh};
use super::TopologyError;
use crate::geometry::{orient, polygon_centroid, Point2};
use crate::splines::SegmentChain;

const RESIDUAL_WEIGHT: f64 = 4.0;
const FALLBACK_COST: f64 = 50.0;
const MAX_CUT_COUNT: u8 = 6;
const OPTIONS_PER_TEMPLATE: usize = 4;
const CANDIDATES_PER_M: usize = 2;

/// How one piece is meshed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PieceMeshing {
    /// `corners` are local vertex indices (counter-clockwise); `sides[t]` is the edge
    /// count from corner `t` to corner `t+1`.
    Template {
        corners: Vec<usize>,
        sides: Vec<usize>,
    },
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateCandidate {
    pub corners: Vec<usize>,
    pub residual: f64,
}

/// Shared edge-count variables: one per boundary segment, one per bridge sub-edge
/// pair, one per cut.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGroups {
    pub of_polygon_edge: Vec<usize>,
    pub of_cut: Vec<usize>,
    pub lo: Vec<u8>,
    pub hi: Vec<u8>,
    pub ideal: Vec<f64>,
}

impl EdgeGroups {
    pub fn new(poly: &BridgedPolygon, d: &Decomposition) -> Self {
        let n = poly.len();
        let h = {
            let (s, c) = (0..n)
                .filter(|&i| matches!(poly.edges[i], PolyEdge::Boundary { .. }))
                .fold((0.0, 0usize), |(s, c), i| {
                    (s + poly.points[i].distance(poly.points[(i + 1) % n]), c + 1)
                });
            if c == 0 {
                1.0
            } else {
                s / c as f64
            }
        };
        let mut of_polygon_edge = vec![usize::MAX; n];
        let (mut lo, mut hi, mut ideal) = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..n {
            if of_polygon_edge[i] != usize::MAX {
                continue;
            }
            let g = lo.len();
            of_polygon_edge[i] = g;
            if let Some(t) = poly.twin(i) {
                of_polygon_edge[t] = g;
            }
            lo.push(1);
            hi.push(2);
            ideal.push(poly.points[i].distance(poly.points[(i + 1) % n]) / h);
        }
        let mut of_cut = Vec::with_capacity(d.cuts.len());
        for c in &d.cuts {
            of_cut.push(lo.len());
            lo.push(1);
            hi.push(MAX_CUT_COUNT);
            ideal.push(poly.points[c.a].distance(poly.points[c.b]) / h);
        }
        Self {
            of_polygon_edge,
            of_cut,
            lo,
            hi,
            ideal,
        }
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    pub fn of(&self, e: PieceEdge) -> usize {
        match e {
            PieceEdge::Polygon(i) => self.of_polygon_edge[i],
            PieceEdge::Cut { cut, .. } => self.of_cut[cut],
        }
    }

    fn cost(&self, g: usize, c: u8) -> f64 {
        (c as f64 - self.ideal[g]).powi(2)
    }
}

/// Corner sets for 3, 4 and 5 corners, best residual first.
pub fn template_candidates(
    piece: &QuasiConvexPiece,
    poly: &BridgedPolygon,
) -> Vec<TemplateCandidate> {
    let ang = piece.angles(poly);
    let n = ang.len();
    // restrict the combinatorics to the sharpest turning vertices on large pieces
    let mut pool: Vec<usize> = (0..n).collect();
    if n > 12 {
        pool.sort_by(|&a, &b| {
            (PI - ang[b])
                .abs()
                .total_cmp(&(PI - ang[a]).abs())
                .then(a.cmp(&b))
        });
        pool.truncate(12);
        pool.sort_unstable();
    }
    let straight_cost: f64 = ang.iter().map(|a| (a - PI).powi(2)).sum();
    let mut out = Vec::new();
    for m in 3..=5usize {
        if pool.len() < m {
            continue;
        }
        let ideal = (m as f64 - 2.0) * PI / m as f64;
        let mut best: Vec<TemplateCandidate> = Vec::new();
        let mut idx: Vec<usize> = (0..m).collect();
        loop {
            let corners: Vec<usize> = idx.iter().map(|&i| pool[i]).collect();
            let residual = straight_cost
                + corners
                    .iter()
                    .map(|&c| (ang[c] - ideal).powi(2) - (ang[c] - PI).powi(2))
                    .sum::<f64>();
            best.push(TemplateCandidate { corners, residual });
            best.sort_by(|a, b| a.residual.total_cmp(&b.residual));
            best.truncate(CANDIDATES_PER_M);
            // next combination
            let mut k = m;
            while k > 0 && idx[k - 1] == pool.len() - m + k - 1 {
                k -= 1;
            }
            if k == 0 {
                break;
            }
            idx[k - 1] += 1;
            for r in k..m {
                idx[r] = idx[r - 1] + 1;
            }
        }
        out.extend(best);
    }
    out.sort_by(|a, b| {
        a.residual
            .total_cmp(&b.residual)
            .then(a.corners.len().cmp(&b.corners.len()))
    });
    out
}

/// Achievable totals of one side and the cheapest assignment of its free variables.
struct SideTable {
    lo: usize,
    costs: Vec<f64>,
    free: Vec<usize>,
    order: Vec<usize>,
}

impl SideTable {
    fn new(fixed: usize, free: Vec<usize>, groups: &EdgeGroups) -> Self {
        let mut cur: Vec<u8> = free.iter().map(|&g| groups.lo[g]).collect();
        let lo = fixed + cur.iter().map(|&c| c as usize).sum::<usize>();
        let mut cost: f64 = free
            .iter()
            .zip(&cur)
            .map(|(&g, &c)| groups.cost(g, c))
            .sum();
        let mut costs = vec![cost];
        let mut order = Vec::new();
        loop {
            let mut pick: Option<(usize, f64)> = None;
            for (k, &g) in free.iter().enumerate() {
                if cur[k] >= groups.hi[g] {
                    continue;
                }
                let m = groups.cost(g, cur[k] + 1) - groups.cost(g, cur[k]);
                if pick.is_none_or(|(_, pm)| m < pm) {
                    pick = Some((k, m));
                }
            }
            let Some((k, m)) = pick else { break };
            cur[k] += 1;
            cost += m;
            costs.push(cost);
            order.push(k);
        }
        Self {
            lo,
            costs,
            free,
            order,
        }
    }

    fn hi(&self) -> usize {
        self.lo + self.costs.len() - 1
    }

    fn cost(&self, s: usize) -> Option<f64> {
        if s < self.lo || s > self.hi() {
            None
        } else {
            Some(self.costs[s - self.lo])
        }
    }

    fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, c) in self.costs.iter().enumerate() {
            if *c < self.costs[best] {
                best = i;
            }
        }
        self.lo + best
    }

    fn window(&self, width: usize) -> Vec<usize> {
        let c = self.argmin();
        let a = c.saturating_sub(width / 2).max(self.lo);
        let b = (a + width - 1).min(self.hi());
        let a = b.saturating_sub(width - 1).max(self.lo);
        (a..=b).collect()
    }

    fn assignment(&self, s: usize, groups: &EdgeGroups) -> Vec<(usize, u8)> {
        let mut cur: Vec<u8> = self.free.iter().map(|&g| groups.lo[g]).collect();
        for &k in &self.order[..s - self.lo] {
            cur[k] += 1;
        }
        self.free.iter().copied().zip(cur).collect()
    }
}

/// One admissible way to mesh a piece given the already fixed counts.
#[derive(Debug, Clone)]
struct PieceOption {
    cost: f64,
    meshing: PieceMeshing,
    assign: Vec<(usize, u8)>,
}

fn piece_options(
    piece: &QuasiConvexPiece,
    cands: &[TemplateCandidate],
    groups: &EdgeGroups,
    counts: &[Option<u8>],
) -> Vec<PieceOption> {
    let mut out = Vec::new();
    let n = piece.verts.len();
    for cand in cands {
        let m = cand.corners.len();
        let tables: Vec<SideTable> = (0..m)
            .map(|t| {
                let (a, b) = (cand.corners[t], cand.corners[(t + 1) % m]);
                let mut fixed = 0;
                let mut free = Vec::new();
                let mut k = a;
                while k != b {
                    let g = groups.of(piece.edges[k]);
                    match counts[g] {
                        Some(c) => fixed += c as usize,
                        None => free.push(g),
                    }
                    k = (k + 1) % n;
                }
                SideTable::new(fixed, free, groups)
            })
            .collect();
        let base = RESIDUAL_WEIGHT * cand.residual;
        let mut opts: Vec<(f64, Vec<usize>)> = Vec::new();
        match m {
            4 => {
                let pair = |i: usize, j: usize| -> Vec<(f64, usize)> {
                    let lo = tables[i].lo.max(tables[j].lo);
                    let hi = tables[i].hi().min(tables[j].hi());
                    let mut v: Vec<(f64, usize)> = (lo..=hi)
                        .filter_map(|s| Some((tables[i].cost(s)? + tables[j].cost(s)?, s)))
                        .collect();
                    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    v.truncate(3);
                    v
                };
                for (ca, a) in pair(0, 2) {
                    for (cb, b) in pair(1, 3) {
                        opts.push((ca + cb, vec![a, b, a, b]));
                    }
                }
            }
            3 | 5 => {
                let width = if m == 3 { 8 } else { 6 };
                let windows: Vec<Vec<usize>> = tables.iter().map(|t| t.window(width)).collect();
                let mut idx = vec![0usize; m];
                'enumerate: loop {
                    let s: Vec<usize> = (0..m).map(|t| windows[t][idx[t]]).collect();
                    if fan_spokes(&s).is_some() {
                        let c: f64 = (0..m)
                            .map(|t| tables[t].cost(s[t]).unwrap_or(f64::INFINITY))
                            .sum();
                        opts.push((c, s));
                    }
                    let mut t = 0;
                    loop {
                        idx[t] += 1;
                        if idx[t] < windows[t].len() {
                            break;
                        }
                        idx[t] = 0;
                        t += 1;
                        if t == m {
                            break 'enumerate;
                        }
                    }
                }
            }
            _ => unreachable!("templates have 3 to 5 corners"),
        }
        opts.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        opts.truncate(OPTIONS_PER_TEMPLATE);
        for (c, sides) in opts {
            let mut assign = Vec::new();
            for t in 0..m {
                assign.extend(tables[t].assignment(sides[t], groups));
            }
            out.push(PieceOption {
                cost: base + c,
                meshing: PieceMeshing::Template {
                    corners: cand.corners.clone(),
                    sides,
                },
                assign,
            });
        }
    }
    // fallback: every edge of the piece split once
    let mut ok = true;
    let mut assign = Vec::new();
    let mut cost = FALLBACK_COST;
    for &e in &piece.edges {
        let g = groups.of(e);
        match counts[g] {
            Some(2) => {}
            Some(_) => ok = false,
            None => {
                if !assign.iter().any(|&(x, _)| x == g) {
                    assign.push((g, 2));
                    cost += groups.cost(g, 2);
                }
            }
        }
    }
    if ok {
        out.push(PieceOption {
            cost,
            meshing: PieceMeshing::Fallback,
            assign,
        });
    }
    out.sort_by(|a, b| a.cost.total_cmp(&b.cost));
    out
}

/// Spoke counts of a fan with side counts `s`, when admissible.
pub fn fan_spokes(s: &[usize]) -> Option<Vec<usize>> {
    let m = s.len();
    let total: usize = s.iter().sum();
    if !total.is_multiple_of(2) {
        return None;
    }
    let t = (total / 2) as i64;
    let k: Vec<i64> = match m {
        3 => (0..3).map(|i| t - s[i] as i64).collect(),
        5 => (0..5)
            .map(|i| t - s[(i + 2) % 5] as i64 - s[(i + 3) % 5] as i64)
            .collect(),
        _ => return None,
    };
    if k.iter().all(|&x| x >= 1) {
        Some(k.into_iter().map(|x| x as usize).collect())
    } else {
        None
    }
}

struct Search<'a> {
    pieces: &'a [QuasiConvexPiece],
    cands: Vec<Vec<TemplateCandidate>>,
    groups: &'a EdgeGroups,
    order: Vec<usize>,
    counts: Vec<Option<u8>>,
    choice: Vec<Option<PieceMeshing>>,
    best: Option<(f64, Vec<u8>, Vec<PieceMeshing>)>,
    nodes: usize,
    budget: usize,
}

impl Search<'_> {
    fn dfs(&mut self, depth: usize, acc: f64) {
        if self.nodes >= self.budget {
            return;
        }
        self.nodes += 1;
        if depth == self.order.len() {
            if self.best.as_ref().is_none_or(|b| acc < b.0) {
                let counts = self.counts.iter().map(|c| c.unwrap_or(1)).collect();
                let choice = self
                    .choice
                    .iter()
                    .map(|c| c.clone().expect("all pieces chosen"))
                    .collect();
                self.best = Some((acc, counts, choice));
            }
            return;
        }
        let p = self.order[depth];
        let opts = piece_options(&self.pieces[p], &self.cands[p], self.groups, &self.counts);
        for opt in opts {
            let total = acc + opt.cost;
            if self.best.as_ref().is_some_and(|b| total >= b.0) {
                break;
            }
            for &(g, c) in &opt.assign {
                self.counts[g] = Some(c);
            }
            self.choice[p] = Some(opt.meshing.clone());
            self.dfs(depth + 1, total);
            for &(g, _) in &opt.assign {
                self.counts[g] = None;
            }
            self.choice[p] = None;
            if self.nodes >= self.budget {
                return;
            }
        }
    }
}

/// Breadth-first order of pieces through shared cuts.
fn piece_order(pieces: &[QuasiConvexPiece], groups: &EdgeGroups) -> Vec<usize> {
    let mut by_group: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (p, piece) in pieces.iter().enumerate() {
        for &e in &piece.edges {
            by_group.entry(groups.of(e)).or_default().push(p);
        }
    }
    let mut seen = vec![false; pieces.len()];
    let mut order = Vec::with_capacity(pieces.len());
    for start in 0..pieces.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            order.push(p);
            for &e in &pieces[p].edges {
                for &q in &by_group[&groups.of(e)] {
                    if !seen[q] {
                        seen[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    order
}

/// Solves the edge counts and per-piece meshing choice.
pub fn solve_counts(
    poly: &BridgedPolygon,
    d: &Decomposition,
    budget: usize,
) -> (EdgeGroups, Vec<u8>, Vec<PieceMeshing>) {
    let groups = EdgeGroups::new(poly, d);
    let cands: Vec<Vec<TemplateCandidate>> = d
        .pieces
        .iter()
        .map(|p| template_candidates(p, poly))
        .collect();
    let order = piece_order(&d.pieces, &groups);
    let mut s = Search {
        pieces: &d.pieces,
        cands,
        groups: &groups,
        order,
        counts: vec![None; groups.len()],
        choice: vec![None; d.pieces.len()],
        best: None,
        nodes: 0,
        budget,
    };
    s.dfs(0, 0.0);
    debug!("count search visited {} nodes", s.nodes);
    match s.best {
        Some((cost, counts, choice)) => {
            debug!("count search cost {cost:.4}");
            (groups, counts, choice)
        }
        None => {
            warn!(
                "edge-count search found no template solution; meshing all pieces by the fallback"
            );
            let counts = vec![2; groups.len()];
            (groups, counts, vec![PieceMeshing::Fallback; d.pieces.len()])
        }
    }
}

/// Mesh plus the boundary chains with count-2 segments split at `t = 0.5`.
pub struct Quadrangulation {
    pub mesh: QuadMesh,
    pub chains: Vec<SegmentChain>,
    pub meshing: Vec<PieceMeshing>,
}

struct Builder {
    verts: Vec<Point2>,
    boundary: Vec<bool>,
    quads: Vec<[usize; 4]>,
}

impl Builder {
    fn add(&mut self, p: Point2, on_boundary: bool) -> usize {
        self.verts.push(p);
        self.boundary.push(on_boundary);
        self.verts.len() - 1
    }

    /// Structured grid from four boundary vertex rows: `bottom` (corner 0→1), `right`
    /// (1→2), `top` (3→2), `left` (0→3); interior points by Coons interpolation.
    fn grid(&mut self, bottom: &[usize], right: &[usize], top: &[usize], left: &[usize]) {
        let a = bottom.len() - 1;
        let b = left.len() - 1;
        debug_assert_eq!(top.len(), a + 1);
        debug_assert_eq!(right.len(), b + 1);
        let mut g = vec![vec![usize::MAX; b + 1]; a + 1];
        for i in 0..=a {
            g[i][0] = bottom[i];
            g[i][b] = top[i];
        }
        g[0].copy_from_slice(&left[..=b]);
        g[a].copy_from_slice(&right[..=b]);
        let p = |v: usize, s: &Builder| s.verts[v];
        for i in 1..a {
            for j in 1..b {
                let (u, v) = (i as f64 / a as f64, j as f64 / b as f64);
                let q = p(bottom[i], self) * (1.0 - v)
                    + p(top[i], self) * v
                    + p(left[j], self) * (1.0 - u)
                    + p(right[j], self) * u
                    - (p(bottom[0], self) * ((1.0 - u) * (1.0 - v))
                        + p(bottom[a], self) * (u * (1.0 - v))
                        + p(top[a], self) * (u * v)
                        + p(top[0], self) * ((1.0 - u) * v));
                g[i][j] = self.add(q, false);
            }
        }
        for i in 0..a {
            for j in 0..b {
                self.quads
                    .push([g[i][j], g[i + 1][j], g[i + 1][j + 1], g[i][j + 1]]);
            }
        }
    }
}

/// Builds the quad mesh for a solved decomposition.
pub fn quadrangulate(
    poly: &BridgedPolygon,
    d: &Decomposition,
    chains: &[SegmentChain],
    budget: usize,
) -> Result<Quadrangulation, TopologyError> {
    let (groups, counts, meshing) = solve_counts(poly, d, budget);
    let n = poly.len();
    let mut bld = Builder {
        verts: poly.points.clone(),
        boundary: vec![true; n],
        quads: Vec::new(),
    };

    // final chains and the boundary sub-edge bookkeeping
    let mut new_chains: Vec<SegmentChain> = chains.to_vec();
    let mut first_final: Vec<Vec<usize>> = chains.iter().map(|c| vec![0; c.len()]).collect();
    for (r, c) in chains.iter().enumerate() {
        let mut split_at = Vec::new();
        let mut idx = 0;
        for s in 0..c.len() {
            first_final[r][s] = idx;
            let e = (0..n)
                .find(|&i| {
                    poly.edges[i]
                        == PolyEdge::Boundary {
                            ring: r,
                            segment: s,
                        }
                })
                .ok_or(TopologyError::Internal(
                    "boundary segment missing from polygon",
                ))?;
            let k = counts[groups.of_polygon_edge[e]];
            if k == 2 {
                split_at.push(idx);
            }
            idx += k as usize;
        }
        for &at in split_at.iter().rev() {
            new_chains[r].split_segment(at - split_at.iter().filter(|&&x| x < at).count());
        }
    }

    // subdivision vertices along polygon edges (each occurrence separately: slits stay open)
    let mut edge_pts: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let k = counts[groups.of_polygon_edge[i]] as usize;
        let (a, b) = (poly.points[i], poly.points[(i + 1) % n]);
        for r in 1..k {
            let p = match poly.edges[i] {
                PolyEdge::Boundary { ring, segment } => {
                    // the split point of the chain, bitwise
                    let f = first_final[ring][segment] + r - 1;
                    new_chains[ring].segments[f].end()
                }
                PolyEdge::Bridge { .. } => a.lerp(b, r as f64 / k as f64),
            };
            edge_pts[i].push(bld.add(p, true));
        }
    }
    let mut cut_pts: Vec<Vec<usize>> = Vec::with_capacity(d.cuts.len());
    for (c, cut) in d.cuts.iter().enumerate() {
        let k = counts[groups.of_cut[c]] as usize;
        let (a, b) = (poly.points[cut.a], poly.points[cut.b]);
        cut_pts.push(
            (1..k)
                .map(|r| bld.add(a.lerp(b, r as f64 / k as f64), false))
                .collect(),
        );
    }

    let mut fallback_pieces = 0;
    for (p, piece) in d.pieces.iter().enumerate() {
        // full vertex loop of the piece with the position of each local vertex
        let mut ring: Vec<usize> = Vec::new();
        let mut at: Vec<usize> = Vec::with_capacity(piece.verts.len());
        for (k, &e) in piece.edges.iter().enumerate() {
            at.push(ring.len());
            ring.push(piece.verts[k]);
            match e {
                PieceEdge::Polygon(i) => ring.extend_from_slice(&edge_pts[i]),
                PieceEdge::Cut { cut, forward } => {
                    if forward {
                        ring.extend_from_slice(&cut_pts[cut]);
                    } else {
                        ring.extend(cut_pts[cut].iter().rev());
                    }
                }
            }
        }
        let len = ring.len();
        let side = |a: usize, b: usize| -> Vec<usize> {
            let mut v = vec![ring[a]];
            let mut k = a;
            while k != b {
                k = (k + 1) % len;
                v.push(ring[k]);
            }
            v
        };
        match &meshing[p] {
            PieceMeshing::Template { corners, sides } => {
                let m = corners.len();
                let sv: Vec<Vec<usize>> = (0..m)
                    .map(|t| side(at[corners[t]], at[corners[(t + 1) % m]]))
                    .collect();
                for t in 0..m {
                    if sv[t].len() != sides[t] + 1 {
                        return Err(TopologyError::Internal("side count mismatch"));
                    }
                }
                if m == 4 {
                    let top: Vec<usize> = sv[2].iter().rev().copied().collect();
                    let left: Vec<usize> = sv[3].iter().rev().copied().collect();
                    bld.grid(&sv[0], &sv[1], &top, &left);
                } else {
                    let k = fan_spokes(sides).ok_or(TopologyError::Internal("inadmissible fan"))?;
                    let pos: Vec<Point2> = ring.iter().map(|&v| bld.verts[v]).collect();
                    let center = bld.add(polygon_centroid(&pos), false);
                    // spoke t from the center to the split point of side t
                    let split: Vec<usize> = (0..m).map(|t| sv[t][k[(t + m - 1) % m]]).collect();
                    let spokes: Vec<Vec<usize>> = (0..m)
                        .map(|t| {
                            let (o, q) = (bld.verts[center], bld.verts[split[t]]);
                            let mut s = vec![center];
                            for r in 1..k[t] {
                                s.push(bld.add(o.lerp(q, r as f64 / k[t] as f64), false));
                            }
                            s.push(split[t]);
                            s
                        })
                        .collect();
                    for t in 0..m {
                        let u = (t + 1) % m;
                        let bottom = &sv[t][k[(t + m - 1) % m]..];
                        let right = &sv[u][..=k[t]];
                        let top = &spokes[u];
                        let left: Vec<usize> = spokes[t].iter().rev().copied().collect();
                        bld.grid(bottom, right, top, &left);
                    }
                }
            }
            PieceMeshing::Fallback => {
                fallback_pieces += 1;
                let local: Vec<usize> = piece.verts.clone();
                let mids: Vec<usize> = (0..piece.verts.len()).map(|k| ring[at[k] + 1]).collect();
                let pts: Vec<Point2> = local.iter().map(|&v| bld.verts[v]).collect();
                let tris = ear_clip(&pts);
                let mut diag_mid: BTreeMap<(usize, usize), usize> = BTreeMap::new();
                let nv = local.len();
                let mut mid = |a: usize, b: usize, bld: &mut Builder| -> usize {
                    if (a + 1) % nv == b {
                        return mids[a];
                    }
                    if (b + 1) % nv == a {
                        return mids[b];
                    }
                    let key = (a.min(b), a.max(b));
                    *diag_mid.entry(key).or_insert_with(|| {
                        bld.add(bld.verts[local[a]].lerp(bld.verts[local[b]], 0.5), false)
                    })
                };
                for [a, b, c] in tris {
                    let g = bld.add((pts[a] + pts[b] + pts[c]) / 3.0, false);
                    let mab = mid(a, b, &mut bld);
                    let mbc = mid(b, c, &mut bld);
                    let mca = mid(c, a, &mut bld);
                    bld.quads.push([local[a], mab, g, mca]);
                    bld.quads.push([local[b], mbc, g, mab]);
                    bld.quads.push([local[c], mca, g, mbc]);
                }
            }
        }
    }

    // edges: boundary and slit sub-edges first, in traversal direction
    let mut edges: Vec<MeshEdge> = Vec::new();
    let mut known: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for i in 0..n {
        let mut chain = vec![i];
        chain.extend_from_slice(&edge_pts[i]);
        chain.push((i + 1) % n);
        for (r, w) in chain.windows(2).enumerate() {
            let kind = match poly.edges[i] {
                PolyEdge::Boundary { ring, segment } => EdgeKind::Boundary {
                    ring,
                    segment: first_final[ring][segment] + r,
                },
                PolyEdge::Bridge { bridge, .. } => EdgeKind::Slit { bridge },
            };
            known.insert((w[0].min(w[1]), w[0].max(w[1])), edges.len());
            edges.push(MeshEdge {
                v: [w[0], w[1]],
                kind,
            });
        }
    }
    for q in &bld.quads {
        for k in 0..4 {
            let (a, b) = (q[k], q[(k + 1) % 4]);
            let key = (a.min(b), a.max(b));
            if let std::collections::btree_map::Entry::Vacant(e) = known.entry(key) {
                e.insert(edges.len());
                edges.push(MeshEdge {
                    v: [key.0, key.1],
                    kind: EdgeKind::Interior,
                });
            }
        }
    }
    let mesh = QuadMesh {
        vertices: bld.verts,
        boundary: bld.boundary,
        quads: bld.quads,
        edges,
        fallback_pieces,
    };
    mesh.check().map_err(TopologyError::InvalidMesh)?;
    Ok(Quadrangulation {
        mesh,
        chains: new_chains,
        meshing,
    })
}

/// Ear-clipping triangulation of a counter-clockwise polygon (indices into `pts`).
pub fn ear_clip(pts: &[Point2]) -> Vec<[usize; 3]> {
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    let mut tris = Vec::new();
    let mut guard = 0;
    while idx.len() > 3 && guard < 10 * pts.len() * pts.len() {
        guard += 1;
        let m = idx.len();
        let mut best: Option<(usize, f64)> = None;
        for k in 0..m {
            let (a, b, c) = (idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]);
            let area = orient(pts[a], pts[b], pts[c]);
            if area <= 0.0 {
                continue;
            }
            let blocked = idx.iter().any(|&o| {
                if o == a
                    || o == b
                    || o == c
                    || pts[o] == pts[a]
                    || pts[o] == pts[b]
                    || pts[o] == pts[c]
                {
                    return false;
                }
                orient(pts[a], pts[b], pts[o]) >= 0.0
                    && orient(pts[b], pts[c], pts[o]) >= 0.0
                    && orient(pts[c], pts[a], pts[o]) >= 0.0
            });
            if blocked {
                continue;
            }
            // prefer well-shaped ears: largest minimum angle proxy
            let q = area
                / (pts[a].distance(pts[b]).powi(2)
                    + pts[b].distance(pts[c]).powi(2)
                    + pts[c].distance(pts[a]).powi(2));
            if best.is_none_or(|(_, bq)| q > bq) {
                best = Some((k, q));
            }
        }
        let k = match best {
            Some((k, _)) => k,
            None => {
                warn!("ear clipping stalled; fanning the remainder");
                break;
            }
        };
        let m = idx.len();
        tris.push([idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]]);
        idx.remove(k);
    }
    for k in 1..idx.len().saturating_sub(1) {
        tris.push([idx[0], idx[k], idx[k + 1]]);
    }
    tris
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernstein::BezierCurve;
    use crate::splines::{LoopRole, SegmentOrigin};
    use crate::topology::boundary::{bridge_holes, build_discrete_boundary};
    use crate::topology::decompose::approx_convex_decompose;

    fn chain(v: &[(f64, f64)]) -> SegmentChain {
        let pts: Vec<Point2> = v.iter().map(|&(x, y)| Point2::new(x, y)).collect();
        let n = pts.len();
        SegmentChain {
            role: LoopRole::Outer,
            segments: (0..n)
                .map(|i| BezierCurve::line(pts[i], pts[(i + 1) % n], 4))
                .collect(),
            origins: (0..n)
                .map(|i| SegmentOrigin {
                    piece: i,
                    span: 0,
                    t0: 0.0,
                    t1: 1.0,
                })
                .collect(),
        }
    }

    fn mesh_of(v: &[(f64, f64)]) -> Quadrangulation {
        let chains = vec![chain(v)];
        let b = build_discrete_boundary(&chains).unwrap();
        let p = bridge_holes(&b).unwrap();
        let d = approx_convex_decompose(&p, 0.1);
        quadrangulate(&p, &d, &chains, 100_000).unwrap()
    }

    #[test]
    fn square_with_two_edges_per_side_is_2x2() {
        let q = mesh_of(&[
            (0.0, 0.0),
            (1.0, 0.0),
            (2.0, 0.0),
            (2.0, 1.0),
            (2.0, 2.0),
            (1.0, 2.0),
            (0.0, 2.0),
            (0.0, 1.0),
        ]);
        assert_eq!(q.mesh.quads.len(), 4);
        assert_eq!(q.mesh.interior_valences(), vec![4]);
        assert_eq!(q.mesh.euler_characteristic(), 1);
    }

    #[test]
    fn triangle_with_two_edges_per_side_is_valence_3_fan() {
        let s = 3f64.sqrt();
        let q = mesh_of(&[
            (0.0, 0.0),
            (1.0, 0.0),
            (2.0, 0.0),
            (1.5, s / 2.0),
            (1.0, s),
            (0.5, s / 2.0),
        ]);
        assert_eq!(q.mesh.quads.len(), 3);
        assert_eq!(q.mesh.interior_valences(), vec![3]);
        assert_eq!(q.mesh.fallback_pieces, 0);
    }

    #[test]
    fn pentagon_with_two_edges_per_side_is_valence_5_fan() {
        let mut v = Vec::new();
        for k in 0..5 {
            let a = 2.0 * PI * k as f64 / 5.0;
            let b = 2.0 * PI * (k + 1) as f64 / 5.0;
            v.push((a.cos(), a.sin()));
            v.push((0.5 * (a.cos() + b.cos()), 0.5 * (a.sin() + b.sin())));
        }
        let q = mesh_of(&v);
        assert_eq!(q.mesh.quads.len(), 5);
        assert_eq!(q.mesh.interior_valences(), vec![5]);
    }

    #[test]
    fn fan_spoke_counts() {
        assert_eq!(fan_spokes(&[2, 2, 2]), Some(vec![1, 1, 1]));
        assert_eq!(fan_spokes(&[2, 2, 2, 2, 2]), Some(vec![1, 1, 1, 1, 1]));
        assert_eq!(fan_spokes(&[1, 1, 1]), None);
        assert_eq!(fan_spokes(&[1, 1, 4]), None);
        assert_eq!(fan_spokes(&[3, 3, 2]), Some(vec![1, 1, 2]));
    }

    #[test]
    fn ear_clip_covers_area() {
        let pts: Vec<Point2> = [
            (0.0, 0.0),
            (2.0, 0.0),
            (2.0, 1.0),
            (1.0, 1.0),
            (1.0, 2.0),
            (0.0, 2.0),
        ]
        .iter()
        .map(|&(x, y)| Point2::new(x, y))
        .collect();
        let t = ear_clip(&pts);
        assert_eq!(t.len(), 4);
        let a: f64 = t
            .iter()
            .map(|t| 0.5 * orient(pts[t[0]], pts[t[1]], pts[t[2]]))
            .sum();
        assert!((a - 3.0).abs() < 1e-12);
    }
}
