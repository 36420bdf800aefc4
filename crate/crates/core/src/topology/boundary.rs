//! Discrete boundary polygons and conversion of multiply-connected regions into a
//! single (weakly) simple polygon by slit bridges.

use log::debug;
use serde::{Deserialize, Serialize};

use super::TopologyError;
use crate::geometry::{
    direction_in_wedge, point_in_polygon, point_segment_distance, segments_touch, Point2,
};
use crate::splines::{LoopRole, SegmentChain};

/// One boundary loop as the polygon of its Bézier segment endpoints; edge `k`
/// runs from vertex `k` to vertex `k+1` and stands for segment `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLoop {
    pub role: LoopRole,
    pub vertices: Vec<Point2>,
}

impl DiscreteLoop {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edge(&self, k: usize) -> (Point2, Point2) {
        (
            self.vertices[k],
            self.vertices[(k + 1) % self.vertices.len()],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteBoundary {
    pub loops: Vec<DiscreteLoop>,
}

/// Polygon per loop from the segment endpoints; rejects self-intersections.
pub fn build_discrete_boundary(chains: &[SegmentChain]) -> Result<DiscreteBoundary, TopologyError> {
    let loops: Vec<DiscreteLoop> = chains
        .iter()
        .map(|c| DiscreteLoop {
            role: c.role,
            vertices: c.segments.iter().map(|s| s.start()).collect(),
        })
        .collect();
    for (li, l) in loops.iter().enumerate() {
        if l.len() < 2 {
            return Err(TopologyError::DegenerateLoop(li));
        }
    }
    // pairwise edge test over all loops
    let edges: Vec<(usize, usize, Point2, Point2)> = loops
        .iter()
        .enumerate()
        .flat_map(|(li, l)| (0..l.len()).map(move |k| (li, k, l.edge(k).0, l.edge(k).1)))
        .collect();
    for a in 0..edges.len() {
        for b in a + 1..edges.len() {
            let (la, ka, p, q) = edges[a];
            let (lb, kb, r, s) = edges[b];
            if la == lb {
                let n = loops[la].len();
                if ka == kb || (ka + 1) % n == kb || (kb + 1) % n == ka {
                    continue;
                }
            }
            if segments_touch(p, q, r, s) {
                return Err(TopologyError::SelfIntersection {
                    first: (la, ka),
                    second: (lb, kb),
                });
            }
        }
    }
    let outer = &loops[0];
    if outer.role != LoopRole::Outer {
        return Err(TopologyError::MissingOuter);
    }
    for (li, l) in loops.iter().enumerate().skip(1) {
        if !l
            .vertices
            .iter()
            .all(|&v| point_in_polygon(v, &outer.vertices))
        {
            return Err(TopologyError::HoleOutside(li));
        }
    }
    Ok(DiscreteBoundary { loops })
}

/// Provenance of a vertex occurrence in the bridged polygon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VertexOrigin {
    Boundary { ring: usize, index: usize },
    Bridge { bridge: usize, index: usize },
}

/// Provenance of an edge of the bridged polygon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolyEdge {
    /// Boundary segment `segment` of loop `ring`, traversed in chain direction.
    Boundary { ring: usize, segment: usize },
    /// Sub-edge `index` of bridge `bridge` (0 at the outer end); `reversed` for the
    /// traversal from the hole back to the outer loop.
    Bridge {
        bridge: usize,
        index: usize,
        reversed: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeInfo {
    pub hole: usize,
    pub from: Point2,
    pub to: Point2,
    /// Number of inserted vertices.
    pub nu: usize,
}

/// Single closed vertex sequence; every occurrence is a distinct vertex (bridged
/// vertices appear twice, at the same position). Edge `i` joins occurrence `i` to `i+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgedPolygon {
    pub points: Vec<Point2>,
    pub origins: Vec<VertexOrigin>,
    pub edges: Vec<PolyEdge>,
    pub bridges: Vec<BridgeInfo>,
}

impl BridgedPolygon {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the edge that is the opposite traversal of bridge edge `e`.
    pub fn twin(&self, e: usize) -> Option<usize> {
        match self.edges[e] {
            PolyEdge::Bridge {
                bridge,
                index,
                reversed,
            } => self.edges.iter().position(|x| {
                *x == PolyEdge::Bridge {
                    bridge,
                    index,
                    reversed: !reversed,
                }
            }),
            PolyEdge::Boundary { .. } => None,
        }
    }
}

/// Number of bridge vertices, with both perimeter sums running over edges
/// `0..n-2` of the respective vertex sequences.
pub fn bridge_vertex_count(outer: &[Point2], hole: &[Point2], l0: f64) -> usize {
    let partial = |v: &[Point2]| -> f64 {
        if v.len() < 2 {
            return 0.0;
        }
        (0..v.len() - 1).map(|p| v[p].distance(v[p + 1])).sum()
    };
    let denom = partial(outer) + partial(hole);
    if denom <= 0.0 {
        return 1;
    }
    let x = (outer.len() + hole.len()) as f64 * l0 / denom;
    // tolerate rounding just above an integer
    ((x - 1e-12).ceil().max(0.0)) as usize
}

/// Bridges every hole into the outer loop, nearest hole first.
pub fn bridge_holes(b: &DiscreteBoundary) -> Result<BridgedPolygon, TopologyError> {
    let outer = &b.loops[0];
    let mut poly = BridgedPolygon {
        points: outer.vertices.clone(),
        origins: (0..outer.len())
            .map(|index| VertexOrigin::Boundary { ring: 0, index })
            .collect(),
        edges: (0..outer.len())
            .map(|segment| PolyEdge::Boundary { ring: 0, segment })
            .collect(),
        bridges: Vec::new(),
    };
    let mut remaining: Vec<usize> = (1..b.loops.len()).collect();
    while !remaining.is_empty() {
        // candidate pairs over all remaining holes, nearest first
        let mut cands: Vec<(f64, usize, usize, usize)> = Vec::new();
        for &h in &remaining {
            for (i, &v) in poly.points.iter().enumerate() {
                for (j, &u) in b.loops[h].vertices.iter().enumerate() {
                    cands.push((v.distance(u), h, i, j));
                }
            }
        }
        cands.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
                .then(a.3.cmp(&b.3))
        });
        let chosen = cands
            .iter()
            .copied()
            .find(|&(_, h, i, j)| bridge_is_valid(&poly, b, &remaining, h, i, j))
            .ok_or(TopologyError::NoValidBridge)?;
        let (l0, h, i, j) = chosen;
        let hole = &b.loops[h];
        let nu = bridge_vertex_count(&poly.points, &hole.vertices, l0).max(1);
        let from = poly.points[i];
        let to = hole.vertices[j];
        let bridge = poly.bridges.len();
        debug!("bridging hole {h}: outer occurrence {i} to hole vertex {j}, l0={l0:.4}, nu={nu}");
        let z: Vec<Point2> = (0..nu)
            .map(|k| from.lerp(to, (k + 1) as f64 / (nu + 1) as f64))
            .collect();

        let m = hole.len();
        let mut pts = Vec::new();
        let mut ori = Vec::new();
        let mut eds = Vec::new();
        // v_0 .. v_i
        for k in 0..=i {
            pts.push(poly.points[k]);
            ori.push(poly.origins[k]);
            if k < i {
                eds.push(poly.edges[k]);
            }
        }
        // v_i -> z_0 .. z_{nu-1} -> u_j
        for (k, &zk) in z.iter().enumerate() {
            eds.push(PolyEdge::Bridge {
                bridge,
                index: k,
                reversed: false,
            });
            pts.push(zk);
            ori.push(VertexOrigin::Bridge { bridge, index: k });
        }
        eds.push(PolyEdge::Bridge {
            bridge,
            index: nu,
            reversed: false,
        });
        // u_j around the hole back to u_j
        for t in 0..=m {
            let q = (j + t) % m;
            pts.push(hole.vertices[q]);
            ori.push(VertexOrigin::Boundary { ring: h, index: q });
            if t < m {
                eds.push(PolyEdge::Boundary {
                    ring: h,
                    segment: q,
                });
            }
        }
        // u_j -> z_{nu-1} .. z_0 -> v_i
        eds.push(PolyEdge::Bridge {
            bridge,
            index: nu,
            reversed: true,
        });
        for k in (0..nu).rev() {
            pts.push(z[k]);
            ori.push(VertexOrigin::Bridge { bridge, index: k });
            eds.push(PolyEdge::Bridge {
                bridge,
                index: k,
                reversed: true,
            });
        }
        // v_i .. v_{n-1}
        let n = poly.points.len();
        for k in i..n {
            pts.push(poly.points[k]);
            ori.push(poly.origins[k]);
            eds.push(poly.edges[k]);
        }
        poly.points = pts;
        poly.origins = ori;
        poly.edges = eds;
        poly.bridges.push(BridgeInfo {
            hole: h,
            from,
            to,
            nu,
        });
        remaining.retain(|&x| x != h);
    }
    debug_assert_eq!(poly.points.len(), poly.edges.len());
    Ok(poly)
}

fn bridge_is_valid(
    poly: &BridgedPolygon,
    b: &DiscreteBoundary,
    remaining: &[usize],
    h: usize,
    i: usize,
    j: usize,
) -> bool {
    let n = poly.points.len();
    let v = poly.points[i];
    let hole = &b.loops[h].vertices;
    let m = hole.len();
    let u = hole[j];
    if v.distance(u) == 0.0 {
        return false;
    }
    // interior cone at both ends (domain on the left of each traversal)
    let margin = 1e-6;
    if !direction_in_wedge(
        poly.points[(i + n - 1) % n],
        v,
        poly.points[(i + 1) % n],
        u - v,
        margin,
    ) {
        return false;
    }
    if !direction_in_wedge(hole[(j + m - 1) % m], u, hole[(j + 1) % m], v - u, margin) {
        return false;
    }
    // no contact with any edge except at the two endpoints
    let clear = |p: Point2, q: Point2| -> bool {
        let shares = p == v || q == v || p == u || q == u;
        if shares {
            // only the endpoint itself may be shared
            let other: Vec<Point2> = [p, q].into_iter().filter(|x| *x != v && *x != u).collect();
            other
                .iter()
                .all(|&o| point_segment_distance(o, v, u) > 1e-12 * v.distance(u))
                && !crate::geometry::segments_cross(v, u, p, q, 1e-12)
        } else {
            !segments_touch(v, u, p, q)
        }
    };
    for k in 0..n {
        if !clear(poly.points[k], poly.points[(k + 1) % n]) {
            return false;
        }
    }
    for &r in remaining {
        let l = &b.loops[r].vertices;
        for k in 0..l.len() {
            if !clear(l[k], l[(k + 1) % l.len()]) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq(c: f64, ccw: bool) -> Vec<Point2> {
        let mut v = vec![
            Point2::new(-c, -c),
            Point2::new(c, -c),
            Point2::new(c, c),
            Point2::new(-c, c),
        ];
        if !ccw {
            v.reverse();
        }
        v
    }

    #[test]
    fn nu_example() {
        let l0 = 32f64.sqrt();
        assert_eq!(bridge_vertex_count(&sq(5.0, true), &sq(1.0, false), l0), 2);
    }

    #[test]
    fn simply_connected_is_unchanged() {
        let b = DiscreteBoundary {
            loops: vec![DiscreteLoop {
                role: LoopRole::Outer,
                vertices: sq(1.0, true),
            }],
        };
        let p = bridge_holes(&b).unwrap();
        assert_eq!(p.points, sq(1.0, true));
        assert!(p.bridges.is_empty());
    }

    #[test]
    fn square_annulus_bridge() {
        let b = DiscreteBoundary {
            loops: vec![
                DiscreteLoop {
                    role: LoopRole::Outer,
                    vertices: sq(5.0, true),
                },
                DiscreteLoop {
                    role: LoopRole::Hole,
                    vertices: sq(1.0, false),
                },
            ],
        };
        let p = bridge_holes(&b).unwrap();
        assert_eq!(p.bridges.len(), 1);
        assert_eq!(p.bridges[0].nu, 2);
        // 4 outer + 1 repeated + 2·2 bridge + 4 hole + 1 repeated
        assert_eq!(p.len(), 4 + 1 + 4 + 4 + 1);
        for (k, e) in p.edges.iter().enumerate() {
            if let PolyEdge::Bridge { .. } = e {
                let t = p.twin(k).unwrap();
                assert_eq!(p.points[k], p.points[(t + 1) % p.len()]);
            }
        }
        // each bridge vertex appears twice
        for k in 0..2 {
            let c = p
                .origins
                .iter()
                .filter(|o| {
                    **o == VertexOrigin::Bridge {
                        bridge: 0,
                        index: k,
                    }
                })
                .count();
            assert_eq!(c, 2);
        }
    }
}
