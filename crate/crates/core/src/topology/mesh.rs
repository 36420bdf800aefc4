use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{orient, polygon_area, Point2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EdgeKind {
    Interior,
    /// Realized by boundary segment `segment` of chain `ring`; the edge is stored
    /// in segment direction.
    Boundary {
        ring: usize,
        segment: usize,
    },
    /// Straight edge on one side of a bridge slit.
    Slit {
        bridge: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshEdge {
    pub v: [usize; 2],
    pub kind: EdgeKind,
}

/// All-quad mesh; quads are counter-clockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadMesh {
    pub vertices: Vec<Point2>,
    pub boundary: Vec<bool>,
    pub quads: Vec<[usize; 4]>,
    pub edges: Vec<MeshEdge>,
    /// Pieces meshed by the triangulate-and-split fallback.
    pub fallback_pieces: usize,
}

impl QuadMesh {
    pub fn edge_map(&self) -> BTreeMap<(usize, usize), usize> {
        self.edges
            .iter()
            .enumerate()
            .map(|(i, e)| ((e.v[0].min(e.v[1]), e.v[0].max(e.v[1])), i))
            .collect()
    }

    /// Edge index and orientation flag (`true` when the quad traverses the edge
    /// against its stored direction) for side `k` of quad `q` (corner `k` to `k+1`).
    pub fn quad_sides(
        &self,
        map: &BTreeMap<(usize, usize), usize>,
        q: usize,
    ) -> [(usize, bool); 4] {
        let f = self.quads[q];
        std::array::from_fn(|k| {
            let (a, b) = (f[k], f[(k + 1) % 4]);
            let e = map[&(a.min(b), a.max(b))];
            (e, self.edges[e].v[0] != a)
        })
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.vertices.len()];
        for e in &self.edges {
            nb[e.v[0]].push(e.v[1]);
            nb[e.v[1]].push(e.v[0]);
        }
        for l in &mut nb {
            l.sort_unstable();
        }
        nb
    }

    pub fn valences(&self) -> Vec<usize> {
        let mut val = vec![0; self.vertices.len()];
        for e in &self.edges {
            val[e.v[0]] += 1;
            val[e.v[1]] += 1;
        }
        val
    }

    /// Valences of interior vertices (sorted, with repetition).
    pub fn interior_valences(&self) -> Vec<usize> {
        let val = self.valences();
        let mut v: Vec<usize> = (0..self.vertices.len())
            .filter(|&i| !self.boundary[i])
            .map(|i| val[i])
            .collect();
        v.sort_unstable();
        v
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.quads.len() as i64
    }

    pub fn quad_area(&self, q: usize) -> f64 {
        let f = self.quads[q];
        polygon_area(&f.map(|i| self.vertices[i]))
    }

    /// Smallest corner cross product over the quad (positive for strictly convex quads).
    pub fn quad_min_corner(&self, q: usize) -> f64 {
        let f = self.quads[q];
        (0..4)
            .map(|k| {
                orient(
                    self.vertices[f[(k + 3) % 4]],
                    self.vertices[f[k]],
                    self.vertices[f[(k + 1) % 4]],
                )
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn inverted_quads(&self) -> Vec<usize> {
        (0..self.quads.len())
            .filter(|&q| self.quad_area(q) <= 0.0)
            .collect()
    }

    /// Structural checks: four distinct corners per quad, each edge used by one or two
    /// quads, and exactly one quad on every non-interior edge.
    pub fn check(&self) -> Result<(), String> {
        let map = self.edge_map();
        let mut uses = vec![0usize; self.edges.len()];
        for (qi, f) in self.quads.iter().enumerate() {
            for a in 0..4 {
                for b in a + 1..4 {
                    if f[a] == f[b] {
                        return Err(format!("quad {qi} repeats vertex {}", f[a]));
                    }
                }
            }
            for k in 0..4 {
                let (a, b) = (f[k], f[(k + 1) % 4]);
                match map.get(&(a.min(b), a.max(b))) {
                    Some(&e) => uses[e] += 1,
                    None => return Err(format!("quad {qi} side {a}-{b} has no edge")),
                }
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            let expected = if e.kind == EdgeKind::Interior { 2 } else { 1 };
            if uses[i] != expected {
                return Err(format!("edge {i} ({:?}) used by {} quads", e.kind, uses[i]));
            }
        }
        Ok(())
    }
}
