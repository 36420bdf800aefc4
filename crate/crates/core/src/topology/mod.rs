//! Discrete quadrilateral decomposition of the domain.

pub mod boundary;
pub mod decompose;
pub mod mesh;
pub mod quadrangulate;
pub mod smooth;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use boundary::{
    bridge_holes, bridge_vertex_count, build_discrete_boundary, BridgedPolygon, DiscreteBoundary,
    DiscreteLoop, PolyEdge, VertexOrigin,
};
pub use decompose::{approx_convex_decompose, condition_pieces, Decomposition, QuasiConvexPiece};
pub use mesh::{EdgeKind, MeshEdge, QuadMesh};
pub use quadrangulate::{quadrangulate, PieceMeshing};
pub use smooth::{laplacian_smooth, SmoothingReport};

use crate::config::PipelineConfig;
use crate::splines::SegmentChain;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("loop {0} has fewer than two segments")]
    DegenerateLoop(usize),
    #[error("boundary polygon edges {first:?} and {second:?} intersect")]
    SelfIntersection {
        first: (usize, usize),
        second: (usize, usize),
    },
    #[error("first loop is not the outer loop")]
    MissingOuter,
    #[error("hole loop {0} is not inside the outer loop")]
    HoleOutside(usize),
    #[error("no bridge between a hole and the outer boundary avoids all boundary edges")]
    NoValidBridge,
    #[error("generated mesh is inconsistent: {0}")]
    InvalidMesh(String),
    #[error("internal error: {0}")]
    Internal(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    /// Boundary chains after any count-2 splits; mesh boundary edges refer to these.
    pub chains: Vec<SegmentChain>,
    pub mesh: QuadMesh,
    pub polygon: BridgedPolygon,
    pub decomposition: Decomposition,
    pub meshing: Vec<PieceMeshing>,
    pub smoothing: SmoothingReport,
}

/// Discrete boundary → bridging → decomposition → templates → smoothing.
pub fn build_topology(
    chains: &[SegmentChain],
    cfg: &PipelineConfig,
) -> Result<Topology, TopologyError> {
    let b = build_discrete_boundary(chains)?;
    let polygon = bridge_holes(&b)?;
    let d = approx_convex_decompose(&polygon, cfg.epsilon);
    let d = condition_pieces(&polygon, d);
    info!(
        "decomposition: {} pieces, {} cuts",
        d.pieces.len(),
        d.cuts.len()
    );
    let q = quadrangulate(&polygon, &d, chains, cfg.count_search_budget)?;
    if q.mesh.fallback_pieces > 0 {
        warn!(
            "{} piece(s) meshed by the triangulation fallback",
            q.mesh.fallback_pieces
        );
    }
    let (mesh, smoothing) = laplacian_smooth(&q.mesh, cfg.delta, cfg.smoothing_max_iter);
    let inverted = mesh.inverted_quads();
    if !inverted.is_empty() {
        warn!("{} quad(s) inverted after smoothing", inverted.len());
    }
    info!(
        "quad mesh: {} vertices, {} quads, smoothing {} iterations",
        mesh.vertices.len(),
        mesh.quads.len(),
        smoothing.iterations
    );
    Ok(Topology {
        chains: q.chains,
        mesh,
        polygon,
        decomposition: d,
        meshing: q.meshing,
        smoothing,
    })
}
