use log::warn;
use serde::{Deserialize, Serialize};

use super::mesh::QuadMesh;
use crate::geometry::Point2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingReport {
    pub iterations: usize,
    /// Displacement ratio after each iteration.
    pub ratios: Vec<f64>,
    pub converged: bool,
}

/// Jacobi Laplacian smoothing of interior vertices until the relative displacement
/// ratio falls below `delta` or `max_iter` is reached. Boundary vertices never move.
pub fn laplacian_smooth(
    mesh: &QuadMesh,
    delta: f64,
    max_iter: usize,
) -> (QuadMesh, SmoothingReport) {
    let nb = mesh.neighbors();
    let mut cur = mesh.vertices.clone();
    let mut ratios = Vec::new();
    let mut converged = false;
    let interior: Vec<usize> = (0..cur.len())
        .filter(|&i| !mesh.boundary[i] && !nb[i].is_empty())
        .collect();
    if interior.is_empty() {
        return (
            mesh.clone(),
            SmoothingReport {
                iterations: 0,
                ratios,
                converged: true,
            },
        );
    }
    for _ in 0..max_iter {
        let mut next = cur.clone();
        for &i in &interior {
            next[i] = nb[i].iter().map(|&j| cur[j]).sum::<Point2>() / nb[i].len() as f64;
        }
        let num: f64 = (0..cur.len())
            .map(|i| (next[i] - cur[i]).norm_squared())
            .sum();
        let den: f64 = cur.iter().map(|p| p.norm_squared()).sum();
        let ratio = if den > 0.0 {
            (num / den).sqrt()
        } else {
            num.sqrt()
        };
        ratios.push(ratio);
        cur = next;
        if ratio < delta {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("Laplacian smoothing hit the iteration cap ({max_iter})");
    }
    let out = QuadMesh {
        vertices: cur,
        ..mesh.clone()
    };
    (
        out,
        SmoothingReport {
            iterations: ratios.len(),
            ratios,
            converged,
        },
    )
}
