//! Versioned boundary document: loops of clamped B-spline pieces.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::IoError;
use crate::geometry::Point2;
use crate::splines::{BSplineCurve, BoundaryLoop, LoopRole, SplineError};

pub const BOUNDARY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceDocument {
    pub degree: usize,
    pub knots: Vec<f64>,
    pub control_points: Vec<Point2>,
    #[serde(flatten, skip_serializing)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopDocument {
    pub role: LoopRole,
    pub pieces: Vec<PieceDocument>,
    #[serde(flatten, skip_serializing)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDocument {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub loops: Vec<LoopDocument>,
    #[serde(flatten, skip_serializing)]
    pub extra: BTreeMap<String, Value>,
}

impl BoundaryDocument {
    pub fn from_loops(loops: &[BoundaryLoop], name: Option<String>) -> Self {
        Self {
            version: BOUNDARY_VERSION,
            name,
            loops: loops
                .iter()
                .map(|l| LoopDocument {
                    role: l.role,
                    pieces: l
                        .pieces
                        .iter()
                        .map(|p| PieceDocument {
                            degree: p.degree,
                            knots: p.knots.clone(),
                            control_points: p.control_points.clone(),
                            extra: BTreeMap::new(),
                        })
                        .collect(),
                    extra: BTreeMap::new(),
                })
                .collect(),
            extra: BTreeMap::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        let doc: BoundaryDocument = serde_json::from_str(text).map_err(IoError::from_json)?;
        if doc.version != BOUNDARY_VERSION {
            return Err(IoError::Version {
                found: doc.version,
                expected: BOUNDARY_VERSION,
            });
        }
        for k in doc.extra.keys() {
            warn!("boundary document: ignoring unknown field `{k}`");
        }
        for (li, l) in doc.loops.iter().enumerate() {
            for k in l.extra.keys() {
                warn!("boundary document: loops[{li}]: ignoring unknown field `{k}`");
            }
            for (pi, p) in l.pieces.iter().enumerate() {
                for k in p.extra.keys() {
                    warn!(
                        "boundary document: loops[{li}].pieces[{pi}]: ignoring unknown field `{k}`"
                    );
                }
            }
        }
        Ok(doc)
    }

    /// Schema and geometric validation into boundary loops (not yet orientation-normalized).
    pub fn to_loops(&self) -> Result<Vec<BoundaryLoop>, IoError> {
        let mut loops = Vec::with_capacity(self.loops.len());
        for (li, l) in self.loops.iter().enumerate() {
            let mut pieces = Vec::with_capacity(l.pieces.len());
            for (pi, p) in l.pieces.iter().enumerate() {
                let c = BSplineCurve::new(p.degree, p.knots.clone(), p.control_points.clone())
                    .map_err(|e| IoError::Schema {
                        path: format!("loops[{li}].pieces[{pi}]"),
                        source: e,
                    })?;
                pieces.push(c);
            }
            let bl = BoundaryLoop {
                role: l.role,
                pieces,
            };
            bl.validate(li).map_err(|e| IoError::Geometry {
                path: format!("loops[{li}]"),
                source: e,
            })?;
            loops.push(bl);
        }
        Ok(loops)
    }
}

/// Parses, validates and orientation-normalizes a boundary file.
pub fn load_boundary(path: impl AsRef<Path>) -> Result<Vec<BoundaryLoop>, IoError> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| IoError::Read {
        path: path.as_ref().display().to_string(),
        reason: e.to_string(),
    })?;
    load_boundary_str(&text)
}

pub fn load_boundary_str(text: &str) -> Result<Vec<BoundaryLoop>, IoError> {
    let doc = BoundaryDocument::parse(text)?;
    let loops = doc.to_loops()?;
    crate::splines::normalize_orientation(&loops).map_err(|e: SplineError| IoError::Geometry {
        path: "loops".into(),
        source: e,
    })
}
