//! File formats: boundary and layout documents, SVG figures, OBJ dumps.

pub mod boundary;
pub mod export;
pub mod layout;
pub mod svg;

use thiserror::Error;

pub use boundary::{load_boundary, load_boundary_str, BoundaryDocument, BOUNDARY_VERSION};
pub use export::{quad_mesh_obj, trace_csv};
pub use layout::{
    config_hash, load_layout, save_layout, LayoutDocument, Provenance, LAYOUT_VERSION,
};
pub use svg::{colormap, render_svg, RenderMode};

use crate::splines::SplineError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IoError {
    #[error("cannot read {path}: {reason}")]
    Read { path: String, reason: String },
    #[error("cannot write {path}: {reason}")]
    Write { path: String, reason: String },
    #[error("JSON parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("document version {found} is not supported (expected {expected}); re-export the document with this tool's version")]
    Version { found: u32, expected: u32 },
    #[error("{path}: {source}")]
    Schema { path: String, source: SplineError },
    #[error("{path}: {source}")]
    Geometry { path: String, source: SplineError },
}

impl IoError {
    pub(crate) fn from_json(e: serde_json::Error) -> Self {
        IoError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}
