//! Multi-patch Bézier parameterization of planar domains bounded by B-spline curves.
//!
//! The pipeline turns boundary loops into a watertight set of tensor-product Bézier
//! patches: boundary pre-processing ([`splines`]), a quad partition of the domain
//! ([`topology`]), optimized segmentation curves ([`segmentation`]), patch control
//! nets with interface continuity ([`patchfit`]), injectivity certification and
//! repair ([`validity`]) and quality metrics ([`quality`]).

pub mod bernstein;
pub mod config;
pub mod geometry;
pub mod io;
pub mod lbfgs;
pub mod patchfit;
pub mod pipeline;
pub mod quality;
pub mod segmentation;
pub mod splines;
pub mod topology;
pub mod validity;

pub use bernstein::{BezierCurve, Polynomial1D, Polynomial2D};
pub use config::PipelineConfig;
pub use geometry::Point2;
