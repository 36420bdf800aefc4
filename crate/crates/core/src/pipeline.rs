//! Stage orchestration: boundary → topology → segmentation → patches → repair → report.

use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::patchfit::{fit_patches, BezierPatch, EnergySystem, FitReport};
use crate::quality::{quality_report, QualityReport};
use crate::segmentation::{
    init_segmentation_curves, optimize_segmentation, GlobalObjectiveConfig, PatchLayout,
    SegmentationReport,
};
use crate::splines::{preprocess_boundary, BoundaryLoop, PreprocessedBoundary};
use crate::topology::{build_topology, Topology};
use crate::validity::{repair_patch, RepairOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{stage} stage failed: {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub message: String,
}

impl PipelineError {
    fn at(stage: &'static str) -> impl Fn(&dyn std::fmt::Display) -> PipelineError {
        move |e| PipelineError {
            stage,
            message: e.to_string(),
        }
    }
}

/// Wall-clock time of each stage in seconds. `global` covers topology and segmentation
/// curve optimization, `local` the patch construction and repair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub preprocess: f64,
    pub topology: f64,
    pub segmentation: f64,
    pub patchfit: f64,
    pub repair: f64,
    pub quality: f64,
    pub global: f64,
    pub local: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairRecord {
    pub patch: usize,
    pub outcome: RepairOutcome,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub boundary: PreprocessedBoundary,
    pub topology: Topology,
    pub layout: PatchLayout,
    pub segmentation: SegmentationReport,
    pub patches: Vec<BezierPatch>,
    pub fit: FitReport,
    pub repairs: Vec<RepairRecord>,
    pub quality: QualityReport,
    pub timings: StageTimings,
}

pub fn stage_preprocess(
    loops: &[BoundaryLoop],
    cfg: &PipelineConfig,
) -> Result<PreprocessedBoundary, PipelineError> {
    preprocess_boundary(loops, cfg).map_err(|e| PipelineError::at("preprocess")(&e))
}

pub fn stage_topology(
    pre: &PreprocessedBoundary,
    cfg: &PipelineConfig,
) -> Result<Topology, PipelineError> {
    build_topology(&pre.chains, cfg).map_err(|e| PipelineError::at("topology")(&e))
}

pub fn stage_segment(
    topo: &Topology,
    degree: usize,
    cfg: &PipelineConfig,
) -> Result<(PatchLayout, SegmentationReport), PipelineError> {
    let init = init_segmentation_curves(&topo.mesh, &topo.chains, degree)
        .map_err(|e| PipelineError::at("segmentation")(&e))?;
    let (layout, report) = optimize_segmentation(
        &init,
        &GlobalObjectiveConfig::from(cfg),
        cfg.validity_restarts,
    );
    if report.reverted {
        warn!("segmentation curves reverted to straight edges");
    }
    Ok((layout, report))
}

pub fn stage_fit(
    layout: &PatchLayout,
    cfg: &PipelineConfig,
) -> Result<(Vec<BezierPatch>, FitReport), PipelineError> {
    let sys = EnergySystem::assemble(layout.degree, cfg.tau1, cfg.tau2)
        .map_err(|e| PipelineError::at("patchfit")(&e))?;
    fit_patches(layout, &sys).map_err(|e| PipelineError::at("patchfit")(&e))
}

/// Repairs every invalid patch; returns the patches and one record per repaired patch.
pub fn stage_repair(
    patches: &[BezierPatch],
    cfg: &PipelineConfig,
) -> Result<(Vec<BezierPatch>, Vec<RepairRecord>), PipelineError> {
    let Some(n) = patches.first().map(|p| p.degree) else {
        return Ok((Vec::new(), Vec::new()));
    };
    let sys = EnergySystem::assemble(n, cfg.tau1, cfg.tau2)
        .map_err(|e| PipelineError::at("repair")(&e))?;
    let results: Vec<(BezierPatch, RepairOutcome)> = patches
        .par_iter()
        .enumerate()
        .map(|(i, p)| repair_patch(p, &sys, &cfg.repair, cfg.seed.wrapping_add(i as u64)))
        .collect();
    let mut out = Vec::with_capacity(results.len());
    let mut records = Vec::new();
    for (i, (p, o)) in results.into_iter().enumerate() {
        if o.attempts > 0 {
            records.push(RepairRecord {
                patch: i,
                outcome: o,
            });
        }
        out.push(p);
    }
    Ok((out, records))
}

pub fn stage_report(
    patches: &[BezierPatch],
    topo: Option<&Topology>,
    seg: Option<&SegmentationReport>,
    fit: Option<&FitReport>,
    repairs: &[RepairRecord],
    cfg: &PipelineConfig,
) -> QualityReport {
    let mut q = quality_report(patches, cfg.grid);
    if let Some(t) = topo {
        if t.mesh.fallback_pieces > 0 {
            q.flags.push(format!(
                "{} piece(s) meshed by the triangulation fallback",
                t.mesh.fallback_pieces
            ));
        }
    }
    if let Some(s) = seg {
        if s.reverted {
            q.flags.push(format!(
                "segmentation curves reverted to straight edges ({} overlap(s))",
                s.conflicts.len()
            ));
        }
    }
    if let Some(f) = fit {
        if f.g1_least_squares > 0 {
            q.flags.push(format!(
                "{} irregular vertex system(s) solved by least squares",
                f.g1_least_squares
            ));
        }
    }
    for r in repairs.iter().filter(|r| !r.outcome.success) {
        q.flags.push(format!(
            "repair of patch {} failed (min coefficient {:.3e})",
            r.patch, r.outcome.min_alpha_after
        ));
    }
    q
}

pub fn run_pipeline(
    loops: &[BoundaryLoop],
    cfg: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    cfg.validate()
        .map_err(|e| PipelineError::at("config")(&e))?;
    let mut timings = StageTimings::default();
    let t = Instant::now();
    let boundary = stage_preprocess(loops, cfg)?;
    timings.preprocess = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let topology = stage_topology(&boundary, cfg)?;
    timings.topology = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (layout, segmentation) = stage_segment(&topology, boundary.degree, cfg)?;
    timings.segmentation = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (patches, fit) = stage_fit(&layout, cfg)?;
    timings.patchfit = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (patches, repairs) = stage_repair(&patches, cfg)?;
    timings.repair = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let quality = stage_report(
        &patches,
        Some(&topology),
        Some(&segmentation),
        Some(&fit),
        &repairs,
        cfg,
    );
    timings.quality = t.elapsed().as_secs_f64();
    timings.global = timings.topology + timings.segmentation;
    timings.local = timings.patchfit + timings.repair;
    info!(
        "pipeline: {} patches, Js min {:.4} avg {:.4}, {} invalid",
        quality.patch_count,
        quality.scaled_jacobian.min,
        quality.scaled_jacobian.avg,
        quality.invalid_patches.len()
    );
    Ok(PipelineOutput {
        boundary,
        topology,
        layout,
        segmentation,
        patches,
        fit,
        repairs,
        quality,
        timings,
    })
}
