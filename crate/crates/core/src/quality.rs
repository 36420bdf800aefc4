//! Sampled quality metrics: scaled Jacobian and Jacobian condition number.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::patchfit::BezierPatch;
use crate::validity::{classify_patch, jacobian_coeffs, Validity};

/// Product of derivative norms below which a sample counts as degenerate.
const DEGENERATE_NORM: f64 = 1e-14;

/// Metrics at the `grid × grid` uniform tensor samples of one patch (boundary included),
/// row-major in `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSamples {
    pub grid: usize,
    /// `J / (‖r_u‖‖r_v‖)`; 0 at degenerate samples.
    pub scaled_jacobian: Vec<f64>,
    /// `‖J‖_F · ‖J⁻¹‖_F`; `+∞` at singular samples.
    pub condition: Vec<f64>,
    pub degenerate: usize,
    pub singular: usize,
}

/// Evaluates both metrics from the same derivative samples.
pub fn sample_patch(patch: &BezierPatch, grid: usize) -> PatchSamples {
    let grid = grid.max(2);
    let (x, y) = (patch.x_poly(), patch.y_poly());
    let (xu, xv) = (
        x.derivative_u().expect("degree ≥ 1"),
        x.derivative_v().expect("degree ≥ 1"),
    );
    let (yu, yv) = (
        y.derivative_u().expect("degree ≥ 1"),
        y.derivative_v().expect("degree ≥ 1"),
    );
    let mut out = PatchSamples {
        grid,
        scaled_jacobian: Vec::with_capacity(grid * grid),
        condition: Vec::with_capacity(grid * grid),
        degenerate: 0,
        singular: 0,
    };
    for a in 0..grid {
        let u = a as f64 / (grid - 1) as f64;
        for b in 0..grid {
            let v = b as f64 / (grid - 1) as f64;
            let (a11, a12, a21, a22) = (xu.eval(u, v), xv.eval(u, v), yu.eval(u, v), yv.eval(u, v));
            let det = a11 * a22 - a12 * a21;
            let nu = (a11 * a11 + a21 * a21).sqrt();
            let nv = (a12 * a12 + a22 * a22).sqrt();
            if nu * nv < DEGENERATE_NORM {
                out.scaled_jacobian.push(0.0);
                out.degenerate += 1;
            } else {
                out.scaled_jacobian.push(det / (nu * nv));
            }
            if det == 0.0 {
                out.condition.push(f64::INFINITY);
                out.singular += 1;
            } else {
                out.condition.push((nu * nu + nv * nv) / det.abs());
            }
        }
    }
    out
}

pub fn scaled_jacobian_field(patch: &BezierPatch, grid: usize) -> Vec<f64> {
    sample_patch(patch, grid).scaled_jacobian
}

pub fn condition_number_field(patch: &BezierPatch, grid: usize) -> Vec<f64> {
    sample_patch(patch, grid).condition
}

/// Minimum, sample-weighted average and maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub min: f64,
    pub avg: f64,
    pub max: f64,
    pub count: usize,
}

impl Stats {
    fn of<'a>(values: impl IntoIterator<Item = &'a f64>) -> Stats {
        let (mut min, mut max, mut sum, mut count) =
            (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
        for &v in values {
            min = min.min(v);
            max = max.max(v);
            sum += v;
            count += 1;
        }
        if count == 0 {
            return Stats {
                min: 0.0,
                avg: 0.0,
                max: 0.0,
                count,
            };
        }
        Stats {
            min,
            avg: sum / count as f64,
            max,
            count,
        }
    }

    fn merge(parts: &[Stats]) -> Stats {
        let count: usize = parts.iter().map(|s| s.count).sum();
        if count == 0 {
            return Stats {
                min: 0.0,
                avg: 0.0,
                max: 0.0,
                count,
            };
        }
        let live = parts.iter().filter(|s| s.count > 0);
        Stats {
            min: live.clone().map(|s| s.min).fold(f64::INFINITY, f64::min),
            avg: live.clone().map(|s| s.avg * s.count as f64).sum::<f64>() / count as f64,
            max: live.map(|s| s.max).fold(f64::NEG_INFINITY, f64::max),
            count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchQuality {
    pub scaled_jacobian: Stats,
    /// Over the non-singular samples.
    pub condition: Stats,
    pub valid: bool,
    pub min_jacobian_coeff: f64,
    pub degenerate_samples: usize,
    pub singular_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub degree: usize,
    pub patch_count: usize,
    /// Distinct control points over all patches.
    pub control_points: usize,
    pub grid: usize,
    pub scaled_jacobian: Stats,
    pub condition: Stats,
    pub invalid_patches: Vec<usize>,
    pub degenerate_samples: usize,
    pub singular_samples: usize,
    pub per_patch: Vec<PatchQuality>,
    /// Free-form warnings (repair failures, fallback quadrangulations, …).
    pub flags: Vec<String>,
}

pub fn quality_report(patches: &[BezierPatch], grid: usize) -> QualityReport {
    let per_patch: Vec<PatchQuality> = patches
        .par_iter()
        .map(|p| {
            let s = sample_patch(p, grid);
            let f = jacobian_coeffs(p);
            PatchQuality {
                scaled_jacobian: Stats::of(&s.scaled_jacobian),
                condition: Stats::of(s.condition.iter().filter(|c| c.is_finite())),
                valid: classify_patch(&f) == Validity::Valid,
                min_jacobian_coeff: f.min(),
                degenerate_samples: s.degenerate,
                singular_samples: s.singular,
            }
        })
        .collect();
    let distinct: BTreeSet<(u64, u64)> = patches
        .iter()
        .flat_map(|p| p.net.iter().map(|q| (q.x.to_bits(), q.y.to_bits())))
        .collect();
    QualityReport {
        degree: patches.first().map_or(0, |p| p.degree),
        patch_count: patches.len(),
        control_points: distinct.len(),
        grid: grid.max(2),
        scaled_jacobian: Stats::merge(
            &per_patch
                .iter()
                .map(|p| p.scaled_jacobian)
                .collect::<Vec<_>>(),
        ),
        condition: Stats::merge(&per_patch.iter().map(|p| p.condition).collect::<Vec<_>>()),
        invalid_patches: (0..per_patch.len())
            .filter(|&i| !per_patch[i].valid)
            .collect(),
        degenerate_samples: per_patch.iter().map(|p| p.degenerate_samples).sum(),
        singular_samples: per_patch.iter().map(|p| p.singular_samples).sum(),
        per_patch,
        flags: Vec::new(),
    }
}

impl QualityReport {
    /// Aligned text table: one summary row, then one row per patch.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>8} {:>8} {:>6} | {:>8} {:>8} {:>8} | {:>8} {:>8} {:>8}",
            "patches", "CPs", "degree", "Js min", "Js avg", "Js max", "κ min", "κ avg", "κ max"
        );
        let (j, c) = (self.scaled_jacobian, self.condition);
        let _ = writeln!(
            s,
            "{:>8} {:>8} {:>6} | {:>8.4} {:>8.4} {:>8.4} | {:>8.4} {:>8.4} {:>8.4}",
            self.patch_count,
            self.control_points,
            self.degree,
            j.min,
            j.avg,
            j.max,
            c.min,
            c.avg,
            c.max
        );
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:>8} {:>6} {:>11} | {:>8} {:>8} {:>8} | {:>8} {:>8} {:>8}",
            "patch", "valid", "min coeff", "Js min", "Js avg", "Js max", "κ min", "κ avg", "κ max"
        );
        for (i, p) in self.per_patch.iter().enumerate() {
            let (j, c) = (p.scaled_jacobian, p.condition);
            let _ = writeln!(
                s,
                "{:>8} {:>6} {:>11.3e} | {:>8.4} {:>8.4} {:>8.4} | {:>8.4} {:>8.4} {:>8.4}",
                i, p.valid, p.min_jacobian_coeff, j.min, j.avg, j.max, c.min, c.avg, c.max
            );
        }
        for f in &self.flags {
            let _ = writeln!(s, "warning: {f}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;

    fn stretched(n: usize) -> BezierPatch {
        let mut p = BezierPatch::identity(n);
        for q in &mut p.net {
            *q = Point2::new(2.0 * q.x, q.y);
        }
        p
    }

    #[test]
    fn identity_metrics() {
        let s = sample_patch(&BezierPatch::identity(4), 30);
        assert!(s.scaled_jacobian.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(s.condition.iter().all(|v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn stretched_metrics() {
        let s = sample_patch(&stretched(4), 10);
        assert!(s.scaled_jacobian.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(s.condition.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn report_averages_over_samples() {
        let r = quality_report(&[BezierPatch::identity(4), stretched(4)], 30);
        assert!((r.condition.avg - 2.25).abs() < 1e-12);
        assert!((r.condition.min - 2.0).abs() < 1e-12 && (r.condition.max - 2.5).abs() < 1e-12);
        assert!(r.invalid_patches.is_empty());
        let single = quality_report(&[BezierPatch::identity(4)], 30);
        let j = single.scaled_jacobian;
        assert!(
            (j.min - 1.0).abs() < 1e-12
                && (j.avg - 1.0).abs() < 1e-12
                && (j.max - 1.0).abs() < 1e-12
        );
        assert!(single.to_table().contains("Js avg"));
    }
}
