//! Stage-level invariants on the shipped domains: topology, segmentation, patch
//! construction, repair and sampling.

mod common;

use std::collections::BTreeMap;

use iga_partition::geometry::{polygon_area, segments_cross};
use iga_partition::patchfit::{c1_residual, energy_value, fit_patches, g1_residual, EnergySystem};
use iga_partition::pipeline::{run_pipeline, stage_preprocess, stage_topology};
use iga_partition::quality::sample_patch;
use iga_partition::segmentation::{
    f_tangent, optimize_segmentation, GlobalObjectiveConfig, PatchLayout,
};
use iga_partition::topology::{laplacian_smooth, EdgeKind, VertexOrigin};
use iga_partition::{PipelineConfig, Point2};

use common::*;

#[test]
fn quad_meshes_conform_to_the_boundary() {
    let cfg = PipelineConfig::default();
    for name in ASSETS {
        let pre = stage_preprocess(&asset(name), &cfg).unwrap();
        let topo = stage_topology(&pre, &cfg).unwrap();
        let mesh = &topo.mesh;
        mesh.check().unwrap_or_else(|e| panic!("{name}: {e}"));

        let mut seen: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for e in &mesh.edges {
            if let EdgeKind::Boundary { ring, segment } = e.kind {
                *seen.entry((ring, segment)).or_default() += 1;
                let s = &topo.chains[ring].segments[segment];
                assert_eq!(
                    mesh.vertices[e.v[0]],
                    s.start(),
                    "{name}: boundary edge start"
                );
                assert_eq!(mesh.vertices[e.v[1]], s.end(), "{name}: boundary edge end");
            }
        }
        let expected: usize = topo.chains.iter().map(|c| c.segments.len()).sum();
        assert_eq!(
            seen.len(),
            expected,
            "{name}: every boundary segment is one mesh edge"
        );
        assert!(seen.values().all(|&k| k == 1));

        for (qi, q) in mesh.quads.iter().enumerate() {
            let corners: Vec<Point2> = q.iter().map(|&v| mesh.vertices[v]).collect();
            assert!(polygon_area(&corners) > 0.0, "{name}: quad {qi} inverted");
        }
        if mesh.fallback_pieces == 0 {
            assert!(
                interior_valences(mesh).iter().all(|v| (3..=5).contains(v)),
                "{name}: valences"
            );
        }
    }
}

#[test]
fn bridged_polygons_are_simple_with_doubled_bridge_vertices() {
    let cfg = PipelineConfig::default();
    for name in ["annulus", "two_holes"] {
        let pre = stage_preprocess(&asset(name), &cfg).unwrap();
        let poly = stage_topology(&pre, &cfg).unwrap().polygon;
        assert!(!poly.bridges.is_empty());
        let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for o in &poly.origins {
            if let VertexOrigin::Bridge { bridge, index } = *o {
                *counts.entry((bridge, index)).or_default() += 1;
            }
        }
        assert!(
            counts.values().all(|&c| c == 2),
            "{name}: inserted bridge vertices appear twice"
        );
        for b in &poly.bridges {
            for end in [b.from, b.to] {
                assert_eq!(
                    poly.points.iter().filter(|&&p| p == end).count(),
                    2,
                    "{name}: bridge end appears twice"
                );
            }
        }
        let m = poly.len();
        for i in 0..m {
            for j in i + 2..m {
                if i == 0 && j == m - 1 {
                    continue;
                }
                let (a, b) = (poly.points[i], poly.points[(i + 1) % m]);
                let (c, d) = (poly.points[j], poly.points[(j + 1) % m]);
                assert!(
                    !segments_cross(a, b, c, d, 1e-12),
                    "{name}: edges {i} and {j} cross"
                );
            }
        }
    }
}

#[test]
fn smoothing_fixes_boundary_and_meets_tolerance() {
    let cfg = PipelineConfig::default();
    for name in ASSETS {
        let pre = stage_preprocess(&asset(name), &cfg).unwrap();
        let topo = stage_topology(&pre, &cfg).unwrap();
        assert!(topo.smoothing.converged, "{name}: smoothing converged");
        if let Some(&last) = topo.smoothing.ratios.last() {
            assert!(last < cfg.delta);
        }
        let mut shaken = topo.mesh.clone();
        for (i, v) in shaken.vertices.iter_mut().enumerate() {
            if !topo.mesh.boundary[i] {
                *v += Point2::new(0.01, -0.02);
            }
        }
        let (again, report) = laplacian_smooth(&shaken, cfg.delta, cfg.smoothing_max_iter);
        assert!(report.converged);
        for (i, v) in again.vertices.iter().enumerate() {
            if topo.mesh.boundary[i] {
                assert_eq!(v.x.to_bits(), shaken.vertices[i].x.to_bits());
                assert_eq!(v.y.to_bits(), shaken.vertices[i].y.to_bits());
            }
        }
    }
}

fn endpoints_and_fixed_curves_pinned(before: &PatchLayout, after: &PatchLayout) {
    for (a, b) in before.curves.iter().zip(&after.curves) {
        let (pa, pb) = (&a.curve.control_points, &b.curve.control_points);
        assert_eq!(pa[0], pb[0]);
        assert_eq!(pa[pa.len() - 1], pb[pb.len() - 1]);
        if a.fixed {
            assert_eq!(pa, pb);
        }
    }
}

#[test]
fn segmentation_pins_endpoints_and_descends() {
    let cfg = GlobalObjectiveConfig::from(&PipelineConfig::default());
    let mut r = rng(21);
    for name in ["lshape", "annulus", "two_holes"] {
        let straight = straight_layout(name);
        let mut perturbed = straight.clone();
        perturb_free_curves(&mut perturbed, 0.05, &mut r);
        for start in [&straight, &perturbed] {
            let (out, report) = optimize_segmentation(start, &cfg, 4);
            endpoints_and_fixed_curves_pinned(start, &out);
            assert!(
                report.final_terms.total <= report.initial.total,
                "{name}: objective increased"
            );
        }
    }
}

#[test]
fn tangent_term_vanishes_exactly_at_equal_angles() {
    let mut layout = straight_layout("two_holes");
    let n = layout.degree;
    let stars = layout.vertex_stars();
    assert!(stars.iter().any(|s| s.valence() != 4));
    for s in &stars {
        let centre = layout.mesh.vertices[s.vertex];
        let rho = s.valence() as f64;
        for (i, &(c, starts_here)) in s.curves.iter().enumerate() {
            let a = 0.7 + std::f64::consts::TAU * i as f64 / rho;
            let idx = if starts_here { 1 } else { n - 1 };
            layout.curves[c].curve.control_points[idx] =
                centre + Point2::new(a.cos(), a.sin()) * 0.01;
        }
    }
    assert!(f_tangent(&layout) < 1e-24);
    let s = &stars[0];
    let (c, starts_here) = s.curves[0];
    let idx = if starts_here { 1 } else { n - 1 };
    let centre = layout.mesh.vertices[s.vertex];
    layout.curves[c].curve.control_points[idx] =
        centre + Point2::new(0.7f64.cos(), 0.7f64.sin() + 0.3) * 0.01;
    assert!(f_tangent(&layout) > 1e-6);
}

#[test]
fn patches_keep_curves_and_continuity_after_every_stage() {
    let cfg = PipelineConfig::default();
    for name in ASSETS {
        let out = run_pipeline(&asset(name), &cfg).unwrap();
        let n = out.layout.degree;
        for (q, p) in out.patches.iter().enumerate() {
            for k in 0..4 {
                let side = p.side_curve(k).control_points;
                let want = out.layout.side_points(q, k);
                assert_eq!(side.len(), n + 1);
                for (a, b) in side.iter().zip(&want) {
                    assert_eq!(
                        (a.x.to_bits(), a.y.to_bits()),
                        (b.x.to_bits(), b.y.to_bits()),
                        "{name}: patch {q} side {k}"
                    );
                }
            }
        }
        assert!(c1_residual(&out.layout, &out.patches) <= 1e-12);
        assert!(g1_residual(&out.layout, &out.patches) < 1e-10);
    }
}

#[test]
fn continuity_and_stationarity_on_perturbed_layouts() {
    use rand::Rng;
    let mut r = rng(31);
    let sys = EnergySystem::assemble(4, 2.0, 1.5).unwrap();
    for name in ["lshape", "two_holes"] {
        // start from the optimized layout and move only the middle control points: the
        // points next to a vertex carry the compatibility of the vertex systems, which
        // an arbitrary jitter would break
        let cfg = GlobalObjectiveConfig::from(&PipelineConfig::default());
        let (mut layout, _) = optimize_segmentation(&straight_layout(name), &cfg, 4);
        for c in layout.curves.iter_mut().filter(|c| !c.fixed) {
            let pts = &mut c.curve.control_points;
            let chord = (pts[4] - pts[0]).norm();
            pts[2] +=
                Point2::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)) * (0.04 * chord);
        }
        let (patches, report) = fit_patches(&layout, &sys).unwrap();
        assert!(report.c1_residual <= 1e-12 && c1_residual(&layout, &patches) <= 1e-12);
        assert!(report.g1_residual < 1e-10 && g1_residual(&layout, &patches) < 1e-10);
        for p in &patches {
            let e0 = energy_value(p, 2.0, 1.5);
            let h = 1e-5;
            for &i in &sys.interior {
                for axis in 0..2 {
                    let at = |s: f64| {
                        let mut q = p.clone();
                        if axis == 0 {
                            q.net[i].x += s;
                        } else {
                            q.net[i].y += s;
                        }
                        energy_value(&q, 2.0, 1.5)
                    };
                    let g = (at(h) - at(-h)) / (2.0 * h);
                    assert!(g.abs() <= 1e-6 * e0.max(1.0), "{name}: gradient {g:e}");
                }
            }
        }
    }
}

#[test]
fn sampled_extrema_converge_under_refinement() {
    let cfg = PipelineConfig::default();
    for name in ["lshape", "two_holes"] {
        let out = run_pipeline(&asset(name), &cfg).unwrap();
        for (q, p) in out.patches.iter().enumerate() {
            if !out.quality.per_patch[q].valid {
                continue;
            }
            let (coarse, fine) = (sample_patch(p, 20), sample_patch(p, 40));
            let ext = |v: &[f64]| {
                let f: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
                (
                    f.iter().copied().fold(f64::INFINITY, f64::min),
                    f.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                )
            };
            for (a, b) in [
                (ext(&coarse.scaled_jacobian), ext(&fine.scaled_jacobian)),
                (ext(&coarse.condition), ext(&fine.condition)),
            ] {
                assert!(
                    (a.0 - b.0).abs() <= 0.05 * b.0.abs(),
                    "{name} patch {q}: min {} vs {}",
                    a.0,
                    b.0
                );
                assert!(
                    (a.1 - b.1).abs() <= 0.05 * b.1.abs(),
                    "{name} patch {q}: max {} vs {}",
                    a.1,
                    b.1
                );
            }
        }
    }
}

#[test]
fn square_domain_is_reproduced_exactly() {
    let out = run_pipeline(&asset("square"), &PipelineConfig::default()).unwrap();
    let q = &out.quality;
    assert!(q.patch_count >= 1 && q.invalid_patches.is_empty());
    assert!((q.scaled_jacobian.min - 1.0).abs() <= 1e-9);
}

#[test]
fn random_star_domains_run_end_to_end() {
    use iga_partition::splines::{BSplineCurve, BoundaryLoop, LoopRole};
    use rand::Rng;
    let mut r = rng(41);
    for case in 0..6 {
        let m = r.random_range(5..9usize);
        let corners: Vec<Point2> = (0..m)
            .map(|i| {
                let a = std::f64::consts::TAU * (i as f64 + r.random_range(-0.2..0.2)) / m as f64;
                Point2::new(a.cos(), a.sin()) * r.random_range(2.0..3.0)
            })
            .collect();
        let pieces = (0..m)
            .map(|i| {
                let (a, b) = (corners[i], corners[(i + 1) % m]);
                let bulge = (b - a).perp() * r.random_range(-0.1..0.1);
                let cps = vec![
                    a,
                    a.lerp(b, 1.0 / 3.0) + bulge,
                    a.lerp(b, 2.0 / 3.0) + bulge,
                    b,
                ];
                BSplineCurve::new(3, vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0], cps).unwrap()
            })
            .collect();
        let mut loops = vec![BoundaryLoop {
            role: LoopRole::Outer,
            pieces,
        }];
        if case % 2 == 1 {
            let hole: Vec<Point2> = (0..4)
                .map(|i| {
                    let a = std::f64::consts::TAU * i as f64 / 4.0 + 0.3;
                    Point2::new(a.cos(), a.sin()) * 0.7
                })
                .collect();
            let pieces = (0..4)
                .map(|i| {
                    BSplineCurve::new(
                        1,
                        vec![0.0, 0.0, 1.0, 1.0],
                        vec![hole[i], hole[(i + 1) % 4]],
                    )
                    .unwrap()
                })
                .collect();
            loops.push(BoundaryLoop {
                role: LoopRole::Hole,
                pieces,
            });
        }
        let out = run_pipeline(&loops, &PipelineConfig::default())
            .unwrap_or_else(|e| panic!("case {case}: {e}"));
        out.topology.mesh.check().unwrap();
        assert!(c1_residual(&out.layout, &out.patches) <= 1e-12);
        assert!(g1_residual(&out.layout, &out.patches) < 1e-10);
        assert!(out.quality.patch_count == out.topology.mesh.quads.len());
    }
}
