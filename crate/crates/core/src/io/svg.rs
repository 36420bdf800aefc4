//! SVG 1.1 figures of a layout: partition curves, iso-parameter curves, and
//! scaled-Jacobian colormaps.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::layout::LayoutDocument;
use crate::bernstein::BezierCurve;
use crate::geometry::Point2;
use crate::patchfit::BezierPatch;
use crate::quality::scaled_jacobian_field;

/// Polyline resolution of every drawn curve.
const CURVE_SAMPLES: usize = 48;
/// Number of distinct colors of the colormap.
pub const COLOR_BUCKETS: usize = 32;
const CANVAS: f64 = 800.0;
const MARGIN: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    Partition,
    Isocurves,
    JacobianColormap,
}

impl std::str::FromStr for RenderMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "partition" => Ok(RenderMode::Partition),
            "isocurves" => Ok(RenderMode::Isocurves),
            "colormap" | "jacobian_colormap" => Ok(RenderMode::JacobianColormap),
            _ => Err(format!(
                "unknown render mode `{s}` (partition, isocurves, colormap)"
            )),
        }
    }
}

/// Fixed blue (0) to red (1) scale; values outside `[0, 1]` are clamped, and the
/// result is quantized to [`COLOR_BUCKETS`] colors.
pub fn colormap(value: f64) -> (u8, u8, u8) {
    let v = if value.is_finite() {
        value.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let bucket = ((v * COLOR_BUCKETS as f64) as usize).min(COLOR_BUCKETS - 1);
    let t = (bucket as f64 + 0.5) / COLOR_BUCKETS as f64;
    let r = (255.0 * t).round() as u8;
    let g = (255.0 * (1.0 - (2.0 * t - 1.0).abs()) * 0.6).round() as u8;
    let b = (255.0 * (1.0 - t)).round() as u8;
    (r, g, b)
}

/// Maps model coordinates into the canvas (y axis flipped).
struct Frame {
    min: Point2,
    scale: f64,
    height: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = Point2>) -> Frame {
        let (mut lo, mut hi) = (
            Point2::new(f64::INFINITY, f64::INFINITY),
            Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        );
        for p in points {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        if !lo.x.is_finite() {
            lo = Point2::ZERO;
            hi = Point2::new(1.0, 1.0);
        }
        let span = (hi.x - lo.x).max(hi.y - lo.y).max(1e-12);
        let scale = (CANVAS - 2.0 * MARGIN) / span;
        Frame {
            min: lo,
            scale,
            height: (hi.y - lo.y) * scale + 2.0 * MARGIN,
        }
    }

    fn width(&self, max_x: f64) -> f64 {
        (max_x - self.min.x) * self.scale + 2.0 * MARGIN
    }

    fn map(&self, p: Point2) -> (f64, f64) {
        (
            MARGIN + (p.x - self.min.x) * self.scale,
            self.height - MARGIN - (p.y - self.min.y) * self.scale,
        )
    }
}

fn polyline(frame: &Frame, pts: impl Iterator<Item = Point2>) -> String {
    let mut d = String::new();
    for (k, p) in pts.enumerate() {
        let (x, y) = frame.map(p);
        let _ = write!(d, "{}{x:.3} {y:.3}", if k == 0 { "M" } else { " L" });
    }
    d
}

fn curve_path(frame: &Frame, c: &BezierCurve, stroke: &str, width: f64) -> String {
    let d = polyline(
        frame,
        (0..=CURVE_SAMPLES).map(|s| c.eval(s as f64 / CURVE_SAMPLES as f64)),
    );
    format!("<path d=\"{d}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{width}\"/>\n")
}

fn iso_path(frame: &Frame, p: &BezierPatch, t: f64, along_u: bool) -> String {
    let d = polyline(
        frame,
        (0..=CURVE_SAMPLES).map(|s| {
            let r = s as f64 / CURVE_SAMPLES as f64;
            if along_u {
                p.eval(r, t)
            } else {
                p.eval(t, r)
            }
        }),
    );
    format!("<path d=\"{d}\" fill=\"none\" stroke=\"#4a6fa5\" stroke-width=\"0.6\"/>\n")
}

/// Renders the document. Partition mode draws the segmentation curves (or the patch
/// sides when no layout is present); isocurves mode draws, per patch, its four sides
/// and `iso_count` interior iso-curves in each parameter direction; colormap mode
/// fills each patch with per-sample scaled-Jacobian colors on a `grid × grid` lattice
/// and overlays the patch sides.
pub fn render_svg(doc: &LayoutDocument, mode: RenderMode, iso_count: usize) -> String {
    let net_points = doc.patches.iter().flat_map(|p| p.net.iter().copied());
    let curve_points = doc.layout.iter().flat_map(|l| {
        l.curves
            .iter()
            .flat_map(|c| c.curve.control_points.iter().copied())
    });
    let all: Vec<Point2> = net_points.chain(curve_points).collect();
    let frame = Frame::fit(all.iter().copied());
    let max_x = all.iter().map(|p| p.x).fold(frame.min.x + 1e-12, f64::max);
    let (w, h) = (frame.width(max_x), frame.height);

    let mut body = String::new();
    match mode {
        RenderMode::Partition => match &doc.layout {
            Some(layout) => {
                for c in &layout.curves {
                    let stroke = if c.fixed { "#000000" } else { "#c0392b" };
                    body.push_str(&curve_path(&frame, &c.curve, stroke, 1.2));
                }
            }
            None => {
                for p in &doc.patches {
                    for k in 0..4 {
                        body.push_str(&curve_path(&frame, &p.side_curve(k), "#000000", 1.2));
                    }
                }
            }
        },
        RenderMode::Isocurves => {
            for p in &doc.patches {
                for k in 0..4 {
                    body.push_str(&curve_path(&frame, &p.side_curve(k), "#000000", 1.2));
                }
                for i in 1..=iso_count {
                    let t = i as f64 / (iso_count + 1) as f64;
                    body.push_str(&iso_path(&frame, p, t, true));
                    body.push_str(&iso_path(&frame, p, t, false));
                }
            }
        }
        RenderMode::JacobianColormap => {
            let grid = doc.config.grid.max(2);
            for p in &doc.patches {
                let js = scaled_jacobian_field(p, grid);
                let cells = grid - 1;
                let at =
                    |a: usize, b: usize| p.eval(a as f64 / cells as f64, b as f64 / cells as f64);
                for a in 0..cells {
                    for b in 0..cells {
                        let v = (js[a * grid + b]
                            + js[(a + 1) * grid + b]
                            + js[a * grid + b + 1]
                            + js[(a + 1) * grid + b + 1])
                            / 4.0;
                        let (r, g, bl) = colormap(v);
                        let d = polyline(
                            &frame,
                            [at(a, b), at(a + 1, b), at(a + 1, b + 1), at(a, b + 1)].into_iter(),
                        );
                        let _ = writeln!(body, "<path d=\"{d} Z\" fill=\"#{r:02x}{g:02x}{bl:02x}\" stroke=\"#{r:02x}{g:02x}{bl:02x}\" stroke-width=\"0.4\"/>");
                    }
                }
                for k in 0..4 {
                    body.push_str(&curve_path(&frame, &p.side_curve(k), "#000000", 0.8));
                }
            }
        }
    }

    let mut s = String::new();
    let _ = writeln!(s, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w:.1}\" height=\"{h:.1}\" viewBox=\"0 0 {w:.3} {h:.3}\">"
    );
    s.push_str(&body);
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PipelineConfig;

    fn doc_with(patches: Vec<BezierPatch>) -> LayoutDocument {
        let mut d = LayoutDocument::new(
            &PipelineConfig {
                grid: 6,
                ..PipelineConfig::default()
            },
            None,
        );
        d.patches = patches;
        d
    }

    #[test]
    fn colormap_endpoints() {
        let (r0, _, b0) = colormap(0.0);
        let (r1, _, b1) = colormap(1.0);
        assert!(b0 > r0 && r1 > b1);
        assert_eq!(colormap(-3.0), colormap(0.0));
        assert_eq!(colormap(7.0), colormap(1.0));
    }

    #[test]
    fn identity_colormap_single_bucket() {
        let svg = render_svg(
            &doc_with(vec![BezierPatch::identity(4)]),
            RenderMode::JacobianColormap,
            0,
        );
        let fills: std::collections::BTreeSet<&str> = svg
            .match_indices("fill=\"#")
            .map(|(i, _)| &svg[i + 6..i + 13])
            .collect();
        assert_eq!(fills.len(), 1);
        let (r, g, b) = colormap(1.0);
        assert!(fills.contains(format!("#{r:02x}{g:02x}{b:02x}").as_str()));
    }

    #[test]
    fn isocurve_path_count() {
        let d = doc_with(vec![BezierPatch::identity(4), BezierPatch::identity(5)]);
        for iso in [0, 1, 3, 7] {
            let svg = render_svg(&d, RenderMode::Isocurves, iso);
            assert_eq!(svg.matches("<path").count(), 2 * (2 * iso + 4));
        }
    }

    #[test]
    fn mode_names_parse() {
        assert_eq!(
            "colormap".parse::<RenderMode>(),
            Ok(RenderMode::JacobianColormap)
        );
        assert!("bogus".parse::<RenderMode>().is_err());
    }
}
