//! Boundary and layout documents on disk, and SVG output of real pipeline runs.

mod common;

use iga_partition::io::{
    load_boundary, load_boundary_str, load_layout, render_svg, save_layout, IoError,
    LayoutDocument, RenderMode,
};
use iga_partition::pipeline::run_pipeline;
use iga_partition::splines::LoopRole;
use iga_partition::PipelineConfig;
use serde_json::{json, Value};

use common::*;

fn square_doc() -> Value {
    let edge = |a: [f64; 2], b: [f64; 2]| json!({ "degree": 1, "knots": [0, 0, 1, 1], "control_points": [a, b] });
    json!({
        "version": 1,
        "loops": [{ "role": "outer", "pieces": [
            edge([0.0, 0.0], [1.0, 0.0]),
            edge([1.0, 0.0], [1.0, 1.0]),
            edge([1.0, 1.0], [0.0, 1.0]),
            edge([0.0, 1.0], [0.0, 0.0]),
        ]}]
    })
}

#[test]
fn shipped_boundaries_load() {
    let square = asset("square");
    assert_eq!(square.len(), 1);
    assert_eq!(square[0].pieces.len(), 4);
    assert_eq!(square[0].role, LoopRole::Outer);

    let annulus = asset("annulus");
    assert_eq!(annulus.len(), 2);
    assert_eq!(
        annulus.iter().filter(|l| l.role == LoopRole::Hole).count(),
        1
    );
    assert_eq!(
        asset("two_holes")
            .iter()
            .filter(|l| l.role == LoopRole::Hole)
            .count(),
        2
    );
}

#[test]
fn boundary_errors_name_their_location() {
    let mut bad_knots = square_doc();
    bad_knots["loops"][0]["pieces"][2]["knots"] = json!([0, 1, 0, 1]);
    match load_boundary_str(&bad_knots.to_string()) {
        Err(IoError::Schema { path, .. }) => assert_eq!(path, "loops[0].pieces[2]"),
        other => panic!("expected a schema error, got {other:?}"),
    }

    match load_boundary_str("{\n  \"version\": 1,\n  \"loops\": [\n") {
        Err(IoError::Parse { line, .. }) => assert!(line >= 3),
        other => panic!("expected a parse error, got {other:?}"),
    }

    let mut open = square_doc();
    open["loops"][0]["pieces"][3]["control_points"][1] = json!([0.0, 0.5]);
    assert!(matches!(
        load_boundary_str(&open.to_string()),
        Err(IoError::Geometry { .. })
    ));

    let mut future = square_doc();
    future["version"] = json!(2);
    assert!(matches!(
        load_boundary_str(&future.to_string()),
        Err(IoError::Version {
            found: 2,
            expected: 1
        })
    ));

    let mut extra = square_doc();
    extra["author"] = json!("someone");
    extra["loops"][0]["pieces"][0]["weight"] = json!(3);
    assert_eq!(load_boundary_str(&extra.to_string()).unwrap().len(), 1);

    assert!(matches!(
        load_boundary("/nonexistent/boundary.json"),
        Err(IoError::Read { .. })
    ));
}

#[test]
fn layout_round_trips_through_disk() {
    let cfg = PipelineConfig::default();
    let out = run_pipeline(&asset("annulus"), &cfg).unwrap();
    let doc = LayoutDocument::from_output(&out, &cfg, Some("annulus".into()));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("annulus.layout.json");
    save_layout(&path, &doc).unwrap();
    let back = load_layout(&path).unwrap();
    assert_eq!(back.to_json(), doc.to_json());
    assert_eq!(back.patches, doc.patches);
    assert!(std::fs::read_dir(dir.path()).unwrap().all(|e| !e
        .unwrap()
        .file_name()
        .to_string_lossy()
        .ends_with(".partial")));

    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, &text[..text.len() / 2]).unwrap();
    assert!(matches!(load_layout(&path), Err(IoError::Parse { .. })));

    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["unexpected"] = json!({ "nested": true });
    assert_eq!(
        LayoutDocument::parse(&v.to_string()).unwrap().patches,
        doc.patches
    );

    v["version"] = json!(99);
    assert!(matches!(
        LayoutDocument::parse(&v.to_string()),
        Err(IoError::Version { found: 99, .. })
    ));
    v.as_object_mut().unwrap().remove("version");
    assert!(matches!(
        LayoutDocument::parse(&v.to_string()),
        Err(IoError::Parse { .. })
    ));
}

#[test]
fn svg_output_matches_the_layout() {
    let cfg = PipelineConfig {
        grid: 8,
        ..PipelineConfig::default()
    };
    let out = run_pipeline(&asset("lshape"), &cfg).unwrap();
    let doc = LayoutDocument::from_output(&out, &cfg, None);
    let patches = doc.patches.len();
    for iso in [0, 3] {
        let svg = render_svg(&doc, RenderMode::Isocurves, iso);
        assert!(svg.starts_with("<?xml") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<path").count(), patches * (4 + 2 * iso));
    }
    let partition = render_svg(&doc, RenderMode::Partition, 0);
    assert_eq!(partition.matches("<path").count(), out.layout.curves.len());
    let colormap = render_svg(&doc, RenderMode::JacobianColormap, 0);
    assert_eq!(colormap.matches("<path").count(), patches * (7 * 7 + 4));
}
