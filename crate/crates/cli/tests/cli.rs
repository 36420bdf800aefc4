//! Drives the binary through every subcommand on a shipped domain.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn asset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/assets")
        .join(format!("{name}.json"))
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iga-partition"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn stages_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    let input = asset("lshape").to_string_lossy().into_owned();

    ok(&["preprocess", &input, "-o", &p("1.json")]);
    assert!(json(Path::new(&p("1.json")))["boundary"].is_object());
    ok(&[
        "mesh",
        &p("1.json"),
        "-o",
        &p("2.json"),
        "--dump-quadmesh",
        &p("mesh.obj"),
    ]);
    let obj = std::fs::read_to_string(p("mesh.obj")).unwrap();
    assert!(obj.lines().any(|l| l.starts_with("v ")) && obj.lines().any(|l| l.starts_with("f ")));
    ok(&[
        "segment",
        &p("2.json"),
        "-o",
        &p("3.json"),
        "--trace-optimizer",
        &p("trace.csv"),
    ]);
    assert!(std::fs::read_to_string(p("trace.csv"))
        .unwrap()
        .starts_with("iteration,value,grad_inf"));
    ok(&["fit", &p("3.json"), "-o", &p("4.json")]);
    ok(&["check", &p("4.json"), "-o", &p("5.json")]);
    ok(&["report", &p("5.json"), "-o", &p("6.json")]);

    let doc = json(Path::new(&p("6.json")));
    let patches = doc["patches"].as_array().unwrap().len();
    assert!(patches > 0);
    assert_eq!(
        doc["quality"]["patch_count"].as_u64().unwrap() as usize,
        patches
    );

    ok(&["render", &p("6.json"), "-o", &p("iso.svg"), "--iso", "2"]);
    let svg = std::fs::read_to_string(p("iso.svg")).unwrap();
    assert_eq!(svg.matches("<path").count(), patches * 8);
    ok(&[
        "render",
        &p("6.json"),
        "-o",
        &p("map.svg"),
        "--mode",
        "colormap",
        "--grid",
        "5",
    ]);
    assert!(std::fs::read_to_string(p("map.svg"))
        .unwrap()
        .contains("fill=\"#"));
}

#[test]
fn pipeline_is_deterministic_and_honors_flags() {
    let dir = tempfile::tempdir().unwrap();
    let input = asset("annulus").to_string_lossy().into_owned();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    ok(&[
        "pipeline",
        &input,
        "-o",
        a.to_str().unwrap(),
        "--seed",
        "7",
        "--grid",
        "12",
    ]);
    ok(&[
        "pipeline",
        &input,
        "-o",
        b.to_str().unwrap(),
        "--seed",
        "7",
        "--grid",
        "12",
    ]);
    let strip = |mut v: Value| {
        v["provenance"]["timings"] = Value::Null;
        v
    };
    let (da, db) = (strip(json(&a)), strip(json(&b)));
    assert_eq!(da, db);
    assert_eq!(da["config"]["seed"], 7);
    assert_eq!(da["config"]["grid"], 12);

    let stdout = ok(&["pipeline", &input]).stdout;
    let printed: Value = serde_json::from_slice(&stdout).unwrap();
    assert_eq!(strip(printed)["patches"], da["patches"]);
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let out = run(&["pipeline", missing.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());

    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{ \"version\": 1, ").unwrap();
    let out = run(&["pipeline", broken.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));

    let out = run(&[
        "pipeline",
        asset("square").to_str().unwrap(),
        "--degree",
        "2",
    ]);
    assert!(!out.status.success());
}
