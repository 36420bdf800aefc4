//! Command-line front end: each subcommand runs one pipeline stage on a document.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use iga_partition::io::{
    load_boundary_str, quad_mesh_obj, render_svg, save_layout, trace_csv, LayoutDocument,
    RenderMode,
};
use iga_partition::pipeline::{
    stage_fit, stage_preprocess, stage_repair, stage_report, stage_segment, stage_topology,
};
use iga_partition::PipelineConfig;

#[derive(Debug, Parser)]
#[command(
    name = "iga-partition",
    version,
    about = "Multi-patch Bézier parameterization of planar B-spline domains"
)]
struct Cli {
    #[command(flatten)]
    opts: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalOpts {
    /// JSON configuration file (missing fields take their defaults).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Concavity tolerance of the convex decomposition.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Patch degree (at least 4 and at least the input degree).
    #[arg(long, global = true)]
    degree: Option<usize>,
    /// Per-patch sampling resolution of the quality metrics.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Seed of the randomized repair restarts.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also write the quad mesh as OBJ to this path.
    #[arg(long, global = true)]
    dump_quadmesh: Option<PathBuf>,
    /// Also write the segmentation optimizer trace as CSV to this path.
    #[arg(long, global = true)]
    trace_optimizer: Option<PathBuf>,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Args)]
struct Io {
    /// Input document: a boundary document or a layout document.
    input: PathBuf,
    /// Output layout document (stdout when omitted).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract Bézier segments and refine the boundary.
    Preprocess(Io),
    /// Build the quad mesh of the domain.
    Mesh(Io),
    /// Optimize the segmentation curves.
    Segment(Io),
    /// Construct the Bézier patches.
    Fit(Io),
    /// Certify every patch and repair invalid ones.
    Check(Io),
    /// Compute the quality report and print it as a table.
    Report(Io),
    /// Draw a layout document as SVG.
    Render {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// partition, isocurves or colormap.
        #[arg(long, default_value = "isocurves")]
        mode: RenderMode,
        /// Iso-curves per parameter direction and patch.
        #[arg(long, default_value_t = 5)]
        iso: usize,
    },
    /// Run every stage.
    Pipeline(Io),
}

/// Stage reached by a document, in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Stage {
    Preprocess,
    Mesh,
    Segment,
    Fit,
    Check,
    Report,
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.opts.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let opts = &cli.opts;
    match &cli.command {
        Command::Preprocess(io) => stage_command(opts, io, Stage::Preprocess),
        Command::Mesh(io) => stage_command(opts, io, Stage::Mesh),
        Command::Segment(io) => stage_command(opts, io, Stage::Segment),
        Command::Fit(io) => stage_command(opts, io, Stage::Fit),
        Command::Check(io) => stage_command(opts, io, Stage::Check),
        Command::Report(io) => stage_command(opts, io, Stage::Report),
        Command::Pipeline(io) => stage_command(opts, io, Stage::Report),
        Command::Render {
            input,
            output,
            mode,
            iso,
        } => {
            let text = read(input)?;
            let doc = LayoutDocument::parse(&text)
                .with_context(|| format!("reading {}", input.display()))?;
            if doc.patches.is_empty() && doc.layout.is_none() {
                bail!("{} contains neither patches nor segmentation curves; run `segment` or `fit` first", input.display());
            }
            emit(output.as_deref(), &render_svg(&doc, *mode, *iso))
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn resolve_config(opts: &GlobalOpts, base: Option<PipelineConfig>) -> Result<PipelineConfig> {
    let mut cfg = match &opts.config {
        Some(p) => serde_json::from_str(&read(p)?)
            .with_context(|| format!("invalid configuration {}", p.display()))?,
        None => base.unwrap_or_default(),
    };
    if let Some(e) = opts.epsilon {
        cfg.epsilon = e;
    }
    if let Some(d) = opts.degree {
        cfg.degree = Some(d);
    }
    if let Some(g) = opts.grid {
        cfg.grid = g;
    }
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Loads either kind of input document and runs every missing stage up to `target`.
fn stage_command(opts: &GlobalOpts, io: &Io, target: Stage) -> Result<()> {
    let text = read(&io.input)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("{} is not valid JSON", io.input.display()))?;
    let is_boundary = value.get("loops").is_some();
    let name = io
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned());

    let (mut doc, loops) = if is_boundary {
        let cfg = resolve_config(opts, None)?;
        let loops =
            load_boundary_str(&text).with_context(|| format!("reading {}", io.input.display()))?;
        (LayoutDocument::new(&cfg, name), Some(loops))
    } else {
        let old = LayoutDocument::parse(&text)
            .with_context(|| format!("reading {}", io.input.display()))?;
        let cfg = resolve_config(opts, Some(old.config.clone()))?;
        if cfg != old.config {
            warn!("configuration differs from the one recorded in the input document");
        }
        let mut doc = old;
        doc.provenance.config_hash = iga_partition::io::config_hash(&cfg);
        doc.config = cfg;
        (doc, None)
    };
    let cfg = doc.config.clone();
    let t_all = Instant::now();

    if let Some(loops) = &loops {
        let t = Instant::now();
        doc.boundary = Some(stage_preprocess(loops, &cfg)?);
        doc.provenance.timings.preprocess = t.elapsed().as_secs_f64();
    }
    if target >= Stage::Mesh && doc.topology.is_none() {
        let pre = doc
            .boundary
            .as_ref()
            .context("document has no preprocessed boundary")?;
        let t = Instant::now();
        doc.topology = Some(stage_topology(pre, &cfg)?);
        doc.provenance.timings.topology = t.elapsed().as_secs_f64();
    }
    if target >= Stage::Segment && doc.layout.is_none() {
        let topo = doc.topology.as_ref().context("document has no quad mesh")?;
        let degree = doc
            .boundary
            .as_ref()
            .context("document has no preprocessed boundary")?
            .degree;
        let t = Instant::now();
        let (layout, report) = stage_segment(topo, degree, &cfg)?;
        doc.provenance.timings.segmentation = t.elapsed().as_secs_f64();
        doc.layout = Some(layout);
        doc.segmentation = Some(report);
    }
    if target >= Stage::Fit && doc.patches.is_empty() {
        let layout = doc
            .layout
            .as_ref()
            .context("document has no segmentation layout")?;
        let t = Instant::now();
        let (patches, fit) = stage_fit(layout, &cfg)?;
        doc.provenance.timings.patchfit = t.elapsed().as_secs_f64();
        doc.patches = patches;
        doc.fit = Some(fit);
    }
    if target >= Stage::Check {
        let t = Instant::now();
        let (patches, repairs) = stage_repair(&doc.patches, &cfg)?;
        doc.provenance.timings.repair = t.elapsed().as_secs_f64();
        doc.patches = patches;
        doc.repairs = repairs;
        for r in &doc.repairs {
            let o = &r.outcome;
            let status = if o.success {
                "repaired"
            } else {
                "repair FAILED"
            };
            eprintln!(
                "patch {}: {status} (min coefficient {:.3e} -> {:.3e}, {} attempt(s))",
                r.patch, o.min_alpha_before, o.min_alpha_after, o.attempts
            );
        }
        if target == Stage::Check {
            eprintln!(
                "{} patch(es), {} needed repair",
                doc.patches.len(),
                doc.repairs.len()
            );
        }
    }
    if target >= Stage::Report {
        let t = Instant::now();
        let q = stage_report(
            &doc.patches,
            doc.topology.as_ref(),
            doc.segmentation.as_ref(),
            doc.fit.as_ref(),
            &doc.repairs,
            &cfg,
        );
        doc.provenance.timings.quality = t.elapsed().as_secs_f64();
        eprint!("{}", q.to_table());
        doc.quality = Some(q);
    }
    let tm = &mut doc.provenance.timings;
    tm.global = tm.topology + tm.segmentation;
    tm.local = tm.patchfit + tm.repair;
    info!("stages finished in {:.3} s", t_all.elapsed().as_secs_f64());

    if let Some(p) = &opts.dump_quadmesh {
        let topo = doc
            .topology
            .as_ref()
            .context("--dump-quadmesh needs the mesh stage")?;
        std::fs::write(p, quad_mesh_obj(&topo.mesh))
            .with_context(|| format!("cannot write {}", p.display()))?;
    }
    if let Some(p) = &opts.trace_optimizer {
        let seg = doc
            .segmentation
            .as_ref()
            .context("--trace-optimizer needs the segment stage")?;
        std::fs::write(p, trace_csv(&seg.trace))
            .with_context(|| format!("cannot write {}", p.display()))?;
    }
    match &io.output {
        Some(p) => save_layout(p, &doc)?,
        None => println!("{}", doc.to_json()),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config() {
        let cli = Cli::parse_from([
            "iga-partition",
            "pipeline",
            "in.json",
            "--epsilon",
            "0.4",
            "--seed",
            "3",
            "--grid",
            "10",
        ]);
        let cfg = resolve_config(&cli.opts, None).unwrap();
        assert_eq!((cfg.epsilon, cfg.seed, cfg.grid), (0.4, 3, 10));
        let bad = Cli::parse_from(["iga-partition", "mesh", "in.json", "--epsilon", "2"]);
        assert!(resolve_config(&bad.opts, None).is_err());
    }

    #[test]
    fn stages_are_ordered() {
        assert!(
            Stage::Preprocess < Stage::Mesh
                && Stage::Fit < Stage::Check
                && Stage::Check < Stage::Report
        );
    }
}
