use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use irt_rank::config::{MaskPaths, Overrides, RunConfig};
use irt_rank::model::{KeepRange, Rect};
use irt_rank::phantom::PhantomSpec;
use irt_rank::pipeline::{run_ppt, run_rank, run_report, run_simulate};
use irt_rank::{Error, Result};

#[derive(Parser)]
#[command(name = "irt-rank", version, about = "Rank thermographic image sequences by anomaly content")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic plate sequence with masks.
    Simulate(Common),
    /// Amplitude and phase stacks by pulsed phase thermography.
    Ppt(Common),
    /// Metric curves, plots and peak report.
    Rank(Common),
    /// Overlay plots of curve CSVs in a directory.
    Report {
        dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Plate with one shallow insert.
    Single,
    /// Six inserts at increasing depth, one per ROI tile.
    SixRoi,
    /// Plate without inserts.
    Clean,
}

#[derive(Args)]
struct Common {
    /// Input stack directory.
    input: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Phantom used when no input stack is given.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Region x0,y0,w,h; repeat for several.
    #[arg(long, value_parser = parse_rect)]
    roi: Vec<Rect>,
    #[arg(long)]
    phi: Option<usize>,
    #[arg(long)]
    nos: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Inclusive frame ranges a:b[,c:d].
    #[arg(long, value_parser = parse_keep)]
    keep_frames: Option<KeepList>,
    /// defect.pgm,reference.pgm
    #[arg(long, value_parser = parse_masks)]
    masks: Option<MaskPaths>,
    #[arg(long)]
    filter_order: Option<usize>,
    /// Low-pass cutoff as a fraction of Nyquist.
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long, env = "IRT_RANK_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_rect(s: &str) -> std::result::Result<Rect, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Clone)]
struct KeepList(Vec<KeepRange>);

fn parse_keep(s: &str) -> std::result::Result<KeepList, String> {
    KeepRange::parse_list(s).map(KeepList).map_err(|e| e.to_string())
}

fn parse_masks(s: &str) -> std::result::Result<MaskPaths, String> {
    match s.split_once(',') {
        Some((d, r)) if !d.is_empty() && !r.is_empty() => {
            Ok(MaskPaths { defect: PathBuf::from(d), reference: PathBuf::from(r) })
        }
        _ => Err(format!("expected defect.pgm,reference.pgm, got {s:?}")),
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), |p| RunConfig::load(p))
}

fn build(c: Common) -> Result<RunConfig> {
    let mut cfg = load_config(c.config.as_ref())?;
    match c.preset {
        Some(Preset::Single) => cfg.phantom = Some(PhantomSpec::single_defect(0.135e-3)),
        Some(Preset::SixRoi) => {
            cfg.phantom = Some(PhantomSpec::six_roi());
            if cfg.rois.is_empty() {
                cfg.rois = PhantomSpec::roi_rects();
            }
        }
        Some(Preset::Clean) => cfg.phantom = Some(PhantomSpec::default()),
        None => {}
    }
    cfg.apply(Overrides {
        input: c.input,
        rois: c.roi,
        phi: c.phi,
        nos: c.nos,
        seed: c.seed,
        keep_frames: c.keep_frames.map(|k| k.0),
        masks: c.masks,
        filter_order: c.filter_order,
        cutoff: c.cutoff,
        workers: c.workers,
        out: c.out,
    });
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Simulate(c) => {
            let mut cfg = build(c)?;
            if cfg.phantom.is_none() {
                cfg.phantom = Some(PhantomSpec::default());
            }
            let p = run_simulate(&cfg)?;
            println!(
                "wrote {} frames of {}x{} to {}",
                p.sequence.len(),
                p.sequence.width(),
                p.sequence.height(),
                cfg.out.display()
            );
        }
        Cmd::Ppt(c) => {
            let cfg = build(c)?;
            let pair = run_ppt(&cfg)?;
            println!("wrote {} frequency bins to {}", pair.frequencies.len(), cfg.out.display());
        }
        Cmd::Rank(c) => {
            let cfg = build(c)?;
            for out in run_rank(&cfg)? {
                let dir = cfg.out.join(&out.report.label);
                for m in &out.report.metrics {
                    if let Some(g) = m.ranges.first() {
                        println!("{}{}: global range {}..{} peak {}", prefix(&out.report.label), m.name, g.start, g.end, g.peak);
                    }
                }
                for n in &out.report.notes {
                    println!("{}note: {n}", prefix(&out.report.label));
                }
                println!("{}report written to {}", prefix(&out.report.label), dir.display());
            }
        }
        Cmd::Report { dir, config, out } => {
            let cfg = load_config(config.as_ref())?;
            cfg.validate()?;
            let out = out.unwrap_or_else(|| dir.clone());
            for p in run_report(&dir, &out, &cfg.post)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn prefix(label: &str) -> String {
    if label.is_empty() {
        String::new()
    } else {
        format!("[{label}] ")
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("irt-rank: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
