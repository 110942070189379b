//! Batch pipeline behind the CLI: simulate, transform, rank and report.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::curve::{
    find_max_ranges, postprocess, read_csv, svg_plot, write_csv, MetricCurve, PeakRange, PlotSeries, PostConfig,
    ProcessedCurve, CSV_HEADER,
};
use crate::error::{Error, Result};
use crate::hi::hi_curve;
use crate::model::{crop_roi, load_sequence, save_sequence, AxisKind, KeepRange, Mask, Rect, Sequence};
use crate::phantom::{generate_phantom, Phantom};
use crate::ppt::{ppt_transform, SpectralPair};
use crate::rea_tve::rea_tve_curve;
use crate::reference::{background_filter, reference_curves};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const OVERLAY_SVG: &str = "overlay.svg";

/// Run `f` on a pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// One region ready for ranking.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub label: String,
    pub roi: Option<Rect>,
    pub sequence: Sequence,
    /// Original frame index of every kept frame.
    pub kept: Vec<usize>,
    pub masks: Option<(Mask, Mask)>,
}

fn kept_indices(n: usize, keep: &[KeepRange]) -> Result<Vec<usize>> {
    if keep.is_empty() {
        return Ok((0..n).collect());
    }
    let mut sel = vec![false; n];
    for r in keep {
        if r.start > r.end || r.end >= n {
            return Err(Error::OutOfBounds(format!("frame range {}:{} outside [0, {n})", r.start, r.end)));
        }
        sel[r.start..=r.end].iter_mut().for_each(|s| *s = true);
    }
    Ok((0..n).filter(|&i| sel[i]).collect())
}

fn select_frames(seq: &Sequence, kept: &[usize]) -> Result<Sequence> {
    if kept.len() == seq.len() {
        return Ok(seq.clone());
    }
    let frames = kept.iter().map(|&i| seq.frame(i).clone()).collect();
    let axis = kept.iter().map(|&i| seq.axis_values()[i]).collect();
    Sequence::new(frames, seq.axis_kind(), axis)
}

/// Load or synthesize the input, then crop regions and drop excluded frames.
pub fn prepare(cfg: &RunConfig) -> Result<Vec<Prepared>> {
    let (seq, phantom_masks) = match (&cfg.input, &cfg.phantom) {
        (Some(dir), _) => (load_sequence(dir)?, None),
        (None, Some(spec)) => {
            let p = generate_phantom(spec)?;
            (p.sequence, Some((p.defect_mask, p.reference_mask)))
        }
        (None, None) => return Err(Error::Config("no input stack and no phantom given".into())),
    };
    let masks = match &cfg.masks {
        Some(m) => Some((Mask::read_pgm(&m.defect)?, Mask::read_pgm(&m.reference)?)),
        None => phantom_masks,
    };
    if let Some((d, r)) = &masks {
        for m in [d, r] {
            if (m.width(), m.height()) != (seq.width(), seq.height()) {
                return Err(Error::Dimension(format!(
                    "mask is {}x{} but frames are {}x{}",
                    m.width(),
                    m.height(),
                    seq.width(),
                    seq.height()
                )));
            }
        }
    }
    let kept = kept_indices(seq.len(), &cfg.keep_frames)?;
    let seq = select_frames(&seq, &kept)?;

    let rois: Vec<Option<Rect>> = if cfg.rois.is_empty() { vec![None] } else { cfg.rois.iter().copied().map(Some).collect() };
    let many = rois.len() > 1;
    rois.into_iter()
        .enumerate()
        .map(|(k, roi)| {
            let (sequence, masks) = match roi {
                None => (seq.clone(), masks.clone()),
                Some(r) => (
                    crop_roi(&seq, &r)?,
                    masks.as_ref().map(|(d, f)| Ok::<_, Error>((d.crop(&r)?, f.crop(&r)?))).transpose()?,
                ),
            };
            Ok(Prepared {
                label: if many { format!("roi_{}", k + 1) } else { String::new() },
                roi,
                sequence,
                kept: kept.clone(),
                masks,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRange {
    pub start: usize,
    pub end: usize,
    pub peak: usize,
    pub start_axis: f64,
    pub end_axis: f64,
    pub peak_axis: f64,
    pub value: f64,
    pub prominence: f64,
    pub is_global: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub name: String,
    pub ranges: Vec<ReportRange>,
    /// The raw curve is constant.
    pub flat: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub a: String,
    pub b: String,
    /// Global ranges share at least one index.
    pub global: bool,
    /// Any reported ranges share an index.
    pub any: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub label: String,
    pub roi: Option<Rect>,
    pub axis_kind: AxisKind,
    pub frames: usize,
    pub metrics: Vec<MetricReport>,
    pub overlaps: Vec<Overlap>,
    /// Every pair of global ranges overlaps.
    pub all_global_overlap: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RankOutput {
    pub curves: Vec<ProcessedCurve>,
    pub report: RankReport,
}

/// Undefined SNR/Tc entries become the smallest finite value of the curve.
fn fill_sentinels(c: MetricCurve) -> MetricCurve {
    let lo = c.values.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    let fill = if lo.is_finite() { lo } else { 0.0 };
    let mut c = c;
    c.values.iter_mut().filter(|v| !v.is_finite()).for_each(|v| *v = fill);
    c
}

pub fn rank_prepared(p: &Prepared, cfg: &RunConfig) -> Result<RankOutput> {
    let seq = if cfg.background_filter { p.sequence.map_frames(background_filter)? } else { p.sequence.clone() };
    let mut raw = vec![hi_curve(&seq, &cfg.hi)?];
    let (tve, rea) = rea_tve_curve(&seq, &cfg.rea_tve)?;
    raw.push(tve);
    raw.push(rea);
    let mut notes = Vec::new();
    match &p.masks {
        Some((d, r)) if d.count() > 0 && r.count() > 0 => {
            let (snr, tc) = reference_curves(&seq, d, r, &cfg.detector, false)?;
            for c in [snr, tc] {
                if c.values.iter().any(|v| !v.is_finite()) {
                    notes.push(format!("{}: undefined frames set to the curve minimum", c.name));
                }
                raw.push(fill_sentinels(c));
            }
        }
        Some(_) => notes.push("a mask is empty inside this region; SNR and Tc omitted".into()),
        None => notes.push("no masks given; SNR and Tc omitted".into()),
    }
    let curves = raw
        .into_iter()
        .map(|c| postprocess(&c.with_indices(p.kept.clone())?, &cfg.post))
        .collect::<Result<Vec<_>>>()?;
    let report = build_report(p, &curves, notes);
    Ok(RankOutput { curves, report })
}

fn build_report(p: &Prepared, curves: &[ProcessedCurve], notes: Vec<String>) -> RankReport {
    let metrics: Vec<MetricReport> = curves
        .iter()
        .map(|c| {
            let idx = &c.raw.indices;
            let ax = &c.raw.axis_values;
            let (lo, hi) = c.raw.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            MetricReport {
                name: c.raw.name.clone(),
                flat: lo == hi,
                ranges: c
                    .ranges
                    .iter()
                    .map(|r| ReportRange {
                        start: idx[r.start],
                        end: idx[r.end],
                        peak: idx[r.peak],
                        start_axis: ax[r.start],
                        end_axis: ax[r.end],
                        peak_axis: ax[r.peak],
                        value: r.value,
                        prominence: r.prominence,
                        is_global: r.is_global,
                    })
                    .collect(),
            }
        })
        .collect();
    let mut overlaps = Vec::new();
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            let (a, b) = (&curves[i].ranges, &curves[j].ranges);
            overlaps.push(Overlap {
                a: curves[i].raw.name.clone(),
                b: curves[j].raw.name.clone(),
                global: match (a.first(), b.first()) {
                    (Some(x), Some(y)) => x.overlaps(y),
                    _ => false,
                },
                any: a.iter().any(|x| b.iter().any(|y| x.overlaps(y))),
            });
        }
    }
    RankReport {
        label: p.label.clone(),
        roi: p.roi,
        axis_kind: p.sequence.axis_kind(),
        frames: p.sequence.len(),
        all_global_overlap: overlaps.iter().all(|o| o.global),
        metrics,
        overlaps,
        notes,
    }
}

/// Global ranges of the named curves all pairwise overlap.
pub fn global_ranges_overlap(curves: &[ProcessedCurve], names: &[&str]) -> bool {
    let picked: Vec<&PeakRange> = names
        .iter()
        .filter_map(|n| curves.iter().find(|c| c.raw.name == *n).and_then(|c| c.ranges.first()))
        .collect();
    picked.len() == names.len() && picked.iter().enumerate().all(|(i, a)| picked[i + 1..].iter().all(|b| a.overlaps(b)))
}

fn axis_label(kind: AxisKind) -> &'static str {
    match kind {
        AxisKind::Time => "frame index (time)",
        AxisKind::Frequency => "frame index (frequency)",
        AxisKind::Coefficient => "frame index (coefficient)",
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn report_text(r: &RankReport) -> String {
    let mut s = String::new();
    if !r.label.is_empty() {
        s += &format!("region {}\n", r.label);
    }
    s += &format!("frames analysed: {}\n", r.frames);
    for m in &r.metrics {
        s += &format!("{}{}\n", m.name, if m.flat { " (constant curve)" } else { "" });
        for x in &m.ranges {
            s += &format!(
                "  {} frames {}..{} peak {} (axis {:.6}) value {:.4} prominence {:.4}\n",
                if x.is_global { "global" } else { "local " },
                x.start,
                x.end,
                x.peak,
                x.peak_axis,
                x.value,
                x.prominence
            );
        }
    }
    s += "global range overlaps:\n";
    for o in &r.overlaps {
        s += &format!("  {} / {}: {}\n", o.a, o.b, if o.global { "yes" } else { "no" });
    }
    s += &format!("all global ranges overlap: {}\n", if r.all_global_overlap { "yes" } else { "no" });
    for n in &r.notes {
        s += &format!("note: {n}\n");
    }
    s
}

pub fn write_rank_outputs(out: &RankOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let xlabel = axis_label(out.report.axis_kind);
    let xs: Vec<Vec<f64>> = out.curves.iter().map(|c| c.raw.indices.iter().map(|&i| i as f64).collect()).collect();
    for (c, x) in out.curves.iter().zip(&xs) {
        write_csv(c, &dir.join(format!("{}.csv", c.raw.name)))?;
        let svg = svg_plot(
            &c.raw.name,
            xlabel,
            &[PlotSeries { label: &c.raw.name, x, y: &c.normalized.values, ranges: &c.ranges }],
        );
        write_text(&dir.join(format!("{}.svg", c.raw.name)), &svg)?;
    }
    let series: Vec<PlotSeries> = out
        .curves
        .iter()
        .zip(&xs)
        .map(|(c, x)| PlotSeries { label: &c.raw.name, x, y: &c.normalized.values, ranges: &c.ranges })
        .collect();
    write_text(&dir.join(OVERLAY_SVG), &svg_plot("normalized metric curves", xlabel, &series))?;
    let json = serde_json::to_string_pretty(&out.report).expect("report serializes");
    write_text(&dir.join(REPORT_JSON), &(json + "\n"))?;
    write_text(&dir.join(REPORT_TXT), &report_text(&out.report))
}

/// Rank every region and write curves, plots and reports under `cfg.out`.
pub fn run_rank(cfg: &RunConfig) -> Result<Vec<RankOutput>> {
    cfg.validate()?;
    cfg.write_effective(&cfg.out)?;
    with_workers(cfg.workers, || {
        let prepared = prepare(cfg)?;
        prepared
            .iter()
            .map(|p| {
                let out = rank_prepared(p, cfg)?;
                write_rank_outputs(&out, &cfg.out.join(&p.label))?;
                Ok(out)
            })
            .collect()
    })?
}

/// Generate the configured phantom and write stack, masks and defect contrast.
pub fn run_simulate(cfg: &RunConfig) -> Result<Phantom> {
    cfg.validate()?;
    let spec = cfg.phantom.as_ref().ok_or_else(|| Error::Config("simulate needs a phantom spec".into()))?;
    cfg.write_effective(&cfg.out)?;
    let p = with_workers(cfg.workers, || generate_phantom(spec))??;
    save_sequence(&p.sequence, &cfg.out.join("stack"))?;
    p.defect_mask.write_pgm(&cfg.out.join("defect.pgm"))?;
    p.reference_mask.write_pgm(&cfg.out.join("reference.pgm"))?;
    let path = cfg.out.join("defect_contrast.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut header = vec!["time".to_string()];
    header.extend((1..=p.defect_contrast.len()).map(|k| format!("defect_{k}")));
    w.write_record(&header).map_err(|e| Error::Format(e.to_string()))?;
    for (i, t) in p.sequence.axis_values().iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(p.defect_contrast.iter().map(|c| c[i].to_string()));
        w.write_record(&row).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(p)
}

/// Amplitude and phase stacks of the input (after ROI and frame selection).
pub fn run_ppt(cfg: &RunConfig) -> Result<SpectralPair> {
    cfg.validate()?;
    if cfg.rois.len() > 1 {
        return Err(Error::Config("ppt takes at most one ROI".into()));
    }
    cfg.write_effective(&cfg.out)?;
    let p = prepare(cfg)?.remove(0);
    let pair = with_workers(cfg.workers, || ppt_transform(&p.sequence))??;
    save_sequence(&pair.amplitude, &cfg.out.join("amplitude"))?;
    save_sequence(&pair.phase, &cfg.out.join("phase"))?;
    Ok(pair)
}

fn curve_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv") && is_curve_csv(p))
        .collect();
    v.sort();
    Ok(v)
}

fn is_curve_csv(p: &Path) -> bool {
    fs::read_to_string(p)
        .ok()
        .and_then(|s| s.lines().next().map(|l| l.trim() == CSV_HEADER.join(",")))
        .unwrap_or(false)
}

/// Overlay plot and wide CSV of every curve CSV in `dir`, or per subdirectory
/// when `dir` holds none itself. Returns the written SVG paths.
pub fn run_report(dir: &Path, out: &Path, post: &PostConfig) -> Result<Vec<PathBuf>> {
    let here = curve_files(dir)?;
    let groups: Vec<(String, Vec<PathBuf>)> = if !here.is_empty() {
        vec![(String::new(), here)]
    } else {
        let mut subs: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        subs.sort();
        subs.into_iter()
            .map(|s| Ok((s.file_name().unwrap_or_default().to_string_lossy().into_owned(), curve_files(&s)?)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .filter(|(_, f)| !f.is_empty())
            .collect()
    };
    if groups.is_empty() {
        return Err(Error::Format(format!("no curve CSV files under {}", dir.display())));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    for (label, files) in groups {
        let mut names = Vec::new();
        let mut rows = Vec::new();
        for f in &files {
            names.push(f.file_stem().unwrap_or_default().to_string_lossy().into_owned());
            rows.push(read_csv(f)?);
        }
        let n = rows[0].len();
        if rows.iter().any(|r| r.len() != n || r.iter().zip(&rows[0]).any(|(a, b)| a[0] != b[0])) {
            return Err(Error::Dimension(format!("curves in {} cover different frames", label_or(dir, &label))));
        }
        let x: Vec<f64> = rows[0].iter().map(|r| r[0]).collect();
        let ys: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v[4]).collect()).collect();
        let ranges = ys.iter().map(|y| find_max_ranges(y, post.prominence, post.top_k)).collect::<Result<Vec<_>>>()?;
        let series: Vec<PlotSeries> = names
            .iter()
            .zip(&ys)
            .zip(&ranges)
            .map(|((nm, y), r)| PlotSeries { label: nm, x: &x, y, ranges: r })
            .collect();
        let stem = if label.is_empty() { "report".to_string() } else { format!("report_{label}") };
        let svg_path = out.join(format!("{stem}.svg"));
        write_text(&svg_path, &svg_plot(&label_or(dir, &label), "frame index", &series))?;
        let csv_path = out.join(format!("{stem}.csv"));
        let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::Format(format!("{}: {e}", csv_path.display())))?;
        let mut header = vec!["index".to_string(), "axis_value".to_string()];
        header.extend(names.iter().cloned());
        w.write_record(&header).map_err(|e| Error::Format(e.to_string()))?;
        for i in 0..n {
            let mut row = vec![rows[0][i][0].to_string(), rows[0][i][1].to_string()];
            row.extend(ys.iter().map(|y| y[i].to_string()));
            w.write_record(&row).map_err(|e| Error::Format(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(&csv_path, e))?;
        written.push(svg_path);
    }
    Ok(written)
}

fn label_or(dir: &Path, label: &str) -> String {
    if label.is_empty() {
        dir.display().to_string()
    } else {
        label.to_string()
    }
}
