//! Metric curves and their post-processing.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AxisKind, Sequence};

pub const DEFAULT_FILTER_ORDER: usize = 3;
pub const DEFAULT_CUTOFF: f64 = 0.05;
pub const DEFAULT_PROMINENCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CurveState {
    pub filtered: bool,
    pub normalized: bool,
}

/// One scalar per sequence index.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricCurve {
    pub name: String,
    pub indices: Vec<usize>,
    pub axis_kind: AxisKind,
    pub axis_values: Vec<f64>,
    pub values: Vec<f64>,
    pub state: CurveState,
}

impl MetricCurve {
    pub fn new(name: impl Into<String>, axis_kind: AxisKind, axis_values: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if axis_values.len() != values.len() {
            return Err(Error::Dimension(format!(
                "{} axis values for {} curve values",
                axis_values.len(),
                values.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            indices: (0..values.len()).collect(),
            axis_kind,
            axis_values,
            values,
            state: CurveState::default(),
        })
    }

    /// Curve over the frames of `seq`.
    pub fn for_sequence(name: impl Into<String>, seq: &Sequence, values: Vec<f64>) -> Result<Self> {
        Self::new(name, seq.axis_kind(), seq.axis_values().to_vec(), values)
    }

    pub fn with_indices(mut self, indices: Vec<usize>) -> Result<Self> {
        if indices.len() != self.values.len() {
            return Err(Error::Dimension("index list length differs from curve length".into()));
        }
        self.indices = indices;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn with_values(&self, values: Vec<f64>, state: CurveState) -> Self {
        Self {
            values,
            state,
            ..self.clone()
        }
    }

    /// Index of the largest value; earliest on ties.
    pub fn argmax(&self) -> Option<usize> {
        argmax(&self.values)
    }
}

pub(crate) fn argmax(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in v.iter().enumerate() {
        if best.is_none_or(|b| x > v[b]) {
            best = Some(i);
        }
    }
    best
}

fn check_finite(c: &MetricCurve) -> Result<()> {
    if let Some(i) = c.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("curve {} has a non-finite value at {i}", c.name)));
    }
    Ok(())
}

pub fn normalize01(c: &MetricCurve) -> Result<MetricCurve> {
    check_finite(c)?;
    if c.is_empty() {
        return Err(Error::InvalidArgument("empty curve".into()));
    }
    let lo = c.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = c.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let values = if hi > lo {
        let span = hi - lo;
        c.values.iter().map(|&v| ((v - lo) / span).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; c.len()]
    };
    Ok(c.with_values(
        values,
        CurveState {
            normalized: true,
            ..c.state
        },
    ))
}

/// Biquad `[b0, b1, b2, a1, a2]` with `a0 = 1`.
pub type Section = [f64; 5];

/// Low-pass Butterworth as cascaded biquads. `cutoff` is a fraction of
/// Nyquist; every section has unit gain at DC.
pub fn butterworth_sos(order: usize, cutoff: f64) -> Result<Vec<Section>> {
    if order == 0 {
        return Err(Error::InvalidArgument("filter order must be at least 1".into()));
    }
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(Error::InvalidArgument(format!("cutoff {cutoff} not in (0, 1)")));
    }
    // prewarped analog cutoff for the bilinear map s = 2 (z - 1) / (z + 1)
    let wc = 2.0 * (PI * cutoff / 2.0).tan();
    let to_z = |p: Complex64| (2.0 + p * wc) / (2.0 - p * wc);
    let mut sos = Vec::with_capacity(order.div_ceil(2));
    for k in 0..order / 2 {
        let theta = PI * (2 * k + 1 + order) as f64 / (2 * order) as f64;
        let z = to_z(Complex64::from_polar(1.0, theta));
        let (a1, a2) = (-2.0 * z.re, z.norm_sqr());
        let g = (1.0 + a1 + a2) / 4.0;
        sos.push([g, 2.0 * g, g, a1, a2]);
    }
    if order % 2 == 1 {
        let z = to_z(Complex64::new(-1.0, 0.0)).re;
        let g = (1.0 - z) / 2.0;
        sos.push([g, g, 0.0, -z, 0.0]);
    }
    Ok(sos)
}

/// Complex response of the cascade at normalized angular frequency `w`.
pub fn sos_response(sos: &[Section], w: f64) -> Complex64 {
    let z1 = Complex64::from_polar(1.0, -w);
    let z2 = z1 * z1;
    sos.iter().fold(Complex64::new(1.0, 0.0), |h, s| {
        h * (s[0] + z1 * s[1] + z2 * s[2]) / (1.0 + z1 * s[3] + z2 * s[4])
    })
}

fn sosfilt(sos: &[Section], x: &mut [f64], x0: f64) {
    for s in sos {
        let [b0, b1, b2, a1, a2] = *s;
        // steady state for a constant input x0 and unit DC gain
        let mut z2 = (b2 - a2) * x0;
        let mut z1 = (b1 + b2 - a1 - a2) * x0;
        for v in x.iter_mut() {
            let xi = *v;
            let y = b0 * xi + z1;
            z1 = b1 * xi - a1 * y + z2;
            z2 = b2 * xi - a2 * y;
            *v = y;
        }
    }
}

/// Forward-backward filtering with odd reflection padding of `6 * order`.
pub fn filtfilt(sos: &[Section], order: usize, x: &[f64]) -> Result<Vec<f64>> {
    let pad = 6 * order;
    let n = x.len();
    if n <= pad {
        return Err(Error::InvalidArgument(format!(
            "curve of length {n} is too short for order {order} (needs > {pad})"
        )));
    }
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    let x0 = ext[0];
    sosfilt(sos, &mut ext, x0);
    ext.reverse();
    let x0 = ext[0];
    sosfilt(sos, &mut ext, x0);
    ext.reverse();
    Ok(ext[pad..pad + n].to_vec())
}

pub fn butterworth_lowpass(c: &MetricCurve, order: usize, cutoff: f64) -> Result<MetricCurve> {
    check_finite(c)?;
    let sos = butterworth_sos(order, cutoff)?;
    let values = filtfilt(&sos, order, &c.values)?;
    Ok(c.with_values(
        values,
        CurveState {
            filtered: true,
            ..c.state
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakRange {
    pub start: usize,
    /// Inclusive.
    pub end: usize,
    pub peak: usize,
    pub value: f64,
    pub prominence: f64,
    pub is_global: bool,
}

impl PeakRange {
    pub fn overlaps(&self, other: &PeakRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn contains(&self, i: usize) -> bool {
        (self.start..=self.end).contains(&i)
    }
}

/// Local maxima (curve ends included) whose prominence is at least
/// `prominence_frac * (max - min)`, largest first, at most `top_k`. The
/// highest sample is kept whatever its prominence.
pub fn find_max_ranges(values: &[f64], prominence_frac: f64, top_k: usize) -> Result<Vec<PeakRange>> {
    let n = values.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty curve".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("curve contains NaN".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Ok(vec![PeakRange {
            start: 0,
            end: n - 1,
            peak: 0,
            value: hi,
            prominence: 0.0,
            is_global: true,
        }]);
    }
    let min_prom = prominence_frac * (hi - lo);

    let mut peaks = Vec::new();
    let mut i = 0;
    while i < n {
        // plateau [i, j]
        let mut j = i;
        while j + 1 < n && values[j + 1] == values[i] {
            j += 1;
        }
        let rises = i == 0 || values[i - 1] < values[i];
        let falls = j == n - 1 || values[j + 1] < values[i];
        if rises && falls {
            peaks.push(i);
        }
        i = j + 1;
    }

    let mut out = Vec::new();
    for &p in &peaks {
        let v = values[p];
        let mut left_min = None;
        let mut m = f64::INFINITY;
        for k in (0..p).rev() {
            if values[k] > v {
                break;
            }
            m = m.min(values[k]);
            left_min = Some(m);
        }
        let mut right_min = None;
        let mut m = f64::INFINITY;
        for &x in &values[p + 1..] {
            if x > v {
                break;
            }
            m = m.min(x);
            right_min = Some(m);
        }
        let base = match (left_min, right_min) {
            (Some(a), Some(b)) => a.max(b),
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => v,
        };
        let prominence = v - base;
        // the highest sample always yields the global range
        if (prominence < min_prom && v < hi) || prominence <= 0.0 {
            continue;
        }
        let floor = v - prominence / 2.0;
        let mut start = p;
        while start > 0 && values[start - 1] >= floor {
            start -= 1;
        }
        let mut end = p;
        while end + 1 < n && values[end + 1] >= floor {
            end += 1;
        }
        out.push(PeakRange {
            start,
            end,
            peak: p,
            value: v,
            prominence,
            is_global: false,
        });
    }
    out.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.peak.cmp(&b.peak)));
    if let Some(first) = out.first_mut() {
        first.is_global = true;
    }
    out.truncate(top_k.max(1));
    Ok(out)
}

pub fn global_range(values: &[f64], prominence_frac: f64) -> Result<PeakRange> {
    let ranges = find_max_ranges(values, prominence_frac, 1)?;
    ranges
        .into_iter()
        .next()
        .ok_or_else(|| Error::Numeric("no peak found".into()))
}

/// Raw, filtered and normalized versions of one curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedCurve {
    pub raw: MetricCurve,
    pub filtered: MetricCurve,
    pub normalized: MetricCurve,
    pub ranges: Vec<PeakRange>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PostConfig {
    pub filter_order: usize,
    pub cutoff: f64,
    pub enable_filter: bool,
    pub prominence: f64,
    pub top_k: usize,
}

impl Default for PostConfig {
    fn default() -> Self {
        Self {
            filter_order: DEFAULT_FILTER_ORDER,
            cutoff: DEFAULT_CUTOFF,
            enable_filter: true,
            prominence: DEFAULT_PROMINENCE,
            top_k: 3,
        }
    }
}

/// Filter, then normalize, then locate peak ranges on the normalized curve.
/// Curves too short for the filter pass through unfiltered.
pub fn postprocess(raw: &MetricCurve, cfg: &PostConfig) -> Result<ProcessedCurve> {
    let filtered = if cfg.enable_filter && raw.len() > 6 * cfg.filter_order {
        butterworth_lowpass(raw, cfg.filter_order, cfg.cutoff)?
    } else {
        check_finite(raw)?;
        raw.clone()
    };
    let normalized = normalize01(&filtered)?;
    let ranges = find_max_ranges(&normalized.values, cfg.prominence, cfg.top_k)?;
    Ok(ProcessedCurve {
        raw: raw.clone(),
        filtered,
        normalized,
        ranges,
    })
}

pub const CSV_HEADER: [&str; 5] = ["index", "axis_value", "value_raw", "value_filtered", "value_normalized"];

pub fn write_csv(p: &ProcessedCurve, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(CSV_HEADER).map_err(|e| csv_err(path, e))?;
    for i in 0..p.raw.len() {
        w.write_record([
            p.raw.indices[i].to_string(),
            p.raw.axis_values[i].to_string(),
            p.raw.values[i].to_string(),
            p.filtered.values[i].to_string(),
            p.normalized.values[i].to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

/// Rows of a curve CSV: (index, axis value, raw, filtered, normalized).
pub fn read_csv(path: &Path) -> Result<Vec<[f64; 5]>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().ne(CSV_HEADER) {
        return Err(Error::Format(format!("{}: unexpected header", path.display())));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let mut row = [0.0; 5];
        for (k, field) in rec.iter().enumerate().take(5) {
            row[k] = field.parse().map_err(|_| {
                Error::Format(format!("{}:{}: bad number {field:?}", path.display(), line + 2))
            })?;
        }
        rows.push(row);
    }
    Ok(rows)
}

pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// A series drawn by [`svg_plot`].
pub struct PlotSeries<'a> {
    pub label: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub ranges: &'a [PeakRange],
}

/// Line plot with one bar per peak range under the axis, in the series color.
pub fn svg_plot(title: &str, xlabel: &str, series: &[PlotSeries<'_>]) -> String {
    let (w, h) = (800.0, 480.0);
    let (ml, mr, mt, mb) = (60.0, 160.0, 40.0, 60.0 + 8.0 * series.len() as f64);
    let pw = w - ml - mr;
    let ph = h - mt - mb;
    let finite = |v: &&f64| v.is_finite();
    let xs = series.iter().flat_map(|s| s.x.iter()).filter(finite);
    let (xmin, xmax) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let ys = series.iter().flat_map(|s| s.y.iter()).filter(finite);
    let (ymin, ymax) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (xmin, xmax) = if xmin < xmax { (xmin, xmax) } else { (xmin - 0.5, xmin + 0.5) };
    let (ymin, ymax) = if ymin < ymax { (ymin, ymax) } else { (ymin - 0.5, ymin + 0.5) };
    let (xmin, xmax, ymin, ymax) = if xmin.is_finite() { (xmin, xmax, ymin, ymax) } else { (0.0, 1.0, 0.0, 1.0) };
    let sx = |v: f64| ml + (v - xmin) / (xmax - xmin) * pw;
    let sy = |v: f64| mt + (1.0 - (v - ymin) / (ymax - ymin)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r##"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    for t in 0..=4 {
        let f = t as f64 / 4.0;
        let (xv, yv) = (xmin + f * (xmax - xmin), ymin + f * (ymax - ymin));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(xv),
            mt + ph + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            ml - 6.0,
            sy(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        ml + pw / 2.0,
        mt + ph + 34.0,
        escape(xlabel)
    );
    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut pts = String::new();
        for (&x, &y) in ser.x.iter().zip(ser.y) {
            if x.is_finite() && y.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", sx(x), sy(y));
            }
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.trim_end()
        );
        let bar_y = mt + ph + 42.0 + 8.0 * k as f64;
        for r in ser.ranges {
            let (x0, x1) = (ser.x[r.start], ser.x[r.end]);
            let width = (sx(x1) - sx(x0)).max(2.0);
            let opacity = if r.is_global { 1.0 } else { 0.45 };
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{bar_y:.1}" width="{width:.2}" height="6" fill="{color}" fill-opacity="{opacity}"/>"#,
                sx(x0)
            );
        }
        let ly = mt + 14.0 + 18.0 * k as f64;
        let lx = ml + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
