//! Supervised reference metrics and the quadratic background filter.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::MetricCurve;
use crate::error::{Error, Result};
use crate::model::{Frame, Mask, Sequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

impl RegionStats {
    pub fn of(f: &Frame, m: &Mask) -> Result<Self> {
        m.check_matches(f)?;
        let vals: Vec<f64> = f
            .values()
            .iter()
            .zip(m.bits())
            .filter(|(_, &b)| b)
            .map(|(&v, _)| v)
            .collect();
        if vals.is_empty() {
            return Err(Error::InvalidArgument("empty region mask".into()));
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(Self {
            mean,
            std: var.sqrt(),
            count: vals.len(),
        })
    }
}

/// `z = c1 x^2 + c2 y^2 + c3` with pixel coordinates measured from the frame center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterFit {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl FilterFit {
    pub fn eval(&self, width: usize, height: usize, y: usize, x: usize) -> f64 {
        let (u, v) = centered_sq(width, height, y, x);
        self.c1 * u + self.c2 * v + self.c3
    }
}

#[inline]
fn centered_sq(width: usize, height: usize, y: usize, x: usize) -> (f64, f64) {
    let dx = x as f64 - (width as f64 - 1.0) / 2.0;
    let dy = y as f64 - (height as f64 - 1.0) / 2.0;
    (dx * dx, dy * dy)
}

/// Least squares over all pixels. On a full grid the centered regressors
/// `x^2 - mean` and `y^2 - mean` are orthogonal, so each coefficient is a
/// single projection.
pub fn fit_quadratic_background(f: &Frame) -> Result<FilterFit> {
    let (w, h) = (f.width(), f.height());
    if f.len() < 3 {
        return Err(Error::InvalidArgument(format!("{w}x{h} frame is too small for a surface fit")));
    }
    let xs: Vec<f64> = (0..w).map(|x| centered_sq(w, h, 0, x).0).collect();
    let ys: Vec<f64> = (0..h).map(|y| centered_sq(w, h, y, 0).1).collect();
    let xm = xs.iter().sum::<f64>() / w as f64;
    let ym = ys.iter().sum::<f64>() / h as f64;
    let zm = f.mean();
    let (mut su, mut sv, mut suu, mut svv) = (0.0, 0.0, 0.0, 0.0);
    for y in 0..h {
        let v = ys[y] - ym;
        for (x, &z) in f.row(y).iter().enumerate() {
            let u = xs[x] - xm;
            let dz = z - zm;
            su += dz * u;
            sv += dz * v;
            suu += u * u;
            svv += v * v;
        }
    }
    // a single row or column has no curvature to fit along that axis
    let c1 = if suu > 0.0 { su / suu } else { 0.0 };
    let c2 = if svv > 0.0 { sv / svv } else { 0.0 };
    let fit = FilterFit {
        c1,
        c2,
        c3: zm - c1 * xm - c2 * ym,
    };
    if ![fit.c1, fit.c2, fit.c3].iter().all(|c| c.is_finite()) {
        return Err(Error::Numeric("surface fit is not finite".into()));
    }
    Ok(fit)
}

pub fn subtract_background(f: &Frame, fit: &FilterFit) -> Result<Frame> {
    let (w, h) = (f.width(), f.height());
    Frame::from_fn(w, h, |y, x| f.get(y, x) - fit.eval(w, h, y, x))
}

/// Fit and subtract in one step.
pub fn background_filter(f: &Frame) -> Result<Frame> {
    subtract_background(f, &fit_quadratic_background(f)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "db")]
pub enum Snr {
    Db(f64),
    /// Defect and reference means coincide.
    NoContrast,
}

impl Snr {
    /// Decibels, with no contrast mapped to negative infinity.
    pub fn value(&self) -> f64 {
        match self {
            Snr::Db(v) => *v,
            Snr::NoContrast => f64::NEG_INFINITY,
        }
    }
}

fn check_disjoint(a: &Mask, b: &Mask) -> Result<()> {
    if a.bits().iter().zip(b.bits()).any(|(&x, &y)| x && y) {
        return Err(Error::InvalidArgument("defect and reference masks overlap".into()));
    }
    Ok(())
}

pub fn snr(f: &Frame, defect: &Mask, reference: &Mask) -> Result<Snr> {
    check_disjoint(defect, reference)?;
    let d = RegionStats::of(f, defect)?;
    let r = RegionStats::of(f, reference)?;
    if d.mean == r.mean {
        return Ok(Snr::NoContrast);
    }
    if r.std == 0.0 {
        return Err(Error::Numeric("reference region has zero spread, SNR undefined".into()));
    }
    Ok(Snr::Db(20.0 * ((d.mean - r.mean).abs() / r.std).log10()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub n_rd: usize,
    pub n_fd: usize,
    pub n_md: usize,
}

pub fn confusion(detected: &Mask, truth: &Mask) -> Result<ConfusionCounts> {
    if detected.width() != truth.width() || detected.height() != truth.height() {
        return Err(Error::Dimension(format!(
            "detected mask {}x{} vs truth {}x{}",
            detected.width(),
            detected.height(),
            truth.width(),
            truth.height()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&d, &t) in detected.bits().iter().zip(truth.bits()) {
        match (d, t) {
            (true, true) => c.n_rd += 1,
            (true, false) => c.n_fd += 1,
            (false, true) => c.n_md += 1,
            _ => {}
        }
    }
    Ok(c)
}

pub fn tanimoto(detected: &Mask, truth: &Mask) -> Result<f64> {
    let c = confusion(detected, truth)?;
    if c.n_rd + c.n_fd == 0 {
        return Err(Error::Numeric("nothing detected, Tanimoto criterion undefined".into()));
    }
    Ok((c.n_rd as f64 - c.n_md as f64) / (c.n_rd + c.n_fd) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum Threshold {
    Otsu,
    Quantile { q: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// Whichever side of the threshold holds fewer pixels.
    #[default]
    Auto,
    Hot,
    Cold,
}

/// Global threshold detector used as a stand-in for contour-based defect detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Detector {
    pub threshold: Threshold,
    pub polarity: Polarity,
}

impl Default for Detector {
    fn default() -> Self {
        Self {
            threshold: Threshold::Otsu,
            polarity: Polarity::Auto,
        }
    }
}

/// Otsu threshold over a 256-bin histogram spanning the frame range.
pub fn otsu_threshold(f: &Frame) -> f64 {
    const BINS: usize = 256;
    let (lo, hi) = f.min_max();
    if hi <= lo {
        return lo;
    }
    let width = (hi - lo) / BINS as f64;
    let mut hist = [0usize; BINS];
    for &v in f.values() {
        hist[(((v - lo) / width) as usize).min(BINS - 1)] += 1;
    }
    let total = f.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_i) = (-1.0, 0);
    for (i, &c) in hist.iter().enumerate().take(BINS - 1) {
        w0 += c as f64;
        sum0 += i as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1).powi(2);
        if between > best {
            best = between;
            best_i = i;
        }
    }
    lo + (best_i + 1) as f64 * width
}

fn quantile(f: &Frame, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("quantile {q} outside [0, 1]")));
    }
    let mut v = f.values().to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    Ok(if i + 1 < v.len() { v[i] + frac * (v[i + 1] - v[i]) } else { v[i] })
}

impl Detector {
    pub fn detect(&self, f: &Frame) -> Result<Mask> {
        let t = match self.threshold {
            Threshold::Otsu => otsu_threshold(f),
            Threshold::Quantile { q } => quantile(f, q)?,
        };
        let (w, h) = (f.width(), f.height());
        let hot = Mask::from_fn(w, h, |y, x| f.get(y, x) > t);
        let cold = Mask::from_fn(w, h, |y, x| f.get(y, x) < t);
        Ok(match self.polarity {
            Polarity::Hot => hot,
            Polarity::Cold => cold,
            Polarity::Auto => {
                let (nh, nc) = (hot.count(), cold.count());
                if nh == 0 || (nc > 0 && nc < nh) {
                    cold
                } else {
                    hot
                }
            }
        })
    }
}

/// SNR and Tanimoto per frame after background filtering. Undefined values
/// (no contrast, nothing detected) become negative infinity.
pub fn reference_curves(
    seq: &Sequence,
    defect: &Mask,
    reference: &Mask,
    detector: &Detector,
    filter: bool,
) -> Result<(MetricCurve, MetricCurve)> {
    check_disjoint(defect, reference)?;
    let rows = seq
        .frames()
        .par_iter()
        .map(|f| {
            defect.check_matches(f)?;
            reference.check_matches(f)?;
            let g = if filter { background_filter(f)? } else { f.clone() };
            let s = snr(&g, defect, reference)?.value();
            let det = detector.detect(&g)?;
            let tc = match tanimoto(&det, defect) {
                Ok(v) => v,
                Err(Error::Numeric(_)) => f64::NEG_INFINITY,
                Err(e) => return Err(e),
            };
            Ok((s, tc))
        })
        .collect::<Result<Vec<_>>>()?;
    let (s, t): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
    Ok((MetricCurve::for_sequence("snr", seq, s)?, MetricCurve::for_sequence("tc", seq, t)?))
}
