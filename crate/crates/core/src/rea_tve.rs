//! Windowed Minkowski statistics, TGI curves, TVE and the representative
//! elementary area of a frame.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::MetricCurve;
use crate::error::{Error, Result};
use crate::minkowski::{Connectivity, Normalization, RawCounts, WindowFunctionals};
use crate::model::{Frame, Sequence};
use crate::sampling::{frame_seed, sample_windows, size_schedule, SamplingPlan, Strategy, DEFAULT_NOS};
use crate::segmentation::{segment, SegmentMethod, SegmentedImage, DEFAULT_PHI};

/// Guard added to `|mean|` when the mean vanishes but the spread does not.
pub const CV_EPS: f64 = 1e-12;
/// Upper cap on a single coefficient of variation.
pub const CV_MAX: f64 = 1e6;
pub const DEFAULT_TAIL_TOL: f64 = 0.05;
const AIC_EPS: f64 = 1e-20;

/// Statistics of the three functionals of one phase at one window size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalStats {
    pub phase: u8,
    pub n: usize,
    pub k: usize,
    pub mean: [f64; 3],
    pub std: [f64; 3],
    pub cv_norm: [f64; 3],
    pub saturated: [bool; 3],
}

/// `(sigma / |mu|) / sqrt(k)` with the zero-mean guard; the flag reports a cap hit.
pub fn cv_norm(mean: f64, std: f64, k: usize) -> (f64, bool) {
    if std == 0.0 {
        return (0.0, false);
    }
    let denom = if mean == 0.0 { mean.abs() + CV_EPS } else { mean.abs() };
    let cv = std / denom;
    let (cv, sat) = if cv > CV_MAX { (CV_MAX, true) } else { (cv, false) };
    (cv / (k as f64).sqrt(), sat)
}

impl FunctionalStats {
    /// Mean and population standard deviation of `samples`.
    pub fn from_samples(phase: u8, n: usize, samples: &[[f64; 3]]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("no windows to summarize".into()));
        }
        let k = samples.len();
        let mut mean = [0.0; 3];
        let mut std = [0.0; 3];
        for f in 0..3 {
            let m = samples.iter().map(|s| s[f]).sum::<f64>() / k as f64;
            let var = samples.iter().map(|s| (s[f] - m).powi(2)).sum::<f64>() / k as f64;
            mean[f] = m;
            std[f] = var.sqrt();
        }
        Ok(Self::from_moments(phase, n, k, mean, std))
    }

    pub fn from_moments(phase: u8, n: usize, k: usize, mean: [f64; 3], std: [f64; 3]) -> Self {
        let mut cv = [0.0; 3];
        let mut saturated = [false; 3];
        for f in 0..3 {
            (cv[f], saturated[f]) = cv_norm(mean[f], std[f], k);
        }
        Self {
            phase,
            n,
            k,
            mean,
            std,
            cv_norm: cv,
            saturated,
        }
    }

    /// Same moments re-normalized for a different sample count.
    pub fn with_k(&self, k: usize) -> Self {
        Self::from_moments(self.phase, self.n, k, self.mean, self.std)
    }

    pub fn tgi(&self) -> f64 {
        self.cv_norm.iter().sum()
    }
}

/// Per-phase, per-size statistics, ordered by size then phase. Windows of
/// one size are drawn once and shared by every phase.
pub fn stage1(
    s: &SegmentedImage,
    plan: &SamplingPlan,
    conn: Connectivity,
    normalization: Normalization,
) -> Result<Vec<FunctionalStats>> {
    plan.validate()?;
    let phi = s.phi();
    let wf = WindowFunctionals::new(s, conn);
    let scales = normalization.scales();
    let mut out = Vec::with_capacity(plan.sizes.len() * phi);
    let mut counts = vec![RawCounts::default(); phi];
    let mut samples: Vec<Vec<[f64; 3]>> = vec![Vec::new(); phi];
    for &n in &plan.sizes {
        let windows = sample_windows(s.width(), s.height(), n, plan)?;
        samples.iter_mut().for_each(|v| v.clear());
        for w in &windows {
            wf.window_into(w, &mut counts);
            for (p, c) in counts.iter().enumerate() {
                samples[p].push([
                    c.area as f64 * scales[0],
                    c.boundary as f64 * scales[1],
                    c.euler as f64 * scales[2],
                ]);
            }
        }
        for (p, smp) in samples.iter().enumerate() {
            out.push(FunctionalStats::from_samples(p as u8, n, smp)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TgiCurve {
    pub phase: u8,
    pub sizes: Vec<usize>,
    pub tgi: Vec<f64>,
    /// Forward difference of `tgi` divided by the size step.
    pub dtgi: Vec<f64>,
}

impl TgiCurve {
    pub fn from_tgi(phase: u8, sizes: Vec<usize>, tgi: Vec<f64>) -> Result<Self> {
        if sizes.len() != tgi.len() {
            return Err(Error::Dimension("sizes and TGI lengths differ".into()));
        }
        if sizes.len() < 2 {
            return Err(Error::InvalidArgument("at least 2 window sizes are needed".into()));
        }
        let dtgi = (0..sizes.len() - 1)
            .map(|j| (tgi[j + 1] - tgi[j]) / (sizes[j + 1] - sizes[j]) as f64)
            .collect();
        Ok(Self { phase, sizes, tgi, dtgi })
    }
}

pub fn stage2(stats: &[FunctionalStats]) -> Result<Vec<TgiCurve>> {
    let phases = stats.iter().map(|s| s.phase as usize + 1).max().unwrap_or(0);
    let mut curves = Vec::with_capacity(phases);
    for p in 0..phases {
        let mut rows: Vec<&FunctionalStats> = stats.iter().filter(|s| s.phase as usize == p).collect();
        rows.sort_by_key(|s| s.n);
        let sizes: Vec<usize> = rows.iter().map(|s| s.n).collect();
        if sizes.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!("duplicate window size for phase {p}")));
        }
        curves.push(TgiCurve::from_tgi(p as u8, sizes, rows.iter().map(|s| s.tgi()).collect())?);
    }
    if curves.is_empty() {
        return Err(Error::InvalidArgument("no statistics".into()));
    }
    Ok(curves)
}

pub fn tve(curves: &[TgiCurve]) -> f64 {
    curves.iter().flat_map(|c| c.dtgi.iter()).map(|d| d * d).sum()
}

fn variance(x: &[f64]) -> f64 {
    let shift = x[0];
    let m = x.iter().map(|v| v - shift).sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - shift - m).powi(2)).sum::<f64>() / x.len() as f64
}

/// AIC of every split `t` in `[2, N - 2]`, as `(t, aic)`.
pub fn aic_values(series: &[f64]) -> Result<Vec<(usize, f64)>> {
    let n = series.len();
    if n < 5 {
        return Err(Error::InvalidArgument(format!("series of length {n} is too short for onset picking")));
    }
    Ok((2..=n - 2)
        .map(|t| {
            let a = t as f64 * (variance(&series[..t]) + AIC_EPS).ln();
            let b = (n - t - 1) as f64 * (variance(&series[t..]) + AIC_EPS).ln();
            (t, a + b)
        })
        .collect())
}

/// Split minimizing the AIC; near-ties (relative 1e-12) go to the smallest split.
pub fn aic_onset(series: &[f64]) -> Result<usize> {
    let aic = aic_values(series)?;
    let best = aic.iter().map(|a| a.1).fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * best.abs().max(1.0);
    Ok(aic.iter().find(|a| a.1 <= best + tol).map(|a| a.0).unwrap_or(2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaResult {
    pub rea: usize,
    pub phase_rea: Vec<usize>,
    pub converged: Vec<bool>,
}

fn population_std(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

pub fn rea(curves: &[TgiCurve], n_max: usize, tail_tol: f64) -> Result<ReaResult> {
    if curves.is_empty() {
        return Err(Error::InvalidArgument("no TGI curves".into()));
    }
    let mut phase_rea = Vec::with_capacity(curves.len());
    let mut converged = Vec::with_capacity(curves.len());
    for c in curves {
        if c.dtgi.len() < 5 {
            phase_rea.push(n_max);
            converged.push(false);
            continue;
        }
        let j = aic_onset(&c.dtgi)?;
        let lo = c.dtgi.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.dtgi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        let ok = range == 0.0 || population_std(&c.dtgi[j..]) < tail_tol * range;
        phase_rea.push(if ok { c.sizes[j + 1] } else { n_max });
        converged.push(ok);
    }
    Ok(ReaResult {
        rea: phase_rea.iter().copied().max().unwrap_or(n_max),
        phase_rea,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReaTveConfig {
    pub phi: usize,
    pub method: SegmentMethod,
    pub strategy: Strategy,
    pub nos_set: usize,
    pub stride: usize,
    pub seed: u64,
    pub connectivity: Connectivity,
    pub normalization: Normalization,
    pub tail_tol: f64,
}

impl Default for ReaTveConfig {
    fn default() -> Self {
        Self {
            phi: DEFAULT_PHI,
            method: SegmentMethod::Kmeans1d,
            strategy: Strategy::Random,
            nos_set: DEFAULT_NOS,
            stride: 1,
            seed: 0,
            connectivity: Connectivity::Eight,
            normalization: Normalization::Raw,
            tail_tol: DEFAULT_TAIL_TOL,
        }
    }
}

impl ReaTveConfig {
    pub fn plan(&self, width: usize, height: usize, seed: u64) -> Result<SamplingPlan> {
        Ok(SamplingPlan {
            strategy: self.strategy,
            nos_set: self.nos_set,
            seed,
            sizes: size_schedule(width, height, self.phi, self.stride)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnalysis {
    pub tve: f64,
    pub rea: ReaResult,
    pub curves: Vec<TgiCurve>,
}

/// Segment one frame and run the three stages with window seed `seed`.
pub fn analyze_frame(f: &Frame, cfg: &ReaTveConfig, seed: u64) -> Result<FrameAnalysis> {
    let s = segment(f, cfg.phi, cfg.method)?;
    let plan = cfg.plan(f.width(), f.height(), seed)?;
    let n_max = *plan.sizes.last().expect("schedule is never empty");
    let stats = stage1(&s, &plan, cfg.connectivity, cfg.normalization)?;
    let curves = stage2(&stats)?;
    Ok(FrameAnalysis {
        tve: tve(&curves),
        rea: rea(&curves, n_max, cfg.tail_tol)?,
        curves,
    })
}

/// TVE and REA per frame; frame `i` draws windows from `frame_seed(seed, i)`.
pub fn rea_tve_curve(seq: &Sequence, cfg: &ReaTveConfig) -> Result<(MetricCurve, MetricCurve)> {
    let results = seq
        .frames()
        .par_iter()
        .enumerate()
        .map(|(i, f)| analyze_frame(f, cfg, frame_seed(cfg.seed, i)).map(|a| (a.tve, a.rea.rea as f64)))
        .collect::<Result<Vec<_>>>()?;
    let (t, r): (Vec<f64>, Vec<f64>) = results.into_iter().unzip();
    Ok((MetricCurve::for_sequence("tve", seq, t)?, MetricCurve::for_sequence("rea", seq, r)?))
}
