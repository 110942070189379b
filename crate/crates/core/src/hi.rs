//! Homogeneity index of a frame from cell-wise histogram spread.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::MetricCurve;
use crate::error::{Error, Result};
use crate::model::{normalize01_frame, Frame, Sequence};

/// Either a fixed value or the keyword `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AutoOr<T> {
    #[default]
    #[serde(with = "auto_keyword")]
    Auto,
    Value(T),
}

mod auto_keyword {
    use serde::de::{self, Deserializer};
    use serde::{Deserialize, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "auto" {
            Ok(())
        } else {
            Err(de::Error::custom(format!("expected \"auto\", got {s:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HiMode {
    #[default]
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HiConfig {
    pub bins: AutoOr<usize>,
    pub cell_size: AutoOr<usize>,
    pub mode: HiMode,
    pub seed: u64,
    pub conv_rel_tol: f64,
    pub max_iters: usize,
}

impl Default for HiConfig {
    fn default() -> Self {
        Self {
            bins: AutoOr::Auto,
            cell_size: AutoOr::Auto,
            mode: HiMode::Static,
            seed: 0,
            conv_rel_tol: 1e-3,
            max_iters: 1000,
        }
    }
}

/// Iterations over which the dynamic estimate must settle.
const CONV_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct HiResult {
    pub hi: f64,
    pub per_bin_sigma: Vec<f64>,
    pub n_cells: usize,
    pub global_probs: Vec<f64>,
    pub bins: usize,
    pub cell_size: usize,
}

/// Histogram bin count for `n_obs` observations.
pub fn bin_count(n_obs: usize) -> Result<usize> {
    if n_obs < 4 {
        return Err(Error::InvalidArgument(format!("{n_obs} observations are too few for a histogram")));
    }
    let n = n_obs as f64;
    Ok(if n_obs < 1000 {
        n.sqrt().round() as usize
    } else {
        (10.0 * n.log10()).round() as usize
    })
}

/// Smallest cell side holding at least four observations per bin.
pub fn auto_cell_size(k: usize) -> usize {
    let mut m = 1;
    while m * m < 4 * k {
        m += 1;
    }
    m
}

#[inline]
fn bin_of(v: f64, k: usize) -> usize {
    ((v * k as f64) as usize).min(k - 1)
}

/// Bin probabilities of values in `[0, 1]` over `k` equal bins.
pub fn global_hist(f: &Frame, k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::InvalidArgument("at least 2 bins are needed".into()));
    }
    if f.is_empty() {
        return Err(Error::InvalidArgument("empty frame".into()));
    }
    if let Some(v) = f.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!("value {v} outside [0, 1]")));
    }
    let mut counts = vec![0usize; k];
    for &v in f.values() {
        counts[bin_of(v, k)] += 1;
    }
    let total = f.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / total).collect())
}

fn resolve(f: &Frame, cfg: &HiConfig) -> Result<(usize, usize)> {
    let k = match cfg.bins {
        AutoOr::Auto => bin_count(f.len())?,
        AutoOr::Value(k) => k,
    };
    if k < 2 {
        return Err(Error::InvalidArgument(format!("bin count {k} < 2")));
    }
    let m = match cfg.cell_size {
        AutoOr::Auto => auto_cell_size(k),
        AutoOr::Value(m) => m,
    };
    if m * m < k {
        return Err(Error::InvalidArgument(format!(
            "cell of {m}x{m} pixels cannot fill {k} bins"
        )));
    }
    if m > f.width() || m > f.height() {
        return Err(Error::Dimension(format!(
            "cell size {m} exceeds the {}x{} frame",
            f.width(),
            f.height()
        )));
    }
    Ok((k, m))
}

pub fn hi(f: &Frame, cfg: &HiConfig) -> Result<HiResult> {
    let (k, m) = resolve(f, cfg)?;
    let g = normalize01_frame(f);
    let p = global_hist(&g, k)?;
    let w = g.width();
    let bins: Vec<u16> = g.values().iter().map(|&v| bin_of(v, k) as u16).collect();
    let cell_area = (m * m) as f64;

    let mut counts = vec![0u32; k];
    let cell = |x0: usize, y0: usize, counts: &mut [u32]| {
        counts.iter_mut().for_each(|c| *c = 0);
        for y in y0..y0 + m {
            for &b in &bins[y * w + x0..y * w + x0 + m] {
                counts[b as usize] += 1;
            }
        }
    };
    let mut sumsq = vec![0.0; k];
    let accumulate = |counts: &[u32], sumsq: &mut [f64]| {
        for i in 0..k {
            let d = counts[i] as f64 / cell_area - p[i];
            sumsq[i] += d * d;
        }
    };
    let sigma = |sumsq: &[f64], n: usize| -> Vec<f64> { sumsq.iter().map(|s| (s / n as f64).sqrt()).collect() };

    let (per_bin_sigma, n_cells) = match cfg.mode {
        HiMode::Static => {
            let (nx, ny) = (g.width() / m, g.height() / m);
            for j in 0..ny {
                for i in 0..nx {
                    cell(i * m, j * m, &mut counts);
                    accumulate(&counts, &mut sumsq);
                }
            }
            (sigma(&sumsq, nx * ny), nx * ny)
        }
        HiMode::Dynamic => {
            if cfg.max_iters == 0 {
                return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut history: Vec<f64> = Vec::with_capacity(cfg.max_iters);
            let mut t = 0;
            while t < cfg.max_iters {
                let x0 = rng.random_range(0..=g.width() - m);
                let y0 = rng.random_range(0..=g.height() - m);
                cell(x0, y0, &mut counts);
                accumulate(&counts, &mut sumsq);
                t += 1;
                let h: f64 = sumsq.iter().map(|s| (s / t as f64).sqrt()).sum();
                history.push(h);
                if t >= CONV_WINDOW {
                    let recent = &history[t - CONV_WINDOW..];
                    let top = recent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let bottom = recent.iter().copied().fold(f64::INFINITY, f64::min);
                    let spread = top - bottom;
                    if spread == 0.0 || spread < cfg.conv_rel_tol * h {
                        break;
                    }
                }
            }
            (sigma(&sumsq, t), t)
        }
    };
    Ok(HiResult {
        hi: per_bin_sigma.iter().sum(),
        per_bin_sigma,
        n_cells,
        global_probs: p,
        bins: k,
        cell_size: m,
    })
}

/// HI per frame. Dynamic mode seeds frame `i` with `seed ^ i`.
pub fn hi_curve(seq: &Sequence, cfg: &HiConfig) -> Result<MetricCurve> {
    let values = seq
        .frames()
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let c = HiConfig {
                seed: cfg.seed ^ i as u64,
                ..*cfg
            };
            hi(f, &c).map(|r| r.hi)
        })
        .collect::<Result<Vec<_>>>()?;
    MetricCurve::for_sequence("hi", seq, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AxisKind;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Uniform};

    fn fixed(k: usize, m: usize) -> HiConfig {
        HiConfig {
            bins: AutoOr::Value(k),
            cell_size: AutoOr::Value(m),
            ..HiConfig::default()
        }
    }

    fn random_frame(w: usize, h: usize, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new(0.0, 1.0).unwrap();
        Frame::from_fn(w, h, |_, _| u.sample(&mut rng)).unwrap()
    }

    #[test]
    fn bin_count_examples() {
        assert_eq!(bin_count(100).unwrap(), 10);
        assert_eq!(bin_count(10_000).unwrap(), 40);
        assert_eq!(bin_count(118 * 118).unwrap(), 41);
        assert_eq!(bin_count(999).unwrap(), 32);
        assert_eq!(bin_count(1000).unwrap(), 30);
        assert!(bin_count(3).is_err());
    }

    #[test]
    fn auto_cell_examples() {
        assert_eq!(auto_cell_size(41), 13);
        assert_eq!(auto_cell_size(4), 4);
        assert_eq!(auto_cell_size(10), 7);
    }

    #[test]
    fn global_hist_examples() {
        assert_eq!(global_hist(&Frame::constant(3, 3, 0.0).unwrap(), 4).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        let f = Frame::new(2, 1, vec![0.0, 1.0]).unwrap();
        assert_eq!(global_hist(&f, 2).unwrap(), vec![0.5, 0.5]);
        let ramp = Frame::from_fn(101, 1, |_, x| x as f64 / 100.0).unwrap();
        let p = global_hist(&ramp, 4).unwrap();
        for pi in &p {
            assert!((pi - 0.25).abs() <= 1.0 / 101.0 + 1e-12, "{p:?}");
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(global_hist(&Frame::constant(2, 2, 1.5).unwrap(), 4).is_err());
    }

    #[test]
    fn constant_frame_is_homogeneous() {
        let r = hi(&Frame::constant(20, 20, 3.5).unwrap(), &HiConfig::default()).unwrap();
        assert_eq!(r.hi, 0.0);
        let dynamic = HiConfig {
            mode: HiMode::Dynamic,
            ..HiConfig::default()
        };
        assert_eq!(hi(&Frame::constant(20, 20, 3.5).unwrap(), &dynamic).unwrap().hi, 0.0);
    }

    #[test]
    fn two_cell_hand_example() {
        let m = 3;
        let f = Frame::from_fn(2 * m, m, |_, x| if x < m { 0.0 } else { 1.0 }).unwrap();
        let r = hi(&f, &fixed(2, m)).unwrap();
        assert_eq!(r.global_probs, vec![0.5, 0.5]);
        assert_eq!(r.n_cells, 2);
        assert!((r.per_bin_sigma[0] - 0.5).abs() < 1e-12);
        assert!((r.per_bin_sigma[1] - 0.5).abs() < 1e-12);
        assert!((r.hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn per_bin_sigma_matches_direct_evaluation() {
        let f = random_frame(23, 17, 5);
        let (k, m) = (6, 4);
        let r = hi(&f, &fixed(k, m)).unwrap();
        let g = normalize01_frame(&f);
        let idx = |v: f64| ((v * k as f64).floor() as usize).min(k - 1);
        let mut p = vec![0.0; k];
        for &v in g.values() {
            p[idx(v)] += 1.0 / g.len() as f64;
        }
        let mut cells = Vec::new();
        for cy in 0..17 / m {
            for cx in 0..23 / m {
                let mut q = vec![0.0; k];
                for y in 0..m {
                    for x in 0..m {
                        q[idx(g.get(cy * m + y, cx * m + x))] += 1.0 / (m * m) as f64;
                    }
                }
                cells.push(q);
            }
        }
        for i in 0..k {
            let var = cells.iter().map(|q| (q[i] - p[i]).powi(2)).sum::<f64>() / cells.len() as f64;
            assert!((r.per_bin_sigma[i] - var.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn cell_constraint_and_size_checked() {
        let f = random_frame(10, 10, 1);
        assert!(hi(&f, &fixed(10, 3)).is_err());
        assert!(hi(&f, &fixed(4, 11)).is_err());
        assert!(hi(&f, &fixed(1, 3)).is_err());
    }

    #[test]
    fn dynamic_approaches_static() {
        let f = random_frame(96, 96, 9);
        let stat = hi(&f, &fixed(8, 8)).unwrap().hi;
        let dyn_cfg = HiConfig {
            mode: HiMode::Dynamic,
            max_iters: 2000,
            conv_rel_tol: 0.0,
            seed: 4,
            ..fixed(8, 8)
        };
        let d = hi(&f, &dyn_cfg).unwrap();
        assert_eq!(d.n_cells, 2000);
        assert!((d.hi - stat).abs() < 0.05 * stat, "{} vs {stat}", d.hi);

        let conv = hi(&f, &HiConfig { conv_rel_tol: 1e-3, max_iters: 2000, ..dyn_cfg }).unwrap();
        assert!(conv.n_cells < 2000);
        assert!((conv.hi - stat).abs() < 0.1 * stat, "{} vs {stat}", conv.hi);
    }

    #[test]
    fn curve_of_identical_frames_is_flat() {
        let f = random_frame(30, 30, 2);
        let seq = Sequence::new(vec![f.clone(), f.clone(), f], AxisKind::Time, vec![0.0, 0.1, 0.2]).unwrap();
        let c = hi_curve(&seq, &HiConfig::default()).unwrap();
        assert_eq!(c.len(), 3);
        assert!(c.values.iter().all(|&v| v == c.values[0] && v > 0.0));
    }

    #[test]
    fn auto_keyword_serde() {
        let cfg: HiConfig = serde_json::from_str(r#"{"bins": "auto", "cell_size": 9}"#).unwrap();
        assert_eq!(cfg.bins, AutoOr::Auto);
        assert_eq!(cfg.cell_size, AutoOr::Value(9));
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains(r#""bins":"auto""#) && text.contains(r#""cell_size":9"#));
        assert!(serde_json::from_str::<HiConfig>(r#"{"bins": "many"}"#).is_err());
        assert!(serde_json::from_str::<HiConfig>(r#"{"bogus": 1}"#).is_err());
    }

    proptest! {
        #[test]
        fn affine_invariant_and_bounded(seed in any::<u64>(), a in 0.01f64..100.0, b in -50.0f64..50.0,
                                        k in 2usize..12, cells in 1usize..5) {
            let m = auto_cell_size(k);
            let side = m * cells;
            let f = random_frame(side, side + 1, seed);
            let g = f.map(|v| a * v + b).unwrap();
            let r1 = hi(&f, &fixed(k, m)).unwrap();
            let r2 = hi(&g, &fixed(k, m)).unwrap();
            prop_assert!((r1.hi - r2.hi).abs() <= 1e-12 * r1.hi.max(1.0));
            prop_assert!(r1.hi >= 0.0);
            // fully tiled frame: cell probabilities average to the global ones
            let tiled = Frame::from_fn(side, side, |y, x| f.get(y, x)).unwrap();
            let r = hi(&tiled, &fixed(k, m)).unwrap();
            let bound: f64 = r.global_probs.iter().map(|p| (p * (1.0 - p)).sqrt()).sum();
            prop_assert!(r.hi <= bound + 1e-12);
            prop_assert!(r.hi <= k as f64 / 2.0);
        }
    }
}
