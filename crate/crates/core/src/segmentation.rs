//! Quantization of a frame into `phi` intensity phases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Frame;

/// Default phase count for thermograms and phase sequences.
pub const DEFAULT_PHI: usize = 4;
/// Default phase count for PPT amplitude sequences.
pub const DEFAULT_PHI_AMPLITUDE: usize = 5;

const MAX_LLOYD_ITERS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentMethod {
    /// Lloyd's algorithm in 1D from quantile seeds.
    #[default]
    Kmeans1d,
    /// `phi` equal intervals between the frame minimum and maximum.
    EqualWidth,
}

/// Per-pixel phase labels; phase 0 holds the lowest intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedImage {
    width: usize,
    height: usize,
    phi: usize,
    labels: Vec<u8>,
    thresholds: Vec<f64>,
}

impl SegmentedImage {
    /// Wraps an existing label map. Thresholds are left empty.
    pub fn from_labels(width: usize, height: usize, phi: usize, labels: Vec<u8>) -> Result<Self> {
        check_phi(phi)?;
        if labels.len() != width * height || width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "{} labels for a {width}x{height} image",
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= phi) {
            return Err(Error::InvalidArgument(format!("label {l} >= phi {phi}")));
        }
        Ok(Self {
            width,
            height,
            phi,
            labels,
            thresholds: Vec::new(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn phi(&self) -> usize {
        self.phi
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    /// The `phi - 1` cut points; a value equal to a cut goes to the lower phase.
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn phase_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.phi];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

fn check_phi(phi: usize) -> Result<()> {
    if !(2..=255).contains(&phi) {
        return Err(Error::InvalidArgument(format!("phi must be in 2..=255, got {phi}")));
    }
    Ok(())
}

pub fn segment(f: &Frame, phi: usize, method: SegmentMethod) -> Result<SegmentedImage> {
    check_phi(phi)?;
    let (lo, hi) = f.min_max();
    let labels: Vec<u8>;
    let thresholds: Vec<f64>;
    if hi <= lo {
        thresholds = vec![lo; phi - 1];
        labels = vec![0; f.len()];
    } else {
        match method {
            SegmentMethod::Kmeans1d => {
                let mut sorted = f.values().to_vec();
                sorted.sort_by(f64::total_cmp);
                thresholds = kmeans1d(&sorted, phi).thresholds;
                labels = f.values().iter().map(|&v| label_of(v, &thresholds)).collect();
            }
            SegmentMethod::EqualWidth => {
                let span = hi - lo;
                thresholds = (1..phi).map(|j| lo + span * j as f64 / phi as f64).collect();
                labels = f
                    .values()
                    .iter()
                    .map(|&v| {
                        let pos = (v - lo) / span * phi as f64;
                        (pos.ceil() as usize).clamp(1, phi) as u8 - 1
                    })
                    .collect();
            }
        }
    }
    Ok(SegmentedImage {
        width: f.width(),
        height: f.height(),
        phi,
        labels,
        thresholds,
    })
}

#[inline]
fn label_of(v: f64, thresholds: &[f64]) -> u8 {
    thresholds.partition_point(|&t| t < v) as u8
}

#[derive(Debug, Clone)]
pub(crate) struct Kmeans1d {
    pub thresholds: Vec<f64>,
    /// Within-cluster sum of squares after each assignment step.
    #[cfg_attr(not(test), allow(dead_code))]
    pub objective: Vec<f64>,
}

/// Lloyd iterations on sorted data. Clusters are contiguous runs of the
/// sorted values, so assignment is a binary search per threshold and the new
/// centers come from prefix sums.
pub(crate) fn kmeans1d(sorted: &[f64], k: usize) -> Kmeans1d {
    let n = sorted.len();
    let mut prefix = Vec::with_capacity(n + 1);
    let mut prefix_sq = Vec::with_capacity(n + 1);
    let (mut s, mut s2) = (0.0, 0.0);
    // shift by the first value to keep the squared sums well conditioned
    let origin = sorted[0];
    prefix.push(0.0);
    prefix_sq.push(0.0);
    for &v in sorted {
        let d = v - origin;
        s += d;
        s2 += d * d;
        prefix.push(s);
        prefix_sq.push(s2);
    }
    let sse = |a: usize, b: usize| -> f64 {
        if b <= a {
            return 0.0;
        }
        let m = (b - a) as f64;
        let sum = prefix[b] - prefix[a];
        (prefix_sq[b] - prefix_sq[a] - sum * sum / m).max(0.0)
    };

    let mut centers: Vec<f64> = (0..k)
        .map(|j| {
            let q = (j as f64 + 0.5) / k as f64;
            sorted[((q * n as f64) as usize).min(n - 1)]
        })
        .collect();
    let mut bounds: Vec<usize> = Vec::new();
    let mut objective = Vec::new();
    for _ in 0..MAX_LLOYD_ITERS {
        let thresholds: Vec<f64> = centers.windows(2).map(|c| 0.5 * (c[0] + c[1])).collect();
        // cluster j covers sorted[bounds[j]..bounds[j + 1]]
        let mut new_bounds = Vec::with_capacity(k + 1);
        new_bounds.push(0);
        new_bounds.extend(thresholds.iter().map(|&t| sorted.partition_point(|&v| v <= t)));
        new_bounds.push(n);
        objective.push((0..k).map(|j| sse(new_bounds[j], new_bounds[j + 1])).sum());
        if new_bounds == bounds {
            break;
        }
        for j in 0..k {
            let (a, b) = (new_bounds[j], new_bounds[j + 1]);
            if b > a {
                centers[j] = origin + (prefix[b] - prefix[a]) / (b - a) as f64;
            }
        }
        centers.sort_by(f64::total_cmp);
        bounds = new_bounds;
    }
    let thresholds = centers.windows(2).map(|c| 0.5 * (c[0] + c[1])).collect();
    Kmeans1d {
        thresholds,
        objective,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn two_valued_frame() {
        let f = Frame::new(4, 1, vec![3.0, 9.0, 9.0, 3.0]).unwrap();
        for m in [SegmentMethod::Kmeans1d, SegmentMethod::EqualWidth] {
            let s = segment(&f, 2, m).unwrap();
            assert_eq!(s.labels(), &[0, 1, 1, 0]);
        }
    }

    #[test]
    fn constant_frame_is_phase_zero() {
        let f = Frame::constant(3, 3, 1.25).unwrap();
        let s = segment(&f, 4, SegmentMethod::Kmeans1d).unwrap();
        assert!(s.labels().iter().all(|&l| l == 0));
        assert_eq!(s.thresholds(), &[1.25; 3]);
        assert_eq!(s.phase_counts(), vec![9, 0, 0, 0]);
    }

    #[test]
    fn phi_below_two_is_rejected() {
        let f = Frame::constant(2, 2, 0.0).unwrap();
        assert!(segment(&f, 1, SegmentMethod::Kmeans1d).is_err());
    }

    #[test]
    fn fewer_distinct_values_than_phases_still_orders_labels() {
        let f = Frame::new(3, 1, vec![1.0, 2.0, 1.0]).unwrap();
        let s = segment(&f, 4, SegmentMethod::Kmeans1d).unwrap();
        assert!(s.label(0, 0) < s.label(0, 1));
        assert_eq!(s.label(0, 0), s.label(0, 2));
    }

    #[test]
    fn equal_width_ties_go_low() {
        let f = Frame::new(5, 1, vec![0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        let s = segment(&f, 4, SegmentMethod::EqualWidth).unwrap();
        assert_eq!(s.labels(), &[0, 0, 1, 2, 3]);
    }

    /// Split index minimizing the two-class within-class sum of squares.
    fn best_split(sorted: &[f64]) -> usize {
        let sse = |xs: &[f64]| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            xs.iter().map(|v| (v - m).powi(2)).sum::<f64>()
        };
        (1..sorted.len())
            .min_by(|&a, &b| {
                let ca = sse(&sorted[..a]) + sse(&sorted[a..]);
                let cb = sse(&sorted[..b]) + sse(&sorted[b..]);
                ca.total_cmp(&cb)
            })
            .unwrap()
    }

    #[test]
    fn two_gaussians_match_exhaustive_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let lo = Normal::new(10.0, 1.0).unwrap();
        let hi = Normal::new(20.0, 1.5).unwrap();
        let mut vals: Vec<f64> = (0..600).map(|_| lo.sample(&mut rng)).collect();
        vals.extend((0..400).map(|_| hi.sample(&mut rng)));
        let f = Frame::new(1000, 1, vals.clone()).unwrap();
        let s = segment(&f, 2, SegmentMethod::Kmeans1d).unwrap();
        let t = s.thresholds()[0];
        assert!(t > 12.0 && t < 18.0, "{t}");

        vals.sort_by(f64::total_cmp);
        let split = best_split(&vals);
        assert!(vals[split - 1] <= t && t < vals[split], "split {split} t {t}");
        assert_eq!(s.phase_counts(), vec![split, 1000 - split]);
    }

    #[test]
    fn lloyd_objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Normal::new(0.0, 1.0).unwrap();
        for k in 2..7 {
            let mut v: Vec<f64> = (0..500).map(|_| d.sample(&mut rng)).map(|x: f64| x.powi(3)).collect();
            v.sort_by(f64::total_cmp);
            let km = kmeans1d(&v, k);
            assert!(km.objective.len() < MAX_LLOYD_ITERS);
            for w in km.objective.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", km.objective);
            }
        }
    }

    proptest! {
        #[test]
        fn labels_invariant_under_positive_affine(vals in prop::collection::vec(-10.0f64..10.0, 36),
                                                  alpha in 0.1f64..10.0, beta in -5.0f64..5.0,
                                                  phi in 2usize..6) {
            let f = Frame::new(6, 6, vals).unwrap();
            let g = f.map(|v| alpha * v + beta).unwrap();
            for m in [SegmentMethod::Kmeans1d, SegmentMethod::EqualWidth] {
                let a = segment(&f, phi, m).unwrap();
                let b = segment(&g, phi, m).unwrap();
                prop_assert_eq!(a.labels(), b.labels());
                prop_assert!(a.labels().iter().all(|&l| (l as usize) < phi));
            }
        }
    }
}
