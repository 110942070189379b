//! Window-size schedules and window placement.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of sampled windows per size.
///
/// Planned for a coefficient of variation of 0.5, a confidence interval
/// width of 0.125 and a confidence level of 0.99.
pub const DEFAULT_NOS: usize = 439;

/// Square window, top-left anchored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Window {
    pub x: usize,
    pub y: usize,
    pub n: usize,
}

impl Window {
    pub fn new(x: usize, y: usize, n: usize) -> Self {
        Self { x, y, n }
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.n >= 1 && self.x + self.n <= width && self.y + self.n <= height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    StaticGrid,
    #[default]
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub strategy: Strategy,
    pub nos_set: usize,
    pub seed: u64,
    pub sizes: Vec<usize>,
}

impl SamplingPlan {
    /// Random plan with the default NOS over the full size schedule.
    pub fn for_image(width: usize, height: usize, phi: usize, stride: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            strategy: Strategy::Random,
            nos_set: DEFAULT_NOS,
            seed,
            sizes: size_schedule(width, height, phi, stride)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.nos_set == 0 {
            return Err(Error::InvalidArgument("nos_set must be at least 1".into()));
        }
        if self.sizes.is_empty() {
            return Err(Error::InvalidArgument("no window sizes".into()));
        }
        if self.sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("window sizes must increase strictly".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

pub fn n_min(phi: usize) -> usize {
    let mut r = 1;
    while r * r < phi {
        r += 1;
    }
    r.max(2)
}

pub fn size_schedule(width: usize, height: usize, phi: usize, stride: usize) -> Result<Vec<usize>> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    let lo = n_min(phi);
    let hi = width.min(height) / 2;
    if hi < lo {
        return Err(Error::Dimension(format!(
            "{width}x{height} image is too small for windows of at least {lo} px"
        )));
    }
    Ok((lo..=hi).step_by(stride).collect())
}

/// Number of distinct top-left positions for an `n`-window.
pub fn positions(width: usize, height: usize, n: usize) -> usize {
    if n == 0 || n > width || n > height {
        0
    } else {
        (width - n + 1) * (height - n + 1)
    }
}

pub fn sample_windows(width: usize, height: usize, n: usize, plan: &SamplingPlan) -> Result<Vec<Window>> {
    if n == 0 || n > width.min(height) {
        return Err(Error::InvalidArgument(format!(
            "window size {n} does not fit a {width}x{height} image"
        )));
    }
    if plan.nos_set == 0 {
        return Err(Error::InvalidArgument("nos_set must be at least 1".into()));
    }
    Ok(match plan.strategy {
        Strategy::StaticGrid => {
            let mut out = Vec::with_capacity((width / n) * (height / n));
            for j in 0..height / n {
                for i in 0..width / n {
                    out.push(Window::new(i * n, j * n, n));
                }
            }
            out
        }
        Strategy::Random => {
            let cols = width - n + 1;
            let total = positions(width, height, n);
            let to_window = |idx: usize| Window::new(idx % cols, idx / cols, n);
            if total <= plan.nos_set {
                (0..total).map(to_window).collect()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(plan.seed ^ n as u64);
                index::sample(&mut rng, total, plan.nos_set)
                    .into_iter()
                    .map(to_window)
                    .collect()
            }
        }
    })
}

/// Seed for frame `i` derived from a base seed; stable under any evaluation order.
pub fn frame_seed(seed: u64, frame: usize) -> u64 {
    seed ^ (frame as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}
