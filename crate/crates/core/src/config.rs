//! Run configuration shared by the CLI subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curve::PostConfig;
use crate::error::{Error, Result};
use crate::hi::HiConfig;
use crate::model::{KeepRange, Rect};
use crate::phantom::PhantomSpec;
use crate::rea_tve::ReaTveConfig;
use crate::reference::{Detector, Threshold};

/// Sample-size planning inputs behind the default window count: coefficient of
/// variation 0.5, confidence interval width 0.125, assurance 0.99.
pub const NOS_PLANNING: (f64, f64, f64) = (0.5, 0.125, 0.99);

pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskPaths {
    pub defect: PathBuf,
    pub reference: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Stack directory; when absent the phantom below is generated in memory.
    pub input: Option<PathBuf>,
    pub phantom: Option<PhantomSpec>,
    /// Regions analysed separately; empty means the full frame.
    pub rois: Vec<Rect>,
    /// Frames to keep, inclusive ranges; empty keeps all.
    pub keep_frames: Vec<KeepRange>,
    /// Subtract a fitted quadratic surface from every frame before analysis.
    pub background_filter: bool,
    pub hi: HiConfig,
    pub rea_tve: ReaTveConfig,
    pub post: PostConfig,
    pub masks: Option<MaskPaths>,
    pub detector: Detector,
    pub workers: Option<usize>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            phantom: None,
            rois: Vec::new(),
            keep_frames: Vec::new(),
            background_filter: true,
            hi: HiConfig::default(),
            rea_tve: ReaTveConfig::default(),
            post: PostConfig::default(),
            masks: None,
            detector: Detector::default(),
            workers: None,
            out: PathBuf::from("irt-out"),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub rois: Vec<Rect>,
    pub phi: Option<usize>,
    pub nos: Option<usize>,
    pub seed: Option<u64>,
    pub keep_frames: Option<Vec<KeepRange>>,
    pub masks: Option<MaskPaths>,
    pub filter_order: Option<usize>,
    pub cutoff: Option<f64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        // serde_json reports line and column of the offending token
        serde_json::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(v) = o.input {
            self.input = Some(v);
        }
        if !o.rois.is_empty() {
            self.rois = o.rois;
        }
        if let Some(v) = o.phi {
            self.rea_tve.phi = v;
        }
        if let Some(v) = o.nos {
            self.rea_tve.nos_set = v;
        }
        if let Some(v) = o.seed {
            self.rea_tve.seed = v;
            self.hi.seed = v;
            if let Some(p) = self.phantom.as_mut() {
                p.seed = v;
            }
        }
        if let Some(v) = o.keep_frames {
            self.keep_frames = v;
        }
        if let Some(v) = o.masks {
            self.masks = Some(v);
        }
        if let Some(v) = o.filter_order {
            self.post.filter_order = v;
        }
        if let Some(v) = o.cutoff {
            self.post.cutoff = v;
        }
        if let Some(v) = o.workers {
            self.workers = Some(v);
        }
        if let Some(v) = o.out {
            self.out = v;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let r = &self.rea_tve;
        if !(2..=255).contains(&r.phi) {
            return bad(format!("phi must be in 2..=255, got {}", r.phi));
        }
        if r.nos_set == 0 || r.stride == 0 {
            return bad("nos_set and stride must be positive".into());
        }
        if !(r.tail_tol > 0.0 && r.tail_tol.is_finite()) {
            return bad(format!("tail_tol must be positive, got {}", r.tail_tol));
        }
        let p = &self.post;
        if p.filter_order == 0 || p.filter_order > 10 {
            return bad(format!("filter_order must be in 1..=10, got {}", p.filter_order));
        }
        if !(p.cutoff > 0.0 && p.cutoff < 1.0) {
            return bad(format!("cutoff must lie in (0, 1) as a fraction of Nyquist, got {}", p.cutoff));
        }
        if !(0.0..=1.0).contains(&p.prominence) || p.top_k == 0 {
            return bad("prominence must be in [0, 1] and top_k positive".into());
        }
        if !(self.hi.conv_rel_tol > 0.0) || self.hi.max_iters < 10 {
            return bad("hi.conv_rel_tol must be positive and hi.max_iters at least 10".into());
        }
        if let Threshold::Quantile { q } = self.detector.threshold {
            if !(0.0..=1.0).contains(&q) {
                return bad(format!("detector quantile must be in [0, 1], got {q}"));
            }
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        for k in &self.keep_frames {
            if k.start > k.end {
                return bad(format!("keep range {}:{} is reversed", k.start, k.end));
            }
        }
        if let Some(ph) = &self.phantom {
            ph.validate()?;
        }
        Ok(())
    }

    /// Pretty JSON with every default spelled out.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn write_effective(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(EFFECTIVE_CONFIG_FILE);
        fs::write(&path, self.to_json() + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
