//! Synthetic thermogram stacks built from per-stack 1D pulse responses.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    fd_solve_with, insert_layer, material_serde, split_layers, stack_thickness, step_limit, validate_stack, LayerSpec,
    Material, SolverOptions,
};
use crate::error::{Error, Result};
use crate::model::{AxisKind, Frame, Mask, Rect, Sequence};
use crate::sampling::frame_seed;

/// Side of one ROI tile in the six-defect preset, px.
pub const ROI_SIZE: usize = 118;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectSpec {
    pub rect: Rect,
    /// Depth of the insert's upper face below the heated surface, m.
    pub depth: f64,
    #[serde(default = "default_defect_thickness")]
    pub thickness: f64,
    #[serde(default = "default_defect_material", with = "material_serde")]
    pub material: Material,
}

fn default_defect_thickness() -> f64 {
    50e-6
}

fn default_defect_material() -> Material {
    Material::FEP
}

impl DefectSpec {
    pub fn new(rect: Rect, depth: f64) -> Self {
        DefectSpec { rect, depth, thickness: default_defect_thickness(), material: default_defect_material() }
    }

    pub fn with_material(mut self, material: Material) -> Self {
        self.material = material;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    /// Reference layup, heated face first.
    pub plate: Vec<LayerSpec>,
    pub defects: Vec<DefectSpec>,
    /// m per pixel; informational.
    pub pixel_pitch: f64,
    /// Hz
    pub frame_rate: f64,
    /// s
    pub duration: f64,
    /// Pulse fluence, J/m².
    pub fluence: f64,
    /// `(a1, a2)` in 1/px²: heating scales by `1 + a1 x² + a2 y²` about the centre.
    pub nonuniformity: [f64; 2],
    /// Standard deviation of additive sensor noise, K.
    pub noise_std: f64,
    pub seed: u64,
    /// Gap between a defect and its reference ring, px.
    pub guard: usize,
    /// Width of the reference ring, px.
    pub ring: usize,
    /// Lateral Gaussian blur in px; 0 disables it.
    pub blur_sigma: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            width: 64,
            height: 64,
            plate: vec![LayerSpec::new(1.7e-3, Material::CFRP)],
            defects: Vec::new(),
            pixel_pitch: 0.3e-3,
            frame_rate: 60.0,
            duration: 10.0,
            fluence: 1e4,
            nonuniformity: [0.0, 0.0],
            noise_std: 0.02,
            seed: 0,
            guard: 4,
            ring: 8,
            blur_sigma: 0.0,
        }
    }
}

impl PhantomSpec {
    /// 64x64 frame with one centred 24x24 insert.
    pub fn single_defect(depth: f64) -> Self {
        PhantomSpec { defects: vec![DefectSpec::new(Rect::new(20, 20, 24, 24), depth)], ..Default::default() }
    }

    /// One 118x118 ROI with a centred 50x50 insert (15 mm at 0.3 mm/px).
    pub fn roi(depth: f64) -> Self {
        let off = (ROI_SIZE - 50) / 2;
        PhantomSpec {
            width: ROI_SIZE,
            height: ROI_SIZE,
            defects: vec![DefectSpec::new(Rect::new(off, off, 50, 50), depth)],
            frame_rate: 30.0,
            ..Default::default()
        }
    }

    /// Depths of the six inserts in the reference plate, m.
    pub fn six_depths() -> [f64; 6] {
        [0.135e-3, 0.270e-3, 0.405e-3, 0.540e-3, 0.675e-3, 0.810e-3]
    }

    /// Six ROI tiles in a 3x2 grid, one insert per tile, shallowest first.
    pub fn six_roi() -> Self {
        let off = (ROI_SIZE - 50) / 2;
        let defects = Self::roi_rects()
            .iter()
            .zip(Self::six_depths())
            .map(|(r, d)| DefectSpec::new(Rect::new(r.x0 + off, r.y0 + off, 50, 50), d))
            .collect();
        PhantomSpec { width: 3 * ROI_SIZE, height: 2 * ROI_SIZE, defects, frame_rate: 30.0, ..Default::default() }
    }

    /// Tile rects of [`PhantomSpec::six_roi`].
    pub fn roi_rects() -> Vec<Rect> {
        (0..6).map(|i| Rect::new((i % 3) * ROI_SIZE, (i / 3) * ROI_SIZE, ROI_SIZE, ROI_SIZE)).collect()
    }

    pub fn n_frames(&self) -> usize {
        (self.duration * self.frame_rate).round() as usize
    }

    /// `t_i = (i + 1) / frame_rate`
    pub fn times(&self) -> Vec<f64> {
        (0..self.n_frames()).map(|i| (i + 1) as f64 / self.frame_rate).collect()
    }

    pub fn heating_scale(&self, y: usize, x: usize) -> f64 {
        let xc = x as f64 - (self.width as f64 - 1.0) / 2.0;
        let yc = y as f64 - (self.height as f64 - 1.0) / 2.0;
        1.0 + self.nonuniformity[0] * xc * xc + self.nonuniformity[1] * yc * yc
    }

    /// Layup under defect `k`.
    pub fn defect_stack(&self, k: usize) -> Result<Vec<LayerSpec>> {
        let d = &self.defects[k];
        insert_layer(&self.plate, d.depth, d.thickness, d.material)
    }

    /// The plate meshed like defect `k`'s stack.
    pub fn matched_plate(&self, k: usize) -> Result<Vec<LayerSpec>> {
        let d = &self.defects[k];
        split_layers(&self.plate, d.depth, d.thickness)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.width == 0 || self.height == 0 {
            return bad("phantom size must be positive".into());
        }
        validate_stack(&self.plate).map_err(|e| Error::Config(format!("plate: {e}")))?;
        for (name, v) in [
            ("frame_rate", self.frame_rate),
            ("duration", self.duration),
            ("fluence", self.fluence),
            ("pixel_pitch", self.pixel_pitch),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.n_frames() < 2 {
            return bad("phantom needs at least 2 frames".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise_std must be non-negative, got {}", self.noise_std));
        }
        if !(self.blur_sigma >= 0.0 && self.blur_sigma.is_finite()) {
            return bad(format!("blur_sigma must be non-negative, got {}", self.blur_sigma));
        }
        let corners = [(0, 0), (0, self.width - 1), (self.height - 1, 0), (self.height - 1, self.width - 1)];
        if self.nonuniformity.iter().any(|a| !a.is_finite())
            || corners.iter().any(|&(y, x)| !(self.heating_scale(y, x) > 0.0))
        {
            return bad(format!("heating nonuniformity {:?} is not positive over the frame", self.nonuniformity));
        }
        let total = stack_thickness(&self.plate);
        for (k, d) in self.defects.iter().enumerate() {
            d.rect
                .check_inside(self.width, self.height)
                .map_err(|e| Error::Config(format!("defect {k}: {e}")))?;
            d.material.validate().map_err(|e| Error::Config(format!("defect {k}: {e}")))?;
            if !(d.depth > 0.0 && d.thickness > 0.0 && d.depth + d.thickness < total) {
                return bad(format!(
                    "defect {k}: depth {} + thickness {} must lie inside the {total} m plate",
                    d.depth, d.thickness
                ));
            }
            for (j, e) in self.defects[..k].iter().enumerate() {
                if d.rect.intersects(&e.rect) {
                    return bad(format!("defects {j} and {k} overlap"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub sequence: Sequence,
    pub defect_mask: Mask,
    pub reference_mask: Mask,
    /// Noise-free excess temperature of each defect stack over the plate at unit heating.
    pub defect_contrast: Vec<Vec<f64>>,
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let times = spec.times();
    let (w, h) = (spec.width, spec.height);

    let mut stacks = vec![(spec.plate.clone(), SolverOptions::default())];
    for k in 0..spec.defects.len() {
        let (def, plate) = (spec.defect_stack(k)?, spec.matched_plate(k)?);
        // identical step sequences for the pair
        let opts = SolverOptions { max_dt: Some(step_limit(&def).min(step_limit(&plate))), ..Default::default() };
        stacks.push((def, opts.clone()));
        stacks.push((plate, opts));
    }
    let solved = stacks
        .par_iter()
        .map(|(s, o)| Ok(fd_solve_with(s, spec.fluence, &times, o)?.surface))
        .collect::<Result<Vec<_>>>()?;
    // Defect pixels are the plate response plus a contrast taken on a shared
    // mesh, so grid differences do not leak into the image.
    let defect_contrast: Vec<Vec<f64>> = solved[1..]
        .chunks(2)
        .map(|p| p[0].iter().zip(&p[1]).map(|(a, b)| a - b).collect())
        .collect();
    let mut responses = vec![solved[0].clone()];
    for c in &defect_contrast {
        responses.push(solved[0].iter().zip(c).map(|(a, b)| a + b).collect());
    }

    let mut label = vec![0usize; w * h];
    for (k, d) in spec.defects.iter().enumerate() {
        for y in d.rect.y0..d.rect.y0 + d.rect.h {
            label[y * w + d.rect.x0..y * w + d.rect.x0 + d.rect.w].fill(k + 1);
        }
    }
    let scale: Vec<f64> = (0..w * h).map(|p| spec.heating_scale(p / w, p % w)).collect();
    let kernel = gaussian_kernel(spec.blur_sigma);
    let normal = Normal::new(0.0, spec.noise_std).map_err(|e| Error::Config(e.to_string()))?;

    let frames = (0..times.len())
        .into_par_iter()
        .map(|i| {
            let mut v: Vec<f64> = (0..w * h).map(|p| scale[p] * responses[label[p]][i]).collect();
            if let Some(k) = &kernel {
                v = blur(&v, w, h, k);
            }
            if spec.noise_std > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(spec.seed, i));
                v.iter_mut().for_each(|x| *x += normal.sample(&mut rng));
            }
            Frame::new(w, h, v)
        })
        .collect::<Result<Vec<_>>>()?;

    let defect_mask = Mask::from_fn(w, h, |y, x| label[y * w + x] > 0);
    let reference_mask = reference_ring(spec);
    Ok(Phantom {
        sequence: Sequence::new(frames, AxisKind::Time, times)?,
        defect_mask,
        reference_mask,
        defect_contrast,
    })
}

fn chebyshev(r: &Rect, y: usize, x: usize) -> usize {
    let dx = (r.x0.saturating_sub(x)).max(x.saturating_sub(r.x0 + r.w - 1));
    let dy = (r.y0.saturating_sub(y)).max(y.saturating_sub(r.y0 + r.h - 1));
    dx.max(dy)
}

/// Pixels at Chebyshev distance `guard < d <= guard + ring` from some defect and
/// farther than `guard` from every defect.
fn reference_ring(spec: &PhantomSpec) -> Mask {
    Mask::from_fn(spec.width, spec.height, |y, x| {
        let d: Vec<usize> = spec.defects.iter().map(|df| chebyshev(&df.rect, y, x)).collect();
        d.iter().all(|&d| d > spec.guard) && d.iter().any(|&d| d <= spec.guard + spec.ring)
    })
}

fn gaussian_kernel(sigma: f64) -> Option<Vec<f64>> {
    if sigma <= 0.0 {
        return None;
    }
    let r = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    Some(k.into_iter().map(|v| v / s).collect())
}

/// Separable convolution with edge clamping.
fn blur(v: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as i64;
    let clamp = |i: i64, n: usize| i.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![0.0; v.len()];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k.iter().enumerate().map(|(j, c)| c * v[y * w + clamp(x as i64 + j as i64 - r, w)]).sum();
        }
    }
    let mut out = vec![0.0; v.len()];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k.iter().enumerate().map(|(j, c)| c * tmp[clamp(y as i64 + j as i64 - r, h) * w + x]).sum();
        }
    }
    out
}
