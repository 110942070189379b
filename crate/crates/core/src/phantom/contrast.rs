//! Thermal-wave response of layer stacks under periodic front-face heating.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::solver::{thomas, Grid};
use super::{validate_stack, LayerSpec, SolverOptions};
use crate::curve::MetricCurve;
use crate::error::{Error, Result};
use crate::model::AxisKind;

/// Thermal diffusion length `sqrt(alpha / (pi f))`.
pub fn diffusion_length(alpha: f64, f: f64) -> Result<f64> {
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::InvalidArgument(format!("frequency must be positive, got {f}")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("diffusivity must be positive, got {alpha}")));
    }
    Ok((alpha / (PI * f)).sqrt())
}

/// Complex front-face temperature per unit harmonic flux at frequency `f`,
/// i.e. the solution of `(i omega C + K) T = e_0` on the solver grid, carried
/// from the first cell centre to the face through the half-cell resistance.
pub fn surface_transfer(layers: &[LayerSpec], f: f64, opts: &SolverOptions) -> Result<Complex64> {
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::InvalidArgument(format!("frequency must be positive, got {f}")));
    }
    let grid = Grid::new(layers, opts)?;
    let n = grid.len();
    let w = 2.0 * PI * f;
    let g = &grid.conductance;
    let mut lower = vec![Complex64::default(); n];
    let mut upper = vec![Complex64::default(); n];
    let mut diag: Vec<Complex64> = grid.capacity.iter().map(|c| Complex64::new(0.0, w * c)).collect();
    for i in 0..n - 1 {
        diag[i] += g[i];
        diag[i + 1] += g[i];
        upper[i] = Complex64::new(-g[i], 0.0);
        lower[i + 1] = Complex64::new(-g[i], 0.0);
    }
    let mut rhs = vec![Complex64::default(); n];
    rhs[0] = Complex64::new(1.0, 0.0);
    let mut scratch = vec![Complex64::default(); n];
    thomas(&lower, &diag, &upper, &mut rhs, &mut scratch);
    Ok(rhs[0] + grid.front_resistance)
}

fn phase_lag(layers: &[LayerSpec], f: f64, opts: &SolverOptions) -> Result<f64> {
    Ok(-surface_transfer(layers, f, opts)?.arg())
}

/// Phase lag of the surface temperature behind a `cos(omega t)` flux, from a
/// time-domain run demodulated over its final period.
pub fn lockin_phase_lag(
    layers: &[LayerSpec],
    f: f64,
    periods: usize,
    samples_per_period: usize,
    opts: &SolverOptions,
) -> Result<f64> {
    if periods < 2 || samples_per_period < 8 {
        return Err(Error::InvalidArgument("need at least 2 periods of 8 samples".into()));
    }
    diffusion_length(1.0, f)?;
    let grid = Grid::new(layers, opts)?;
    let w = 2.0 * PI * f;
    let dt = 1.0 / (f * samples_per_period as f64);
    let times: Vec<f64> = (1..=periods * samples_per_period).map(|i| i as f64 * dt).collect();
    let first = (periods - 1) * samples_per_period;
    let mut acc = Complex64::default();
    let mut temp = vec![0.0; grid.len()];
    grid.integrate(&mut temp, &|t| (w * t).cos(), &times, opts, |_| {}, |k, t| {
        if k >= first {
            let surface = t[0] + grid.front_resistance * (w * times[k]).cos();
            acc += Complex64::from_polar(surface, -w * times[k]);
        }
    })?;
    Ok(-acc.arg())
}

/// Difference of effective penetration depth between a defect stack and a
/// reference stack, `d = mu * lag / pi` with `mu` taken in the front layer of
/// the reference.
pub fn contrast_curve(ref_layers: &[LayerSpec], def_layers: &[LayerSpec], freqs: &[f64]) -> Result<MetricCurve> {
    validate_stack(ref_layers)?;
    validate_stack(def_layers)?;
    if freqs.is_empty() {
        return Err(Error::InvalidArgument("no frequencies".into()));
    }
    let opts = SolverOptions::default();
    let alpha = ref_layers[0].diffusivity();
    let values = freqs
        .iter()
        .map(|&f| {
            let mu = diffusion_length(alpha, f)?;
            let lag_ref = phase_lag(ref_layers, f, &opts)?;
            let lag_def = phase_lag(def_layers, f, &opts)?;
            Ok(mu * (lag_def - lag_ref) / PI)
        })
        .collect::<Result<Vec<f64>>>()?;
    MetricCurve::new("depth_contrast", AxisKind::Frequency, freqs.to_vec(), values)
}
