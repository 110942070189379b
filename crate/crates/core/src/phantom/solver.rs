//! Finite-volume Crank-Nicolson solver for 1D conduction through a layer stack.
//!
//! Cells carry a heat capacity per unit area; neighbours are coupled through the
//! series resistance of their half cells, which is the harmonic mean of the two
//! conductivities at a material interface. Both faces are adiabatic apart from
//! the optional front flux.

use std::ops::{Add, Div, Mul, Sub};

use serde::{Deserialize, Serialize};

use super::{validate_stack, LayerSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Largest cell size in m.
    pub max_cell: f64,
    /// Lower bound on cells per layer.
    pub min_cells: usize,
    /// First time step in s.
    pub dt0: f64,
    /// Step growth factor per step.
    pub growth: f64,
    /// Backward Euler steps before switching to Crank-Nicolson.
    pub euler_steps: usize,
    /// Step ceiling; defaults to a tenth of the fastest layer diffusion time.
    pub max_dt: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { max_cell: 10e-6, min_cells: 20, dt0: 1e-6, growth: 1.05, euler_steps: 4, max_dt: None }
    }
}

impl SolverOptions {
    /// Same scheme on a grid twice as fine in space and in the initial step.
    pub fn refined(&self) -> SolverOptions {
        SolverOptions {
            max_cell: self.max_cell / 2.0,
            min_cells: self.min_cells * 2,
            dt0: self.dt0 / 2.0,
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.max_cell > 0.0 && self.dt0 > 0.0 && self.growth >= 1.0) {
            return Err(Error::InvalidArgument(format!("invalid solver options {self:?}")));
        }
        if self.min_cells < 20 {
            return Err(Error::InvalidArgument(format!(
                "at least 20 cells per layer are required, got {}",
                self.min_cells
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Front face temperature above ambient at each requested time, K.
    pub surface: Vec<f64>,
    /// Largest relative departure of the stored energy from the deposited fluence.
    pub energy_drift: f64,
}

pub(crate) struct Grid {
    /// ρc_p·Δx, J/(m²·K)
    pub(crate) capacity: Vec<f64>,
    /// Conductance between cell i and i + 1, W/(m²·K)
    pub(crate) conductance: Vec<f64>,
    pub(crate) max_dt: f64,
    /// Resistance between the heated face and the first cell centre, m²·K/W
    pub(crate) front_resistance: f64,
}

impl Grid {
    pub(crate) fn new(layers: &[LayerSpec], opts: &SolverOptions) -> Result<Grid> {
        validate_stack(layers)?;
        opts.validate()?;
        let limit = step_limit(layers);
        let tau_min = 10.0 * limit;
        let max_dt = match opts.max_dt {
            Some(dt) if !(dt > 0.0) || dt > limit => {
                return Err(Error::InvalidArgument(format!(
                    "time step {dt} s exceeds a tenth of the fastest layer diffusion time ({tau_min:.3e} s)"
                )))
            }
            Some(dt) => dt,
            None => limit,
        };
        let mut capacity = Vec::new();
        let mut half_r = Vec::new();
        for l in layers {
            let n = opts.min_cells.max((l.thickness / opts.max_cell).ceil() as usize);
            let dx = l.thickness / n as f64;
            for _ in 0..n {
                capacity.push(l.material.heat_capacity() * dx);
                half_r.push(dx / (2.0 * l.material.conductivity));
            }
        }
        let conductance = half_r.windows(2).map(|w| 1.0 / (w[0] + w[1])).collect();
        Ok(Grid { capacity, conductance, max_dt, front_resistance: half_r[0] })
    }

    pub(crate) fn len(&self) -> usize {
        self.capacity.len()
    }

    fn apply_k(&self, t: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &g) in self.conductance.iter().enumerate() {
            let q = g * (t[i + 1] - t[i]);
            out[i] -= q;
            out[i + 1] += q;
        }
    }

    /// March `temp` through `times`, calling `record` at each one. `flux(t)` is
    /// the heat flux density entering the front face.
    pub(crate) fn integrate(
        &self,
        temp: &mut [f64],
        flux: &dyn Fn(f64) -> f64,
        times: &[f64],
        opts: &SolverOptions,
        mut on_step: impl FnMut(&[f64]),
        mut record: impl FnMut(usize, &[f64]),
    ) -> Result<()> {
        check_times(times)?;
        let n = self.len();
        let mut kt = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        let mut system: Option<(f64, f64, Factored)> = None;
        let mut t = 0.0;
        let mut dt = opts.dt0.min(self.max_dt);
        let mut step = 0usize;
        for (k, &target) in times.iter().enumerate() {
            while target - t > 1e-12 * target {
                let h = dt.min(target - t);
                let theta = if step < opts.euler_steps { 1.0 } else { 0.5 };
                if !matches!(&system, Some((sh, st, _)) if *sh == h && *st == theta) {
                    system = Some((h, theta, self.factor(h, theta)));
                }
                let (_, _, lu) = system.as_ref().expect("factored above");
                self.apply_k(temp, &mut kt);
                for i in 0..n {
                    rhs[i] = self.capacity[i] / h * temp[i] - (1.0 - theta) * kt[i];
                }
                rhs[0] += theta * flux(t + h) + (1.0 - theta) * flux(t);
                lu.solve(&mut rhs);
                temp.copy_from_slice(&rhs);
                if temp.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric(format!("non-finite temperature at t = {}", t + h)));
                }
                on_step(temp);
                t += h;
                step += 1;
                dt = (dt * opts.growth).min(self.max_dt);
            }
            t = target;
            record(k, temp);
        }
        Ok(())
    }

    /// LU factors of `C / h + theta K`.
    fn factor(&self, h: f64, theta: f64) -> Factored {
        let n = self.len();
        let g = |i: usize| if i < n - 1 { self.conductance[i] } else { 0.0 };
        let mut off = vec![0.0; n];
        let mut inv_m = vec![0.0; n];
        let mut cprime = vec![0.0; n];
        for i in 0..n {
            let left = if i > 0 { g(i - 1) } else { 0.0 };
            let diag = self.capacity[i] / h + theta * (left + g(i));
            off[i] = -theta * g(i);
            let m = if i > 0 { diag - off[i - 1] * cprime[i - 1] } else { diag };
            inv_m[i] = 1.0 / m;
            cprime[i] = off[i] * inv_m[i];
        }
        Factored { off, inv_m, cprime }
    }
}

/// Factored symmetric tridiagonal system.
struct Factored {
    off: Vec<f64>,
    inv_m: Vec<f64>,
    cprime: Vec<f64>,
}

impl Factored {
    fn solve(&self, x: &mut [f64]) {
        let n = x.len();
        x[0] *= self.inv_m[0];
        for i in 1..n {
            x[i] = (x[i] - self.off[i - 1] * x[i - 1]) * self.inv_m[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.cprime[i] * x[i + 1];
        }
    }
}

/// Largest accepted time step: a tenth of the fastest layer diffusion time.
pub fn step_limit(layers: &[LayerSpec]) -> f64 {
    0.1 * layers.iter().map(LayerSpec::diffusion_time).fold(f64::INFINITY, f64::min)
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("no output times".into()));
    }
    if !(times[0] > 0.0) || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("output times must be positive and finite".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("output times must increase".into()));
    }
    Ok(())
}

/// Solve a tridiagonal system in place; `lower[0]` and `upper[n-1]` are ignored.
pub(crate) fn thomas<T>(lower: &[T], diag: &[T], upper: &[T], rhs: &mut [T], scratch: &mut [T])
where
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<Output = T> + Div<Output = T>,
{
    let n = diag.len();
    scratch[0] = upper[0] / diag[0];
    rhs[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * scratch[i - 1];
        if i + 1 < n {
            scratch[i] = upper[i] / m;
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        rhs[i] = rhs[i] - scratch[i] * rhs[i + 1];
    }
}

/// Front-face temperature after an instantaneous pulse of fluence `q` (J/m²).
pub fn fd_solve(layers: &[LayerSpec], q: f64, times: &[f64]) -> Result<Vec<f64>> {
    Ok(fd_solve_with(layers, q, times, &SolverOptions::default())?.surface)
}

pub fn fd_solve_with(layers: &[LayerSpec], q: f64, times: &[f64], opts: &SolverOptions) -> Result<Solution> {
    if !(q.is_finite() && q > 0.0) {
        return Err(Error::InvalidArgument(format!("pulse fluence must be positive, got {q}")));
    }
    let grid = Grid::new(layers, opts)?;
    let mut temp = vec![0.0; grid.len()];
    temp[0] = q / grid.capacity[0];
    let mut surface = vec![0.0; times.len()];
    let mut drift: f64 = 0.0;
    let cap = &grid.capacity;
    grid.integrate(
        &mut temp,
        &|_| 0.0,
        times,
        opts,
        |t| {
            let e: f64 = cap.iter().zip(t).map(|(c, v)| c * v).sum();
            drift = drift.max((e - q).abs() / q);
        },
        |k, t| surface[k] = t[0],
    )?;
    Ok(Solution { surface, energy_drift: drift })
}

/// Largest relative change of the surface response when the grid is refined.
pub fn grid_doubling_deviation(layers: &[LayerSpec], q: f64, times: &[f64], opts: &SolverOptions) -> Result<f64> {
    let coarse = fd_solve_with(layers, q, times, opts)?.surface;
    let fine = fd_solve_with(layers, q, times, &opts.refined())?.surface;
    Ok(coarse.iter().zip(&fine).map(|(c, f)| ((c - f) / f).abs()).fold(0.0, f64::max))
}

/// Pulse response of a semi-infinite body, `Q / (e sqrt(pi t))`.
pub fn semi_infinite_surface(effusivity: f64, q: f64, t: f64) -> f64 {
    q / (effusivity * (std::f64::consts::PI * t).sqrt())
}

/// Pulse response of a slab with an insulated rear face, by the method of images.
pub fn slab_surface(layer: &LayerSpec, q: f64, t: f64, terms: usize) -> f64 {
    let r = layer.thickness * layer.thickness / (layer.diffusivity() * t);
    let images: f64 = (1..=terms).map(|m| (-((m * m) as f64) * r).exp()).sum();
    semi_infinite_surface(layer.effusivity(), q, t) * (1.0 + 2.0 * images)
}
