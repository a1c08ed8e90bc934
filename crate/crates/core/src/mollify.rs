//! Regularization of initial data by convolution with `zeta_n(x) = n zeta(n x)`.
//!
//! `zeta` is a smooth even bump with a plateau on `[-1, 1]`, supported in
//! `[-2, 2]`, scaled to unit mass. A literal plateau height of 1 cannot have
//! unit mass, so the plateau value is `1/3`.

use crate::error::{invalid, Result};
use crate::model::SystemState;
use crate::spectral::{ComplexField, RealField, SpectralGrid, C64};

const QUADRATURE_POINTS: usize = 4096;

fn smooth_step_kernel(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        (-1.0 / s).exp()
    }
}

/// Unit-mass bump: `1/3` on `[-1, 1]`, zero outside `(-2, 2)`, C-infinity.
pub fn bump(x: f64) -> f64 {
    let a = x.abs();
    if a <= 1.0 {
        1.0 / 3.0
    } else if a >= 2.0 {
        0.0
    } else {
        let up = smooth_step_kernel(2.0 - a);
        let down = smooth_step_kernel(a - 1.0);
        up / (up + down) / 3.0
    }
}

/// `n zeta(n x)`.
pub fn scaled_bump(x: f64, level: u32) -> f64 {
    let n = level as f64;
    n * bump(n * x)
}

/// Fourier transform `int zeta(x) e^{-ikx} dx` (real, since `zeta` is even).
pub fn bump_transform(k: f64) -> f64 {
    let h = 4.0 / QUADRATURE_POINTS as f64;
    // integrand vanishes at both ends; midpoint nodes
    (0..QUADRATURE_POINTS)
        .map(|j| {
            let x = -2.0 + (j as f64 + 0.5) * h;
            bump(x) * (k * x).cos()
        })
        .sum::<f64>()
        * h
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MollifierSpec {
    level: u32,
}

impl MollifierSpec {
    pub fn new(level: u32) -> Result<Self> {
        if level == 0 {
            return Err(invalid("mollification level must be positive"));
        }
        Ok(Self { level })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Transform-space multipliers `zeta_hat(k / n)` for every mode of `grid`.
    pub fn multipliers(&self, grid: &SpectralGrid) -> Vec<f64> {
        let n = self.level as f64;
        (0..grid.len())
            .map(|j| {
                let k = if j == grid.len() / 2 { grid.nyquist() } else { grid.wavenumbers()[j] };
                bump_transform(k / n)
            })
            .collect()
    }
}

fn convolve(grid: &SpectralGrid, data: &[C64], mult: &[f64]) -> Vec<C64> {
    let mut spec = data.to_vec();
    grid.forward(&mut spec);
    spec.iter_mut().zip(mult).for_each(|(z, m)| *z *= m);
    grid.inverse(&mut spec);
    spec
}

/// `(u0 * zeta_n, v0 * zeta_n)`, computed in transform space.
pub fn mollify_data(data: &SystemState, spec: &MollifierSpec) -> Result<SystemState> {
    let grid = data.grid();
    let mult = spec.multipliers(grid);
    let u = convolve(grid, data.u.samples(), &mult);
    let vc: Vec<C64> = data.v.samples().iter().map(|&x| C64::new(x, 0.0)).collect();
    let v = convolve(grid, &vc, &mult);
    SystemState::new(
        ComplexField::new(grid, u)?,
        RealField::new(grid, v.into_iter().map(|z| z.re).collect())?,
        data.time,
    )
}
