//! Periodic Fourier discretization of the line on `[-L, L)`.
//!
//! Differentiation is done in transform space, quadratic and cubic products are
//! formed on a 2N zero-padded grid, and integrals use the rectangle rule (which
//! is spectrally accurate for smooth periodic integrands).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    forward_fine: Arc<dyn Fft<f64>>,
    inverse_fine: Arc<dyn Fft<f64>>,
}

struct GridInner {
    num_points: usize,
    half_length: f64,
    spacing: f64,
    nodes: Vec<f64>,
    // Antisymmetric table, Nyquist entry set to zero.
    wavenumbers: Vec<f64>,
    nyquist: f64,
    plans: Plans,
}

/// Uniform periodic grid with its wavenumber table and FFT plans.
///
/// Cloning is cheap; clones share the plans.
#[derive(Clone)]
pub struct SpectralGrid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("num_points", &self.inner.num_points)
            .field("half_length", &self.inner.half_length)
            .finish()
    }
}

impl PartialEq for SpectralGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.num_points == other.inner.num_points
                && self.inner.half_length == other.inner.half_length)
    }
}

impl SpectralGrid {
    pub fn new(num_points: usize, half_length: f64) -> Result<Self> {
        if num_points < 4 || !num_points.is_power_of_two() {
            return Err(invalid(format!(
                "num_points must be a power of two >= 4, got {num_points}"
            )));
        }
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(invalid(format!("half_length must be positive, got {half_length}")));
        }
        let n = num_points;
        let spacing = 2.0 * half_length / n as f64;
        let nodes = (0..n).map(|j| -half_length + j as f64 * spacing).collect();
        let base = PI / half_length;
        let wavenumbers = (0..n)
            .map(|j| {
                if j < n / 2 {
                    base * j as f64
                } else if j == n / 2 {
                    0.0
                } else {
                    base * (j as f64 - n as f64)
                }
            })
            .collect();

        let mut planner = FftPlanner::new();
        let plans = Plans {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            forward_fine: planner.plan_fft_forward(2 * n),
            inverse_fine: planner.plan_fft_inverse(2 * n),
        };
        Ok(Self {
            inner: Arc::new(GridInner {
                num_points: n,
                half_length,
                spacing,
                nodes,
                wavenumbers,
                nyquist: base * (n / 2) as f64,
                plans,
            }),
        })
    }

    pub fn len(&self) -> usize {
        self.inner.num_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn half_length(&self) -> f64 {
        self.inner.half_length
    }

    pub fn spacing(&self) -> f64 {
        self.inner.spacing
    }

    /// Box length `2L`.
    pub fn length(&self) -> f64 {
        2.0 * self.inner.half_length
    }

    pub fn nodes(&self) -> &[f64] {
        &self.inner.nodes
    }

    /// `k_j = pi j / L` in FFT ordering with the Nyquist entry zeroed.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.inner.wavenumbers
    }

    pub fn nyquist(&self) -> f64 {
        self.inner.nyquist
    }

    /// Largest resolved |k|.
    pub fn k_max(&self) -> f64 {
        self.inner.nyquist
    }

    /// `k^2` table including the Nyquist mode.
    pub fn wavenumber_squared(&self, j: usize) -> f64 {
        if j == self.len() / 2 {
            self.inner.nyquist * self.inner.nyquist
        } else {
            self.inner.wavenumbers[j] * self.inner.wavenumbers[j]
        }
    }

    /// Multiplier of the order-`order` derivative at mode `j`.
    pub fn derivative_multiplier(&self, j: usize, order: u32) -> C64 {
        let nyq = j == self.len() / 2;
        if nyq && order % 2 == 1 {
            return C64::new(0.0, 0.0);
        }
        let k = if nyq { self.inner.nyquist } else { self.inner.wavenumbers[j] };
        C64::new(0.0, k).powu(order)
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, data: &mut [C64]) {
        debug_assert_eq!(data.len(), self.len());
        self.inner.plans.forward.process(data);
    }

    /// Normalized inverse transform in place.
    pub fn inverse(&self, data: &mut [C64]) {
        debug_assert_eq!(data.len(), self.len());
        self.inner.plans.inverse.process(data);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    /// Samples on the 2N grid of the band-limited interpolant of `spectrum`.
    fn pad_to_fine(&self, spectrum: &[C64]) -> Vec<C64> {
        let n = self.len();
        let half = n / 2;
        let mut fine = vec![C64::new(0.0, 0.0); 2 * n];
        fine[..half].copy_from_slice(&spectrum[..half]);
        fine[2 * n - half + 1..].copy_from_slice(&spectrum[half + 1..]);
        fine[half] = 0.5 * spectrum[half];
        fine[2 * n - half] = 0.5 * spectrum[half];
        self.inner.plans.inverse_fine.process(&mut fine);
        // 2N-point inverse of 2 * coefficients reproduces the coarse values.
        let scale = 1.0 / n as f64;
        fine.iter_mut().for_each(|z| *z *= scale);
        fine
    }

    /// Truncates a fine-grid sample vector back to N modes, returning coarse samples.
    fn truncate_from_fine(&self, mut fine: Vec<C64>) -> Vec<C64> {
        let n = self.len();
        let half = n / 2;
        self.inner.plans.forward_fine.process(&mut fine);
        let mut coarse = vec![C64::new(0.0, 0.0); n];
        coarse[..half].copy_from_slice(&fine[..half]);
        coarse[half + 1..].copy_from_slice(&fine[2 * n - half + 1..]);
        coarse[half] = fine[half] + fine[2 * n - half];
        coarse.iter_mut().for_each(|z| *z *= 0.5);
        self.inverse(&mut coarse);
        coarse
    }

    /// Alias-free product of 2 or 3 sample vectors.
    pub(crate) fn product_samples(&self, factors: &[&[C64]]) -> Result<Vec<C64>> {
        if !(2..=3).contains(&factors.len()) {
            return Err(invalid(format!(
                "dealiased product takes 2 or 3 factors, got {}",
                factors.len()
            )));
        }
        let mut acc: Option<Vec<C64>> = None;
        for f in factors {
            if f.len() != self.len() {
                return Err(Error::GridMismatch);
            }
            let mut spec = f.to_vec();
            self.forward(&mut spec);
            let fine = self.pad_to_fine(&spec);
            acc = Some(match acc {
                None => fine,
                Some(mut a) => {
                    a.iter_mut().zip(&fine).for_each(|(x, y)| *x *= y);
                    a
                }
            });
        }
        Ok(self.truncate_from_fine(acc.expect("at least two factors")))
    }

    /// Spectral derivative of complex samples (no validation).
    pub(crate) fn derivative_samples(&self, data: &[C64], order: u32) -> Vec<C64> {
        let mut spec = data.to_vec();
        self.forward(&mut spec);
        spec.iter_mut()
            .enumerate()
            .for_each(|(j, z)| *z *= self.derivative_multiplier(j, order));
        self.inverse(&mut spec);
        spec
    }

    pub(crate) fn derivative_real_samples(&self, data: &[f64], order: u32) -> Vec<f64> {
        let c: Vec<C64> = data.iter().map(|&x| C64::new(x, 0.0)).collect();
        let d = self.derivative_samples(&c, order);
        debug_assert!({
            let scale = d.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
            d.iter().all(|z| z.im.abs() <= 1e-10 * scale + 1e-300)
        });
        d.into_iter().map(|z| z.re).collect()
    }

    /// Rectangle-rule integral `dx * sum`.
    pub fn integrate_samples(&self, data: &[f64]) -> f64 {
        self.spacing() * data.iter().sum::<f64>()
    }

    pub fn integrate_complex_samples(&self, data: &[C64]) -> C64 {
        self.spacing() * data.iter().sum::<C64>()
    }
}

fn check_finite_real(what: &'static str, data: &[f64]) -> Result<()> {
    match data.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { what, index }),
        None => Ok(()),
    }
}

fn check_finite_complex(what: &'static str, data: &[C64]) -> Result<()> {
    match data.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
        Some(index) => Err(Error::NonFinite { what, index }),
        None => Ok(()),
    }
}

/// Real samples on a [`SpectralGrid`].
#[derive(Clone, Debug)]
pub struct RealField {
    grid: SpectralGrid,
    data: Vec<f64>,
}

/// Complex samples on a [`SpectralGrid`].
#[derive(Clone, Debug)]
pub struct ComplexField {
    grid: SpectralGrid,
    data: Vec<C64>,
}

impl RealField {
    pub fn new(grid: &SpectralGrid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: data.len() });
        }
        check_finite_real("real field", &data)?;
        Ok(Self { grid: grid.clone(), data })
    }

    pub fn zeros(grid: &SpectralGrid) -> Self {
        Self { grid: grid.clone(), data: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: &SpectralGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().iter().map(|&x| f(x)).collect())
    }

    pub(crate) fn from_raw(grid: &SpectralGrid, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), grid.len());
        Self { grid: grid.clone(), data }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.data
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField::from_raw(&self.grid, self.data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(&self.grid, self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn norm_l2_squared(&self) -> f64 {
        self.grid.integrate_samples(&self.data.iter().map(|x| x * x).collect::<Vec<_>>())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl ComplexField {
    pub fn new(grid: &SpectralGrid, data: Vec<C64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: data.len() });
        }
        check_finite_complex("complex field", &data)?;
        Ok(Self { grid: grid.clone(), data })
    }

    pub fn zeros(grid: &SpectralGrid) -> Self {
        Self { grid: grid.clone(), data: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_fn(grid: &SpectralGrid, f: impl Fn(f64) -> C64) -> Result<Self> {
        Self::new(grid, grid.nodes().iter().map(|&x| f(x)).collect())
    }

    pub(crate) fn from_raw(grid: &SpectralGrid, data: Vec<C64>) -> Self {
        debug_assert_eq!(data.len(), grid.len());
        Self { grid: grid.clone(), data }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[C64] {
        &self.data
    }

    pub fn into_samples(self) -> Vec<C64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn conj(&self) -> Self {
        Self::from_raw(&self.grid, self.data.iter().map(|z| z.conj()).collect())
    }

    pub fn modulus_squared(&self) -> RealField {
        RealField::from_raw(&self.grid, self.data.iter().map(|z| z.norm_sqr()).collect())
    }

    pub fn scale(&self, c: C64) -> Self {
        Self::from_raw(&self.grid, self.data.iter().map(|z| z * c).collect())
    }

    pub fn real_part(&self) -> RealField {
        RealField::from_raw(&self.grid, self.data.iter().map(|z| z.re).collect())
    }

    pub fn norm_l2_squared(&self) -> f64 {
        self.grid.integrate_samples(&self.data.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>())
    }
}

/// Common surface of real and complex fields for the generic spectral operations.
pub trait SpectralField: Sized + Clone {
    fn grid(&self) -> &SpectralGrid;
    fn check_finite(&self) -> Result<()>;
    fn as_complex_samples(&self) -> Vec<C64>;
    fn from_complex_samples(grid: &SpectralGrid, data: Vec<C64>) -> Self;
    fn integral(&self) -> C64;
}

impl SpectralField for RealField {
    fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    fn check_finite(&self) -> Result<()> {
        check_finite_real("real field", &self.data)
    }

    fn as_complex_samples(&self) -> Vec<C64> {
        self.data.iter().map(|&x| C64::new(x, 0.0)).collect()
    }

    fn from_complex_samples(grid: &SpectralGrid, data: Vec<C64>) -> Self {
        RealField::from_raw(grid, data.into_iter().map(|z| z.re).collect())
    }

    fn integral(&self) -> C64 {
        C64::new(self.grid.integrate_samples(&self.data), 0.0)
    }
}

impl SpectralField for ComplexField {
    fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    fn check_finite(&self) -> Result<()> {
        check_finite_complex("complex field", &self.data)
    }

    fn as_complex_samples(&self) -> Vec<C64> {
        self.data.clone()
    }

    fn from_complex_samples(grid: &SpectralGrid, data: Vec<C64>) -> Self {
        ComplexField::from_raw(grid, data)
    }

    fn integral(&self) -> C64 {
        self.grid.integrate_complex_samples(&self.data)
    }
}

/// Spectral derivative of order 1, 2 or 3. Odd orders drop the Nyquist mode.
pub fn derivative<F: SpectralField>(f: &F, order: u32) -> Result<F> {
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidOrder(order));
    }
    f.check_finite()?;
    let grid = f.grid();
    let d = grid.derivative_samples(&f.as_complex_samples(), order);
    Ok(F::from_complex_samples(grid, d))
}

/// Pointwise product of 2 or 3 fields formed on the 2N zero-padded grid and
/// truncated back to N modes.
pub fn dealiased_product<F: SpectralField>(fs: &[&F]) -> Result<F> {
    let Some(first) = fs.first() else {
        return Err(invalid("dealiased product of an empty list"));
    };
    let grid = first.grid();
    if fs.iter().any(|f| f.grid() != grid) {
        return Err(Error::GridMismatch);
    }
    let samples: Vec<Vec<C64>> = fs.iter().map(|f| f.as_complex_samples()).collect();
    let refs: Vec<&[C64]> = samples.iter().map(Vec::as_slice).collect();
    Ok(F::from_complex_samples(grid, grid.product_samples(&refs)?))
}

/// Rectangle-rule integral over the box.
pub fn integrate<F: SpectralField>(f: &F) -> Result<C64> {
    f.check_finite()?;
    Ok(f.integral())
}
