//! Coupled Schrödinger-KdV system: parameters, state, nonlinear right-hand
//! sides and initial-data families.
//!
//! ```text
//! i u_t + u_xx = alpha u v + beta u |u|^2
//! v_t + v_xxx + v v_x = gamma (|u|^2)_x
//! ```

use rand::rngs::Xoshiro256PlusPlus;
use rand::{RngExt, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::decay::{boundary_mass, DEFAULT_BOUNDARY_THRESHOLD};
use crate::error::{invalid, Error, Result};
use crate::mollify::{mollify_data, MollifierSpec};
use crate::spectral::{ComplexField, RealField, SpectralGrid, C64};

/// Coupling coefficients `(alpha, beta, gamma)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// `alpha * gamma > 0`: global H1 theory applies.
    Coupled,
    /// `alpha == 0` or `gamma == 0`; only used to validate the integrator.
    Decoupled,
    /// `alpha * gamma < 0`.
    Unsupported,
}

impl ModelParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        if ![alpha, beta, gamma].iter().all(|c| c.is_finite()) {
            return Err(invalid("model coefficients must be finite"));
        }
        Ok(Self { alpha, beta, gamma })
    }

    pub fn regime(&self) -> Regime {
        let p = self.alpha * self.gamma;
        if p > 0.0 {
            Regime::Coupled
        } else if self.alpha == 0.0 || self.gamma == 0.0 {
            Regime::Decoupled
        } else {
            Regime::Unsupported
        }
    }

    /// Checks that a full run is allowed. Decoupled test regimes need `allow_test`.
    pub fn check_runnable(&self, allow_test: bool) -> Result<()> {
        match self.regime() {
            Regime::Coupled => Ok(()),
            Regime::Decoupled if allow_test => Ok(()),
            Regime::Decoupled => Err(Error::InvalidConfig(
                "decoupled parameters (alpha = 0 or gamma = 0) need the test-regime flag".into(),
            )),
            Regime::Unsupported => Err(Error::InvalidConfig(format!(
                "alpha * gamma must be positive, got alpha = {}, gamma = {}",
                self.alpha, self.gamma
            ))),
        }
    }
}

/// Short wave `u`, long wave `v` and the current time.
#[derive(Clone, Debug)]
pub struct SystemState {
    pub u: ComplexField,
    pub v: RealField,
    pub time: f64,
}

impl SystemState {
    pub fn new(u: ComplexField, v: RealField, time: f64) -> Result<Self> {
        if u.grid() != v.grid() {
            return Err(Error::GridMismatch);
        }
        if !(u.is_finite() && v.is_finite() && time.is_finite()) {
            return Err(Error::NonFinite { what: "system state", index: 0 });
        }
        if time < 0.0 {
            return Err(invalid(format!("time must be nonnegative, got {time}")));
        }
        Ok(Self { u, v, time })
    }

    pub fn zeros(grid: &SpectralGrid) -> Self {
        Self { u: ComplexField::zeros(grid), v: RealField::zeros(grid), time: 0.0 }
    }

    pub fn grid(&self) -> &SpectralGrid {
        self.u.grid()
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

/// `-i (alpha u v + beta u |u|^2)`, alias-free.
pub fn rhs_nonlinear_u(state: &SystemState, params: &ModelParams) -> Result<ComplexField> {
    let grid = state.grid();
    if state.v.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let u = state.u.samples();
    let v: Vec<C64> = state.v.samples().iter().map(|&x| C64::new(x, 0.0)).collect();
    let ubar: Vec<C64> = u.iter().map(|z| z.conj()).collect();
    let uv = grid.product_samples(&[u, &v])?;
    let cubic = grid.product_samples(&[u, u, &ubar])?;
    let minus_i = C64::new(0.0, -1.0);
    let out = uv
        .iter()
        .zip(&cubic)
        .map(|(a, b)| minus_i * (params.alpha * a + params.beta * b))
        .collect();
    Ok(ComplexField::from_raw(grid, out))
}

/// Flux `v^2/2 - gamma |u|^2` with both products dealiased.
pub(crate) fn kdv_flux(grid: &SpectralGrid, v: &[f64], density: &[f64], gamma: f64) -> Vec<f64> {
    let vc: Vec<C64> = v.iter().map(|&x| C64::new(x, 0.0)).collect();
    let v2 = grid.product_samples(&[&vc, &vc]).expect("matching lengths");
    v2.iter().zip(density).map(|(a, r)| 0.5 * a.re - gamma * r).collect()
}

/// Dealiased `|u|^2`.
pub(crate) fn density(u: &ComplexField) -> Vec<f64> {
    let grid = u.grid();
    let ubar: Vec<C64> = u.samples().iter().map(|z| z.conj()).collect();
    grid.product_samples(&[u.samples(), &ubar])
        .expect("matching lengths")
        .into_iter()
        .map(|z| z.re)
        .collect()
}

/// Conservative form `-(v^2/2 - gamma |u|^2)_x`, the one used for stepping.
pub fn rhs_nonlinear_v(state: &SystemState, params: &ModelParams) -> Result<RealField> {
    let grid = state.grid();
    if state.v.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let flux = kdv_flux(grid, state.v.samples(), &density(&state.u), params.gamma);
    let d = grid.derivative_real_samples(&flux, 1);
    Ok(RealField::from_raw(grid, d.into_iter().map(|x| -x).collect()))
}

/// Advective form `-v v_x + gamma (|u|^2)_x`; agrees with the conservative form.
pub fn rhs_nonlinear_v_advective(state: &SystemState, params: &ModelParams) -> Result<RealField> {
    let grid = state.grid();
    if state.v.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let v: Vec<C64> = state.v.samples().iter().map(|&x| C64::new(x, 0.0)).collect();
    let vx = grid.derivative_samples(&v, 1);
    let vvx = grid.product_samples(&[&v, &vx])?;
    let rho_x = grid.derivative_real_samples(&density(&state.u), 1);
    let out = vvx
        .iter()
        .zip(&rho_x)
        .map(|(a, r)| -a.re + params.gamma * r)
        .collect();
    Ok(RealField::from_raw(grid, out))
}

/// A single-field initial profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Zero,
    /// `a exp(-((x - x0)/w)^2)`
    Gaussian {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: f64,
    },
    /// `a exp(-((x - x0)/w)^2) exp(i kappa x)`; a real field takes the cosine part.
    ModulatedGaussian {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: f64,
        wavenumber: f64,
    },
    /// `3c sech^2(sqrt(c)(x - x0)/2)`, the solitary wave of `v_t + v_xxx + v v_x = 0`.
    KdvSoliton {
        speed: f64,
        #[serde(default)]
        center: f64,
    },
    Sum {
        parts: Vec<Profile>,
    },
    Custom {
        re: Vec<f64>,
        #[serde(default)]
        im: Vec<f64>,
    },
}

impl Profile {
    fn validate(&self) -> Result<()> {
        match self {
            Profile::Zero => Ok(()),
            Profile::Gaussian { amplitude, width, center }
            | Profile::ModulatedGaussian { amplitude, width, center, .. } => {
                if !(width.is_finite() && *width > 0.0) {
                    return Err(invalid(format!("gaussian width must be positive, got {width}")));
                }
                if !(amplitude.is_finite() && center.is_finite()) {
                    return Err(invalid("gaussian parameters must be finite"));
                }
                if let Profile::ModulatedGaussian { wavenumber, .. } = self {
                    if !wavenumber.is_finite() {
                        return Err(invalid("carrier wavenumber must be finite"));
                    }
                }
                Ok(())
            }
            Profile::KdvSoliton { speed, center } => {
                if !(speed.is_finite() && *speed > 0.0) {
                    return Err(invalid(format!("soliton speed must be positive, got {speed}")));
                }
                if !center.is_finite() {
                    return Err(invalid("soliton center must be finite"));
                }
                Ok(())
            }
            Profile::Sum { parts } => parts.iter().try_for_each(Profile::validate),
            Profile::Custom { re, im } => {
                if !im.is_empty() && im.len() != re.len() {
                    return Err(invalid("custom profile: re and im lengths differ"));
                }
                Ok(())
            }
        }
    }

    fn sample(&self, grid: &SpectralGrid) -> Result<Vec<C64>> {
        let nodes = grid.nodes();
        let out = match self {
            Profile::Zero => vec![C64::new(0.0, 0.0); grid.len()],
            Profile::Gaussian { amplitude, width, center } => nodes
                .iter()
                .map(|&x| {
                    let s = (x - center) / width;
                    C64::new(amplitude * (-s * s).exp(), 0.0)
                })
                .collect(),
            Profile::ModulatedGaussian { amplitude, width, center, wavenumber } => nodes
                .iter()
                .map(|&x| {
                    let s = (x - center) / width;
                    amplitude * (-s * s).exp() * C64::from_polar(1.0, wavenumber * x)
                })
                .collect(),
            Profile::KdvSoliton { speed, center } => nodes
                .iter()
                .map(|&x| C64::new(kdv_soliton(x - center, *speed), 0.0))
                .collect(),
            Profile::Sum { parts } => {
                let mut acc = vec![C64::new(0.0, 0.0); grid.len()];
                for p in parts {
                    acc.iter_mut().zip(p.sample(grid)?).for_each(|(a, b)| *a += b);
                }
                acc
            }
            Profile::Custom { re, im } => {
                if re.len() != grid.len() {
                    return Err(Error::LengthMismatch { expected: grid.len(), got: re.len() });
                }
                re.iter()
                    .enumerate()
                    .map(|(j, &r)| C64::new(r, im.get(j).copied().unwrap_or(0.0)))
                    .collect()
            }
        };
        Ok(out)
    }
}

/// A smooth random state: a few Gaussian bumps with random amplitudes,
/// centers, widths and carrier phases, reproducible from `seed`.
pub fn random_smooth_state(grid: &SpectralGrid, seed: u64, bumps: usize) -> Result<SystemState> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let reach = 0.5 * grid.half_length();
    let mut u = vec![C64::new(0.0, 0.0); grid.len()];
    let mut v = vec![0.0; grid.len()];
    for _ in 0..bumps {
        let (a, b) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let (xu, xv) = (rng.random_range(-reach..reach), rng.random_range(-reach..reach));
        let (wu, wv) = (rng.random_range(0.5..3.0), rng.random_range(0.5..3.0));
        let k = rng.random_range(-2.0..2.0);
        for ((x, zu), zv) in grid.nodes().iter().zip(&mut u).zip(&mut v) {
            let su = (x - xu) / wu;
            let sv = (x - xv) / wv;
            *zu += a * (-su * su).exp() * C64::from_polar(1.0, k * x);
            *zv += b * (-sv * sv).exp();
        }
    }
    SystemState::new(ComplexField::new(grid, u)?, RealField::new(grid, v)?, 0.0)
}

/// `3c sech^2(sqrt(c) x / 2)`.
pub fn kdv_soliton(x: f64, speed: f64) -> f64 {
    let s = 1.0 / (0.5 * speed.sqrt() * x).cosh();
    3.0 * speed * s * s
}

/// Initial data `(u0, v0)` with an optional mollification level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    pub u: Profile,
    pub v: Profile,
    #[serde(default)]
    pub mollification: Option<u32>,
}

impl InitialData {
    pub fn zero() -> Self {
        Self { u: Profile::Zero, v: Profile::Zero, mollification: None }
    }

    /// `u0 = a exp(-(x/w)^2)`, `v0 = 0`.
    pub fn gaussian(amplitude: f64, width: f64) -> Self {
        Self {
            u: Profile::Gaussian { amplitude, width, center: 0.0 },
            v: Profile::Zero,
            mollification: None,
        }
    }

    /// `u0 = 0`, `v0` a KdV solitary wave of speed `c` centered at 0.
    pub fn kdv_soliton(speed: f64) -> Self {
        Self { u: Profile::Zero, v: Profile::KdvSoliton { speed, center: 0.0 }, mollification: None }
    }
}

/// Samples the initial data on `grid` at `t = 0`.
///
/// Fails when the tail mass fraction exceeds the default boundary threshold.
pub fn make_initial_data(spec: &InitialData, grid: &SpectralGrid) -> Result<SystemState> {
    make_initial_data_with_threshold(spec, grid, DEFAULT_BOUNDARY_THRESHOLD)
}

pub fn make_initial_data_with_threshold(
    spec: &InitialData,
    grid: &SpectralGrid,
    boundary_threshold: f64,
) -> Result<SystemState> {
    spec.u.validate()?;
    spec.v.validate()?;
    let u = ComplexField::new(grid, spec.u.sample(grid)?)?;
    let v = RealField::new(grid, spec.v.sample(grid)?.into_iter().map(|z| z.re).collect())?;
    let mut state = SystemState::new(u, v, 0.0)?;
    if let Some(level) = spec.mollification {
        state = mollify_data(&state, &MollifierSpec::new(level)?)?;
    }
    let tail = boundary_mass(&state);
    if tail > boundary_threshold {
        return Err(invalid(format!(
            "initial tail mass fraction {tail:.3e} exceeds threshold {boundary_threshold:.1e}"
        )));
    }
    Ok(state)
}
