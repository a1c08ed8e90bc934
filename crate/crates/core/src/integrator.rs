//! Split-step time stepping. Dispersion is applied exactly in transform space;
//! the nonlinear subflow keeps `|u|` pointwise and `int v` fixed.

use serde::{Deserialize, Serialize};

use crate::conservation::{h1_norm_complex, h1_norm_real, phi_smallness_for_data};
use crate::decay::{boundary_mass, DEFAULT_BOUNDARY_THRESHOLD};
use crate::error::{invalid, Error, Result};
use crate::model::{kdv_flux, ModelParams, Regime, SystemState};
use crate::spectral::{ComplexField, RealField, SpectralGrid, C64};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `D(dt/2) N(dt) D(dt/2)`, second order.
    #[default]
    Strang,
    /// `N(dt) D(dt)`, first order.
    Lie,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperConfig {
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
    pub t_end: f64,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default = "default_true")]
    pub dealias: bool,
}

fn default_true() -> bool {
    true
}

fn default_stride() -> usize {
    1
}

/// Upper bound on `dt * k_max^3`. Dispersion is exact, so this only caps
/// the splitting error, not stability.
pub const DEFAULT_SPLITTING_BOUND: f64 = 1.0e6;

impl StepperConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self { dt, scheme: Scheme::Strang, t_end, snapshot_stride: 1, dealias: true }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.snapshot_stride = stride;
        self
    }

    pub fn validate(&self, grid: &SpectralGrid) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::InvalidConfig(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidConfig("snapshot_stride must be positive".into()));
        }
        let k = grid.k_max();
        if self.dt * k * k * k > DEFAULT_SPLITTING_BOUND {
            return Err(Error::InvalidConfig(format!(
                "dt * k_max^3 = {:.3e} exceeds {:.1e}",
                self.dt * k * k * k,
                DEFAULT_SPLITTING_BOUND
            )));
        }
        Ok(())
    }

    /// Number of steps, rounding `t_end / dt` to the nearest integer.
    pub fn num_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Exact linear flow over `dt`: `e^{-i k^2 dt}` on `u`, `e^{i k^3 dt}` on `v`.
/// Negative `dt` runs the flow backwards.
pub fn dispersion_step(state: &SystemState, dt: f64) -> SystemState {
    let grid = state.grid();
    let mut u = state.u.samples().to_vec();
    let mut v: Vec<C64> = state.v.samples().iter().map(|&x| C64::new(x, 0.0)).collect();
    grid.forward(&mut u);
    grid.forward(&mut v);
    let k = grid.wavenumbers();
    for j in 0..grid.len() {
        u[j] *= C64::from_polar(1.0, -grid.wavenumber_squared(j) * dt);
        // Nyquist entry of `k` is zero, so v's Nyquist mode is left alone.
        v[j] *= C64::from_polar(1.0, k[j] * k[j] * k[j] * dt);
    }
    grid.inverse(&mut u);
    grid.inverse(&mut v);
    SystemState {
        u: ComplexField::from_raw(grid, u),
        v: RealField::from_raw(grid, v.into_iter().map(|z| z.re).collect()),
        time: state.time + dt,
    }
}

fn flux_derivative(grid: &SpectralGrid, v: &[f64], rho: &[f64], gamma: f64, dealias: bool) -> Vec<f64> {
    let flux = if dealias {
        kdv_flux(grid, v, rho, gamma)
    } else {
        v.iter().zip(rho).map(|(a, r)| 0.5 * a * a - gamma * r).collect()
    };
    grid.derivative_real_samples(&flux, 1).into_iter().map(|x| -x).collect()
}

/// Nonlinear subflow over `dt`.
///
/// `|u|^2` is invariant under this subflow, so `v_t = -(v^2/2 - gamma|u|^2)_x`
/// is advanced by classical RK4 with `|u|^2` frozen, and the phase
/// `int (alpha v + beta |u|^2) dt` is accumulated with the same stage weights.
/// `u` is then rotated once by that phase.
pub fn nonlinear_step(state: &SystemState, dt: f64, params: &ModelParams) -> Result<SystemState> {
    nonlinear_step_impl(state, dt, params, true)
}

fn nonlinear_step_impl(
    state: &SystemState,
    dt: f64,
    params: &ModelParams,
    dealias: bool,
) -> Result<SystemState> {
    let grid = state.grid();
    let rho: Vec<f64> = if dealias {
        crate::model::density(&state.u)
    } else {
        state.u.samples().iter().map(|z| z.norm_sqr()).collect()
    };
    let v0 = state.v.samples();
    let gamma = params.gamma;
    let n = grid.len();

    let k1 = flux_derivative(grid, v0, &rho, gamma, dealias);
    let stage = |k: &[f64], h: f64| -> Vec<f64> { v0.iter().zip(k).map(|(v, k)| v + h * k).collect() };
    let v2 = stage(&k1, 0.5 * dt);
    let k2 = flux_derivative(grid, &v2, &rho, gamma, dealias);
    let v3 = stage(&k2, 0.5 * dt);
    let k3 = flux_derivative(grid, &v3, &rho, gamma, dealias);
    let v4 = stage(&k3, dt);
    let k4 = flux_derivative(grid, &v4, &rho, gamma, dealias);

    let mut v_new = Vec::with_capacity(n);
    let mut u_new = Vec::with_capacity(n);
    for j in 0..n {
        v_new.push(v0[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]));
        let v_mean = (v0[j] + 2.0 * v2[j] + 2.0 * v3[j] + v4[j]) / 6.0;
        let phase = (params.alpha * v_mean + params.beta * state.u.samples()[j].norm_sqr()) * dt;
        u_new.push(state.u.samples()[j] * C64::from_polar(1.0, -phase));
    }
    if let Some(index) = v_new.iter().position(|x| !x.is_finite()) {
        return Err(Error::BlowUp {
            time: state.time,
            reason: format!("non-finite v after nonlinear substep at index {index}"),
        });
    }
    if u_new.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::BlowUp {
            time: state.time,
            reason: "non-finite u after nonlinear substep".into(),
        });
    }
    Ok(SystemState {
        u: ComplexField::from_raw(grid, u_new),
        v: RealField::from_raw(grid, v_new),
        time: state.time,
    })
}

/// One full step of the configured splitting.
pub fn step(state: &SystemState, cfg: &StepperConfig, params: &ModelParams) -> Result<SystemState> {
    let dt = cfg.dt;
    match cfg.scheme {
        Scheme::Strang => {
            let a = dispersion_step(state, 0.5 * dt);
            let b = nonlinear_step_impl(&a, dt, params, cfg.dealias)?;
            Ok(dispersion_step(&b, 0.5 * dt))
        }
        Scheme::Lie => {
            let a = nonlinear_step_impl(state, dt, params, cfg.dealias)?;
            Ok(dispersion_step(&a, dt))
        }
    }
}

/// Observer of a run. `on_step` sees every state (including the initial one);
/// `on_snapshot` sees every `snapshot_stride`-th state.
pub trait RunHooks {
    fn on_step(&mut self, _state: &SystemState, _flags: &StepFlags) -> Result<()> {
        Ok(())
    }

    fn on_snapshot(&mut self, _state: &SystemState, _flags: &StepFlags) -> Result<()> {
        Ok(())
    }
}

impl RunHooks for () {}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepFlags {
    pub boundary_mass: f64,
    pub boundary_contaminated: bool,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Allow decoupled (`alpha = 0` or `gamma = 0`) test regimes.
    pub allow_test_regime: bool,
    pub boundary_threshold: f64,
    /// Blow-up when `||v||_{H1}` exceeds this multiple of the a priori bound.
    pub blowup_factor: f64,
    /// Evaluate the boundary guard every step rather than only at snapshots.
    pub boundary_every_step: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            allow_test_regime: false,
            boundary_threshold: DEFAULT_BOUNDARY_THRESHOLD,
            blowup_factor: 1.0e3,
            boundary_every_step: false,
        }
    }
}

impl RunOptions {
    pub fn test_regime() -> Self {
        Self { allow_test_regime: true, ..Self::default() }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub final_state: SystemState,
    pub steps: usize,
    /// Time of the first snapshot whose boundary mass exceeded the threshold.
    pub boundary_flag_time: Option<f64>,
}

/// Advances `state0` to `cfg.t_end`, calling `hooks` along the way.
pub fn run<H: RunHooks + ?Sized>(
    state0: &SystemState,
    cfg: &StepperConfig,
    params: &ModelParams,
    opts: &RunOptions,
    hooks: &mut H,
) -> Result<RunOutcome> {
    cfg.validate(state0.grid())?;
    params.check_runnable(opts.allow_test_regime)?;
    if !state0.is_finite() {
        return Err(invalid("initial state is not finite"));
    }
    let v_limit = match params.regime() {
        Regime::Coupled => {
            let phi = phi_smallness_for_data(state0, params)?.phi;
            if phi > 0.0 { Some(opts.blowup_factor * phi) } else { None }
        }
        _ => None,
    };

    let steps = cfg.num_steps();
    let mut state = state0.clone();
    let mut boundary_flag_time = None;
    let mut flags = StepFlags::default();
    let start_time = state0.time;

    for n in 0..=steps {
        let snapshot = n % cfg.snapshot_stride == 0 || n == steps;
        if snapshot || opts.boundary_every_step {
            let b = boundary_mass(&state);
            flags = StepFlags { boundary_mass: b, boundary_contaminated: b > opts.boundary_threshold };
            if flags.boundary_contaminated && boundary_flag_time.is_none() {
                boundary_flag_time = Some(state.time);
            }
        }
        hooks.on_step(&state, &flags)?;
        if snapshot {
            if !state.is_finite() {
                return Err(Error::BlowUp { time: state.time, reason: "non-finite sample".into() });
            }
            if let Some(limit) = v_limit {
                let h1 = h1_norm_real(&state.v);
                if h1 > limit || !h1.is_finite() {
                    return Err(Error::BlowUp {
                        time: state.time,
                        reason: format!("||v||_H1 = {h1:.3e} exceeds {limit:.3e}"),
                    });
                }
            }
            hooks.on_snapshot(&state, &flags)?;
        }
        if n == steps {
            break;
        }
        state = step(&state, cfg, params)?;
        // keep time exact multiples of dt
        state.time = start_time + (n + 1) as f64 * cfg.dt;
    }
    Ok(RunOutcome { final_state: state, steps, boundary_flag_time })
}

/// Collects every snapshot state.
#[derive(Default)]
pub struct SnapshotCollector {
    pub states: Vec<SystemState>,
}

impl RunHooks for SnapshotCollector {
    fn on_snapshot(&mut self, state: &SystemState, _flags: &StepFlags) -> Result<()> {
        self.states.push(state.clone());
        Ok(())
    }
}

/// Convenience: runs and returns the final state only.
pub fn evolve(
    state0: &SystemState,
    cfg: &StepperConfig,
    params: &ModelParams,
    opts: &RunOptions,
) -> Result<SystemState> {
    Ok(run(state0, cfg, params, opts, &mut ())?.final_state)
}

/// `||a - b||_{L2}` for two states on the same grid (both components).
pub fn l2_distance(a: &SystemState, b: &SystemState) -> f64 {
    let g = a.grid();
    let du: f64 = a.u.samples().iter().zip(b.u.samples()).map(|(x, y)| (x - y).norm_sqr()).sum();
    let dv: f64 = a.v.samples().iter().zip(b.v.samples()).map(|(x, y)| (x - y).powi(2)).sum();
    ((du + dv) * g.spacing()).sqrt()
}

#[allow(dead_code)]
pub(crate) fn u_h1(state: &SystemState) -> f64 {
    h1_norm_complex(&state.u)
}
