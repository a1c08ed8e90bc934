//! Multi-run experiments: refinement studies, closed-form comparisons and
//! finite-horizon decay scans.

use serde::Serialize;

use crate::conservation::{energy, mass, q_momentum, v_integral};
use crate::decay::{
    liminf_tracker, weighted_accumulator_step, windowed_energy, Accumulators, BlockIncrements, EnergyKind,
    LiminfReport, WindowSpec,
};
use crate::error::{Error, Result};
use crate::integrator::{l2_distance, run, RunHooks, RunOptions, Scheme, StepFlags, StepperConfig};
use crate::model::{kdv_soliton, ModelParams, SystemState};
use crate::momentum::{drift_check, moment_sample, DriftReport, MomentSample, SlopePrediction};
use crate::spectral::{ComplexField, SpectralGrid, C64};
use crate::virial::{identity_residual_combined, identity_residual_prop2, identity_residual_prop3, observed_orders, VirialConfig};

/// Collects snapshots with `t_min <= t <= t_max`.
pub struct RangeCollector {
    pub t_min: f64,
    pub t_max: f64,
    pub states: Vec<SystemState>,
}

impl RangeCollector {
    pub fn new(t_min: f64, t_max: f64) -> Self {
        Self { t_min, t_max, states: Vec::new() }
    }
}

impl RunHooks for RangeCollector {
    fn on_snapshot(&mut self, state: &SystemState, _flags: &StepFlags) -> Result<()> {
        let tol = 1e-9 * self.t_max.abs().max(1.0);
        if state.time >= self.t_min - tol && state.time <= self.t_max + tol {
            self.states.push(state.clone());
        }
        Ok(())
    }
}

fn final_state(
    state0: &SystemState,
    params: &ModelParams,
    t_end: f64,
    dt: f64,
    scheme: Scheme,
    opts: &RunOptions,
) -> Result<SystemState> {
    let cfg = StepperConfig::new(dt, t_end).with_scheme(scheme).with_stride(usize::MAX);
    Ok(run(state0, &cfg, params, opts, &mut ())?.final_state)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelfConvergence {
    pub dts: Vec<f64>,
    /// `||x_{dt_k} - x_{dt_{k+1}}||_{L2}`
    pub differences: Vec<f64>,
    pub orders: Vec<f64>,
}

/// Successive-difference self-convergence at `t_end`; `dts` should halve.
pub fn self_convergence(
    state0: &SystemState,
    params: &ModelParams,
    t_end: f64,
    dts: &[f64],
    scheme: Scheme,
    opts: &RunOptions,
) -> Result<SelfConvergence> {
    if dts.len() < 3 {
        return Err(Error::InsufficientSamples { needed: 3, got: dts.len() });
    }
    let finals = dts
        .iter()
        .map(|&dt| final_state(state0, params, t_end, dt, scheme, opts))
        .collect::<Result<Vec<_>>>()?;
    let differences: Vec<f64> = finals.windows(2).map(|w| l2_distance(&w[0], &w[1])).collect();
    Ok(SelfConvergence { dts: dts.to_vec(), orders: observed_orders(&differences), differences })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvariantDrift {
    pub dt: f64,
    pub mass_rel: f64,
    pub v_integral: f64,
    pub q: f64,
    pub energy: f64,
}

/// Drifts of `M`, `int v`, `Q`, `E` between `t = 0` and `t_end` for each `dt`.
pub fn invariant_drifts(
    state0: &SystemState,
    params: &ModelParams,
    t_end: f64,
    dts: &[f64],
    opts: &RunOptions,
) -> Result<Vec<InvariantDrift>> {
    let (m0, i0, q0, e0) = (mass(state0), v_integral(state0), q_momentum(state0, params), energy(state0, params));
    dts.iter()
        .map(|&dt| {
            let s = final_state(state0, params, t_end, dt, Scheme::Strang, opts)?;
            Ok(InvariantDrift {
                dt,
                mass_rel: if m0 > 0.0 { (mass(&s) - m0).abs() / m0 } else { mass(&s) },
                v_integral: (v_integral(&s) - i0).abs(),
                q: (q_momentum(&s, params) - q0).abs(),
                energy: (energy(&s, params) - e0).abs(),
            })
        })
        .collect()
}

/// Maximum drifts of `M` (relative) and `int v` over every step of a run.
pub fn max_exact_drifts(
    state0: &SystemState,
    params: &ModelParams,
    cfg: &StepperConfig,
    opts: &RunOptions,
) -> Result<(f64, f64)> {
    struct H {
        m0: f64,
        i0: f64,
        dm: f64,
        di: f64,
    }
    impl RunHooks for H {
        fn on_step(&mut self, s: &SystemState, _f: &StepFlags) -> Result<()> {
            self.dm = self.dm.max((mass(s) - self.m0).abs() / self.m0);
            self.di = self.di.max((v_integral(s) - self.i0).abs());
            Ok(())
        }
    }
    let mut h = H { m0: mass(state0), i0: v_integral(state0), dm: 0.0, di: 0.0 };
    if h.m0 == 0.0 {
        return Err(Error::Degenerate("mass drift needs u0 != 0".into()));
    }
    run(state0, cfg, params, opts, &mut h)?;
    Ok((h.dm, h.di))
}

// ---------------------------------------------------------------------------
// Closed forms

/// `(1 + 4it)^{-1/2} exp(-x^2/(1 + 4it))`, the free evolution of `e^{-x^2}`.
pub fn free_gaussian(grid: &SpectralGrid, t: f64) -> Result<ComplexField> {
    let d = C64::new(1.0, 4.0 * t);
    ComplexField::from_fn(grid, |x| (-(x * x) / d).exp() / d.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AnalyticErrors {
    pub free_schrodinger_l2: f64,
    pub soliton_l2: f64,
}

/// L2 error of a free Schrödinger Gaussian at `t`.
pub fn free_schrodinger_error(grid: &SpectralGrid, t: f64, dt: f64) -> Result<f64> {
    let u0 = free_gaussian(grid, 0.0)?;
    let s0 = SystemState::new(u0, crate::spectral::RealField::zeros(grid), 0.0)?;
    let p = ModelParams::new(0.0, 0.0, 0.0)?;
    let s = final_state(&s0, &p, t, dt, Scheme::Strang, &RunOptions::test_regime())?;
    let exact = free_gaussian(grid, t)?;
    let err: f64 = s.u.samples().iter().zip(exact.samples()).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok((err * grid.spacing()).sqrt())
}

/// L2 error of the KdV solitary wave of speed `c` against its translate at `t`.
pub fn soliton_error(grid: &SpectralGrid, c: f64, t: f64, dt: f64) -> Result<f64> {
    let v0 = crate::spectral::RealField::from_fn(grid, |x| kdv_soliton(x, c))?;
    let s0 = SystemState::new(ComplexField::zeros(grid), v0, 0.0)?;
    let p = ModelParams::new(0.0, 0.0, 0.0)?;
    let s = final_state(&s0, &p, t, dt, Scheme::Strang, &RunOptions::test_regime())?;
    let period = grid.length();
    let err: f64 = grid
        .nodes()
        .iter()
        .zip(s.v.samples())
        .map(|(&x, v)| {
            let mut y = x - c * t;
            y -= period * (y / period).round();
            (v - kdv_soliton(y, c)).powi(2)
        })
        .sum();
    Ok((err * grid.spacing()).sqrt())
}

// ---------------------------------------------------------------------------
// Identity refinement

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityRow {
    pub dt: f64,
    pub time: f64,
    pub j2: f64,
    pub j3: f64,
    pub res_prop2: f64,
    pub res_prop3: f64,
    pub res_combined: f64,
    pub lhs_prop2: f64,
    pub lhs_prop3: f64,
    pub remainder_gap: f64,
    pub coefficient_sum: f64,
    pub mixed_sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityStudy {
    pub rows: Vec<IdentityRow>,
    pub orders_prop2: Vec<f64>,
    pub orders_prop3: Vec<f64>,
    pub orders_combined: Vec<f64>,
}

impl IdentityStudy {
    pub fn min_order(&self) -> f64 {
        self.orders_prop2
            .iter()
            .chain(&self.orders_prop3)
            .chain(&self.orders_combined)
            .fold(f64::INFINITY, |a, &b| a.min(b))
    }
}

/// Residuals at `t_eval` from 5 snapshots spaced `stride * dt`, for each `dt`.
pub fn identity_refinement(
    state0: &SystemState,
    params: &ModelParams,
    vcfg: &VirialConfig,
    t_eval: f64,
    dts: &[f64],
    stride: usize,
    opts: &RunOptions,
) -> Result<IdentityStudy> {
    if !vcfg.is_auto() {
        return Err(Error::InvalidConfig("identity refinement needs theta3 = auto".into()));
    }
    let mut rows = Vec::new();
    for &dt in dts {
        let h = stride as f64 * dt;
        let k = t_eval / h;
        if (k - k.round()).abs() > 1e-9 || k.round() < 2.0 {
            return Err(Error::InvalidConfig(format!(
                "t_eval = {t_eval} must be a multiple (>= 2) of stride * dt = {h}"
            )));
        }
        let cfg = StepperConfig::new(dt, t_eval + 2.0 * h).with_stride(stride);
        let mut c = RangeCollector::new(t_eval - 2.0 * h, t_eval + 2.0 * h);
        run(state0, &cfg, params, opts, &mut c)?;
        if c.states.len() != 5 {
            return Err(Error::InsufficientSamples { needed: 5, got: c.states.len() });
        }
        let r2 = identity_residual_prop2(&c.states, vcfg, params)?;
        let r3 = identity_residual_prop3(&c.states, vcfg, params)?;
        let rc = identity_residual_combined(&c.states, vcfg, params)?;
        rows.push(IdentityRow {
            dt,
            time: r2.time,
            j2: crate::virial::functional_j2(&c.states[2], vcfg)?,
            j3: crate::virial::functional_j3(&c.states[2], vcfg, params)?,
            res_prop2: r2.residual,
            res_prop3: r3.residual,
            res_combined: rc.combined.residual,
            lhs_prop2: r2.lhs,
            lhs_prop3: r3.lhs,
            remainder_gap: (r2.remainder_gap + r2.residual).abs().max((r3.remainder_gap + r3.residual).abs()),
            coefficient_sum: rc.coefficient_sum,
            mixed_sum: rc.mixed_sum,
        });
    }
    let ord = |f: fn(&IdentityRow) -> f64| observed_orders(&rows.iter().map(f).collect::<Vec<_>>());
    Ok(IdentityStudy {
        orders_prop2: ord(|r| r.res_prop2),
        orders_prop3: ord(|r| r.res_prop3),
        orders_combined: ord(|r| r.res_combined),
        rows,
    })
}

// ---------------------------------------------------------------------------
// Decay scan

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayScan {
    pub times: Vec<f64>,
    pub mixed: Vec<f64>,
    pub grad_v: Vec<f64>,
    pub grad_u: Vec<f64>,
    pub mixed_report: LiminfReport,
    pub grad_v_report: LiminfReport,
    pub grad_u_report: LiminfReport,
    pub accumulators: Accumulators,
    pub increments: BlockIncrements,
    pub max_boundary_mass: f64,
    pub any_clipped: bool,
}

impl DecayScan {
    pub fn accumulators_finite(&self) -> bool {
        self.accumulators.values().iter().all(|v| v.is_finite())
    }

    /// Per-block increments of every accumulator decrease over the last `n` blocks.
    pub fn increments_decreasing(&self, n: usize) -> bool {
        (0..8).all(|k| self.increments.decreasing_tail(k, n))
    }
}

struct DecayHook<'a> {
    params: &'a ModelParams,
    vcfg: &'a VirialConfig,
    window: &'a WindowSpec,
    sample_from: f64,
    acc: Accumulators,
    history: Vec<(f64, [f64; 8])>,
    times: Vec<f64>,
    mixed: Vec<f64>,
    grad_v: Vec<f64>,
    grad_u: Vec<f64>,
    max_boundary: f64,
    clipped: bool,
}

impl RunHooks for DecayHook<'_> {
    fn on_step(&mut self, s: &SystemState, f: &StepFlags) -> Result<()> {
        weighted_accumulator_step(s, self.vcfg, self.params, &mut self.acc)?;
        self.max_boundary = self.max_boundary.max(f.boundary_mass);
        Ok(())
    }

    fn on_snapshot(&mut self, s: &SystemState, _f: &StepFlags) -> Result<()> {
        if s.time < self.sample_from {
            return Ok(());
        }
        let m = windowed_energy(s, self.params, self.window, EnergyKind::Mixed)?;
        self.clipped |= m.clipped;
        self.times.push(s.time);
        self.mixed.push(m.value);
        self.grad_v.push(windowed_energy(s, self.params, self.window, EnergyKind::GradV)?.value);
        self.grad_u.push(windowed_energy(s, self.params, self.window, EnergyKind::GradU)?.value);
        self.history.push((s.time, self.acc.values()));
        Ok(())
    }
}

/// Runs to `t_end`, sampling windowed energies every `stride` steps from
/// `t = 2` on and updating the weighted accumulators every step.
#[allow(clippy::too_many_arguments)]
pub fn decay_scan(
    state0: &SystemState,
    params: &ModelParams,
    vcfg: &VirialConfig,
    window: &WindowSpec,
    t_end: f64,
    dt: f64,
    stride: usize,
    power: f64,
    required_factor: f64,
    opts: &RunOptions,
) -> Result<DecayScan> {
    let mut hook = DecayHook {
        params,
        vcfg,
        window,
        sample_from: 2.0,
        acc: Accumulators::new(power),
        history: Vec::new(),
        times: Vec::new(),
        mixed: Vec::new(),
        grad_v: Vec::new(),
        grad_u: Vec::new(),
        max_boundary: 0.0,
        clipped: false,
    };
    let mut opts = opts.clone();
    opts.boundary_every_step = true;
    let cfg = StepperConfig::new(dt, t_end).with_stride(stride);
    run(state0, &cfg, params, &opts, &mut hook)?;
    let series = |v: &[f64]| hook.times.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
    Ok(DecayScan {
        mixed_report: liminf_tracker(&series(&hook.mixed), required_factor)?,
        grad_v_report: liminf_tracker(&series(&hook.grad_v), required_factor)?,
        grad_u_report: liminf_tracker(&series(&hook.grad_u), required_factor)?,
        increments: BlockIncrements::from_history(&hook.history),
        accumulators: hook.acc,
        max_boundary_mass: hook.max_boundary,
        any_clipped: hook.clipped,
        times: hook.times,
        mixed: hook.mixed,
        grad_v: hook.grad_v,
        grad_u: hook.grad_u,
    })
}

// ---------------------------------------------------------------------------
// Momentum

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentumStudy {
    pub samples: Vec<MomentSample>,
    pub report: DriftReport,
}

struct MomentHook<'a> {
    params: &'a ModelParams,
    prediction: SlopePrediction,
    samples: Vec<MomentSample>,
}

impl RunHooks for MomentHook<'_> {
    fn on_snapshot(&mut self, s: &SystemState, _f: &StepFlags) -> Result<()> {
        self.samples.push(moment_sample(s, self.params, &self.prediction)?);
        Ok(())
    }
}

pub fn momentum_study(
    state0: &SystemState,
    params: &ModelParams,
    t_end: f64,
    dt: f64,
    stride: usize,
    opts: &RunOptions,
) -> Result<MomentumStudy> {
    let prediction = SlopePrediction::from_initial(state0, params)?;
    let mut hook = MomentHook { params, prediction, samples: Vec::new() };
    run(state0, &StepperConfig::new(dt, t_end).with_stride(stride), params, opts, &mut hook)?;
    let report = drift_check(&hook.samples, params, &prediction)?;
    Ok(MomentumStudy { samples: hook.samples, report })
}
