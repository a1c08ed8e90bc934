//! Windowed local energies, dyadic-block minima, weighted time integrals and
//! related pointwise diagnostics.

use serde::{Deserialize, Serialize};

use crate::conservation::SmallnessReport;
use crate::error::{Error, Result};
use crate::model::{ModelParams, SystemState};
use crate::spectral::{SpectralGrid, C64};
use crate::virial::{VirialConfig, WeightTable};

/// Tail fraction above which a state is considered contaminated by the box.
pub const DEFAULT_BOUNDARY_THRESHOLD: f64 = 1e-8;

/// Fraction of `int |u|^2 + v^2` lying in the outer 10% of the box.
pub fn boundary_mass(state: &SystemState) -> f64 {
    let g = state.grid();
    let edge = 0.9 * g.half_length();
    let (mut total, mut outer) = (0.0, 0.0);
    for ((x, u), v) in g.nodes().iter().zip(state.u.samples()).zip(state.v.samples()) {
        let d = u.norm_sqr() + v * v;
        total += d;
        if x.abs() > edge {
            outer += d;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        outer / total
    }
}

// ---------------------------------------------------------------------------
// Windows

/// The window `|x - t^m| <= c t^p` (`m = 0` means centered at the origin).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub p: f64,
    #[serde(default)]
    pub m: f64,
    #[serde(default = "one")]
    pub constant: f64,
}

fn one() -> f64 {
    1.0
}

impl WindowSpec {
    pub fn new(p: f64, m: f64, constant: f64) -> Result<Self> {
        let w = Self { p, m, constant };
        w.validate()?;
        Ok(w)
    }

    pub fn centered(p: f64) -> Result<Self> {
        Self::new(p, 0.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 2.0 / 3.0) {
            return Err(Error::InvalidConfig(format!("window exponent p must lie in (0, 2/3), got {}", self.p)));
        }
        if !(self.m >= 0.0 && self.m < 1.0 - self.p / 2.0) {
            return Err(Error::InvalidConfig(format!(
                "window shift exponent m must lie in [0, {}), got {}",
                1.0 - self.p / 2.0,
                self.m
            )));
        }
        if !(self.constant.is_finite() && self.constant > 0.0) {
            return Err(Error::InvalidConfig(format!("window constant must be positive, got {}", self.constant)));
        }
        Ok(())
    }

    pub fn center(&self, t: f64) -> f64 {
        if self.m > 0.0 {
            t.powf(self.m)
        } else {
            0.0
        }
    }

    pub fn radius(&self, t: f64) -> f64 {
        self.constant * t.powf(self.p)
    }
}

/// Integrand of a windowed energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyKind {
    /// `|v^2/2 - gamma |u|^2|`
    Mixed,
    /// `|u (alpha v + beta |u|^2)|`
    Coupling,
    GradV,
    GradU,
    PowerU(f64),
    PowerV(f64),
}

/// Pointwise integrand for `kind`.
pub fn energy_density(state: &SystemState, params: &ModelParams, kind: EnergyKind) -> Vec<f64> {
    let g = state.grid();
    let u = state.u.samples();
    let v = state.v.samples();
    match kind {
        EnergyKind::Mixed => u.iter().zip(v).map(|(z, v)| (0.5 * v * v - params.gamma * z.norm_sqr()).abs()).collect(),
        EnergyKind::Coupling => u
            .iter()
            .zip(v)
            .map(|(z, v)| z.norm() * (params.alpha * v + params.beta * z.norm_sqr()).abs())
            .collect(),
        EnergyKind::GradV => g.derivative_real_samples(v, 1).into_iter().map(|x| x * x).collect(),
        EnergyKind::GradU => g.derivative_samples(u, 1).into_iter().map(|z| z.norm_sqr()).collect(),
        EnergyKind::PowerU(k) => u.iter().map(|z| z.norm().powf(k)).collect(),
        EnergyKind::PowerV(k) => v.iter().map(|x| x.abs().powf(k)).collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WindowedEnergy {
    pub value: f64,
    /// The window reaches outside `[-L, L)`.
    pub clipped: bool,
}

/// `int_{|x - t^m| <= c t^p} density` with a sharp indicator on grid nodes.
pub fn windowed_energy(
    state: &SystemState,
    params: &ModelParams,
    window: &WindowSpec,
    kind: EnergyKind,
) -> Result<WindowedEnergy> {
    let t = state.time;
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("windowed energy needs t > 0, got {t}")));
    }
    let density = energy_density(state, params, kind);
    Ok(window_integral(state, window, &density))
}

fn window_integral(state: &SystemState, window: &WindowSpec, density: &[f64]) -> WindowedEnergy {
    let g = state.grid();
    let (c, r) = (window.center(state.time), window.radius(state.time));
    let l = g.half_length();
    let clipped = c - r < -l || c + r > l;
    // interpolant ripple can dip a hair below zero for nonnegative densities
    let value = interval_integral(g, density, (c - r).max(-l), (c + r).min(l)).max(0.0);
    WindowedEnergy { value, clipped }
}

/// `int_a^b` of the trigonometric interpolant of `samples`, `-L <= a <= b <= L`.
/// Exact for band-limited data, so the window edges cost no accuracy.
pub fn interval_integral(grid: &SpectralGrid, samples: &[f64], a: f64, b: f64) -> f64 {
    let n = grid.len();
    let l = grid.half_length();
    let mut spec: Vec<C64> = samples.iter().map(|&x| C64::new(x, 0.0)).collect();
    grid.forward(&mut spec);
    let (ya, yb) = (a + l, b + l);
    let mut sum = spec[0].re * (b - a);
    let k = grid.wavenumbers();
    for j in 1..n {
        if j == n / 2 {
            let kn = grid.nyquist();
            sum += spec[j].re * ((kn * yb).sin() - (kn * ya).sin()) / kn;
            continue;
        }
        let kj = k[j];
        let (sb, cb) = (kj * yb).sin_cos();
        let (sa, ca) = (kj * ya).sin_cos();
        // F (e^{ik yb} - e^{ik ya}) / (ik), real part
        let d = C64::new(cb - ca, sb - sa);
        sum += (spec[j] * d / C64::new(0.0, kj)).re;
    }
    sum / n as f64
}

/// The six energies written to `decay.csv`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WindowedSet {
    pub mixed: f64,
    pub coupling: f64,
    pub grad_u: f64,
    pub grad_v: f64,
    pub power_u: f64,
    pub power_v: f64,
    pub clipped: bool,
}

pub fn windowed_set(state: &SystemState, params: &ModelParams, window: &WindowSpec, k: f64) -> Result<WindowedSet> {
    let e = |kind| windowed_energy(state, params, window, kind);
    let m = e(EnergyKind::Mixed)?;
    Ok(WindowedSet {
        mixed: m.value,
        coupling: e(EnergyKind::Coupling)?.value,
        grad_u: e(EnergyKind::GradU)?.value,
        grad_v: e(EnergyKind::GradV)?.value,
        power_u: e(EnergyKind::PowerU(k))?.value,
        power_v: e(EnergyKind::PowerV(k))?.value,
        clipped: m.clipped,
    })
}

// ---------------------------------------------------------------------------
// liminf surrogate

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlockMinimum {
    /// Block `[2^j, 2^{j+1})`.
    pub j: i32,
    pub time: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LiminfReport {
    pub running_min: f64,
    pub blocks: Vec<BlockMinimum>,
    /// Least-squares slope of `log(min)` against `log(t_argmin)` over the blocks.
    pub slope: f64,
    /// first block minimum / last block minimum
    pub decay_factor: f64,
    pub decayed: bool,
    pub monotone: bool,
}

/// Running minimum and dyadic-block minima of a time series. Decay is declared
/// when the first block minimum exceeds the last by at least `required_factor`.
pub fn liminf_tracker(series: &[(f64, f64)], required_factor: f64) -> Result<LiminfReport> {
    if series.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    if series.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::InvalidArgument("series times must increase".into()));
    }
    if series[0].0 <= 0.0 {
        return Err(Error::InvalidArgument("series times must be positive".into()));
    }
    let mut blocks: Vec<BlockMinimum> = Vec::new();
    let mut running_min = f64::INFINITY;
    for &(t, e) in series {
        running_min = running_min.min(e);
        let j = t.log2().floor() as i32;
        match blocks.last_mut() {
            Some(b) if b.j == j => {
                if e < b.value {
                    b.value = e;
                    b.time = t;
                }
            }
            _ => blocks.push(BlockMinimum { j, time: t, value: e }),
        }
    }
    let pts: Vec<(f64, f64)> = blocks
        .iter()
        .filter(|b| b.value > 0.0)
        .map(|b| (b.time.ln(), b.value.ln()))
        .collect();
    let slope = if pts.len() >= 2 { fit_line(&pts).0 } else { 0.0 };
    let first = blocks[0].value;
    let last = blocks[blocks.len() - 1].value;
    let decay_factor = if last > 0.0 {
        first / last
    } else if first > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };
    Ok(LiminfReport {
        running_min,
        monotone: blocks.windows(2).all(|w| w[1].value <= w[0].value),
        decayed: decay_factor >= required_factor,
        decay_factor,
        slope,
        blocks,
    })
}

/// Least-squares `(slope, intercept)`.
pub(crate) fn fit_line(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return (0.0, my);
    }
    let s = sxy / sxx;
    (s, my - s * mx)
}

// ---------------------------------------------------------------------------
// Weighted time integrals

/// Integrands of the weighted time integrals, each multiplied by
/// `(1/t) w'(x/lambda1) g(x/lambda2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccumulatorTag {
    MixedKdv,
    SchrodingerCoupling,
    GradientV,
    GradientU,
    QuarticU,
    CubicU,
    UvProduct,
    PowerK,
}

impl AccumulatorTag {
    pub const ALL: [AccumulatorTag; 8] = [
        AccumulatorTag::MixedKdv,
        AccumulatorTag::SchrodingerCoupling,
        AccumulatorTag::GradientV,
        AccumulatorTag::GradientU,
        AccumulatorTag::QuarticU,
        AccumulatorTag::CubicU,
        AccumulatorTag::UvProduct,
        AccumulatorTag::PowerK,
    ];

    fn density(self, state: &SystemState, params: &ModelParams, power: f64) -> Vec<f64> {
        let u = state.u.samples();
        let v = state.v.samples();
        match self {
            AccumulatorTag::MixedKdv => energy_density(state, params, EnergyKind::Mixed),
            AccumulatorTag::SchrodingerCoupling => energy_density(state, params, EnergyKind::Coupling),
            AccumulatorTag::GradientV => energy_density(state, params, EnergyKind::GradV),
            AccumulatorTag::GradientU => energy_density(state, params, EnergyKind::GradU),
            AccumulatorTag::QuarticU => u.iter().map(|z| z.norm_sqr().powi(2)).collect(),
            AccumulatorTag::CubicU => u.iter().map(|z| z.norm().powi(3)).collect(),
            AccumulatorTag::UvProduct => u.iter().zip(v).map(|(z, v)| z.norm() * v.abs()).collect(),
            AccumulatorTag::PowerK => v.iter().map(|x| x.abs().powf(power)).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AccumulatorState {
    pub tag: AccumulatorTag,
    pub value: f64,
    pub last_time: Option<f64>,
    last_integrand: f64,
}

impl AccumulatorState {
    pub fn new(tag: AccumulatorTag) -> Self {
        Self { tag, value: 0.0, last_time: None, last_integrand: 0.0 }
    }

    /// Trapezoidal update with the integrand `f` at time `t`.
    pub fn advance(&mut self, t: f64, f: f64) {
        if let Some(t0) = self.last_time {
            self.value += 0.5 * (self.last_integrand + f) * (t - t0);
        }
        self.last_time = Some(t);
        self.last_integrand = f;
    }
}

/// All eight accumulators plus the exponent `2 + rho` used by `PowerK`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Accumulators {
    pub states: [AccumulatorState; 8],
    pub power: f64,
}

/// Accumulated integrals start here.
pub const ACCUMULATOR_START: f64 = 2.0;

impl Accumulators {
    pub fn new(power: f64) -> Self {
        Self { states: AccumulatorTag::ALL.map(AccumulatorState::new), power }
    }

    pub fn get(&self, tag: AccumulatorTag) -> f64 {
        self.states.iter().find(|s| s.tag == tag).map_or(0.0, |s| s.value)
    }

    pub fn values(&self) -> [f64; 8] {
        self.states.map(|s| s.value)
    }
}

/// `(1/t) int density w'(x/lambda1) g(x/lambda2)` for every tag at the state's time.
pub fn weighted_integrands(
    state: &SystemState,
    config: &VirialConfig,
    params: &ModelParams,
    power: f64,
) -> Result<[f64; 8]> {
    let g = state.grid();
    let t = state.time;
    let tab = WeightTable::new(g, config, t)?;
    let mut out = [0.0; 8];
    for (k, tag) in AccumulatorTag::ALL.iter().enumerate() {
        let d = tag.density(state, params, power);
        let s: f64 = d.iter().zip(&tab.wp_g).map(|(a, b)| a * b).sum();
        out[k] = s * g.spacing() / t;
    }
    Ok(out)
}

/// Advances every accumulator to `state.time` by the trapezoidal rule.
/// States before `t = 2` are ignored; the first state at or after it only
/// records the integrand.
pub fn weighted_accumulator_step(
    state: &SystemState,
    config: &VirialConfig,
    params: &ModelParams,
    acc: &mut Accumulators,
) -> Result<()> {
    if state.time < ACCUMULATOR_START {
        return Ok(());
    }
    if let Some(t0) = acc.states[0].last_time {
        if !(state.time > t0) {
            return Err(Error::InvalidArgument(format!("accumulator time {} not after {}", state.time, t0)));
        }
    }
    let f = weighted_integrands(state, config, params, acc.power)?;
    for (s, fk) in acc.states.iter_mut().zip(f) {
        s.advance(state.time, fk);
    }
    Ok(())
}

/// Accumulator values at the end of each dyadic block, and per-block increments.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockIncrements {
    pub block_ends: Vec<f64>,
    /// `increments[k][tag]`
    pub increments: Vec<[f64; 8]>,
}

impl BlockIncrements {
    /// Builds per-block increments from `(t, values)` samples.
    pub fn from_history(history: &[(f64, [f64; 8])]) -> Self {
        let mut ends: Vec<(i32, f64, [f64; 8])> = Vec::new();
        for &(t, vals) in history {
            let j = t.log2().floor() as i32;
            match ends.last_mut() {
                Some(e) if e.0 == j => {
                    e.1 = t;
                    e.2 = vals;
                }
                _ => ends.push((j, t, vals)),
            }
        }
        let mut increments = Vec::new();
        let mut prev = [0.0; 8];
        for e in &ends {
            let mut d = [0.0; 8];
            for k in 0..8 {
                d[k] = e.2[k] - prev[k];
            }
            increments.push(d);
            prev = e.2;
        }
        Self { block_ends: ends.iter().map(|e| e.1).collect(), increments }
    }

    /// Whether the increments of `tag` decrease strictly over the last `n` blocks.
    pub fn decreasing_tail(&self, tag_index: usize, n: usize) -> bool {
        if self.increments.len() < n {
            return false;
        }
        let tail = &self.increments[self.increments.len() - n..];
        tail.windows(2).all(|w| w[1][tag_index] < w[0][tag_index])
    }
}

// ---------------------------------------------------------------------------
// Sign partition and pointwise bounds

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SignPartition {
    pub measure_plus: f64,
    pub measure_minus: f64,
    pub measure_zero: f64,
}

/// Measures of `{v^2/2 - gamma|u|^2 > tol}`, `{< -tol}`, `{|.| <= tol}` with
/// `tol = 1e-12 * max |v^2/2 - gamma |u|^2|`.
pub fn sign_partition_measure(state: &SystemState, params: &ModelParams) -> SignPartition {
    let g = state.grid();
    let f: Vec<f64> = state
        .u
        .samples()
        .iter()
        .zip(state.v.samples())
        .map(|(z, v)| 0.5 * v * v - params.gamma * z.norm_sqr())
        .collect();
    let scale = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-12 * scale;
    let (mut p, mut m, mut z) = (0usize, 0usize, 0usize);
    for x in &f {
        if *x > tol {
            p += 1;
        } else if *x < -tol {
            m += 1;
        } else {
            z += 1;
        }
    }
    let dx = g.spacing();
    SignPartition { measure_plus: p as f64 * dx, measure_minus: m as f64 * dx, measure_zero: z as f64 * dx }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GateReport {
    /// `min_{x,t} (alpha gamma + beta v / 2)`
    pub min_value: f64,
    /// `alpha gamma / 2`
    pub bound: f64,
    pub holds: bool,
    pub samples: usize,
}

/// Checks `alpha gamma + beta v/2 >= alpha gamma/2` along a trajectory when the
/// smallness criterion is satisfied.
pub fn smallness_gate_check<'a>(
    trajectory: impl IntoIterator<Item = &'a SystemState>,
    params: &ModelParams,
    phi_report: &SmallnessReport,
    tolerance: f64,
) -> Result<GateReport> {
    if !(params.beta < 0.0) {
        return Err(Error::NotApplicable(format!("gate needs beta < 0, got {}", params.beta)));
    }
    if !phi_report.satisfied {
        return Err(Error::NotApplicable("smallness criterion not satisfied".into()));
    }
    let ag = params.alpha * params.gamma;
    let mut rep = GateReport { min_value: f64::INFINITY, bound: 0.5 * ag, holds: true, samples: 0 };
    for s in trajectory {
        for v in s.v.samples() {
            rep.min_value = rep.min_value.min(ag + 0.5 * params.beta * v);
        }
        rep.samples += 1;
    }
    rep.holds = rep.min_value >= rep.bound - tolerance;
    Ok(rep)
}

/// Integrated sides of the two elementary inequality chains for `|v|^{2+m}`
/// and `|u|^{2+m}`, weighted by `(1/t) w'g`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EquivalenceSample {
    pub m: f64,
    pub v_lhs: f64,
    pub v_rhs: f64,
    pub u_lhs: f64,
    pub u_rhs: f64,
}

impl EquivalenceSample {
    pub fn holds(&self) -> bool {
        self.v_lhs <= self.v_rhs * (1.0 + 1e-12) && self.u_lhs <= self.u_rhs * (1.0 + 1e-12)
    }
}

pub fn equivalence_check(
    state: &SystemState,
    config: &VirialConfig,
    params: &ModelParams,
    m: f64,
    eps: f64,
) -> Result<EquivalenceSample> {
    let gamma = params.gamma;
    if !(gamma > 0.0) {
        return Err(Error::NotApplicable("inequality chains need gamma > 0".into()));
    }
    if !(m > 0.0 && eps > 0.0) {
        return Err(Error::InvalidArgument("m and eps must be positive".into()));
    }
    let g = state.grid();
    let t = state.time;
    let tab = WeightTable::new(g, config, t)?;
    let v = state.v.samples();
    let u = state.u.samples();
    let sup_v = v.iter().fold(0.0f64, |a, x| a.max(x.abs())).powf(m);
    let sup_u = u.iter().fold(0.0f64, |a, z| a.max(z.norm())).powf(m);
    let q = 2.0 + m;
    let (e1, e2) = (eps.powf(q / m), eps.powf(-q / 2.0));
    let mut s = EquivalenceSample { m, v_lhs: 0.0, v_rhs: 0.0, u_lhs: 0.0, u_rhs: 0.0 };
    for j in 0..g.len() {
        let w = tab.wp_g[j];
        let (av, au) = (v[j].abs(), u[j].norm());
        let mixed = (0.5 * av * av - gamma * au * au).abs();
        s.v_lhs += av.powf(q) * w;
        s.v_rhs += (2.0 * sup_v * mixed + 2.0 * gamma * (e1 * av.powf(q) + e2 * au.powf(q))) * w;
        s.u_lhs += au.powf(q) * w;
        s.u_rhs += (sup_u / gamma.abs() * mixed + (e1 * au.powf(q) + e2 * av.powf(q)) / (2.0 * gamma)) * w;
    }
    let f = g.spacing() / t;
    s.v_lhs *= f;
    s.v_rhs *= f;
    s.u_lhs *= f;
    s.u_rhs *= f;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{ComplexField, RealField, SpectralGrid, C64};
    use crate::virial::Theta3;
    use approx::assert_abs_diff_eq;

    fn state(g: &SpectralGrid, u: impl Fn(f64) -> f64, v: impl Fn(f64) -> f64, t: f64) -> SystemState {
        SystemState::new(
            ComplexField::from_fn(g, |x| C64::new(u(x), 0.0)).unwrap(),
            RealField::from_fn(g, v).unwrap(),
            t,
        )
        .unwrap()
    }

    #[test]
    fn boundary_mass_cases() {
        let g = SpectralGrid::new(512, 32.0).unwrap();
        let s = state(&g, |x| (-x * x).exp(), |_| 0.0, 0.0);
        assert!(boundary_mass(&s) < 1e-12);
        let s = state(&g, |_| 0.0, |x| (-(x - 31.0) * (x - 31.0)).exp(), 0.0);
        assert!(boundary_mass(&s) > 0.99);
        assert_eq!(boundary_mass(&SystemState::zeros(&g)), 0.0);
    }

    #[test]
    fn window_validation() {
        assert!(WindowSpec::new(0.7, 0.0, 1.0).is_err());
        assert!(WindowSpec::new(0.5, 0.75, 1.0).is_err());
        assert!(WindowSpec::new(0.5, 0.7, 1.0).is_ok());
        assert!(WindowSpec::new(0.5, 0.0, 0.0).is_err());
    }

    #[test]
    fn windowed_zero_and_cancellation() {
        let g = SpectralGrid::new(256, 16.0).unwrap();
        let p = ModelParams::new(1.0, 1.0, 2.0).unwrap();
        let w = WindowSpec::centered(0.5).unwrap();
        let mut z = SystemState::zeros(&g);
        z.time = 4.0;
        for kind in [EnergyKind::Mixed, EnergyKind::Coupling, EnergyKind::GradU, EnergyKind::GradV, EnergyKind::PowerU(3.0), EnergyKind::PowerV(2.5)] {
            assert_eq!(windowed_energy(&z, &p, &w, kind).unwrap().value, 0.0);
        }
        let s = state(&g, |x| (-x * x).exp(), |x| 2.0 * (-x * x).exp(), 4.0);
        assert!(windowed_energy(&s, &p, &w, EnergyKind::Mixed).unwrap().value < 1e-15);
    }

    #[test]
    fn window_clipping_and_growth() {
        let g = SpectralGrid::new(256, 8.0).unwrap();
        let p = ModelParams::new(1.0, 0.0, 1.0).unwrap();
        let s = state(&g, |x| (-x * x / 4.0).exp(), |_| 0.0, 4.0);
        let small = windowed_energy(&s, &p, &WindowSpec::new(0.5, 0.0, 1.0).unwrap(), EnergyKind::PowerU(2.0)).unwrap();
        assert!(!small.clipped);
        let mut last = 0.0;
        for c in [0.5, 1.0, 2.0, 3.9, 10.0] {
            let e = windowed_energy(&s, &p, &WindowSpec::new(0.5, 0.0, c).unwrap(), EnergyKind::PowerU(2.0)).unwrap();
            assert!(e.value >= last);
            last = e.value;
            assert_eq!(e.clipped, c > 4.0);
        }
        assert_abs_diff_eq!(last, s.u.norm_l2_squared(), epsilon = 1e-14);
        let shifted = WindowSpec::new(0.5, 0.5, 1.0).unwrap();
        assert_eq!(shifted.center(4.0), 2.0);
    }

    #[test]
    fn liminf_constant_and_power_law() {
        let c: Vec<(f64, f64)> = (0..100).map(|k| (2.0 + k as f64, 3.0)).collect();
        let r = liminf_tracker(&c, 10.0).unwrap();
        assert_eq!(r.running_min, 3.0);
        assert_abs_diff_eq!(r.slope, 0.0);
        assert!(!r.decayed);
        let s: Vec<(f64, f64)> = (0..2000).map(|k| 2.0 + 0.1 * k as f64).map(|t| (t, 1.0 / t)).collect();
        let r = liminf_tracker(&s, 10.0).unwrap();
        assert!((r.slope + 1.0).abs() < 0.05);
        assert!(r.monotone);
        assert_eq!(r.blocks[0].j, 1);
        assert!(liminf_tracker(&[(2.0, 1.0), (1.0, 1.0)], 1.0).is_err());
    }

    #[test]
    fn accumulators_zero_fields() {
        let g = SpectralGrid::new(64, 8.0).unwrap();
        let cfg = VirialConfig::new(0.25, 2.5, 1.0, Theta3::Auto).unwrap();
        let p = ModelParams::new(1.0, 1.0, 1.0).unwrap();
        let mut acc = Accumulators::new(2.5);
        for k in 0..20 {
            let mut s = SystemState::zeros(&g);
            s.time = 1.5 + 0.1 * k as f64;
            weighted_accumulator_step(&s, &cfg, &p, &mut acc).unwrap();
        }
        assert_eq!(acc.values(), [0.0; 8]);
        assert_abs_diff_eq!(acc.states[0].last_time.unwrap(), 3.4, epsilon = 1e-12);
    }

    #[test]
    fn frozen_fields_grow_like_log() {
        // p1 -> 0 makes the weight time independent, leaving the 1/t factor.
        let g = SpectralGrid::new(128, 8.0).unwrap();
        let cfg = VirialConfig::new(1e-12, 2.5, 1.0, Theta3::Auto).unwrap();
        let p = ModelParams::new(1.0, 1.0, 1.0).unwrap();
        let mut s = state(&g, |x| 0.3 * (-x * x).exp(), |x| (-(x - 0.5) * (x - 0.5)).exp(), 2.0);
        let i0 = weighted_integrands(&s, &cfg, &p, 2.5).unwrap()[0] * 2.0;
        let mut acc = Accumulators::new(2.5);
        let dt = 1e-3;
        for k in 0..=6000 {
            s.time = 2.0 + dt * k as f64;
            weighted_accumulator_step(&s, &cfg, &p, &mut acc).unwrap();
        }
        let expect = i0 * (8.0f64 / 2.0).ln();
        assert!((acc.get(AccumulatorTag::MixedKdv) - expect).abs() < 1e-6 * expect);
        let prev = acc.values();
        s.time = 8.5;
        weighted_accumulator_step(&s, &cfg, &p, &mut acc).unwrap();
        assert!(acc.values().iter().zip(prev).all(|(a, b)| *a >= b));
    }

    #[test]
    fn sign_partition_cases() {
        let g = SpectralGrid::new(256, 16.0).unwrap();
        let p = ModelParams::new(1.0, 0.0, 1.0).unwrap();
        let s = state(&g, |_| 0.0, |x| (-x * x).exp(), 0.0);
        let r = sign_partition_measure(&s, &p);
        assert_eq!(r.measure_minus, 0.0);
        assert!(r.measure_zero > 0.0 && r.measure_zero < 32.0);
        assert_abs_diff_eq!(r.measure_plus + r.measure_minus + r.measure_zero, 32.0, epsilon = 1e-12);
        let s = state(&g, |x| (-x * x).exp(), |_| 0.0, 0.0);
        assert_eq!(sign_partition_measure(&s, &p).measure_plus, 0.0);
    }

    #[test]
    fn block_increments() {
        let hist: Vec<(f64, [f64; 8])> = (0..=60).map(|k| 2.0 + k as f64).map(|t| (t, [t.ln(); 8])).collect();
        let b = BlockIncrements::from_history(&hist);
        assert_eq!(b.block_ends.len(), 5); // [2,4) [4,8) [8,16) [16,32) [32,62]
        assert!(b.increments.iter().all(|d| d[0] >= 0.0));
        assert!(!b.decreasing_tail(0, 10));
    }
}
