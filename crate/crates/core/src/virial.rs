//! Weight functions, the virial functionals `J2`, `J3`, and residuals of the
//! identities governing their time derivatives.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::conservation::momentum_density;
use crate::error::{invalid, Error, Result};
use crate::model::{ModelParams, SystemState};
use crate::spectral::{SpectralGrid, C64};

/// `g(x) = 1/(e^x + e^-x)`, overflow-safe.
pub fn weight_g(x: f64) -> f64 {
    let e = (-x.abs()).exp();
    e / (1.0 + e * e)
}

/// `w(x) = arctan(e^x)`, an antiderivative of `g`.
pub fn weight_w(x: f64) -> f64 {
    if x > 40.0 {
        // arctan(e^x) = pi/2 - arctan(e^-x)
        FRAC_PI_2 - (-x).exp()
    } else {
        x.exp().atan()
    }
}

/// `g' = -g tanh`.
pub fn weight_g_prime(x: f64) -> f64 {
    -weight_g(x) * x.tanh()
}

/// `g'' = g (2 tanh^2 - 1)`.
pub fn weight_g_second(x: f64) -> f64 {
    let t = x.tanh();
    weight_g(x) * (2.0 * t * t - 1.0)
}

/// `w'' = g'`.
pub fn weight_w_second(x: f64) -> f64 {
    weight_g_prime(x)
}

/// `w''' = g''`.
pub fn weight_w_third(x: f64) -> f64 {
    weight_g_second(x)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightBoundReport {
    /// Smallest `C` with `|w''| + |w'''| <= C e^{-|x|}` on the sample set.
    pub constant: f64,
    pub argmax: f64,
    /// `(|w''| + |w'''|) e^{|x|}` at the two ends of the sample range.
    pub edge_ratios: (f64, f64),
    pub samples: usize,
}

/// Sweeps `[-x_max, x_max]` with `samples` points.
pub fn weight_derivative_bounds_on(x_max: f64, samples: usize) -> WeightBoundReport {
    let ratio = |x: f64| (weight_w_second(x).abs() + weight_w_third(x).abs()) * x.abs().exp();
    let mut best = (0.0, 0.0);
    for j in 0..samples {
        let x = -x_max + 2.0 * x_max * j as f64 / (samples - 1) as f64;
        let r = ratio(x);
        if r > best.0 {
            best = (r, x);
        }
    }
    WeightBoundReport {
        constant: best.0,
        argmax: best.1,
        edge_ratios: (ratio(-x_max), ratio(x_max)),
        samples,
    }
}

/// Default sweep over `[-40, 40]`.
pub fn weight_derivative_bounds() -> WeightBoundReport {
    weight_derivative_bounds_on(40.0, 80_001)
}

// ---------------------------------------------------------------------------
// Configuration

/// `theta3` is either fixed or tied to `theta2` by `theta3 = 2 theta2 gamma / alpha`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Theta3 {
    Auto,
    Value(f64),
}

impl Serialize for Theta3 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Theta3::Auto => s.serialize_str("auto"),
            Theta3::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Theta3 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Theta3::Value(v)),
            Raw::Int(v) => Ok(Theta3::Value(v as f64)),
            Raw::Str(s) if s == "auto" => Ok(Theta3::Auto),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("theta3 must be a number or \"auto\", got {s:?}"))),
        }
    }
}

/// Exponents and weights of the virial functionals. `r1 = 1 - p1` is derived.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VirialConfig {
    p1: f64,
    p2: f64,
    theta2: f64,
    theta3: Theta3,
}

/// Safe default for `p2`: some estimates need `p2 > 2`, the rest only `p2 > 1`.
pub const DEFAULT_P2: f64 = 2.5;

impl VirialConfig {
    pub fn new(p1: f64, p2: f64, theta2: f64, theta3: Theta3) -> Result<Self> {
        if !(p2.is_finite() && p2 > 1.0) {
            return Err(Error::InvalidConfig(format!("p2 must exceed 1, got {p2}")));
        }
        let p1_max = 2.0 / (p2 + 2.0);
        if !(p1 > 0.0 && p1 < p1_max) {
            return Err(Error::InvalidConfig(format!("p1 must lie in (0, {p1_max}), got {p1}")));
        }
        if !(theta2.is_finite() && theta2 > 0.0) {
            return Err(Error::InvalidConfig(format!("theta2 must be positive, got {theta2}")));
        }
        if let Theta3::Value(t) = theta3 {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::InvalidConfig(format!("theta3 must be positive, got {t}")));
            }
        }
        Ok(Self { p1, p2, theta2, theta3 })
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }
    pub fn p2(&self) -> f64 {
        self.p2
    }
    pub fn r1(&self) -> f64 {
        1.0 - self.p1
    }
    pub fn theta2(&self) -> f64 {
        self.theta2
    }
    pub fn theta3_spec(&self) -> Theta3 {
        self.theta3
    }

    pub fn is_auto(&self) -> bool {
        self.theta3 == Theta3::Auto
    }

    /// Resolved `theta3`; `Auto` needs `alpha gamma > 0`.
    pub fn theta3(&self, params: &ModelParams) -> Result<f64> {
        match self.theta3 {
            Theta3::Value(t) => Ok(t),
            Theta3::Auto => {
                if params.alpha * params.gamma > 0.0 {
                    Ok(2.0 * self.theta2 * params.gamma / params.alpha)
                } else {
                    Err(Error::Degenerate("theta3 = auto needs alpha * gamma > 0".into()))
                }
            }
        }
    }

    pub fn with_theta2(mut self, theta2: f64) -> Result<Self> {
        self.theta2 = theta2;
        Self::new(self.p1, self.p2, self.theta2, self.theta3)
    }

    pub fn lambda1(&self, t: f64) -> f64 {
        t.powf(self.p1)
    }
    pub fn lambda2(&self, t: f64) -> f64 {
        t.powf(self.p1 * self.p2)
    }
    pub fn eta(&self, t: f64) -> f64 {
        t.powf(self.r1())
    }
}

impl Default for VirialConfig {
    fn default() -> Self {
        Self::new(0.25, DEFAULT_P2, 1.0, Theta3::Auto).expect("valid default")
    }
}

impl fmt::Display for VirialConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p1={} p2={} r1={} theta2={} theta3={:?}", self.p1, self.p2, self.r1(), self.theta2, self.theta3)
    }
}

// ---------------------------------------------------------------------------
// Weight tables

/// Weights on the grid at time `t`, with `y1 = x/lambda1`, `y2 = x/lambda2`.
#[derive(Clone, Debug)]
pub struct WeightTable {
    pub time: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub eta: f64,
    /// `W = w(y1) g(y2)`
    pub w: Vec<f64>,
    /// `w'(y1) g(y2)`
    pub wp_g: Vec<f64>,
    /// `w(y1) g'(y2)`
    pub w_gp: Vec<f64>,
    /// `W_xx`
    pub w_xx: Vec<f64>,
    /// `dW/dt` at fixed x
    pub w_t: Vec<f64>,
}

impl WeightTable {
    pub fn new(grid: &SpectralGrid, cfg: &VirialConfig, t: f64) -> Result<Self> {
        if !(t.is_finite() && t > 0.0) {
            return Err(invalid(format!("weights need t > 0, got {t}")));
        }
        let (l1, l2) = (cfg.lambda1(t), cfg.lambda2(t));
        let n = grid.len();
        let mut tab = Self {
            time: t,
            lambda1: l1,
            lambda2: l2,
            eta: cfg.eta(t),
            w: Vec::with_capacity(n),
            wp_g: Vec::with_capacity(n),
            w_gp: Vec::with_capacity(n),
            w_xx: Vec::with_capacity(n),
            w_t: Vec::with_capacity(n),
        };
        let (a1, a2) = (cfg.p1 / t, cfg.p1 * cfg.p2 / t);
        for &x in grid.nodes() {
            let (y1, y2) = (x / l1, x / l2);
            let (w, wp, wpp) = (weight_w(y1), weight_g(y1), weight_w_second(y1));
            let (g, gp, gpp) = (weight_g(y2), weight_g_prime(y2), weight_g_second(y2));
            tab.w.push(w * g);
            tab.wp_g.push(wp * g);
            tab.w_gp.push(w * gp);
            tab.w_xx.push(wpp * g / (l1 * l1) + 2.0 * wp * gp / (l1 * l2) + w * gpp / (l2 * l2));
            tab.w_t.push(-a1 * y1 * wp * g - a2 * y2 * w * gp);
        }
        Ok(tab)
    }
}

fn dot(grid: &SpectralGrid, a: &[f64], b: &[f64]) -> f64 {
    grid.integrate_samples(&a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<_>>())
}

/// `(theta2/eta) int v^2 W`.
pub fn functional_j2(state: &SystemState, cfg: &VirialConfig) -> Result<f64> {
    let g = state.grid();
    let tab = WeightTable::new(g, cfg, state.time)?;
    let v2: Vec<f64> = state.v.samples().iter().map(|x| x * x).collect();
    Ok(cfg.theta2 / tab.eta * dot(g, &v2, &tab.w))
}

/// `(theta3/eta) int Im(u conj(u_x)) W`.
pub fn functional_j3(state: &SystemState, cfg: &VirialConfig, params: &ModelParams) -> Result<f64> {
    let g = state.grid();
    let tab = WeightTable::new(g, cfg, state.time)?;
    let theta3 = cfg.theta3(params)?;
    Ok(theta3 / tab.eta * dot(g, &momentum_density(&state.u), &tab.w))
}

/// J2 with `t >= 2` enforced, as used by accumulators.
pub fn functional_j2_strict(state: &SystemState, cfg: &VirialConfig) -> Result<f64> {
    if state.time < 2.0 {
        return Err(invalid(format!("J2 in accumulator mode needs t >= 2, got {}", state.time)));
    }
    functional_j2(state, cfg)
}

// ---------------------------------------------------------------------------
// Identity pieces

/// Terms of the `J2` identity at one time, all including the `theta2` factor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Prop2Terms {
    pub j2: f64,
    /// `(3 theta2/t) int v_x^2 w'g`
    pub lhs: f64,
    pub j21: f64,
    pub j22: f64,
    pub j23: f64,
    pub j24: f64,
    /// `(2 theta2/t) int (v^3/3 - gamma|u|^2 v) w'g`
    pub cubic: f64,
    /// `-(2 theta2 gamma/eta) int |u|^2 v_x W`
    pub mixed: f64,
    /// `(theta2/eta) int 2 v v_t W` with `v_t` from the equation; used for the remainder check.
    pub flow: f64,
}

/// Terms of the `J3` identity at one time, all including the `theta3` factor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Prop3Terms {
    pub j3: f64,
    /// `(2 theta3/t) int |u_x|^2 w'g + (beta theta3/2t) int |u|^4 w'g`
    pub lhs: f64,
    /// the `|u|^4` part of `lhs` alone
    pub quartic: f64,
    pub j31: f64,
    pub j321: f64,
    pub j322: f64,
    pub j323: f64,
    /// `(theta3 alpha/eta) int |u|^2 v_x W`
    pub mixed: f64,
}

impl Prop2Terms {
    /// `J_{2,int}` assembled from its pieces.
    pub fn j2_int(&self) -> f64 {
        self.j21 + self.j22 + self.j23 + self.j24
    }

    /// Right side with a given `dJ2/dt`.
    pub fn rhs(&self, dj2: f64) -> f64 {
        -dj2 + self.j2_int() + self.cubic + self.mixed
    }

    /// `J_{2,int}` inferred as what is left once `dJ2/dt` is known.
    pub fn j2_int_remainder(&self, dj2: f64) -> f64 {
        self.lhs + dj2 - self.cubic - self.mixed
    }
}

impl Prop3Terms {
    pub fn j3_int(&self) -> f64 {
        self.j31 + self.j321 + self.j322 + self.j323
    }

    pub fn rhs(&self, dj3: f64) -> f64 {
        -dj3 + self.j3_int() + self.mixed
    }

    pub fn j3_int_remainder(&self, dj3: f64) -> f64 {
        self.lhs + dj3 - self.mixed
    }
}

fn fields(state: &SystemState) -> (Vec<f64>, Vec<f64>, Vec<C64>, Vec<f64>) {
    let g = state.grid();
    let rho: Vec<f64> = state.u.samples().iter().map(|z| z.norm_sqr()).collect();
    let vx = g.derivative_real_samples(state.v.samples(), 1);
    let ux = g.derivative_samples(state.u.samples(), 1);
    let rho_x = g.derivative_real_samples(&rho, 1);
    (rho, vx, ux, rho_x)
}

pub fn prop2_terms(state: &SystemState, cfg: &VirialConfig, params: &ModelParams) -> Result<Prop2Terms> {
    let g = state.grid();
    let t = state.time;
    let tab = WeightTable::new(g, cfg, t)?;
    let (th, eta, l2) = (cfg.theta2, tab.eta, tab.lambda2);
    let gamma = params.gamma;
    let v = state.v.samples();
    let (rho, vx, _, _) = fields(state);
    let n = g.len();

    let v2: Vec<f64> = v.iter().map(|x| x * x).collect();
    let vx2: Vec<f64> = vx.iter().map(|x| x * x).collect();
    let cub: Vec<f64> = (0..n).map(|j| v[j] * v[j] * v[j] / 3.0 - gamma * rho[j] * v[j]).collect();
    let vvx: Vec<f64> = (0..n).map(|j| v[j] * vx[j]).collect();
    let rvx: Vec<f64> = (0..n).map(|j| rho[j] * vx[j]).collect();

    // v_t = -v_xxx - (v^2/2 - gamma |u|^2)_x
    let flux: Vec<f64> = (0..n).map(|j| 0.5 * v2[j] - gamma * rho[j]).collect();
    let flux_x = g.derivative_real_samples(&flux, 1);
    let vxxx = g.derivative_real_samples(v, 3);
    let vvt: Vec<f64> = (0..n).map(|j| 2.0 * v[j] * (-vxxx[j] - flux_x[j])).collect();

    Ok(Prop2Terms {
        j2: th / eta * dot(g, &v2, &tab.w),
        lhs: 3.0 * th / t * dot(g, &vx2, &tab.wp_g),
        j21: -th * cfg.r1() / (t * eta) * dot(g, &v2, &tab.w),
        j22: th / eta * dot(g, &v2, &tab.w_t),
        j23: 2.0 * th / (eta * l2) * dot(g, &cub, &tab.w_gp),
        j24: -3.0 * th / (eta * l2) * dot(g, &vx2, &tab.w_gp) - 2.0 * th / eta * dot(g, &vvx, &tab.w_xx),
        cubic: 2.0 * th / t * dot(g, &cub, &tab.wp_g),
        mixed: -2.0 * th * gamma / eta * dot(g, &rvx, &tab.w),
        flow: th / eta * dot(g, &vvt, &tab.w),
    })
}

pub fn prop3_terms(state: &SystemState, cfg: &VirialConfig, params: &ModelParams) -> Result<Prop3Terms> {
    let g = state.grid();
    let t = state.time;
    let tab = WeightTable::new(g, cfg, t)?;
    let th = cfg.theta3(params)?;
    let (eta, l2) = (tab.eta, tab.lambda2);
    let (alpha, beta) = (params.alpha, params.beta);
    let (rho, vx, ux, _) = fields(state);
    let n = g.len();
    let u = state.u.samples();

    let ux2: Vec<f64> = ux.iter().map(|z| z.norm_sqr()).collect();
    let rho2: Vec<f64> = rho.iter().map(|r| r * r).collect();
    let im = momentum_density(&state.u);
    let re: Vec<f64> = (0..n).map(|j| (u[j] * ux[j].conj()).re).collect();
    let rvx: Vec<f64> = (0..n).map(|j| rho[j] * vx[j]).collect();
    // d/dt (W/eta) = -(r1/t) W/eta + W_t/eta
    let dw: Vec<f64> = (0..n).map(|j| (-cfg.r1() / t * tab.w[j] + tab.w_t[j]) / eta).collect();
    let quartic = beta * th / (2.0 * t) * dot(g, &rho2, &tab.wp_g);

    Ok(Prop3Terms {
        j3: th / eta * dot(g, &im, &tab.w),
        lhs: 2.0 * th / t * dot(g, &ux2, &tab.wp_g) + quartic,
        quartic,
        j31: th * dot(g, &im, &dw),
        j321: -2.0 * th / (eta * l2) * dot(g, &ux2, &tab.w_gp),
        j322: -th / eta * dot(g, &re, &tab.w_xx),
        j323: -beta * th / (2.0 * eta * l2) * dot(g, &rho2, &tab.w_gp),
        mixed: th * alpha / eta * dot(g, &rvx, &tab.w),
    })
}

// ---------------------------------------------------------------------------
// Residuals from snapshot windows

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IdentityResidualSample {
    pub time: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub dt_used: f64,
    /// `J_int` from its pieces minus `J_int` as a remainder; equals `-residual`.
    pub remainder_gap: f64,
}

/// `(f(-2h) - 8 f(-h) + 8 f(h) - f(2h)) / 12h`.
pub fn central_difference_5(values: [f64; 5], h: f64) -> f64 {
    (values[0] - 8.0 * values[1] + 8.0 * values[3] - values[4]) / (12.0 * h)
}

fn check_window(window: &[SystemState]) -> Result<f64> {
    if window.len() != 5 {
        return Err(Error::InsufficientSamples { needed: 5, got: window.len() });
    }
    let h = window[1].time - window[0].time;
    if !(h > 0.0) {
        return Err(invalid("snapshot times must increase"));
    }
    for k in 1..5 {
        let hk = window[k].time - window[k - 1].time;
        if (hk - h).abs() > 1e-9 * h.max(1.0) {
            return Err(invalid("snapshots must be equally spaced"));
        }
        if window[k].grid() != window[0].grid() {
            return Err(Error::GridMismatch);
        }
    }
    Ok(h)
}

fn sample(time: f64, lhs: f64, rhs: f64, h: f64, from_pieces: f64, remainder: f64) -> IdentityResidualSample {
    IdentityResidualSample { time, lhs, rhs, residual: lhs - rhs, dt_used: h, remainder_gap: from_pieces - remainder }
}

/// Residual of the `J2` identity at the middle of a 5-snapshot window.
pub fn identity_residual_prop2(
    window: &[SystemState],
    cfg: &VirialConfig,
    params: &ModelParams,
) -> Result<IdentityResidualSample> {
    let h = check_window(window)?;
    let mut j = [0.0; 5];
    for (k, s) in window.iter().enumerate() {
        j[k] = functional_j2(s, cfg)?;
    }
    let dj = central_difference_5(j, h);
    let terms = prop2_terms(&window[2], cfg, params)?;
    Ok(sample(window[2].time, terms.lhs, terms.rhs(dj), h, terms.j2_int(), terms.j2_int_remainder(dj)))
}

/// Residual of the `J3` identity at the middle of a 5-snapshot window.
pub fn identity_residual_prop3(
    window: &[SystemState],
    cfg: &VirialConfig,
    params: &ModelParams,
) -> Result<IdentityResidualSample> {
    let h = check_window(window)?;
    let mut j = [0.0; 5];
    for (k, s) in window.iter().enumerate() {
        j[k] = functional_j3(s, cfg, params)?;
    }
    let dj = central_difference_5(j, h);
    let terms = prop3_terms(&window[2], cfg, params)?;
    Ok(sample(window[2].time, terms.lhs, terms.rhs(dj), h, terms.j3_int(), terms.j3_int_remainder(dj)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CombinedResidual {
    pub combined: IdentityResidualSample,
    pub prop2: IdentityResidualSample,
    pub prop3: IdentityResidualSample,
    /// `-2 theta2 gamma + theta3 alpha`
    pub coefficient_sum: f64,
    /// mixed terms of the two identities, added
    pub mixed_sum: f64,
}

/// Sum of both identities with `theta3 = 2 theta2 gamma/alpha`; the mixed
/// `|u|^2 v_x W` terms cancel.
pub fn identity_residual_combined(
    window: &[SystemState],
    cfg: &VirialConfig,
    params: &ModelParams,
) -> Result<CombinedResidual> {
    if !cfg.is_auto() {
        return Err(invalid("combined identity needs theta3 = auto"));
    }
    let r2 = identity_residual_prop2(window, cfg, params)?;
    let r3 = identity_residual_prop3(window, cfg, params)?;
    let theta3 = cfg.theta3(params)?;
    let coefficient_sum = -2.0 * cfg.theta2 * params.gamma + theta3 * params.alpha;
    let t2 = prop2_terms(&window[2], cfg, params)?;
    let t3 = prop3_terms(&window[2], cfg, params)?;
    let lhs = r2.lhs + r3.lhs;
    let rhs = r2.rhs + r3.rhs;
    Ok(CombinedResidual {
        combined: IdentityResidualSample {
            time: r2.time,
            lhs,
            rhs,
            residual: lhs - rhs,
            dt_used: r2.dt_used,
            remainder_gap: r2.remainder_gap + r3.remainder_gap,
        },
        prop2: r2,
        prop3: r3,
        coefficient_sum,
        mixed_sum: t2.mixed + t3.mixed,
    })
}

/// Observed order `log2(e_k / e_{k+1})` between consecutive refinements.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0].abs() / w[1].abs()).log2()).collect()
}

// ---------------------------------------------------------------------------
// Pointwise momentum-density law

/// `u_t` from the equation: `i u_xx - i (alpha v + beta |u|^2) u`.
pub fn u_time_derivative(state: &SystemState, params: &ModelParams) -> Vec<C64> {
    let g = state.grid();
    let uxx = g.derivative_samples(state.u.samples(), 2);
    let i = C64::new(0.0, 1.0);
    state
        .u
        .samples()
        .iter()
        .zip(&uxx)
        .zip(state.v.samples())
        .map(|((u, uxx), v)| i * uxx - i * (params.alpha * v + params.beta * u.norm_sqr()) * u)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PointwiseLawReport {
    pub max_abs_discrepancy: f64,
    pub max_abs_term: f64,
}

/// Checks `d/dt Im(u conj(u_x)) = -(Re(u conj(u_x)))_xx + 2 (|u_x|^2)_x
/// + alpha |u|^2 v_x + (beta/2) (|u|^4)_x` with `u_t` taken from the equation.
pub fn momentum_density_law(state: &SystemState, params: &ModelParams) -> PointwiseLawReport {
    let g = state.grid();
    let n = g.len();
    let u = state.u.samples();
    let ut = u_time_derivative(state, params);
    let ux = g.derivative_samples(u, 1);
    let utx = g.derivative_samples(&ut, 1);
    let lhs: Vec<f64> = (0..n).map(|j| (ut[j] * ux[j].conj() + u[j] * utx[j].conj()).im).collect();

    let re: Vec<f64> = (0..n).map(|j| (u[j] * ux[j].conj()).re).collect();
    let ux2: Vec<f64> = ux.iter().map(|z| z.norm_sqr()).collect();
    let rho: Vec<f64> = u.iter().map(|z| z.norm_sqr()).collect();
    let rho2: Vec<f64> = rho.iter().map(|r| r * r).collect();
    let re_xx = g.derivative_real_samples(&re, 2);
    let ux2_x = g.derivative_real_samples(&ux2, 1);
    let rho2_x = g.derivative_real_samples(&rho2, 1);
    let vx = g.derivative_real_samples(state.v.samples(), 1);

    let mut rep = PointwiseLawReport { max_abs_discrepancy: 0.0, max_abs_term: 0.0 };
    for j in 0..n {
        let rhs = -re_xx[j] + 2.0 * ux2_x[j] + params.alpha * rho[j] * vx[j] + 0.5 * params.beta * rho2_x[j];
        rep.max_abs_discrepancy = rep.max_abs_discrepancy.max((lhs[j] - rhs).abs());
        rep.max_abs_term = rep.max_abs_term.max(lhs[j].abs()).max(rhs.abs());
    }
    rep
}

// ---------------------------------------------------------------------------
// Algebraic identities

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KeyIdentityReport {
    /// max `|lhs - rhs|` for the cubic splitting of `v^3/3 - gamma|u|^2 v`
    pub cubic_split: f64,
    /// max `|lhs - rhs|` for the `v^4` decomposition
    pub quartic: f64,
    /// max `|lhs - rhs|` for the `|u|^3` decomposition
    pub u_cubed: f64,
    /// largest term magnitude seen, for relative comparisons
    pub scale: f64,
}

impl KeyIdentityReport {
    pub fn max_relative(&self) -> f64 {
        self.cubic_split.max(self.quartic).max(self.u_cubed) / self.scale.max(f64::MIN_POSITIVE)
    }
}

/// The three pointwise decompositions, evaluated on the grid.
pub fn check_key_identities(state: &SystemState, params: &ModelParams) -> Result<KeyIdentityReport> {
    let ModelParams { alpha, beta, gamma } = *params;
    if alpha == 0.0 || gamma == 0.0 {
        return Err(Error::Degenerate("identities need alpha != 0 and gamma != 0".into()));
    }
    let mut rep = KeyIdentityReport { cubic_split: 0.0, quartic: 0.0, u_cubed: 0.0, scale: 0.0 };
    for (z, &v) in state.u.samples().iter().zip(state.v.samples()) {
        let rho = z.norm_sqr();
        let a = z.norm();
        let mixed = 0.5 * v * v - gamma * rho;
        let coupling = alpha * v + beta * rho;

        let l1 = v * v * v / 3.0 - gamma * rho * v;
        let parts1 = [2.0 * v / 3.0 * mixed, -gamma * rho / (3.0 * alpha) * coupling, gamma * beta * rho * rho / (3.0 * alpha)];
        let l2 = v.powi(4);
        let parts2 = [4.0 * gamma * gamma * rho * rho, 4.0 * (0.5 * v * v + gamma * rho) * mixed];
        let l3 = a * rho;
        let parts3 = [-a * mixed / gamma, v / (2.0 * gamma * alpha) * a * coupling, -beta / (2.0 * gamma * alpha) * v * a * rho];

        rep.cubic_split = rep.cubic_split.max((l1 - parts1.iter().sum::<f64>()).abs());
        rep.quartic = rep.quartic.max((l2 - parts2.iter().sum::<f64>()).abs());
        rep.u_cubed = rep.u_cubed.max((l3 - parts3.iter().sum::<f64>()).abs());
        for x in parts1.iter().chain(&parts2).chain(&parts3).chain([&l1, &l2, &l3]) {
            rep.scale = rep.scale.max(x.abs());
        }
    }
    Ok(rep)
}

/// `|J3| <= (theta3/eta)(pi/4) ||u|| ||u_x||`: returns (|J3|, bound).
pub fn j3_bound(state: &SystemState, cfg: &VirialConfig, params: &ModelParams) -> Result<(f64, f64)> {
    let j3 = functional_j3(state, cfg, params)?.abs();
    let th = cfg.theta3(params)?;
    let b = th / cfg.eta(state.time)
        * std::f64::consts::FRAC_PI_4
        * state.u.norm_l2_squared().sqrt()
        * crate::conservation::gradient_norm_complex(&state.u);
    Ok((j3, b))
}
