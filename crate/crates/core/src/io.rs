//! Run configuration (TOML), CSV emission and the diagnostics-instrumented run.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conservation::{energy, h1_norm_complex, h1_norm_real, mass, phi_smallness, q_momentum, SmallnessReport};
use crate::conservation::{default_gn_constant, reference_gn_grid};
use crate::decay::{
    weighted_accumulator_step, windowed_set, AccumulatorTag, Accumulators, WindowSpec, ACCUMULATOR_START,
    DEFAULT_BOUNDARY_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::integrator::{run, RunHooks, RunOptions, StepFlags, StepperConfig};
use crate::model::{make_initial_data_with_threshold, InitialData, ModelParams, Regime, SystemState};
use crate::momentum::{moment_sample, SlopePrediction};
use crate::spectral::SpectralGrid;
use crate::virial::{
    functional_j2, functional_j3, identity_residual_combined, identity_residual_prop2, identity_residual_prop3,
    Theta3, VirialConfig, DEFAULT_P2,
};

// ---------------------------------------------------------------------------
// Configuration

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub half_length: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VirialSection {
    pub p1: f64,
    #[serde(default = "default_p2")]
    pub p2: f64,
    #[serde(default = "one")]
    pub theta2: f64,
    #[serde(default = "auto")]
    pub theta3: Theta3,
}

impl Default for VirialSection {
    fn default() -> Self {
        Self { p1: 0.25, p2: DEFAULT_P2, theta2: 1.0, theta3: Theta3::Auto }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySection {
    /// Exponent of the `|u|^k`, `|v|^k` windowed energies and power accumulator.
    #[serde(default = "default_power")]
    pub power_k: f64,
    /// Required drop of block minima, first to last block.
    #[serde(default = "default_factor")]
    pub required_factor: f64,
}

impl Default for DecaySection {
    fn default() -> Self {
        Self { power_k: default_power(), required_factor: default_factor() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Boundary contamination is an error rather than a flag.
    #[serde(default)]
    pub strict: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_dir(), strict: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Seed for the randomized identity sweep.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub allow_test_regime: bool,
    #[serde(default = "default_threshold")]
    pub boundary_threshold: f64,
    #[serde(default = "default_blowup")]
    pub blowup_factor: f64,
    /// Gagliardo-Nirenberg constant; estimated numerically when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_gn: Option<f64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            allow_test_regime: false,
            boundary_threshold: default_threshold(),
            blowup_factor: default_blowup(),
            c_gn: None,
        }
    }
}

/// Step sizes and evaluation time for `verify-identities` and `convergence`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementSection {
    #[serde(default = "default_dts")]
    pub dts: Vec<f64>,
    #[serde(default = "default_t_eval")]
    pub t_eval: f64,
    /// Snapshot spacing, in steps, of the 5-point difference.
    #[serde(default = "default_ref_stride")]
    pub stride: usize,
}

impl Default for RefinementSection {
    fn default() -> Self {
        Self { dts: default_dts(), t_eval: default_t_eval(), stride: default_ref_stride() }
    }
}

fn default_p2() -> f64 {
    DEFAULT_P2
}
fn one() -> f64 {
    1.0
}
fn auto() -> Theta3 {
    Theta3::Auto
}
fn default_power() -> f64 {
    2.5
}
fn default_factor() -> f64 {
    10.0
}
fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_threshold() -> f64 {
    DEFAULT_BOUNDARY_THRESHOLD
}
fn default_blowup() -> f64 {
    1.0e3
}
fn default_dts() -> Vec<f64> {
    vec![2e-3, 1e-3, 5e-4]
}
fn default_t_eval() -> f64 {
    3.0
}
fn default_ref_stride() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub stepper: StepperConfig,
    pub model: ModelParams,
    pub initial: InitialData,
    #[serde(default)]
    pub virial: VirialSection,
    #[serde(default)]
    pub windows: Vec<WindowSpec>,
    #[serde(default)]
    pub decay: DecaySection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub refinement: RefinementSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Checks every section; the initial data is sampled to catch tail mass.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid().map_err(as_config)?;
        self.stepper.validate(&grid)?;
        self.params().map_err(as_config)?;
        self.virial_config().map_err(as_config)?;
        for w in &self.windows {
            w.validate().map_err(as_config)?;
        }
        let d = &self.decay;
        if !(d.power_k.is_finite() && d.power_k > 0.0) {
            return Err(Error::InvalidConfig(format!("power_k must be positive, got {}", d.power_k)));
        }
        if !(d.required_factor.is_finite() && d.required_factor >= 1.0) {
            return Err(Error::InvalidConfig(format!("required_factor must be >= 1, got {}", d.required_factor)));
        }
        let r = &self.run;
        if !(r.boundary_threshold.is_finite() && r.boundary_threshold > 0.0) {
            return Err(Error::InvalidConfig("boundary_threshold must be positive".into()));
        }
        if !(r.blowup_factor.is_finite() && r.blowup_factor > 0.0) {
            return Err(Error::InvalidConfig("blowup_factor must be positive".into()));
        }
        if let Some(c) = r.c_gn {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::InvalidConfig(format!("c_gn must be positive, got {c}")));
            }
        }
        let f = &self.refinement;
        if f.dts.iter().any(|dt| !(dt.is_finite() && *dt > 0.0)) || f.stride == 0 || !(f.t_eval > 0.0) {
            return Err(Error::InvalidConfig("refinement needs positive dts, stride and t_eval".into()));
        }
        self.params()?.check_runnable(r.allow_test_regime).map_err(as_config)?;
        self.initial_state(&grid).map_err(as_config)?;
        Ok(())
    }

    pub fn grid(&self) -> Result<SpectralGrid> {
        SpectralGrid::new(self.grid.n, self.grid.half_length)
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.model.alpha, self.model.beta, self.model.gamma)
    }

    pub fn virial_config(&self) -> Result<VirialConfig> {
        let v = &self.virial;
        VirialConfig::new(v.p1, v.p2, v.theta2, v.theta3)
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            allow_test_regime: self.run.allow_test_regime,
            boundary_threshold: self.run.boundary_threshold,
            blowup_factor: self.run.blowup_factor,
            boundary_every_step: false,
        }
    }

    pub fn initial_state(&self, grid: &SpectralGrid) -> Result<SystemState> {
        make_initial_data_with_threshold(&self.initial, grid, self.run.boundary_threshold)
    }

    pub fn gn_constant(&self) -> f64 {
        self.run.c_gn.unwrap_or_else(|| default_gn_constant(&reference_gn_grid()))
    }

    /// The configuration re-serialized with defaults filled in.
    pub fn canonical(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(format!("cannot serialize config: {e}")))
    }

    /// First 16 hex digits of the SHA-256 of the canonical form.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.canonical()?.as_bytes());
        Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::InvalidConfig(_) => e,
        other => Error::InvalidConfig(other.to_string()),
    }
}

/// Smallness report for the configured data, `None` outside the coupled regime.
pub fn smallness_for(cfg: &RunConfig, state0: &SystemState) -> Result<Option<SmallnessReport>> {
    let params = cfg.params()?;
    if params.regime() != Regime::Coupled {
        return Ok(None);
    }
    phi_smallness(h1_norm_complex(&state0.u), h1_norm_real(&state0.v), &params, cfg.gn_constant()).map(Some)
}

// ---------------------------------------------------------------------------
// CSV output

pub const INVARIANTS_HEADER: [&str; 7] = ["t", "mass", "q", "energy", "u_h1", "v_h1", "margin"];
pub const VIRIAL_HEADER: [&str; 6] = ["t", "J2", "J3", "res_prop2", "res_prop3", "res_combined"];
pub const DECAY_HEADER: [&str; 14] = [
    "t", "window_p", "window_m", "E_mixed", "E_coupling", "E_gradu", "E_gradv", "E_uk", "E_vk", "acc_mixed",
    "acc_coupling", "acc_gradu", "acc_gradv", "acc_quartic",
];
pub const MOMENTS_HEADER: [&str; 5] = ["t", "B", "Umom", "F", "predicted_slope"];
pub const FLAGS_HEADER: [&str; 4] = ["t", "boundary_mass", "blowup", "window_clipped"];
pub const HASH_COLUMN: &str = "config_hash";

/// Shortest round-trip representation, so output is bit-reproducible.
fn num(x: f64) -> String {
    // no "-0e0"
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:e}")
}

struct Table {
    w: csv::Writer<fs::File>,
    hash: String,
    rows: usize,
}

impl Table {
    fn create(dir: &Path, name: &str, header: &[&str], hash: &str) -> Result<Self> {
        let mut w = csv::Writer::from_path(dir.join(name))?;
        w.write_record(header.iter().copied().chain([HASH_COLUMN]))?;
        Ok(Self { w, hash: hash.to_string(), rows: 0 })
    }

    fn row(&mut self, fields: impl IntoIterator<Item = String>) -> Result<()> {
        let mut rec: Vec<String> = fields.into_iter().collect();
        rec.push(self.hash.clone());
        self.w.write_record(&rec)?;
        self.rows += 1;
        Ok(())
    }

    fn finish(mut self) -> Result<usize> {
        self.w.flush()?;
        Ok(self.rows)
    }
}

/// Row counts of the five files.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RowCounts {
    pub invariants: usize,
    pub virial: usize,
    pub decay: usize,
    pub moments: usize,
    pub flags: usize,
}

struct Sink {
    invariants: Table,
    virial: Table,
    decay: Table,
    moments: Table,
    flags: Table,
}

impl Sink {
    fn create(dir: &Path, hash: &str) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            invariants: Table::create(dir, "invariants.csv", &INVARIANTS_HEADER, hash)?,
            virial: Table::create(dir, "virial.csv", &VIRIAL_HEADER, hash)?,
            decay: Table::create(dir, "decay.csv", &DECAY_HEADER, hash)?,
            moments: Table::create(dir, "moments.csv", &MOMENTS_HEADER, hash)?,
            flags: Table::create(dir, "flags.csv", &FLAGS_HEADER, hash)?,
        })
    }

    fn finish(self) -> Result<RowCounts> {
        Ok(RowCounts {
            invariants: self.invariants.finish()?,
            virial: self.virial.finish()?,
            decay: self.decay.finish()?,
            moments: self.moments.finish()?,
            flags: self.flags.finish()?,
        })
    }
}

// ---------------------------------------------------------------------------
// Instrumented run

struct Diagnostics<'a> {
    sink: Sink,
    params: ModelParams,
    vcfg: &'a VirialConfig,
    windows: &'a [WindowSpec],
    power: f64,
    phi: Option<f64>,
    prediction: Option<SlopePrediction>,
    acc: Accumulators,
    buffer: VecDeque<SystemState>,
    spacing: f64,
    last_time: f64,
    last_flags: StepFlags,
    min_margin: f64,
    any_clipped: bool,
}

impl Diagnostics<'_> {
    fn virial_row(&mut self) -> Result<()> {
        let w: Vec<SystemState> = self.buffer.iter().cloned().collect();
        let mid = &w[2];
        let r2 = identity_residual_prop2(&w, self.vcfg, &self.params)?;
        // decoupled test regimes have no theta3 = 2 theta2 gamma / alpha
        let has_j3 = self.vcfg.theta3(&self.params).is_ok();
        let (j3, r3) = if has_j3 {
            (functional_j3(mid, self.vcfg, &self.params)?, identity_residual_prop3(&w, self.vcfg, &self.params)?.residual)
        } else {
            (f64::NAN, f64::NAN)
        };
        let rc = if has_j3 && self.vcfg.is_auto() {
            identity_residual_combined(&w, self.vcfg, &self.params)?.combined.residual
        } else {
            f64::NAN
        };
        let row = [mid.time, functional_j2(mid, self.vcfg)?, j3, r2.residual, r3, rc];
        self.sink.virial.row(row.map(num))
    }
}

impl RunHooks for Diagnostics<'_> {
    fn on_step(&mut self, s: &SystemState, f: &StepFlags) -> Result<()> {
        weighted_accumulator_step(s, self.vcfg, &self.params, &mut self.acc)?;
        self.last_time = s.time;
        self.last_flags = *f;
        Ok(())
    }

    fn on_snapshot(&mut self, s: &SystemState, f: &StepFlags) -> Result<()> {
        let p = &self.params;
        let (uh, vh) = (h1_norm_complex(&s.u), h1_norm_real(&s.v));
        let margin = self.phi.map_or(f64::NAN, |phi| phi - (uh + vh));
        self.min_margin = self.min_margin.min(margin);
        let inv = [s.time, mass(s), q_momentum(s, p), energy(s, p), uh, vh, margin];
        self.sink.invariants.row(inv.map(num))?;

        if let Some(pred) = &self.prediction {
            let m = moment_sample(s, p, pred)?;
            self.sink.moments.row([m.time, m.b_moment, m.u_moment, m.f_moment, m.predicted_slope_f].map(num))?;
        }

        let mut clipped = false;
        if s.time >= ACCUMULATOR_START {
            let a = &self.acc;
            let accs = [
                a.get(AccumulatorTag::MixedKdv),
                a.get(AccumulatorTag::SchrodingerCoupling),
                a.get(AccumulatorTag::GradientU),
                a.get(AccumulatorTag::GradientV),
                a.get(AccumulatorTag::QuarticU),
            ];
            for w in self.windows {
                let e = windowed_set(s, p, w, self.power)?;
                clipped |= e.clipped;
                let row = [s.time, w.p, w.m, e.mixed, e.coupling, e.grad_u, e.grad_v, e.power_u, e.power_v];
                self.sink.decay.row(row.into_iter().chain(accs).map(num))?;
            }
        }
        self.any_clipped |= clipped;
        self.sink.flags.row([num(s.time), num(f.boundary_mass), "0".into(), u8::from(clipped).to_string()])?;

        if s.time > 0.0 {
            // the last snapshot may be off-stride
            if let Some(b) = self.buffer.back() {
                if ((s.time - b.time) - self.spacing).abs() > 1e-9 * self.spacing {
                    self.buffer.clear();
                }
            }
            self.buffer.push_back(s.clone());
            if self.buffer.len() > 5 {
                self.buffer.pop_front();
            }
            if self.buffer.len() == 5 {
                self.virial_row()?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub output_dir: PathBuf,
    pub final_time: f64,
    pub steps: usize,
    pub boundary_flag_time: Option<f64>,
    /// `(time, reason)` when the run was aborted.
    pub blowup: Option<(f64, String)>,
    pub smallness: Option<SmallnessReport>,
    /// Smallest `Phi - (||u||_H1 + ||v||_H1)` over snapshots; NaN without `Phi`.
    pub min_margin: f64,
    pub any_window_clipped: bool,
    pub accumulators: [f64; 8],
    pub rows: RowCounts,
}

impl RunSummary {
    /// The run should be reported as failed in strict mode.
    pub fn strict_violation(&self, strict: bool) -> bool {
        strict && self.boundary_flag_time.is_some()
    }
}

/// Runs the configured simulation, writing the five CSV files into
/// `cfg.output.dir`. A blow-up is recorded in `flags.csv` and the summary,
/// not returned as an error.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunSummary> {
    let grid = cfg.grid()?;
    let params = cfg.params()?;
    let vcfg = cfg.virial_config()?;
    let state0 = cfg.initial_state(&grid)?;
    let hash = cfg.hash()?;
    let smallness = smallness_for(cfg, &state0)?;
    let prediction = if params.gamma != 0.0 { Some(SlopePrediction::from_initial(&state0, &params)?) } else { None };

    let mut hook = Diagnostics {
        sink: Sink::create(&cfg.output.dir, &hash)?,
        params,
        vcfg: &vcfg,
        windows: &cfg.windows,
        power: cfg.decay.power_k,
        phi: smallness.as_ref().map(|r| r.phi),
        prediction,
        acc: Accumulators::new(cfg.decay.power_k),
        buffer: VecDeque::with_capacity(6),
        spacing: cfg.stepper.dt * cfg.stepper.snapshot_stride as f64,
        last_time: 0.0,
        last_flags: StepFlags::default(),
        min_margin: f64::INFINITY,
        any_clipped: false,
    };
    let outcome = run(&state0, &cfg.stepper, &params, &cfg.run_options(), &mut hook);
    let (final_time, steps, boundary_flag_time, blowup) = match outcome {
        Ok(o) => (o.final_state.time, o.steps, o.boundary_flag_time, None),
        Err(Error::BlowUp { time, reason }) => {
            let row = [num(time), num(hook.last_flags.boundary_mass), "1".into(), "0".into()];
            hook.sink.flags.row(row)?;
            let steps = (time / cfg.stepper.dt).round() as usize;
            let flagged = hook.last_flags.boundary_contaminated.then_some(hook.last_time);
            (time, steps, flagged, Some((time, reason)))
        }
        Err(e) => return Err(e),
    };
    let min_margin = if hook.phi.is_some() { hook.min_margin } else { f64::NAN };
    let any_window_clipped = hook.any_clipped;
    let accumulators = hook.acc.values();
    let rows = hook.sink.finish()?;
    Ok(RunSummary {
        config_hash: hash,
        output_dir: cfg.output.dir.clone(),
        final_time,
        steps,
        boundary_flag_time,
        blowup,
        smallness,
        min_margin,
        any_window_clipped,
        accumulators,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[grid]
n = 64
half_length = 16

[stepper]
dt = 0.01
t_end = 0.1

[model]
alpha = 1
beta = 0
gamma = 1

[initial.u]
family = "gaussian"
amplitude = 0.5
width = 1.0

[initial.v]
family = "zero"
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.virial, VirialSection::default());
        assert_eq!(c.stepper.snapshot_stride, 1);
        assert_eq!(c.run.boundary_threshold, DEFAULT_BOUNDARY_THRESHOLD);
        assert!(c.windows.is_empty());
        assert_eq!(c.hash().unwrap().len(), 16);
    }

    #[test]
    fn unknown_keys_rejected() {
        for extra in ["[grid]\nbogus = 1\n", "[model]\nzeta = 1\n", "[extra]\na = 1\n"] {
            // append a duplicate section or a new one; either must fail
            let text = format!("{MINIMAL}\n{extra}");
            assert!(RunConfig::from_toml_str(&text).is_err(), "{extra}");
        }
        let text = MINIMAL.replace("width = 1.0", "width = 1.0\nsigma = 2");
        assert!(RunConfig::from_toml_str(&text).is_err());
        let text = MINIMAL.replace("t_end = 0.1", "t_end = 0.1\nfoo = true");
        assert!(RunConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let bad = [
            MINIMAL.replace("n = 64", "n = 48"),
            MINIMAL.replace("dt = 0.01", "dt = -0.01"),
            MINIMAL.replace("gamma = 1", "gamma = -1"),
            MINIMAL.replace("width = 1.0", "width = 0.0"),
            format!("{MINIMAL}\n[virial]\np1 = 0.9\n"),
            format!("{MINIMAL}\n[[windows]]\np = 1.5\n"),
        ];
        for text in bad {
            match RunConfig::from_toml_str(&text) {
                Err(Error::InvalidConfig(_)) | Err(Error::Toml(_)) => {}
                other => panic!("expected config error, got {other:?}"),
            }
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::from_toml_str(MINIMAL).unwrap();
        let b = RunConfig::from_toml_str(&MINIMAL.replace("amplitude = 0.5", "amplitude = 0.25")).unwrap();
        // reordering keys does not change the canonical form
        let c = RunConfig::from_toml_str(&MINIMAL.replace("alpha = 1\nbeta = 0", "beta = 0\nalpha = 1")).unwrap();
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap(), c.hash().unwrap());
        let round = RunConfig::from_toml_str(&a.canonical().unwrap()).unwrap();
        assert_eq!(round, a);
    }

    #[test]
    fn theta3_forms() {
        let c = RunConfig::from_toml_str(&format!("{MINIMAL}\n[virial]\np1 = 0.3\ntheta3 = 2\n")).unwrap();
        assert_eq!(c.virial.theta3, Theta3::Value(2.0));
        assert_eq!(c.virial.p2, DEFAULT_P2);
        let c = RunConfig::from_toml_str(&format!("{MINIMAL}\n[virial]\np1 = 0.3\ntheta3 = \"auto\"\n")).unwrap();
        assert!(c.virial_config().unwrap().is_auto());
        assert!(RunConfig::from_toml_str(&format!("{MINIMAL}\n[virial]\np1 = 0.3\ntheta3 = \"x\"\n")).is_err());
    }
}
