use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use skdv::conservation::{admissible_scale, h1_norm_complex, h1_norm_real};
use skdv::decay::WindowSpec;
use skdv::integrator::Scheme;
use skdv::io::{run_experiment, smallness_for, RunConfig};
use skdv::model::random_smooth_state;
use skdv::studies::{decay_scan, free_schrodinger_error, identity_refinement, invariant_drifts, self_convergence, soliton_error};
use skdv::virial::check_key_identities;
use skdv::{Error, Regime};

#[derive(Parser)]
#[command(name = "skdv", version, about = "Schrödinger-KdV simulator with virial and local-decay diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full simulation; writes invariants, virial, decay, moments and flags CSVs.
    Run {
        config: PathBuf,
        /// Overrides `[output] dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Treat boundary contamination as an error.
        #[arg(long)]
        strict: bool,
    },
    /// dt-refinement of the virial identity residuals.
    VerifyIdentities { config: PathBuf },
    /// Windowed energies, accumulators and block-minimum reports over the horizon.
    ScanDecay { config: PathBuf },
    /// Smallness report for the initial data; no dynamics.
    CheckSmallness { config: PathBuf },
    /// Integrator self-convergence and closed-form comparisons.
    Convergence { config: PathBuf },
}

enum Exit {
    Ok,
    Config,
    BlowUp,
    Boundary,
    Other,
}

impl From<Exit> for ExitCode {
    fn from(e: Exit) -> Self {
        ExitCode::from(match e {
            Exit::Ok => 0,
            Exit::Other => 1,
            Exit::Config => 2,
            Exit::BlowUp => 3,
            Exit::Boundary => 4,
        })
    }
}

fn classify(e: &Error) -> Exit {
    match e {
        Error::InvalidConfig(_) | Error::Toml(_) => Exit::Config,
        Error::BlowUp { .. } | Error::NonFinite { .. } => Exit::BlowUp,
        _ => Exit::Other,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out, strict } => cmd_run(config, out.as_deref(), *strict),
        Command::VerifyIdentities { config } => load(config).and_then(|c| cmd_verify(&c)),
        Command::ScanDecay { config } => load(config).and_then(|c| cmd_scan(&c)),
        Command::CheckSmallness { config } => load(config).and_then(|c| cmd_smallness(&c)),
        Command::Convergence { config } => load(config).and_then(|c| cmd_convergence(&c)),
    };
    match result {
        Ok(code) => code.into(),
        Err(e) => {
            eprintln!("error: {e}");
            classify(&e).into()
        }
    }
}

fn load(path: &Path) -> skdv::Result<RunConfig> {
    RunConfig::load(path)
}

fn cmd_run(path: &Path, out: Option<&Path>, strict: bool) -> skdv::Result<Exit> {
    let mut cfg = load(path)?;
    if let Some(dir) = out {
        cfg.output.dir = dir.to_path_buf();
    }
    let strict = strict || cfg.output.strict;
    let s = run_experiment(&cfg)?;
    println!("config_hash {}", s.config_hash);
    println!("output {}", s.output_dir.display());
    println!("steps {} final_t {}", s.steps, s.final_time);
    println!(
        "rows invariants={} virial={} decay={} moments={} flags={}",
        s.rows.invariants, s.rows.virial, s.rows.decay, s.rows.moments, s.rows.flags
    );
    if let Some(r) = &s.smallness {
        println!("phi {:e} min_margin {:e}", r.phi, s.min_margin);
    }
    if s.any_window_clipped {
        println!("warning: a decay window reached the box edge");
    }
    if let Some((t, reason)) = &s.blowup {
        eprintln!("blow-up at t = {t}: {reason}");
        return Ok(Exit::BlowUp);
    }
    if let Some(t) = s.boundary_flag_time {
        eprintln!("boundary contamination from t = {t}");
        if s.strict_violation(strict) {
            return Ok(Exit::Boundary);
        }
    }
    Ok(Exit::Ok)
}

fn cmd_verify(cfg: &RunConfig) -> skdv::Result<Exit> {
    let grid = cfg.grid()?;
    let params = cfg.params()?;
    let vcfg = cfg.virial_config()?;
    let state0 = cfg.initial_state(&grid)?;
    let r = &cfg.refinement;
    let study = identity_refinement(&state0, &params, &vcfg, r.t_eval, &r.dts, r.stride, &cfg.run_options())?;
    println!("config_hash {}", cfg.hash()?);
    println!("virial {vcfg}");
    println!("dt,t,J2,J3,res_prop2,res_prop3,res_combined,coefficient_sum");
    for row in &study.rows {
        println!(
            "{:e},{},{:e},{:e},{:e},{:e},{:e},{:e}",
            row.dt, row.time, row.j2, row.j3, row.res_prop2, row.res_prop3, row.res_combined, row.coefficient_sum
        );
    }
    println!("order_prop2 {:?}", study.orders_prop2);
    println!("order_prop3 {:?}", study.orders_prop3);
    println!("order_combined {:?}", study.orders_combined);
    println!("min_order {:.3}", study.min_order());
    if params.alpha != 0.0 && params.gamma != 0.0 {
        let mut worst = 0.0f64;
        for k in 0..8 {
            let s = random_smooth_state(&grid, cfg.run.seed.wrapping_add(k), 4)?;
            worst = worst.max(check_key_identities(&s, &params)?.max_relative());
        }
        println!("key_identities_max_relative {worst:e} (seed {})", cfg.run.seed);
    }
    Ok(Exit::Ok)
}

fn cmd_scan(cfg: &RunConfig) -> skdv::Result<Exit> {
    let grid = cfg.grid()?;
    let params = cfg.params()?;
    let vcfg = cfg.virial_config()?;
    let state0 = cfg.initial_state(&grid)?;
    let windows = if cfg.windows.is_empty() { vec![WindowSpec::centered(0.5)?] } else { cfg.windows.clone() };
    let st = &cfg.stepper;
    println!("config_hash {}", cfg.hash()?);
    for w in &windows {
        let s = decay_scan(
            &state0,
            &params,
            &vcfg,
            w,
            st.t_end,
            st.dt,
            st.snapshot_stride,
            cfg.decay.power_k,
            cfg.decay.required_factor,
            &cfg.run_options(),
        )?;
        println!("window p={} m={} c={}", w.p, w.m, w.constant);
        for (name, rep) in [("mixed", &s.mixed_report), ("grad_v", &s.grad_v_report), ("grad_u", &s.grad_u_report)] {
            let mins: Vec<String> = rep.blocks.iter().map(|b| format!("{:.3e}", b.value)).collect();
            println!(
                "  {name}: factor {:.3} decayed {} monotone {} slope {:.3} blocks [{}]",
                rep.decay_factor,
                rep.decayed,
                rep.monotone,
                rep.slope,
                mins.join(", ")
            );
        }
        let acc: Vec<String> = s.accumulators.values().iter().map(|a| format!("{a:.3e}")).collect();
        println!("  accumulators [{}] finite {}", acc.join(", "), s.accumulators_finite());
        println!("  increments decreasing (last 3 blocks) {}", s.increments_decreasing(3));
        println!("  max boundary mass {:.3e} window clipped {}", s.max_boundary_mass, s.any_clipped);
    }
    Ok(Exit::Ok)
}

fn cmd_smallness(cfg: &RunConfig) -> skdv::Result<Exit> {
    let grid = cfg.grid()?;
    let params = cfg.params()?;
    let state0 = cfg.initial_state(&grid)?;
    let (a, b) = (h1_norm_complex(&state0.u), h1_norm_real(&state0.v));
    println!("u0_h1 {a:e}");
    println!("v0_h1 {b:e}");
    if params.regime() != Regime::Coupled {
        println!("not in the coupled regime; no smallness report");
        return Ok(Exit::Ok);
    }
    let r = smallness_for(cfg, &state0)?.expect("coupled regime");
    println!("c_gn {:e}", r.c_gn);
    println!("c_abg {:e}", r.c_abg);
    println!("phi {:e}", r.phi);
    println!("criterion -beta*phi = {:e} <= alpha*gamma = {:e}: {}", r.criterion_lhs, r.criterion_rhs, r.satisfied);
    println!("c_abg_intro {:e}", r.c_abg_intro);
    println!("phi_intro {:e}", r.phi_intro);
    println!("criterion (intro constant): {}", r.satisfied_intro);
    println!("constant_ratio {:e}", r.constant_ratio);
    if params.beta < 0.0 && a + b > 0.0 {
        let s = admissible_scale(a, b, &params, r.c_gn, 1.0)?;
        println!("admissible amplitude scale {s:e}");
    }
    Ok(Exit::Ok)
}

fn cmd_convergence(cfg: &RunConfig) -> skdv::Result<Exit> {
    let grid = cfg.grid()?;
    let params = cfg.params()?;
    let state0 = cfg.initial_state(&grid)?;
    let dts = &cfg.refinement.dts;
    let t_end = cfg.stepper.t_end;
    let opts = cfg.run_options();
    println!("config_hash {}", cfg.hash()?);
    for scheme in [Scheme::Strang, Scheme::Lie] {
        let c = self_convergence(&state0, &params, t_end, dts, scheme, &opts)?;
        println!("{scheme:?}: differences {:?} orders {:?}", c.differences, c.orders);
    }
    if params.regime() == Regime::Coupled || cfg.run.allow_test_regime {
        println!("dt,mass_rel,v_integral,q,energy");
        for d in invariant_drifts(&state0, &params, t_end, dts, &opts)? {
            println!("{:e},{:e},{:e},{:e},{:e}", d.dt, d.mass_rel, d.v_integral, d.q, d.energy);
        }
    }
    let dt = dts.last().copied().unwrap_or(cfg.stepper.dt);
    println!("free_schrodinger_l2(t=1) {:e}", free_schrodinger_error(&grid, 1.0, dt)?);
    println!("soliton_l2(c=1, t=5) {:e}", soliton_error(&grid, 1.0, 5.0, dt)?);
    Ok(Exit::Ok)
}
