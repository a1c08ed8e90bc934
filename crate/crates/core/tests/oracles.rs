//! Worked examples checked against independent oracles: finite differences,
//! direct convolution sums, closed forms, refinement and run-and-check.

use std::f64::consts::PI;

use rand::rngs::Xoshiro256PlusPlus;
use rand::{RngExt, SeedableRng};

use skdv::conservation::{apriori_monitor, h1_norm_complex, h1_norm_real, phi_from_constant, c_abg};
use skdv::decay::{windowed_energy, EnergyKind, WindowSpec};
use skdv::integrator::{evolve, run, step, RunOptions, SnapshotCollector, StepperConfig};
use skdv::model::{kdv_soliton, make_initial_data, rhs_nonlinear_u, InitialData, Profile, SystemState};
use skdv::spectral::{dealiased_product, derivative, ComplexField, RealField, C64};
use skdv::studies::{free_schrodinger_error, soliton_error};
use skdv::virial::{functional_j2, Theta3, VirialConfig};
use skdv::{ModelParams, SpectralGrid};

fn gaussian(amplitude: f64, width: f64) -> Profile {
    Profile::Gaussian { amplitude, width, center: 0.0 }
}

#[test]
fn third_derivative_against_finite_differences() {
    let l = 32.0;
    let g = SpectralGrid::new(512, l).unwrap();
    let f = RealField::from_fn(&g, |x| (-x * x).exp()).unwrap();
    let d3 = derivative(&f, 3).unwrap();

    // 8th-order central first derivative, applied three times on a 16x finer periodic grid
    let n = 8192;
    let h = 2.0 * l / n as f64;
    let c = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
    let d1 = |s: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|m| {
                c.iter()
                    .enumerate()
                    .map(|(j, cj)| cj * (s[(m + j + 1) % n] - s[(m + n - j - 1) % n]))
                    .sum::<f64>()
                    / h
            })
            .collect()
    };
    let fine: Vec<f64> = (0..n).map(|m| (-(-l + m as f64 * h).powi(2)).exp()).collect();
    let fd = d1(&d1(&d1(&fine)));
    let err = d3
        .samples()
        .iter()
        .enumerate()
        .map(|(m, v)| (v - fd[16 * m]).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-8, "{err:e}");
}

/// Band-limited field with Fourier coefficients `coef[k + m]` for `|k| <= m`.
fn from_coefficients(g: &SpectralGrid, coef: &[C64]) -> ComplexField {
    let m = (coef.len() / 2) as i64;
    let l = g.half_length();
    ComplexField::from_fn(g, |x| {
        coef.iter()
            .enumerate()
            .map(|(j, c)| c * C64::from_polar(1.0, (j as i64 - m) as f64 * PI / l * (x + l)))
            .sum()
    })
    .unwrap()
}

fn random_coefficients(rng: &mut Xoshiro256PlusPlus, m: usize, scale: f64) -> Vec<C64> {
    (0..2 * m + 1)
        .map(|_| C64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
        .collect()
}

fn convolve(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

#[test]
fn triple_product_against_direct_convolution() {
    let n = 64;
    let g = SpectralGrid::new(n, 5.0).unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
    for _ in 0..5 {
        // modes up to 20 each; the exact product reaches 60 and must be truncated
        let m = 20;
        let (a, b, c) = (
            random_coefficients(&mut rng, m, 0.3),
            random_coefficients(&mut rng, m, 0.3),
            random_coefficients(&mut rng, m, 0.3),
        );
        let (fa, fb, fc) = (from_coefficients(&g, &a), from_coefficients(&g, &b), from_coefficients(&g, &c));
        let p = dealiased_product(&[&fa, &fb, &fc]).unwrap();
        let exact = convolve(&convolve(&a, &b), &c);
        let centre = 3 * m as i64;

        let mut hat = p.samples().to_vec();
        g.forward(&mut hat);
        let scale = exact.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut err = 0.0f64;
        for k in -(n as i64 / 2 - 1)..(n as i64 / 2) {
            let got = hat[k.rem_euclid(n as i64) as usize] / n as f64;
            err = err.max((got - exact[(k + centre) as usize]).norm());
        }
        assert!(err < 1e-12 * scale, "{err:e} vs scale {scale:e}");
    }
}

#[test]
fn rhs_u_against_pointwise_evaluation() {
    // modes up to 5: every product stays below the Nyquist mode, so the
    // alias-free result equals the pointwise formula at the nodes
    let g = SpectralGrid::new(64, 6.0).unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
    let params = ModelParams::new(1.3, -0.7, 2.0).unwrap();
    for _ in 0..5 {
        let cu = random_coefficients(&mut rng, 5, 0.2);
        let mut cv = random_coefficients(&mut rng, 5, 0.2);
        for k in 0..=5 {
            let z = cv[5 + k];
            cv[5 - k] = z.conj();
        }
        cv[5].im = 0.0;
        let u = from_coefficients(&g, &cu);
        let v = from_coefficients(&g, &cv).real_part();
        let s = SystemState::new(u.clone(), v.clone(), 0.0).unwrap();
        let rhs = rhs_nonlinear_u(&s, &params).unwrap();
        let err = rhs
            .samples()
            .iter()
            .zip(u.samples().iter().zip(v.samples()))
            .map(|(r, (z, vv))| {
                let exact = C64::new(0.0, -1.0) * (params.alpha * z * vv + params.beta * z * z.norm_sqr());
                (r - exact).norm()
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "{err:e}");
    }
}

#[test]
fn coupled_step_local_error_halves_at_order_two_or_better() {
    let g = SpectralGrid::new(256, 16.0).unwrap();
    let params = ModelParams::new(1.0, 1.0, 1.0).unwrap();
    let data = InitialData {
        u: Profile::ModulatedGaussian { amplitude: 1.0, width: 1.5, center: 0.0, wavenumber: 1.0 },
        v: gaussian(0.8, 1.5),
        mollification: None,
    };
    let s0 = make_initial_data(&data, &g).unwrap();
    let opts = RunOptions::default();
    let local = |dt: f64| {
        let one = step(&s0, &StepperConfig::new(dt, dt), &params).unwrap();
        let reference = evolve(&s0, &StepperConfig::new(dt / 64.0, dt), &params, &opts).unwrap();
        skdv::integrator::l2_distance(&one, &reference)
    };
    let errs = [local(0.04), local(0.02), local(0.01)];
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 2.0, "local order {order} from {errs:?}");
    }
}

#[test]
fn free_schrodinger_closed_form() {
    let g = SpectralGrid::new(1024, 32.0).unwrap();
    let err = free_schrodinger_error(&g, 1.0, 1e-3).unwrap();
    assert!(err < 1e-10, "{err:e}");
}

#[test]
fn decoupled_soliton_translates() {
    let g = SpectralGrid::new(1024, 64.0).unwrap();
    let err = soliton_error(&g, 1.0, 5.0, 5e-4).unwrap();
    assert!(err < 1e-4, "{err:e}");
}

#[test]
fn phi_unit_case_against_exact_arithmetic() {
    // tests/oracles/phi_oracle.py, last tuple
    let p = ModelParams::new(1.0, -1.0, 1.0).unwrap();
    let k = c_abg(&p, 1.0).unwrap();
    let phi = phi_from_constant(k, 1.0, 1.0);
    assert!(((k - 1139695804.676175711249524) / k).abs() < 1e-10);
    assert!(((phi - 135037.5239510070822151333) / phi).abs() < 1e-10);
}

fn apriori_run(amplitude: f64) -> (f64, f64, bool) {
    let g = SpectralGrid::new(256, 32.0).unwrap();
    let p = ModelParams::new(1.0, 0.0, 1.0).unwrap();
    let data = InitialData { u: gaussian(amplitude, 2.0), v: gaussian(amplitude, 2.0), mollification: None };
    let s0 = make_initial_data(&data, &g).unwrap();
    let phi = skdv::conservation::phi_smallness(h1_norm_complex(&s0.u), h1_norm_real(&s0.v), &p, 1.0)
        .unwrap()
        .phi;
    let mut snaps = SnapshotCollector::default();
    run(&s0, &StepperConfig::new(1e-2, 10.0).with_stride(10), &p, &RunOptions::default(), &mut snaps).unwrap();
    let rep = apriori_monitor(&snaps.states, phi);
    (rep.min_margin, rep.max_norm_sum / phi, rep.holds())
}

#[test]
fn apriori_bound_margin_and_amplitude_sweep() {
    let (margin, used, holds) = apriori_run(0.05);
    assert!(holds && margin > 0.0 && used < 1e-3, "margin {margin:e} used {used:e}");
    // phi is superlinear with a large constant, so the margin phi - sup(norms)
    // grows with amplitude along the sweep
    let margins: Vec<f64> = [0.01, 0.05, 0.1, 0.2, 0.4].iter().map(|&a| apriori_run(a).0).collect();
    for w in margins.windows(2) {
        assert!(w[1] >= w[0], "{margins:?}");
    }
}

#[test]
fn j2_against_finer_grid() {
    let vcfg = VirialConfig::new(0.45, 2.0, 1.0, Theta3::Auto).unwrap();
    let j2 = |n: usize| {
        let g = SpectralGrid::new(n, 32.0).unwrap();
        let v = RealField::from_fn(&g, |x| (-x * x).exp()).unwrap();
        let s = SystemState::new(ComplexField::zeros(&g), v, 2.0).unwrap();
        functional_j2(&s, &vcfg).unwrap()
    };
    let (coarse, fine) = (j2(512), j2(4096));
    assert!((coarse - fine).abs() < 1e-9, "{coarse} vs {fine}");
    assert!(coarse > 0.0);
}

#[test]
fn windowed_energy_against_finer_grid() {
    let w = WindowSpec::centered(0.5).unwrap();
    let p = ModelParams::new(1.0, 1.0, 1.0).unwrap();
    let value = |n: usize, kind: EnergyKind| {
        let g = SpectralGrid::new(n, 32.0).unwrap();
        let data = InitialData { u: Profile::Zero, v: gaussian(1.0, 1.0), mollification: None };
        let mut s = make_initial_data(&data, &g).unwrap();
        s.time = 4.0;
        windowed_energy(&s, &p, &w, kind).unwrap()
    };
    for kind in [EnergyKind::Mixed, EnergyKind::GradV] {
        let (a, b) = (value(512, kind), value(4096, kind));
        assert!(!a.clipped);
        assert!((a.value - b.value).abs() < 1e-9, "{kind:?}: {} vs {}", a.value, b.value);
    }
    // window |x| <= 2 holds most of the mass of v^2/2
    let m = value(512, EnergyKind::Mixed).value;
    let total = 0.5 * (PI / 2.0).sqrt();
    assert!(m < total && m > 0.99 * total);
}

#[test]
fn boundary_flag_precedes_wrap() {
    let l = 32.0;
    let g = SpectralGrid::new(512, l).unwrap();
    let v = RealField::from_fn(&g, |x| kdv_soliton(x, 1.0)).unwrap();
    let s0 = SystemState::new(ComplexField::zeros(&g), v, 0.0).unwrap();
    let p = ModelParams::new(0.0, 0.0, 0.0).unwrap();
    let out = run(&s0, &StepperConfig::new(1e-2, 40.0).with_stride(10), &p, &RunOptions::test_regime(), &mut ()).unwrap();
    let t = out.boundary_flag_time.expect("flag raised");
    // the crest reaches the edge at t = L
    assert!(t > 0.0 && t < l, "flag at {t}");
}
