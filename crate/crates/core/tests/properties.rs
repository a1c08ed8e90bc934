//! Property tests over random band-limited data.

use std::f64::consts::PI;

use proptest::prelude::*;

use skdv::conservation::{mass, phi_smallness};
use skdv::decay::{AccumulatorState, AccumulatorTag, weighted_integrands};
use skdv::integrator::{step, StepperConfig};
use skdv::model::SystemState;
use skdv::mollify::{mollify_data, MollifierSpec};
use skdv::spectral::{dealiased_product, derivative, ComplexField, RealField, C64};
use skdv::virial::{check_key_identities, functional_j2, weight_g, weight_w, Theta3, VirialConfig};
use skdv::{ModelParams, SpectralGrid};

const N: usize = 64;
const L: f64 = 8.0;

fn grid() -> SpectralGrid {
    SpectralGrid::new(N, L).unwrap()
}

/// Real field with modes `1..=coeffs.len()` (cos, sin pairs) plus a mean.
fn real_modes(g: &SpectralGrid, mean: f64, coeffs: &[(f64, f64)]) -> RealField {
    RealField::from_fn(g, |x| {
        mean + coeffs
            .iter()
            .enumerate()
            .map(|(j, (a, b))| {
                let k = (j + 1) as f64 * PI / L;
                a * (k * x).cos() + b * (k * x).sin()
            })
            .sum::<f64>()
    })
    .unwrap()
}

/// Complex field with modes `-m..=m`.
fn complex_modes(g: &SpectralGrid, coeffs: &[(f64, f64)]) -> ComplexField {
    let m = (coeffs.len() / 2) as i64;
    ComplexField::from_fn(g, |x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(j, &(re, im))| {
                let k = (j as i64 - m) as f64 * PI / L;
                C64::new(re, im) * C64::from_polar(1.0, k * x)
            })
            .sum()
    })
    .unwrap()
}

fn pairs(n: usize, scale: f64) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-scale..scale, -scale..scale), n)
}

/// Spectral energy in the top third of the resolved wavenumbers.
fn tail_energy(u: &ComplexField) -> f64 {
    let g = u.grid();
    let mut hat = u.samples().to_vec();
    g.forward(&mut hat);
    let cut = 2.0 * g.k_max() / 3.0;
    hat.iter().zip(g.wavenumbers()).filter(|(_, k)| k.abs() > cut).map(|(z, _)| z.norm_sqr()).sum()
}

fn max_diff_c(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn max_diff_r(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn parseval(c in pairs(41, 1.0)) {
        let g = grid();
        let u = complex_modes(&g, &c);
        let mut hat = u.samples().to_vec();
        g.forward(&mut hat);
        let phys: f64 = u.samples().iter().map(|z| z.norm_sqr()).sum();
        let spec: f64 = hat.iter().map(|z| z.norm_sqr()).sum::<f64>() / N as f64;
        prop_assert!((phys - spec).abs() <= 1e-12 * phys.max(1.0));
    }

    #[test]
    fn derivative_is_linear(a in pairs(20, 1.0), b in pairs(20, 1.0), s in -3.0..3.0f64, order in 1u32..4) {
        let g = grid();
        let f = real_modes(&g, 0.3, &a);
        let h = real_modes(&g, -0.1, &b);
        let comb = RealField::new(&g, f.samples().iter().zip(h.samples()).map(|(x, y)| s * x + y).collect()).unwrap();
        let lhs = derivative(&comb, order).unwrap();
        let (df, dh) = (derivative(&f, order).unwrap(), derivative(&h, order).unwrap());
        let rhs: Vec<f64> = df.samples().iter().zip(dh.samples()).map(|(x, y)| s * x + y).collect();
        let scale = rhs.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        prop_assert!(max_diff_r(lhs.samples(), &rhs) <= 1e-11 * scale);
    }

    #[test]
    fn dealiased_product_matches_pointwise_when_resolved(a in pairs(15, 1.0), b in pairs(15, 1.0)) {
        // 15 + 15 < N/2: the pointwise product is already band-limited
        let g = grid();
        let f = real_modes(&g, 0.5, &a);
        let h = real_modes(&g, -0.2, &b);
        let p = dealiased_product(&[&f, &h]).unwrap();
        let direct: Vec<f64> = f.samples().iter().zip(h.samples()).map(|(x, y)| x * y).collect();
        prop_assert!(max_diff_r(p.samples(), &direct) <= 1e-12 * 50.0);
    }

    #[test]
    fn step_commutes_with_gauge(c in pairs(9, 0.3), d in pairs(4, 0.3), theta in 0.0..(2.0 * PI)) {
        let g = grid();
        let params = ModelParams::new(1.0, -0.5, 1.5).unwrap();
        let u = complex_modes(&g, &c);
        let v = real_modes(&g, 0.0, &d);
        let rot = C64::from_polar(1.0, theta);
        let s = SystemState::new(u.clone(), v.clone(), 0.0).unwrap();
        let sr = SystemState::new(u.scale(rot), v, 0.0).unwrap();
        let cfg = StepperConfig::new(1e-3, 1e-3);
        let a = step(&s, &cfg, &params).unwrap();
        let b = step(&sr, &cfg, &params).unwrap();
        prop_assert!(max_diff_c(a.u.scale(rot).samples(), b.u.samples()) <= 1e-12);
        prop_assert!(max_diff_r(a.v.samples(), b.v.samples()) <= 1e-12);
    }

    #[test]
    fn mass_is_conserved_over_steps(c in pairs(9, 0.5), d in pairs(4, 0.5)) {
        let g = grid();
        let params = ModelParams::new(1.0, 1.0, 1.0).unwrap();
        let mut s = SystemState::new(complex_modes(&g, &c), real_modes(&g, 0.0, &d), 0.0).unwrap();
        let m0 = mass(&s);
        prop_assume!(m0 > 1e-6);
        let cfg = StepperConfig::new(1e-3, 1e-2);
        for _ in 0..10 {
            s = step(&s, &cfg, &params).unwrap();
        }
        prop_assert!(((mass(&s) - m0) / m0).abs() <= 1e-11);
    }

    #[test]
    fn phi_is_monotone_in_the_norms(a in 0.0..5.0f64, b in 0.0..5.0f64, da in 0.0..1.0f64, db in 0.0..1.0f64) {
        let params = ModelParams::new(1.0, -0.3, 2.0).unwrap();
        let lo = phi_smallness(a, b, &params, 0.9).unwrap().phi;
        let hi = phi_smallness(a + da, b + db, &params, 0.9).unwrap().phi;
        prop_assert!(lo <= hi);
        prop_assert!(lo >= 0.0);
    }

    #[test]
    fn weights_are_bounded(x in -60.0..60.0f64) {
        let w = weight_w(x);
        let gx = weight_g(x);
        prop_assert!(w > -1e-300 && w <= PI / 2.0 + 1e-15);
        prop_assert!((0.0..=0.5 + 1e-15).contains(&gx));
    }

    #[test]
    fn key_identities_hold_pointwise(c in pairs(9, 2.0), d in pairs(6, 2.0)) {
        let g = grid();
        let params = ModelParams::new(2.0, -1.0, 3.0).unwrap();
        let s = SystemState::new(complex_modes(&g, &c), real_modes(&g, 0.1, &d), 0.0).unwrap();
        prop_assert!(check_key_identities(&s, &params).unwrap().max_relative() <= 1e-12);
    }

    #[test]
    fn j2_is_nonnegative(d in pairs(8, 1.0), t in 2.0..20.0f64, p1 in 0.1..0.44f64) {
        let g = grid();
        let vcfg = VirialConfig::new(p1, 2.5, 1.0, Theta3::Auto).unwrap();
        let s = SystemState::new(ComplexField::zeros(&g), real_modes(&g, 0.0, &d), t).unwrap();
        prop_assert!(functional_j2(&s, &vcfg).unwrap() >= 0.0);
    }

    #[test]
    fn accumulator_integrands_are_nonnegative(c in pairs(9, 1.0), d in pairs(6, 1.0), t in 2.0..50.0f64) {
        let g = grid();
        let params = ModelParams::new(1.0, -1.0, 1.0).unwrap();
        let vcfg = VirialConfig::new(0.4, 2.5, 1.0, Theta3::Auto).unwrap();
        let s = SystemState::new(complex_modes(&g, &c), real_modes(&g, 0.0, &d), t).unwrap();
        for f in weighted_integrands(&s, &vcfg, &params, 2.5).unwrap() {
            prop_assert!(f >= 0.0);
        }
    }

    #[test]
    fn accumulators_never_decrease(fs in prop::collection::vec(0.0..10.0f64, 2..40), dts in prop::collection::vec(1e-3..1.0f64, 40)) {
        let mut acc = AccumulatorState::new(AccumulatorTag::MixedKdv);
        let mut t = 2.0;
        let mut last = 0.0;
        for (f, dt) in fs.iter().zip(&dts) {
            acc.advance(t, *f);
            prop_assert!(acc.value >= last);
            last = acc.value;
            t += dt;
        }
    }

    #[test]
    fn mollifying_never_adds_high_frequencies(c in pairs(61, 1.0), level in 1u32..40) {
        let g = grid();
        let s = SystemState::new(complex_modes(&g, &c[..61]), RealField::zeros(&g), 0.0).unwrap();
        let m = mollify_data(&s, &MollifierSpec::new(level).unwrap()).unwrap();
        let (before, after) = (tail_energy(&s.u), tail_energy(&m.u));
        prop_assert!(after <= before * (1.0 + 1e-12) + 1e-20);
    }
}
