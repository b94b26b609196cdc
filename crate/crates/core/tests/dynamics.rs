mod common;

use gks_core::dynamics::boundedness_ceiling;
use gks_core::{simulate, GksParams, SpectralField, StepperConfig, Uncontrolled};
use proptest::prelude::*;

fn run(p: &GksParams, u0: &SpectralField, dt: f64, t: f64) -> SpectralField {
    let cfg = StepperConfig::new(dt, t, 1_000_000).unwrap();
    simulate(p, u0, &Uncontrolled, &cfg).unwrap().last().clone()
}

#[test]
fn tiny_data_follows_the_linear_flow() {
    // Amplitude 1e-9 keeps the quadratic term below rounding; each mode then
    // rotates at δn³ and grows at n² + μn³ − νn⁴.
    let p = GksParams::new(0.4, 0.3, 0.2, 8).unwrap();
    let mut u0 = SpectralField::zeros(8);
    u0.set_sin(1, 1e-9);
    u0.set_cos(2, -0.5e-9);
    u0.set_sin(3, 0.3e-9);
    let t = 1.0;
    let u = run(&p, &u0, 1e-4, t);
    for n in 1..=3 {
        let k = n as f64;
        let a = k * k + p.mu * k.powi(3) - p.nu * k.powi(4);
        let w = p.delta * k.powi(3);
        let (s0, c0) = (u0.sin(n), u0.cos(n));
        let g = (a * t).exp();
        let s = g * (s0 * (w * t).cos() - c0 * (w * t).sin());
        let c = g * (s0 * (w * t).sin() + c0 * (w * t).cos());
        let scale = 1e-9;
        assert!((u.sin(n) - s).abs() < 1e-6 * scale, "mode {n} sine");
        assert!((u.cos(n) - c).abs() < 1e-6 * scale, "mode {n} cosine");
    }
}

#[test]
fn bdf2_converges_at_second_order() {
    let p = GksParams::new(0.5, 0.2, 0.1, 16).unwrap();
    let u0 = SpectralField::project(16, |x| x.sin() + 0.5 * (2.0 * x).cos());
    let t = 1.0;
    let reference = run(&p, &u0, 1e-2 / 64.0, t);
    let errs: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
        .iter()
        .map(|&dt| (&run(&p, &u0, dt, t) - &reference).l2_norm())
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((1.8..2.3).contains(&order), "observed order {order}, errors {errs:?}");
    }
}

#[test]
fn zero_data_stays_zero() {
    let p = GksParams::new(0.1, 0.5, 0.3, 16).unwrap();
    let u = run(&p, &SpectralField::zeros(16), 1e-3, 2.0);
    assert_eq!(u.max_abs_coeff(), 0.0);
}

#[test]
fn stable_regime_decays() {
    let p = GksParams::new(1.5, 0.0, 0.0, 32).unwrap();
    let mut u0 = SpectralField::zeros(32);
    for n in 1..=5 {
        u0.set_sin(n, 1.0);
        u0.set_cos(n, 1.0);
    }
    let u = run(&p, &u0, 1e-3, 50.0);
    assert!(u.l2_norm() < 1e-6, "{}", u.l2_norm());
}

#[test]
fn chaotic_run_stays_below_monitor_ceiling() {
    let p = GksParams::new(0.05, 0.0, 0.0, 32).unwrap();
    let u0 = SpectralField::project(32, |x| 0.1 * (x.sin() + 0.5 * (3.0 * x + 0.5).cos()));
    let cfg = StepperConfig::new(5e-4, 50.0, 200).unwrap();
    let traj = simulate(&p, &u0, &Uncontrolled, &cfg).unwrap();
    let peak = traj.l2_norms().into_iter().fold(0.0, f64::max);
    assert!(peak > 1.0, "run never left the small-amplitude regime");
    assert!(peak < boundedness_ceiling(&p));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mean_is_conserved(c in prop::collection::vec(-1.0f64..1.0, 17), nu in 0.2f64..1.0, mu in 0.0f64..0.5) {
        let p = GksParams::new(nu, mu, 0.1, 8).unwrap();
        let u0 = SpectralField::from_coeffs(c).unwrap();
        let u = run(&p, &u0, 1e-3, 0.5);
        prop_assert!((u.mean() - u0.mean()).abs() < 1e-13);
    }

    #[test]
    fn translation_commutes_with_the_flow(c in prop::collection::vec(-1.0f64..1.0, 17), a in 0.0f64..std::f64::consts::TAU) {
        let p = GksParams::new(0.3, 0.4, 0.2, 8).unwrap();
        let mut u0 = SpectralField::from_coeffs(c).unwrap();
        u0.set_mean(0.0);
        let lhs = run(&p, &u0.translate(a), 1e-3, 0.5);
        let rhs = run(&p, &u0, 1e-3, 0.5).translate(a);
        prop_assert!((&lhs - &rhs).max_abs_coeff() < 1e-10);
    }
}
