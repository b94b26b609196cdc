mod common;

use gks_core::equilibria::{
    branch_following, classify_stability, continue_branch, dilate_equilibrium, linear_spectrum, newton_solve,
    pulse_wave, residual_tw, steady_state_on_branch, ContinuationOptions, ContinuationParameter, EquilibriumKind,
    NewtonOptions, PulseSeed, Stability, StabilityOptions, Termination,
};
use gks_core::{GksParams, SpectralField};

use common::max_abs;

#[test]
fn zero_is_the_unique_stable_state_for_large_viscosity() {
    let p = GksParams::new(2.0, 0.0, 0.0, 16).unwrap();
    let mut guess = SpectralField::zeros(16);
    guess.set_sin(1, 1e-3);
    let eq = newton_solve(&guess, 0.0, EquilibriumKind::Steady, &p, &NewtonOptions::default()).unwrap();
    assert!(eq.profile.l2_norm() < 1e-12);
    let st = classify_stability(&eq, &StabilityOptions::default()).unwrap();
    assert_eq!(st, Stability::Stable);
}

#[test]
fn zero_state_spectrum_is_the_growth_rates() {
    let p = GksParams::new(0.3, 0.4, 0.0, 10).unwrap();
    let eq = newton_solve(&SpectralField::zeros(10), 0.0, EquilibriumKind::Steady, &p, &NewtonOptions::default())
        .unwrap();
    let mut got: Vec<f64> = linear_spectrum(&eq).unwrap().iter().map(|z| z.re).collect();
    let mut want: Vec<f64> = (1..=10)
        .flat_map(|n| {
            let k = n as f64;
            let a = k * k + 0.4 * k.powi(3) - 0.3 * k.powi(4);
            [a, a]
        })
        .collect();
    got.sort_by(f64::total_cmp);
    want.sort_by(f64::total_cmp);
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-9 * (1.0 + w.abs()), "{g} vs {w}");
    }
}

#[test]
fn zero_branch_continues_as_zero() {
    let p = GksParams::new(2.0, 0.0, 0.0, 16).unwrap();
    let eq = newton_solve(&SpectralField::zeros(16), 0.0, EquilibriumKind::Steady, &p, &NewtonOptions::default())
        .unwrap();
    let br = continue_branch(&eq, ContinuationParameter::Nu, 0.5, &ContinuationOptions::default()).unwrap();
    assert_eq!(br.termination, Termination::Reached);
    assert!(br.points.iter().all(|e| e.profile.max_abs_coeff() == 0.0));
}

#[test]
fn continued_steady_states_solve_the_equation() {
    for (nu, mu, n) in [(0.1115, 0.0, 2), (0.35, 0.3, 1)] {
        let p = GksParams::new(nu, mu, 0.0, 32).unwrap();
        let eq = steady_state_on_branch(&p, n, &branch_following()).unwrap();
        assert!(eq.profile.l2_norm() > 1.0);
        assert!(max_abs(&residual_tw(&eq.profile, 0.0, &p)) < 1e-9);
        let st = classify_stability(&eq, &StabilityOptions::default()).unwrap();
        assert!(matches!(st, Stability::Unstable { .. }), "({nu}, {mu}) classified {st:?}");
    }
}

#[test]
fn branch_request_past_onset_is_rejected() {
    let p = GksParams::new(1.2, 0.0, 0.0, 16).unwrap();
    assert!(steady_state_on_branch(&p, 1, &branch_following()).is_err());
}

#[test]
fn travelling_wave_reflection_and_dilation() {
    let p = GksParams::new(0.1, 0.0, 0.0, 32).unwrap();
    let eq = pulse_wave(&p, 1, &PulseSeed::default()).unwrap();
    assert!(eq.speed.abs() > 0.1);
    assert!(max_abs(&residual_tw(&eq.profile, eq.speed, &p)) < 1e-9);

    // V(ξ) = −U(−ξ) travels the other way.
    let v = -&eq.profile.reflect();
    assert!(max_abs(&residual_tw(&v, -eq.speed, &p)) < 1e-9);

    // kU(kx) at ν/k² with speed kc; exact on the N/k subspace.
    let q = GksParams::new(0.1, 0.0, 0.0, 16).unwrap();
    let base = pulse_wave(&q, 1, &PulseSeed::default()).unwrap();
    let guess = base.profile.dilate(2, 32);
    let target = GksParams::new(0.025, 0.0, 0.0, 32).unwrap();
    assert!(max_abs(&residual_tw(&guess, 2.0 * base.speed, &target)) < 1e-8);
    let d = dilate_equilibrium(&base, 2, 32).unwrap();
    assert!((d.speed - 2.0 * base.speed).abs() < 1e-8);
    for n in (1..=32).step_by(2) {
        assert!(d.profile.sin(n).hypot(d.profile.cos(n)) < 1e-10, "odd mode {n} present");
    }
}
