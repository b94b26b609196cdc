mod common;

use gks_core::spectral::{advective_product, linearised_nonlinearity};
use gks_core::{nonlinear_galerkin, SpectralField};
use proptest::prelude::*;

use common::{collocation_advective, random_field, relative_error, rng};

#[test]
fn galerkin_sums_match_dealiased_collocation() {
    let mut r = rng(7);
    for &n in &[8usize, 16, 32] {
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let u = random_field(&mut r, n);
            let g = nonlinear_galerkin(&u);
            worst = worst.max(relative_error(g.coeffs(), &collocation_advective(&u, &u)));
        }
        assert!(worst < 1e-12, "N = {n}: worst relative error {worst:e}");
    }
}

#[test]
fn adjoint_products_match_dealiased_collocation() {
    let mut r = rng(11);
    for &n in &[8usize, 16, 32] {
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let u = random_field(&mut r, n);
            let p = random_field(&mut r, n);
            let g = advective_product(&u, &p);
            worst = worst.max(relative_error(g.coeffs(), &collocation_advective(&u, &p)));
        }
        assert!(worst < 1e-12, "N = {n}: worst relative error {worst:e}");
    }
}

#[test]
fn linearisation_matches_central_difference() {
    let mut r = rng(3);
    let u = random_field(&mut r, 12);
    let w = random_field(&mut r, 12);
    let eps = 1e-6;
    let plus = nonlinear_galerkin(&(&u + &(&w * eps)));
    let minus = nonlinear_galerkin(&(&u - &(&w * eps)));
    let fd: Vec<f64> = plus
        .coeffs()
        .iter()
        .zip(minus.coeffs())
        .map(|(a, b)| (a - b) / (2.0 * eps))
        .collect();
    let exact = linearised_nonlinearity(&u, &w);
    assert!(relative_error(exact.coeffs(), &fd) < 1e-8);
}

fn field_strategy(modes: usize) -> impl Strategy<Value = SpectralField> {
    prop::collection::vec(-2.0f64..2.0, 2 * modes + 1)
        .prop_map(|c| SpectralField::from_coeffs(c).unwrap())
}

proptest! {
    #[test]
    fn nonlinearity_conserves_energy_and_mean(u in field_strategy(10)) {
        let g = nonlinear_galerkin(&u);
        prop_assert_eq!(g.mean(), 0.0);
        // <u, u u_x> = 0 on the periodic interval.
        let scale = u.l2_norm().powi(3).max(1.0);
        prop_assert!(u.dot(&g).abs() < 1e-12 * scale);
    }

    #[test]
    fn advection_is_skew(u in field_strategy(8), p in field_strategy(8), q in field_strategy(8)) {
        // <q, u p_x> + <p, u q_x> + <p q, u_x> = 0 by parts.
        let a = q.dot(&advective_product(&u, &p));
        let b = p.dot(&advective_product(&u, &q));
        let c = {
            let m = 200;
            let h = std::f64::consts::TAU / m as f64;
            (0..m).map(|j| {
                let x = h * j as f64;
                p.eval(x) * q.eval(x) * u.eval_derivative(x, 1)
            }).sum::<f64>() * h
        };
        prop_assert!((a + b + c).abs() < 1e-9 * (1.0 + a.abs() + b.abs()));
    }

    #[test]
    fn translation_commutes_with_nonlinearity(u in field_strategy(8), shift in 0.0f64..std::f64::consts::TAU) {
        let lhs = nonlinear_galerkin(&u.translate(shift));
        let rhs = nonlinear_galerkin(&u).translate(shift);
        prop_assert!(relative_error(lhs.coeffs(), rhs.coeffs()) < 1e-11);
    }
}
