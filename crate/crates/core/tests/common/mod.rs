//! Independent reference computations shared by the integration suites.
#![allow(dead_code)]

use std::f64::consts::{PI, TAU};

use gks_core::SpectralField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Coefficients uniform in [-1, 1] on every slot.
pub fn random_field(rng: &mut ChaCha8Rng, modes: usize) -> SpectralField {
    let c = (0..2 * modes + 1).map(|_| rng.random_range(-1.0..1.0)).collect();
    SpectralField::from_coeffs(c).unwrap()
}

/// Point values of `u` and `u_x` from the raw series, without going through
/// the library's evaluation routines.
pub fn values_and_slopes(u: &SpectralField, x: f64) -> (f64, f64) {
    let c = u.coeffs();
    let n_modes = (c.len() - 1) / 2;
    let mut v = c[0] / TAU.sqrt();
    let mut d = 0.0;
    for n in 1..=n_modes {
        let k = n as f64;
        let (s, co) = (c[2 * n - 1], c[2 * n]);
        v += (s * (k * x).sin() + co * (k * x).cos()) / PI.sqrt();
        d += k * (s * (k * x).cos() - co * (k * x).sin()) / PI.sqrt();
    }
    (v, d)
}

/// Collocation product `a · b_x` on `M > 3N` points followed by projection
/// onto modes `≤ N` (the 2/3 rule: no aliased contribution survives).
pub fn collocation_advective(a: &SpectralField, b: &SpectralField) -> Vec<f64> {
    let n_modes = a.modes();
    let m = 3 * n_modes + 3;
    let h = TAU / m as f64;
    let prod: Vec<f64> = (0..m)
        .map(|j| {
            let x = h * j as f64;
            values_and_slopes(a, x).0 * values_and_slopes(b, x).1
        })
        .collect();
    let mut out = vec![0.0; 2 * n_modes + 1];
    out[0] = prod.iter().sum::<f64>() * h / TAU.sqrt();
    for n in 1..=n_modes {
        let (mut s, mut c) = (0.0, 0.0);
        for (j, v) in prod.iter().enumerate() {
            let x = h * j as f64;
            s += v * (n as f64 * x).sin();
            c += v * (n as f64 * x).cos();
        }
        out[2 * n - 1] = s * h / PI.sqrt();
        out[2 * n] = c * h / PI.sqrt();
    }
    out
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `max |a − b| / max |b|`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    max_abs(&diff) / max_abs(b).max(f64::MIN_POSITIVE)
}
