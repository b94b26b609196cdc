//! Orthonormal Fourier-Galerkin representation on the 2π-periodic interval.
//!
//! A field with `N` modes is stored as `2N + 1` reals
//! `[u0, s1, c1, s2, c2, ..., sN, cN]` against the orthonormal basis
//! `1/√(2π)`, `sin(nx)/√π`, `cos(nx)/√π`, so Parseval holds without weights.

use std::f64::consts::TAU;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GksError, Result};

pub(crate) const INV_SQRT_PI: f64 = 0.564_189_583_547_756_3;
pub(crate) const INV_SQRT_TAU: f64 = 0.398_942_280_401_432_7;

/// Slot index of `sin(nx)` for `n >= 1`.
#[inline]
pub fn sin_slot(n: usize) -> usize {
    2 * n - 1
}

/// Slot index of `cos(nx)` for `n >= 1`.
#[inline]
pub fn cos_slot(n: usize) -> usize {
    2 * n
}

/// Wavenumber carried by a coefficient slot.
#[inline]
pub fn slot_mode(slot: usize) -> usize {
    slot.div_ceil(2)
}

/// Value of the orthonormal basis function in `slot` at `x`.
pub fn basis_value(slot: usize, x: f64) -> f64 {
    if slot == 0 {
        return INV_SQRT_TAU;
    }
    let n = slot_mode(slot) as f64;
    if slot % 2 == 1 {
        (n * x).sin() * INV_SQRT_PI
    } else {
        (n * x).cos() * INV_SQRT_PI
    }
}

/// First derivative of the basis function in `slot` at `x`.
pub fn basis_derivative(slot: usize, x: f64) -> f64 {
    if slot == 0 {
        return 0.0;
    }
    let n = slot_mode(slot) as f64;
    if slot % 2 == 1 {
        n * (n * x).cos() * INV_SQRT_PI
    } else {
        -n * (n * x).sin() * INV_SQRT_PI
    }
}

/// Equation parameters `(ν, μ, δ)` together with the truncation `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GksParams {
    pub nu: f64,
    pub mu: f64,
    pub delta: f64,
    pub modes: usize,
}

impl GksParams {
    pub fn new(nu: f64, mu: f64, delta: f64, modes: usize) -> Result<Self> {
        let p = GksParams {
            nu,
            mu,
            delta,
            modes,
        };
        p.validate()?;
        Ok(p)
    }

    /// Uses the smallest of 32, 64, 128 modes that resolves six times the
    /// number of unstable wavenumbers.
    pub fn with_default_modes(nu: f64, mu: f64, delta: f64) -> Result<Self> {
        check_coefficients(nu, mu, delta)?;
        let l = unstable_wavenumbers(nu, mu);
        let modes = [32, 64, 128]
            .into_iter()
            .find(|&n| n >= 6 * l)
            .ok_or_else(|| {
                GksError::InvalidParameter(format!(
                    "nu = {nu} has {l} unstable wavenumbers; more than 128 modes required"
                ))
            })?;
        Self::new(nu, mu, delta, modes)
    }

    pub fn validate(&self) -> Result<()> {
        check_coefficients(self.nu, self.mu, self.delta)?;
        let l = self.unstable_count();
        if self.modes < 2 * l + 2 {
            return Err(GksError::InvalidParameter(format!(
                "{} modes cannot resolve {} unstable wavenumbers (need at least {})",
                self.modes,
                l,
                2 * l + 2
            )));
        }
        Ok(())
    }

    pub fn unstable_count(&self) -> usize {
        unstable_wavenumbers(self.nu, self.mu)
    }

    /// Size of the unstable block: mean mode plus a sine/cosine pair per
    /// unstable wavenumber.
    pub fn unstable_dim(&self) -> usize {
        2 * self.unstable_count() + 1
    }

    pub fn critical_wavenumber(&self) -> f64 {
        (self.mu + (self.mu * self.mu + 4.0 * self.nu).sqrt()) / (2.0 * self.nu)
    }

    /// Real growth rate `n² + μn³ − νn⁴`.
    #[inline]
    pub fn growth_rate(&self, n: usize) -> f64 {
        let k = n as f64;
        let k2 = k * k;
        k2 + self.mu * k2 * k - self.nu * k2 * k2
    }

    /// Dispersive frequency `δn³`.
    #[inline]
    pub fn dispersion(&self, n: usize) -> f64 {
        let k = n as f64;
        self.delta * k * k * k
    }

    pub fn dim(&self) -> usize {
        2 * self.modes + 1
    }
}

fn check_coefficients(nu: f64, mu: f64, delta: f64) -> Result<()> {
    if !(nu.is_finite() && mu.is_finite() && delta.is_finite()) {
        return Err(GksError::NonFinite(format!(
            "nu = {nu}, mu = {mu}, delta = {delta}"
        )));
    }
    if nu <= 0.0 {
        return Err(GksError::InvalidParameter(format!(
            "nu must be positive, got {nu}"
        )));
    }
    if mu < 0.0 {
        return Err(GksError::InvalidParameter(format!(
            "mu must be non-negative, got {mu}"
        )));
    }
    Ok(())
}

// A wavenumber sitting exactly on the neutral curve (for instance ν = 0.01,
// k = 10) is counted as unstable, so the tolerance absorbs rounding in the
// square root.
fn unstable_wavenumbers(nu: f64, mu: f64) -> usize {
    let kc = (mu + (mu * mu + 4.0 * nu).sqrt()) / (2.0 * nu);
    (kc + 1e-9).floor() as usize
}

/// Fourier symbol `λ(k) = k² + μk²|k| − νk⁴ + iδk³`.
pub fn linear_symbol(k: f64, p: &GksParams) -> Complex64 {
    let k2 = k * k;
    Complex64::new(
        k2 + p.mu * k2 * k.abs() - p.nu * k2 * k2,
        p.delta * k2 * k,
    )
}

/// Number `l` of linearly unstable (or neutral) wavenumbers `1..=l`.
pub fn count_unstable(p: &GksParams) -> usize {
    p.unstable_count()
}

/// L², first- and second-derivative norms of a field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l2: f64,
    pub dx: f64,
    pub dxx: f64,
}

impl Norms {
    pub fn h1(&self) -> f64 {
        (self.l2 * self.l2 + self.dx * self.dx).sqrt()
    }

    pub fn h2(&self) -> f64 {
        (self.l2 * self.l2 + self.dx * self.dx + self.dxx * self.dxx).sqrt()
    }
}

/// Truncated Fourier series in the orthonormal sine/cosine basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralField {
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(modes: usize) -> Self {
        SpectralField {
            coeffs: vec![0.0; 2 * modes + 1],
        }
    }

    pub fn from_coeffs(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() % 2 == 0 {
            return Err(GksError::DimensionMismatch(format!(
                "coefficient vector must have odd length 2N+1, got {}",
                coeffs.len()
            )));
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(GksError::NonFinite(format!("coefficient {i} is not finite")));
        }
        Ok(SpectralField { coeffs })
    }

    /// Projects a periodic function by trapezoidal quadrature on `4N + 4`
    /// nodes (exact for trigonometric polynomials of degree at most `3N + 3`).
    pub fn project<F: Fn(f64) -> f64>(modes: usize, f: F) -> Self {
        let m = 4 * modes + 4;
        let samples: Vec<f64> = (0..m).map(|j| f(TAU * j as f64 / m as f64)).collect();
        Self::from_samples(modes, &samples)
    }

    /// Projects equispaced samples `x_j = 2πj/M` onto the first `modes` modes.
    pub fn from_samples(modes: usize, samples: &[f64]) -> Self {
        let m = samples.len();
        let h = TAU / m as f64;
        let mut out = Self::zeros(modes);
        out.coeffs[0] = samples.iter().sum::<f64>() * h * INV_SQRT_TAU;
        for n in 1..=modes {
            let (mut s, mut c) = (0.0, 0.0);
            for (j, v) in samples.iter().enumerate() {
                let (sn, cn) = (n as f64 * h * j as f64).sin_cos();
                s += v * sn;
                c += v * cn;
            }
            out.coeffs[sin_slot(n)] = s * h * INV_SQRT_PI;
            out.coeffs[cos_slot(n)] = c * h * INV_SQRT_PI;
        }
        out
    }

    /// Single orthonormal mode `sin(nx)/√π` scaled by `amplitude`.
    pub fn sine_mode(modes: usize, n: usize, amplitude: f64) -> Self {
        let mut u = Self::zeros(modes);
        u.coeffs[sin_slot(n)] = amplitude;
        u
    }

    pub fn modes(&self) -> usize {
        (self.coeffs.len() - 1) / 2
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn sin(&self, n: usize) -> f64 {
        self.coeffs[sin_slot(n)]
    }

    pub fn cos(&self, n: usize) -> f64 {
        self.coeffs[cos_slot(n)]
    }

    pub fn set_mean(&mut self, v: f64) {
        self.coeffs[0] = v;
    }

    pub fn set_sin(&mut self, n: usize, v: f64) {
        self.coeffs[sin_slot(n)] = v;
    }

    pub fn set_cos(&mut self, n: usize, v: f64) {
        self.coeffs[cos_slot(n)] = v;
    }

    /// Copy with the truncation changed to `modes`, zero-padding or cutting.
    pub fn resized(&self, modes: usize) -> Self {
        let mut out = Self::zeros(modes);
        let k = out.coeffs.len().min(self.coeffs.len());
        out.coeffs[..k].copy_from_slice(&self.coeffs[..k]);
        out
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_derivative(x, 0)
    }

    /// Value of the `order`-th derivative at `x`.
    pub fn eval_derivative(&self, x: f64, order: u32) -> f64 {
        let mut acc = if order == 0 {
            self.coeffs[0] * INV_SQRT_TAU
        } else {
            0.0
        };
        let (s1, c1) = x.sin_cos();
        let (mut sn, mut cn) = (s1, c1);
        for n in 1..=self.modes() {
            let k = n as f64;
            let (a, b) = (self.sin(n), self.cos(n));
            // d^r/dx^r of a sin + b cos cycles through four phases.
            let kr = k.powi(order as i32);
            let term = match order % 4 {
                0 => a * sn + b * cn,
                1 => a * cn - b * sn,
                2 => -a * sn - b * cn,
                _ => -a * cn + b * sn,
            };
            acc += kr * term * INV_SQRT_PI;
            let next_s = sn * c1 + cn * s1;
            cn = cn * c1 - sn * s1;
            sn = next_s;
        }
        acc
    }

    /// Samples on `points` equispaced nodes `x_j = 2πj/points`.
    pub fn to_grid(&self, points: usize) -> Vec<f64> {
        (0..points)
            .map(|j| self.eval(TAU * j as f64 / points as f64))
            .collect()
    }

    /// Spectral derivative of the given order.
    pub fn derivative(&self, order: u32) -> Self {
        let mut out = Self::zeros(self.modes());
        if order == 0 {
            out.coeffs.copy_from_slice(&self.coeffs);
            return out;
        }
        for n in 1..=self.modes() {
            let kr = (n as f64).powi(order as i32);
            let (a, b) = (self.sin(n), self.cos(n));
            let (sa, sb) = match order % 4 {
                0 => (a, b),
                1 => (-b, a),
                2 => (-a, -b),
                _ => (b, -a),
            };
            out.set_sin(n, kr * sa);
            out.set_cos(n, kr * sb);
        }
        out
    }

    /// Periodic Hilbert transform: `H[sin] = −cos`, `H[cos] = sin`, mean removed.
    pub fn hilbert(&self) -> Self {
        let mut out = Self::zeros(self.modes());
        for n in 1..=self.modes() {
            out.set_sin(n, self.cos(n));
            out.set_cos(n, -self.sin(n));
        }
        out
    }

    /// The field shifted right by `a`, i.e. `x ↦ u(x − a)`.
    pub fn translate(&self, a: f64) -> Self {
        let mut out = self.clone();
        for n in 1..=self.modes() {
            let (sa, ca) = (n as f64 * a).sin_cos();
            let (s, c) = (self.sin(n), self.cos(n));
            out.set_sin(n, s * ca + c * sa);
            out.set_cos(n, c * ca - s * sa);
        }
        out
    }

    /// `x ↦ u(−x)`.
    pub fn reflect(&self) -> Self {
        let mut out = self.clone();
        for n in 1..=self.modes() {
            out.set_sin(n, -self.sin(n));
        }
        out
    }

    /// `x ↦ k·u(kx)` on `modes` modes; harmonics beyond `modes` are dropped.
    pub fn dilate(&self, k: usize, modes: usize) -> Self {
        assert!(k >= 1, "dilation factor must be positive");
        let kf = k as f64;
        let mut out = SpectralField::zeros(modes);
        out.set_mean(kf * self.mean());
        for n in 1..=self.modes() {
            if k * n > modes {
                break;
            }
            out.set_sin(k * n, kf * self.sin(n));
            out.set_cos(k * n, kf * self.cos(n));
        }
        out
    }

    pub fn norms(&self) -> Norms {
        let mut l2 = self.coeffs[0] * self.coeffs[0];
        let (mut dx, mut dxx) = (0.0, 0.0);
        for n in 1..=self.modes() {
            let e = self.sin(n).powi(2) + self.cos(n).powi(2);
            let k2 = (n * n) as f64;
            l2 += e;
            dx += k2 * e;
            dxx += k2 * k2 * e;
        }
        Norms {
            l2: l2.sqrt(),
            dx: dx.sqrt(),
            dxx: dxx.sqrt(),
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// L² inner product.
    pub fn dot(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn axpy(&mut self, a: f64, x: &Self) {
        for (y, xi) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *y += a * xi;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for c in &mut self.coeffs {
            *c *= a;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }
}

impl Add<&SpectralField> for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub<&SpectralField> for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl AddAssign<&SpectralField> for SpectralField {
    fn add_assign(&mut self, rhs: &SpectralField) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&SpectralField> for SpectralField {
    fn sub_assign(&mut self, rhs: &SpectralField) {
        self.axpy(-1.0, rhs);
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, a: f64) -> SpectralField {
        let mut out = self.clone();
        out.scale(a);
        out
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self * -1.0
    }
}

/// Galerkin projection of `a · b_x` onto the first `N` modes of `out`.
///
/// Real-form convolution sums over `j ± k = n`; products that land above the
/// truncation are discarded. All three slices share the same length.
pub fn advective_product_into(a: &[f64], b: &[f64], out: &mut [f64]) {
    let len = a.len();
    debug_assert!(b.len() == len && out.len() == len);
    let modes = (len - 1) / 2;
    let mut as_ = vec![0.0; modes + 1];
    let mut ac = vec![0.0; modes + 1];
    let mut bs = vec![0.0; modes + 1];
    let mut bc = vec![0.0; modes + 1];
    for k in 1..=modes {
        let kf = k as f64;
        as_[k] = a[sin_slot(k)];
        ac[k] = a[cos_slot(k)];
        // b_x = Σ k (b^s cos kx − b^c sin kx)
        bs[k] = -kf * b[cos_slot(k)];
        bc[k] = kf * b[sin_slot(k)];
    }
    let a_mean = a[0] * INV_SQRT_TAU;
    let half = 0.5 * INV_SQRT_PI;

    let mut mean = 0.0;
    for j in 1..=modes {
        mean += as_[j] * bs[j] + ac[j] * bc[j];
    }
    out[0] = mean * INV_SQRT_TAU;

    for n in 1..=modes {
        let (mut s, mut c) = (0.0, 0.0);
        for j in 1..n {
            let k = n - j;
            s += as_[j] * bc[k] + ac[j] * bs[k];
            c += ac[j] * bc[k] - as_[j] * bs[k];
        }
        for k in 1..=(modes - n) {
            let j = k + n;
            // j − k = n
            s += as_[j] * bc[k] - ac[j] * bs[k];
            c += as_[j] * bs[k] + ac[j] * bc[k];
            // k' − j' = n with j' = k, k' = j
            s -= as_[k] * bc[j] - ac[k] * bs[j];
            c += as_[k] * bs[j] + ac[k] * bc[j];
        }
        out[sin_slot(n)] = half * s + a_mean * bs[n];
        out[cos_slot(n)] = half * c + a_mean * bc[n];
    }
}

/// `P_N(a · b_x)`.
pub fn advective_product(a: &SpectralField, b: &SpectralField) -> SpectralField {
    assert_eq!(a.len(), b.len(), "fields must share a truncation");
    let mut out = SpectralField::zeros(a.modes());
    advective_product_into(&a.coeffs, &b.coeffs, &mut out.coeffs);
    out
}

/// Galerkin coefficients of `u · u_x`. The mean slot is exactly zero.
pub fn nonlinear_galerkin(u: &SpectralField) -> SpectralField {
    let mut out = advective_product(u, u);
    out.coeffs[0] = 0.0;
    out
}

/// Directional derivative of `P_N(u u_x)` along `w`: `P_N(u w_x + w u_x)`.
pub fn linearised_nonlinearity(u: &SpectralField, w: &SpectralField) -> SpectralField {
    let mut out = advective_product(u, w);
    out += &advective_product(w, u);
    out.coeffs[0] = 0.0;
    out
}

/// Equispaced nodes `x_j = 2πj/points`.
/// Eigenvalues of a real square matrix.
///
/// nalgebra's Schur sweep can stall on closed-loop blocks with repeated
/// eigenvalues, so it runs with an iteration cap and falls back to a
/// Francis double-shift QR with exceptional shifts on the Hessenberg form.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(GksError::DimensionMismatch(format!("{}x{} is not square", n, m.ncols())));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if let Some(s) = m.clone().try_schur(f64::EPSILON, 1_000) {
        return Ok(s.complex_eigenvalues().iter().copied().collect());
    }
    hessenberg_qr(m.clone().hessenberg().h()).ok_or(GksError::EigenFailed(n))
}

/// Eigenvalues of an upper Hessenberg matrix (EISPACK `hqr`).
fn hessenberg_qr(mut a: DMatrix<f64>) -> Option<Vec<Complex64>> {
    let n = a.nrows();
    let mut ev = vec![Complex64::new(0.0, 0.0); n];
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[(i, j)].abs();
        }
    }
    let mut t = 0.0;
    let mut top = n;
    while top > 0 {
        let nn = top - 1;
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 1 {
                let mut s = a[(l - 1, l - 1)].abs() + a[(l, l)].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[(l, l - 1)].abs() <= f64::EPSILON * s {
                    a[(l, l - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[(nn, nn)];
            if l == nn {
                ev[nn] = Complex64::new(x + t, 0.0);
                top -= 1;
                break;
            }
            let mut y = a[(nn - 1, nn - 1)];
            let mut w = a[(nn, nn - 1)] * a[(nn - 1, nn)];
            if l == nn - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    let z = p + z.copysign(p);
                    ev[nn - 1] = Complex64::new(x + z, 0.0);
                    ev[nn] = Complex64::new(if z != 0.0 { x - w / z } else { x + z }, 0.0);
                } else {
                    ev[nn - 1] = Complex64::new(x + p, -z);
                    ev[nn] = Complex64::new(x + p, z);
                }
                top -= 2;
                break;
            }
            if its == 60 {
                return None;
            }
            if its == 10 || its == 20 {
                t += x;
                for i in 0..=nn {
                    a[(i, i)] -= x;
                }
                let s = a[(nn, nn - 1)].abs() + a[(nn - 1, nn - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;

            let mut m = nn - 2;
            let (mut p, mut q, mut r);
            loop {
                let z = a[(m, m)];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / a[(m + 1, m)] + a[(m, m + 1)];
                q = a[(m + 1, m + 1)] - z - rr - ss;
                r = a[(m + 2, m + 1)];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[(m, m - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[(m - 1, m - 1)].abs() + z.abs() + a[(m + 1, m + 1)].abs());
                if u <= f64::EPSILON * v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nn {
                a[(i, i - 2)] = 0.0;
                if i != m + 2 {
                    a[(i, i - 3)] = 0.0;
                }
            }
            for k in m..nn {
                if k != m {
                    p = a[(k, k - 1)];
                    q = a[(k + 1, k - 1)];
                    r = if k != nn - 1 { a[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s == 0.0 {
                    continue;
                }
                if k == m {
                    if l != m {
                        a[(k, k - 1)] = -a[(k, k - 1)];
                    }
                } else {
                    a[(k, k - 1)] = -s * x;
                }
                p += s;
                x = p / s;
                y = q / s;
                let z = r / s;
                q /= p;
                r /= p;
                for j in k..=nn {
                    let mut pj = a[(k, j)] + q * a[(k + 1, j)];
                    if k != nn - 1 {
                        pj += r * a[(k + 2, j)];
                        a[(k + 2, j)] -= pj * z;
                    }
                    a[(k + 1, j)] -= pj * y;
                    a[(k, j)] -= pj * x;
                }
                for i in l..=nn.min(k + 3) {
                    let mut pi = x * a[(i, k)] + y * a[(i, k + 1)];
                    if k != nn - 1 {
                        pi += z * a[(i, k + 2)];
                        a[(i, k + 2)] -= pi * r;
                    }
                    a[(i, k + 1)] -= pi * q;
                    a[(i, k)] -= pi;
                }
            }
        }
    }
    Some(ev)
}

pub fn grid_points(points: usize) -> Vec<f64> {
    (0..points).map(|j| TAU * j as f64 / points as f64).collect()
}
