//! Actuators, pole-placement gains and the closed-loop control law.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlLaw, Trajectory};
use crate::error::{GksError, Result};
use crate::spectral::{basis_derivative, basis_value, slot_mode, GksParams, SpectralField};

/// Actuator matrices with condition number above this are rejected.
pub const MAX_ACTUATOR_CONDITION: f64 = 1e10;

/// Default minimum circular distance between two actuators.
pub const MIN_SEPARATION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActuatorShape {
    /// `b_i(x) = δ(x − x_i)`.
    Point,
    /// Periodised Gaussian of standard deviation `width` with unit mass.
    Smoothed { width: f64 },
}

impl ActuatorShape {
    /// Fourier multiplier of the shape at wavenumber `n`.
    pub fn attenuation(&self, n: usize) -> f64 {
        match *self {
            ActuatorShape::Point => 1.0,
            ActuatorShape::Smoothed { width } => {
                let k = n as f64;
                (-0.5 * k * k * width * width).exp()
            }
        }
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorSet {
    positions: Vec<f64>,
    shape: ActuatorShape,
}

impl ActuatorSet {
    /// Positions must lie in `(0, 2π)` and be pairwise separated.
    pub fn new(positions: Vec<f64>, shape: ActuatorShape) -> Result<Self> {
        if positions.is_empty() {
            return Err(GksError::InvalidParameter(
                "at least one actuator is required".into(),
            ));
        }
        for &x in &positions {
            if !x.is_finite() {
                return Err(GksError::NonFinite(format!("actuator position {x}")));
            }
            if x <= 0.0 || x >= TAU {
                return Err(GksError::InvalidParameter(format!(
                    "actuator position {x} outside (0, 2π)"
                )));
            }
        }
        for i in 0..positions.len() {
            for j in 0..i {
                if circular_distance(positions[i], positions[j]) < MIN_SEPARATION {
                    return Err(GksError::InvalidParameter(format!(
                        "actuators {j} and {i} overlap ({} and {})",
                        positions[j], positions[i]
                    )));
                }
            }
        }
        if let ActuatorShape::Smoothed { width } = shape {
            if !(width > 0.0 && width.is_finite()) {
                return Err(GksError::InvalidParameter(format!(
                    "smoothed actuator width must be positive, got {width}"
                )));
            }
        }
        Ok(ActuatorSet { positions, shape })
    }

    /// `m` actuators at the cell centres `(2i − 1)π/m`.
    pub fn equidistant(m: usize, shape: ActuatorShape) -> Result<Self> {
        let positions = (1..=m).map(|i| (2 * i - 1) as f64 * PI / m as f64).collect();
        Self::new(positions, shape)
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn shape(&self) -> ActuatorShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Galerkin coefficient of actuator `i` in `slot`.
    pub fn entry(&self, i: usize, slot: usize) -> f64 {
        basis_value(slot, self.positions[i]) * self.shape.attenuation(slot_mode(slot))
    }

    /// Derivative of [`Self::entry`] with respect to the position `x_i`.
    pub fn entry_derivative(&self, i: usize, slot: usize) -> f64 {
        basis_derivative(slot, self.positions[i]) * self.shape.attenuation(slot_mode(slot))
    }

    /// Full `(2N + 1) × m` input matrix.
    pub fn input_matrix(&self, modes: usize) -> DMatrix<f64> {
        DMatrix::from_fn(2 * modes + 1, self.len(), |slot, i| self.entry(i, slot))
    }

    /// Value at `x_i` of a field seen through the actuator shape,
    /// i.e. `⟨b_i, p⟩`.
    pub fn sample(&self, i: usize, p: &SpectralField) -> f64 {
        p.coeffs()
            .iter()
            .enumerate()
            .map(|(slot, c)| c * self.entry(i, slot))
            .sum()
    }

    /// `∂/∂x_i ⟨b_i, p⟩`, the smoothed slope of `p` at `x_i`.
    pub fn sample_slope(&self, i: usize, p: &SpectralField) -> f64 {
        p.coeffs()
            .iter()
            .enumerate()
            .map(|(slot, c)| c * self.entry_derivative(i, slot))
            .sum()
    }
}

/// The linear pair restricted to the unstable block together with the full
/// input matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlMatrices {
    /// `n_u × n_u`.
    pub a_u: DMatrix<f64>,
    /// `n_u × m`.
    pub b_u: DMatrix<f64>,
    /// `(2N + 1) × m`.
    pub b: DMatrix<f64>,
    /// Growth rates of every slot (diagonal of the full linear operator).
    pub a_diag: Vec<f64>,
}

impl ControlMatrices {
    pub fn unstable_dim(&self) -> usize {
        self.a_u.nrows()
    }

    pub fn num_controls(&self) -> usize {
        self.b.ncols()
    }
}

/// Growth rate of each slot of the full linear operator (dispersion excluded).
pub fn slot_growth_rates(p: &GksParams) -> Vec<f64> {
    (0..p.dim())
        .map(|slot| {
            if slot == 0 {
                0.0
            } else {
                p.growth_rate(slot_mode(slot))
            }
        })
        .collect()
}

pub fn build_matrices(p: &GksParams, actuators: &ActuatorSet) -> ControlMatrices {
    let n_u = p.unstable_dim();
    let a_diag = slot_growth_rates(p);
    let b = actuators.input_matrix(p.modes);
    ControlMatrices {
        a_u: DMatrix::from_diagonal(&DVector::from_column_slice(&a_diag[..n_u])),
        b_u: b.rows(0, n_u).into_owned(),
        b,
        a_diag,
    }
}

/// Target eigenvalue for one entry of the unstable block.
///
/// The constant mode goes to −1; unstable entries are reflected (scaled by
/// `10δ` when dispersion is present); neutral entries also go to −1 and stable
/// ones are kept.
pub fn target_rule(lambda: f64, constant_mode: bool, delta: f64) -> f64 {
    if constant_mode {
        return -1.0;
    }
    let scale = lambda.abs().max(1.0);
    if lambda.abs() <= 1e-9 * scale {
        -1.0
    } else if lambda > 0.0 {
        if delta > 0.0 {
            -10.0 * delta * lambda
        } else {
            -lambda
        }
    } else {
        lambda
    }
}

/// Target spectrum for the scalar unstable block.
pub fn target_spectrum(p: &GksParams) -> Vec<Complex64> {
    let rates = slot_growth_rates(p);
    (0..p.unstable_dim())
        .map(|slot| Complex64::new(target_rule(rates[slot], slot == 0, p.delta), 0.0))
        .collect()
}

/// Lyapunov decay margin `½ sup|ū_x| + 0.1` required for non-uniform targets.
pub fn lyapunov_margin(target: &Target) -> f64 {
    if target.is_uniform() {
        0.0
    } else {
        0.5 * target.max_slope() + 0.1
    }
}

/// Shifts every target with `Re λ > −a_min` left by `a_min`. A shift rather
/// than a clamp keeps distinct targets distinct, which matters when there
/// are fewer actuators than unstable slots.
pub fn enforce_margin(targets: &mut [Complex64], a_min: f64) {
    for t in targets {
        if t.re > -a_min {
            t.re -= a_min;
        }
    }
}

/// Placement method actually used for a gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementMethod {
    /// Square `B_u`: `K = B_u⁻¹(Λ* − A_u)`.
    Inverse,
    /// More actuators than unstable slots: minimum-norm `K = B_u⁺(Λ* − A_u)`.
    PseudoInverse,
    /// Fewer actuators than unstable slots: eigenvectors chosen for
    /// conditioning inside the admissible subspaces.
    Eigenstructure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackGain {
    /// `m × n_u`.
    pub k: DMatrix<f64>,
    pub targets: Vec<Complex64>,
    /// Closed-loop eigenvectors of `A_u + B_u K` (columns, unit length).
    pub eigenvectors: DMatrix<f64>,
    /// Condition number of `eigenvectors`.
    pub eigenvector_condition: f64,
    /// Condition number of `B_u`.
    pub input_condition: f64,
    pub method: PlacementMethod,
}

fn singular_values_sorted(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values_sorted(m).first().copied().unwrap_or(0.0)
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = singular_values_sorted(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Real matrix with the given spectrum: diagonal entries for real targets,
/// 2×2 rotation blocks for conjugate pairs.
pub fn real_spectrum_matrix(targets: &[Complex64]) -> Result<DMatrix<f64>> {
    let n = targets.len();
    let mut m = DMatrix::zeros(n, n);
    let mut i = 0;
    while i < n {
        let t = targets[i];
        if t.im == 0.0 {
            m[(i, i)] = t.re;
            i += 1;
        } else {
            let pair = targets.get(i + 1).copied();
            match pair {
                Some(q) if (q - t.conj()).norm() <= 1e-12 * t.norm().max(1.0) => {
                    m[(i, i)] = t.re;
                    m[(i + 1, i + 1)] = t.re;
                    m[(i, i + 1)] = t.im;
                    m[(i + 1, i)] = -t.im;
                    i += 2;
                }
                _ => {
                    return Err(GksError::InvalidParameter(format!(
                        "complex target {t} is not followed by its conjugate"
                    )))
                }
            }
        }
    }
    Ok(m)
}

pub(crate) fn check_input_matrix(b_u: &DMatrix<f64>) -> Result<f64> {
    let s = singular_values_sorted(b_u);
    let hi = s.first().copied().unwrap_or(0.0);
    let lo = s.last().copied().unwrap_or(0.0);
    if hi == 0.0 || lo <= 1e-13 * hi {
        return Err(GksError::RankDeficient(format!(
            "smallest singular value {lo:e} of {}×{} actuator block (largest {hi:e})",
            b_u.nrows(),
            b_u.ncols()
        )));
    }
    let cond = hi / lo;
    if cond > MAX_ACTUATOR_CONDITION {
        return Err(GksError::IllConditioned { condition: cond });
    }
    Ok(cond)
}

fn unit_columns(m: &mut DMatrix<f64>) {
    for mut c in m.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= n;
        }
    }
}

/// Pole placement on the unstable block so that `A_u + B_u K` has spectrum
/// `targets`.
pub fn place_poles(
    a_u: &DMatrix<f64>,
    b_u: &DMatrix<f64>,
    targets: &[Complex64],
) -> Result<FeedbackGain> {
    let n = a_u.nrows();
    if a_u.ncols() != n || b_u.nrows() != n || targets.len() != n {
        return Err(GksError::DimensionMismatch(format!(
            "A_u is {}×{}, B_u is {}×{}, {} targets",
            a_u.nrows(),
            a_u.ncols(),
            b_u.nrows(),
            b_u.ncols(),
            targets.len()
        )));
    }
    if targets.iter().any(|t| !t.re.is_finite() || !t.im.is_finite()) {
        return Err(GksError::NonFinite("target eigenvalue".into()));
    }
    let m = b_u.ncols();
    let input_condition = check_input_matrix(b_u)?;
    if m >= n {
        let lambda = real_spectrum_matrix(targets)?;
        let rhs = &lambda - a_u;
        let (k, method) = if m == n {
            let k = b_u
                .clone()
                .lu()
                .solve(&rhs)
                .ok_or(GksError::IllConditioned {
                    condition: f64::INFINITY,
                })?;
            (k, PlacementMethod::Inverse)
        } else {
            let bbt = b_u * b_u.transpose();
            let y = bbt.lu().solve(&rhs).ok_or(GksError::IllConditioned {
                condition: f64::INFINITY,
            })?;
            (b_u.transpose() * y, PlacementMethod::PseudoInverse)
        };
        // Closed loop equals the spectrum matrix; its eigenvectors are the
        // coordinate axes (or 2×2 rotation planes).
        let mut x = DMatrix::identity(n, n);
        unit_columns(&mut x);
        return Ok(FeedbackGain {
            k,
            targets: targets.to_vec(),
            eigenvector_condition: 1.0,
            eigenvectors: x,
            input_condition,
            method,
        });
    }
    eigenstructure_assignment(a_u, b_u, targets, input_condition)
}

/// Orthonormal basis of `{x : (A − λI)x ∈ range(B)}`.
fn admissible_subspace(a: &DMatrix<f64>, u0: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let m = u0.ncols();
    let proj = DMatrix::identity(n, n) - u0 * u0.transpose();
    let shifted = a - DMatrix::identity(n, n) * lambda;
    let op = proj * shifted;
    let svd = op.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].partial_cmp(&svd.singular_values[j]).unwrap());
    let mut basis = DMatrix::zeros(n, m);
    for (c, &row) in order.iter().take(m).enumerate() {
        basis.set_column(c, &v_t.row(row).transpose());
    }
    basis
}

fn eigenstructure_assignment(
    a_u: &DMatrix<f64>,
    b_u: &DMatrix<f64>,
    targets: &[Complex64],
    input_condition: f64,
) -> Result<FeedbackGain> {
    let n = a_u.nrows();
    let m = b_u.ncols();
    if targets.iter().any(|t| t.im != 0.0) {
        return Err(GksError::InvalidParameter(
            "complex targets need at least as many actuators as unstable slots".into(),
        ));
    }
    let lambdas: Vec<f64> = targets.iter().map(|t| t.re).collect();
    for &l in &lambdas {
        let mult = lambdas.iter().filter(|&&x| x == l).count();
        if mult > m {
            return Err(GksError::InvalidParameter(format!(
                "target {l} repeated {mult} times but only {m} actuators"
            )));
        }
    }

    let qr = b_u.clone().qr();
    let u0 = qr.q();
    let z = qr.r();
    let subspaces: Vec<DMatrix<f64>> = lambdas
        .iter()
        .map(|&l| admissible_subspace(a_u, &u0, l))
        .collect();

    let mut x = DMatrix::zeros(n, n);
    for j in 0..n {
        let rank = lambdas[..j].iter().filter(|&&l| l == lambdas[j]).count();
        x.set_column(j, &subspaces[j].column(rank % m));
    }

    let mut cond = condition_number(&x);
    for _sweep in 0..100 {
        for j in 0..n {
            let Some(inv) = x.clone().try_inverse() else {
                break;
            };
            let y = inv.row(j).transpose();
            let s = &subspaces[j];
            let candidate = s * (s.transpose() * &y);
            let norm = candidate.norm();
            if norm > 1e-12 {
                x.set_column(j, &(candidate / norm));
            }
        }
        let next = condition_number(&x);
        let done = (cond - next).abs() <= 1e-8 * cond;
        cond = next;
        if done {
            break;
        }
    }
    if !cond.is_finite() {
        return Err(GksError::RankDeficient(
            "could not find independent closed-loop eigenvectors".into(),
        ));
    }

    let x_inv = x.clone().try_inverse().ok_or(GksError::RankDeficient(
        "closed-loop eigenvector matrix is singular".into(),
    ))?;
    let lambda = DMatrix::from_diagonal(&DVector::from_vec(lambdas));
    let closed = &x * lambda * x_inv;
    let rhs = u0.transpose() * (closed - a_u);
    let k = z
        .lu()
        .solve(&rhs)
        .ok_or(GksError::IllConditioned {
            condition: f64::INFINITY,
        })?;
    Ok(FeedbackGain {
        k,
        targets: targets.to_vec(),
        eigenvectors: x,
        eigenvector_condition: cond,
        input_condition,
        method: PlacementMethod::Eigenstructure,
    })
}

/// `(‖A_u‖₂ + max|λ_j| κ(X)) / σ_m(B_u)`, an upper bound on `‖K‖₂`.
pub fn gain_bound(a_u: &DMatrix<f64>, b_u: &DMatrix<f64>, gain: &FeedbackGain) -> f64 {
    let lam = gain.targets.iter().fold(0.0f64, |m, t| m.max(t.norm()));
    let sigma_min = singular_values_sorted(b_u).last().copied().unwrap_or(0.0);
    (spectral_norm(a_u) + lam * gain.eigenvector_condition) / sigma_min
}

/// Desired state `ū` that the feedback law tracks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    Zero,
    Steady { profile: SpectralField },
    /// `ū(x, t) = U(x − ct)`.
    Travelling { profile: SpectralField, speed: f64 },
}

impl Target {
    /// Target coefficients at time `t` with the given truncation.
    pub fn at(&self, t: f64, modes: usize) -> SpectralField {
        match self {
            Target::Zero => SpectralField::zeros(modes),
            Target::Steady { profile } => profile.resized(modes),
            Target::Travelling { profile, speed } => profile.translate(speed * t).resized(modes),
        }
    }

    /// Whether the target is constant in space.
    pub fn is_uniform(&self) -> bool {
        match self {
            Target::Zero => true,
            Target::Steady { profile } | Target::Travelling { profile, .. } => {
                profile.coeffs()[1..].iter().all(|&c| c == 0.0)
            }
        }
    }

    /// `sup_x |ū_x|`, sampled on a fine grid.
    pub fn max_slope(&self) -> f64 {
        match self {
            Target::Zero => 0.0,
            Target::Steady { profile } | Target::Travelling { profile, .. } => {
                let points = 16 * profile.modes().max(16);
                (0..points)
                    .map(|j| profile.eval_derivative(TAU * j as f64 / points as f64, 1).abs())
                    .fold(0.0, f64::max)
            }
        }
    }

    pub fn speed(&self) -> f64 {
        match self {
            Target::Travelling { speed, .. } => *speed,
            _ => 0.0,
        }
    }
}

/// Threshold on `d/dt ½‖u − ū‖²` above which the monitor flags a sample.
pub const LYAPUNOV_TOLERANCE: f64 = 1e-8;

/// `V(t) = ½‖u − ū(t)‖²` and its time derivative along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSeries {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub rate: Vec<f64>,
}

impl LyapunovSeries {
    /// First sample after `transient` whose rate exceeds `tolerance`.
    pub fn first_violation(&self, transient: f64, tolerance: f64) -> Option<(f64, f64)> {
        self.times
            .iter()
            .zip(&self.rate)
            .find(|(&t, &r)| t >= transient && r > tolerance)
            .map(|(&t, &r)| (t, r))
    }

    /// Largest rate after `transient` (−∞ when no sample qualifies).
    pub fn max_rate_after(&self, transient: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.rate)
            .filter(|(&t, _)| t >= transient)
            .fold(f64::NEG_INFINITY, |m, (_, &r)| m.max(r))
    }
}

/// Differences the recorded samples: central in the interior, one-sided at
/// the ends, so uneven final spacing is handled.
pub fn lyapunov_monitor(traj: &Trajectory, target: &Target) -> LyapunovSeries {
    let energy: Vec<f64> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, u)| {
            let v = u - &target.at(t, u.modes());
            0.5 * v.l2_norm().powi(2)
        })
        .collect();
    let n = energy.len();
    let t = &traj.times;
    let rate = (0..n)
        .map(|i| {
            if n < 2 {
                return 0.0;
            }
            let (a, b) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            (energy[b] - energy[a]) / (t[b] - t[a])
        })
        .collect();
    LyapunovSeries {
        times: traj.times.clone(),
        energy,
        rate,
    }
}

/// `f(t) = K (z_u − z̄_u(t))` with point or smoothed actuators.
#[derive(Debug, Clone)]
pub struct FeedbackLaw {
    gain: DMatrix<f64>,
    /// Column-major copy of the full input matrix.
    columns: Vec<Vec<f64>>,
    target: Target,
    unstable_dim: usize,
}

impl FeedbackLaw {
    pub fn new(gain: DMatrix<f64>, matrices: &ControlMatrices, target: Target) -> Result<Self> {
        let n_u = matrices.unstable_dim();
        if gain.ncols() != n_u || gain.nrows() != matrices.num_controls() {
            return Err(GksError::DimensionMismatch(format!(
                "gain is {}×{}, expected {}×{}",
                gain.nrows(),
                gain.ncols(),
                matrices.num_controls(),
                n_u
            )));
        }
        let columns = (0..matrices.b.ncols())
            .map(|i| matrices.b.column(i).iter().copied().collect())
            .collect();
        Ok(FeedbackLaw {
            gain,
            columns,
            target,
            unstable_dim: n_u,
        })
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn unstable_dim(&self) -> usize {
        self.unstable_dim
    }

    /// Adds `Kᵀ v` to the first `n_u` slots of `out`.
    pub(crate) fn add_gain_transpose(&self, v: &[f64], out: &mut [f64]) {
        for j in 0..self.unstable_dim {
            let mut acc = 0.0;
            for (i, vi) in v.iter().enumerate() {
                acc += self.gain[(i, j)] * vi;
            }
            out[j] += acc;
        }
    }

    /// `Bᵀ p`: each actuator's view of `p`.
    pub(crate) fn input_transpose(&self, p: &[f64]) -> Vec<f64> {
        self.columns
            .iter()
            .map(|col| col.iter().zip(p).map(|(a, b)| a * b).sum())
            .collect()
    }
}

impl ControlLaw for FeedbackLaw {
    fn num_controls(&self) -> usize {
        self.columns.len()
    }

    fn amplitudes(&self, t: f64, u: &SpectralField, out: &mut [f64]) {
        let n_u = self.unstable_dim;
        let err: Vec<f64> = match &self.target {
            Target::Zero => u.coeffs()[..n_u].to_vec(),
            target => {
                let bar = target.at(t, u.modes());
                u.coeffs()[..n_u]
                    .iter()
                    .zip(&bar.coeffs()[..n_u])
                    .map(|(a, b)| a - b)
                    .collect()
            }
        };
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..n_u).map(|j| self.gain[(i, j)] * err[j]).sum();
        }
    }

    fn add_forcing(&self, amplitudes: &[f64], rhs: &mut [f64]) {
        for (col, f) in self.columns.iter().zip(amplitudes) {
            for (r, b) in rhs.iter_mut().zip(col) {
                *r += b * f;
            }
        }
    }
}

/// Everything needed to run a closed loop for one configuration.
#[derive(Debug, Clone)]
pub struct Controller {
    pub actuators: ActuatorSet,
    pub matrices: ControlMatrices,
    pub gain: FeedbackGain,
    pub law: FeedbackLaw,
}

/// When the Lyapunov margin is applied to the target spectrum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginPolicy {
    /// Only when there are at least as many actuators as unstable slots, so
    /// the closed-loop block stays diagonal.
    #[default]
    Auto,
    Always,
    Never,
}

impl MarginPolicy {
    pub fn applies(&self, actuators: usize, unstable_dim: usize) -> bool {
        match self {
            MarginPolicy::Auto => actuators >= unstable_dim,
            MarginPolicy::Always => true,
            MarginPolicy::Never => false,
        }
    }
}

/// Builds matrices, the target spectrum and the gain for a scalar problem,
/// with the default margin policy.
pub fn design_controller(
    p: &GksParams,
    actuators: ActuatorSet,
    target: Target,
) -> Result<Controller> {
    design_controller_with(p, actuators, target, MarginPolicy::default())
}

pub fn design_controller_with(
    p: &GksParams,
    actuators: ActuatorSet,
    target: Target,
    policy: MarginPolicy,
) -> Result<Controller> {
    let matrices = build_matrices(p, &actuators);
    let mut targets = target_spectrum(p);
    if policy.applies(actuators.len(), matrices.unstable_dim()) {
        enforce_margin(&mut targets, lyapunov_margin(&target));
    }
    let gain = place_poles(&matrices.a_u, &matrices.b_u, &targets)?;
    let law = FeedbackLaw::new(gain.k.clone(), &matrices, target)?;
    Ok(Controller {
        actuators,
        matrices,
        gain,
        law,
    })
}

/// Full closed-loop matrix `A + B K P_u` (dispersion excluded).
pub fn closed_loop_matrix(matrices: &ControlMatrices, gain: &DMatrix<f64>) -> DMatrix<f64> {
    let dim = matrices.a_diag.len();
    let n_u = matrices.unstable_dim();
    let mut c = DMatrix::from_diagonal(&DVector::from_column_slice(&matrices.a_diag));
    let bk = &matrices.b * gain;
    let mut block = c.columns_mut(0, n_u);
    block += &bk;
    debug_assert_eq!(c.nrows(), dim);
    c
}

/// Eigenvalues and eigenvectors of the full closed-loop matrix, using its
/// block-triangular structure: unstable-block eigenvectors extended into the
/// stable slots, and coordinate vectors for the stable slots.
pub fn closed_loop_eigensystem(
    matrices: &ControlMatrices,
    gain: &FeedbackGain,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if gain.targets.iter().any(|t| t.im != 0.0) {
        return Err(GksError::InvalidParameter(
            "closed-loop eigensystem is only formed for real spectra".into(),
        ));
    }
    let dim = matrices.a_diag.len();
    let n_u = matrices.unstable_dim();
    let bs = matrices.b.rows(n_u, dim - n_u).into_owned();
    let bsk = &bs * &gain.k;
    let mut eigs = Vec::with_capacity(dim);
    let mut x = DMatrix::zeros(dim, dim);
    // Columns of the unstable-block eigenvector matrix pair with targets in
    // order for every placement method.
    for j in 0..n_u {
        let lambda = gain.targets[j].re;
        let xu = gain.eigenvectors.column(j).into_owned();
        let forcing = &bsk * &xu;
        let mut col = DVector::zeros(dim);
        col.rows_mut(0, n_u).copy_from(&xu);
        for r in 0..dim - n_u {
            let denom = matrices.a_diag[n_u + r] - lambda;
            if denom.abs() < 1e-14 {
                return Err(GksError::SingularJacobian {
                    condition: f64::INFINITY,
                });
            }
            col[n_u + r] = -forcing[r] / denom;
        }
        let nrm = col.norm();
        x.set_column(j, &(col / nrm));
        eigs.push(lambda);
    }
    for r in n_u..dim {
        x[(r, r)] = 1.0;
        eigs.push(matrices.a_diag[r]);
    }
    Ok((eigs, x))
}

/// `ζ = min_ω σ_min(iωI − C)` with the eigenvector lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub zeta: f64,
    pub lower_bound: f64,
    pub omega_star: f64,
}

fn sigma_min_shifted(c: &DMatrix<f64>, omega: f64) -> f64 {
    let n = c.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| {
        let re = -c[(i, j)];
        let im = if i == j { omega } else { 0.0 };
        Complex64::new(re, im)
    });
    m.svd(false, false)
        .singular_values
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Minimises `σ_min(iωI − C)` over `ω ∈ {0} ∪ [1e-3, ω_max]` on a 512-point
/// log grid, then refines by golden-section search around the best point.
pub fn closed_loop_margin(c: &DMatrix<f64>, omega_max: f64) -> (f64, f64) {
    let points = 512;
    let lo = 1e-3f64;
    let hi = omega_max.max(10.0 * lo);
    let mut grid = vec![0.0];
    grid.extend((0..points).map(|i| lo * (hi / lo).powf(i as f64 / (points - 1) as f64)));
    let values: Vec<f64> = grid.iter().map(|&w| sigma_min_shifted(c, w)).collect();
    let (best, _) = values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(grid.len() - 1)];
    let (w, v) = golden_section(|w| sigma_min_shifted(c, w), a, b, 60);
    if v < values[best] {
        (v, w)
    } else {
        (values[best], grid[best])
    }
}

fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Margin report for a designed controller.
pub fn margin_report(matrices: &ControlMatrices, gain: &FeedbackGain) -> Result<MarginReport> {
    let c = closed_loop_matrix(matrices, &gain.k);
    let max_im = gain.targets.iter().fold(0.0f64, |m, t| m.max(t.im.abs()));
    let (zeta, omega_star) = closed_loop_margin(&c, 10.0 * max_im.max(1.0));
    let (eigs, x) = closed_loop_eigensystem(matrices, gain)?;
    let kappa = condition_number(&x);
    let min_decay = eigs.iter().fold(f64::INFINITY, |m, l| m.min(-l));
    Ok(MarginReport {
        zeta,
        lower_bound: min_decay / kappa,
        omega_star,
    })
}

/// `‖Δ‖` for a perturbation `ν → ν + ε₁`, `μ → μ + ε₂` over `n/2` modes.
pub fn uncertainty_norm(eps1: f64, eps2: f64, n: usize) -> f64 {
    let mut s = 0.0;
    for k in 1..=n / 2 {
        let k = k as f64;
        s += k.powi(6) * (eps1 * eps1 * k * k - 2.0 * eps1 * eps2 * k + eps2 * eps2);
    }
    (2.0 * s).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobustnessVerdict {
    /// `‖Δ‖ < ζ`: the perturbed closed loop is guaranteed stable.
    Guaranteed,
    /// The sufficient condition does not hold.
    Inconclusive,
}

pub fn robustness_verdict(zeta: f64, delta_norm: f64) -> RobustnessVerdict {
    if delta_norm < zeta {
        RobustnessVerdict::Guaranteed
    } else {
        RobustnessVerdict::Inconclusive
    }
}
