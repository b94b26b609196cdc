//! Two KS fields coupled through second derivatives:
//!
//! ```text
//! u1_t = −ν u1_xxxx − u1_xx − u1 u1_x − α1 u2_xx + Σ b_j f_{1j}
//! u2_t = −ν u2_xxxx − u2_xx − u2 u2_x − α2 u1_xx + Σ b_j f_{2j}
//! ```
//!
//! Mode `n` of the linear part is the 2×2 block
//! `[[−νn⁴ + n², α1 n²], [α2 n², −νn⁴ + n²]]` acting on `(u1_n, u2_n)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{StepperConfig, BLOW_UP_THRESHOLD};
use crate::equilibria::{branch_following, steady_state_on_branch, NewtonOptions};
use crate::error::{GksError, Result};
use crate::feedback::{
    check_input_matrix, lyapunov_margin, target_rule, ActuatorSet, MarginPolicy, Target, LYAPUNOV_TOLERANCE,
};
use crate::spectral::{advective_product, advective_product_into, cos_slot, eigenvalues, sin_slot, slot_mode, GksParams, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupledParams {
    pub nu: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub modes: usize,
    /// Fourth-derivative cross coefficients. Only zero is supported.
    #[serde(default)]
    pub beta: [f64; 2],
}

impl CoupledParams {
    pub fn new(nu: f64, alpha1: f64, alpha2: f64, modes: usize) -> Result<Self> {
        let p = CoupledParams {
            nu,
            alpha1,
            alpha2,
            modes,
            beta: [0.0, 0.0],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(GksError::InvalidParameter(format!("nu must be positive, got {}", self.nu)));
        }
        if !self.alpha1.is_finite() || !self.alpha2.is_finite() {
            return Err(GksError::NonFinite("coupling coefficient".into()));
        }
        if self.alpha1 * self.alpha2 < 0.0 {
            return Err(GksError::InvalidParameter(format!(
                "alpha1 * alpha2 = {} < 0 gives complex linear rates; not supported",
                self.alpha1 * self.alpha2
            )));
        }
        if self.beta != [0.0, 0.0] {
            return Err(GksError::InvalidParameter(
                "fourth-derivative coupling is not implemented".into(),
            ));
        }
        let (l1, _, _) = self.unstable_counts();
        if self.modes < 2 * l1 + 2 {
            return Err(GksError::InvalidParameter(format!(
                "{} modes cannot resolve {} unstable wavenumbers",
                self.modes, l1
            )));
        }
        Ok(())
    }

    /// Scalar parameters of either field alone.
    pub fn scalar(&self) -> GksParams {
        GksParams {
            nu: self.nu,
            mu: 0.0,
            delta: 0.0,
            modes: self.modes,
        }
    }

    pub fn coupling(&self) -> f64 {
        (self.alpha1 * self.alpha2).sqrt()
    }

    /// `(l1, l2, 2(l1 + l2 + 1))` with `l_i = ⌊√((1 ± √(α1α2))/ν)⌋`.
    pub fn unstable_counts(&self) -> (usize, usize, usize) {
        let s = self.coupling();
        let count = |v: f64| if v > 0.0 { ((v / self.nu).sqrt() + 1e-9).floor() as usize } else { 0 };
        let l1 = count(1.0 + s);
        let l2 = count(1.0 - s);
        (l1, l2, 2 * (l1 + l2 + 1))
    }

    /// Linear 2×2 block of wavenumber `n`.
    pub fn mode_block(&self, n: usize) -> [[f64; 2]; 2] {
        let k2 = (n * n) as f64;
        let a = if n == 0 { 0.0 } else { -self.nu * k2 * k2 + k2 };
        [[a, self.alpha1 * k2], [self.alpha2 * k2, a]]
    }

    /// Eigenvalues `−νn⁴ + n² ± n²√(α1α2)`, larger first.
    pub fn mode_rates(&self, n: usize) -> (f64, f64) {
        let k2 = (n * n) as f64;
        let a = if n == 0 { 0.0 } else { -self.nu * k2 * k2 + k2 };
        (a + k2 * self.coupling(), a - k2 * self.coupling())
    }

    /// Slots per field in the controlled block: wavenumbers `0..=l1`.
    pub fn block_slots(&self) -> usize {
        2 * self.unstable_counts().0 + 1
    }

    pub fn dim(&self) -> usize {
        2 * self.modes + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledField {
    pub u1: SpectralField,
    pub u2: SpectralField,
}

impl CoupledField {
    pub fn zeros(modes: usize) -> Self {
        CoupledField {
            u1: SpectralField::zeros(modes),
            u2: SpectralField::zeros(modes),
        }
    }

    pub fn new(u1: SpectralField, u2: SpectralField) -> Result<Self> {
        if u1.modes() != u2.modes() {
            return Err(GksError::DimensionMismatch(format!(
                "fields have {} and {} modes",
                u1.modes(),
                u2.modes()
            )));
        }
        Ok(CoupledField { u1, u2 })
    }

    pub fn modes(&self) -> usize {
        self.u1.modes()
    }

    pub fn field(&self, i: usize) -> &SpectralField {
        if i == 0 {
            &self.u1
        } else {
            &self.u2
        }
    }

    /// `‖u1‖² + ‖u2‖²` under the square root.
    pub fn l2_norm(&self) -> f64 {
        (self.u1.l2_norm().powi(2) + self.u2.l2_norm().powi(2)).sqrt()
    }

    pub fn sum_of_norms(&self) -> f64 {
        self.u1.l2_norm() + self.u2.l2_norm()
    }

    pub fn distance(&self, other: &CoupledField) -> f64 {
        CoupledField {
            u1: &self.u1 - &other.u1,
            u2: &self.u2 - &other.u2,
        }
        .l2_norm()
    }

    pub fn is_finite(&self) -> bool {
        self.u1.is_finite() && self.u2.is_finite()
    }

    fn max_abs_coeff(&self) -> f64 {
        self.u1.max_abs_coeff().max(self.u2.max_abs_coeff())
    }

    /// `[u1 slots…, u2 slots…]`.
    pub fn stacked(&self) -> Vec<f64> {
        let mut v = self.u1.coeffs().to_vec();
        v.extend_from_slice(self.u2.coeffs());
        v
    }
}

/// Linear part applied to `U`, written as two fields.
fn apply_coupled_linear(p: &CoupledParams, u: &CoupledField) -> CoupledField {
    let mut out = CoupledField::zeros(p.modes);
    for n in 1..=p.modes {
        let b = p.mode_block(n);
        for slot in [sin_slot(n), cos_slot(n)] {
            let (a, c) = (u.u1.coeffs()[slot], u.u2.coeffs()[slot]);
            out.u1.coeffs_mut()[slot] = b[0][0] * a + b[0][1] * c;
            out.u2.coeffs_mut()[slot] = b[1][0] * a + b[1][1] * c;
        }
    }
    out
}

/// Full uncontrolled right-hand side: linear blocks and each field's own
/// `−P(u_i u_i,x)`.
pub fn coupled_rhs(u: &CoupledField, p: &CoupledParams) -> CoupledField {
    let mut out = apply_coupled_linear(p, u);
    for (o, ui) in [(&mut out.u1, &u.u1), (&mut out.u2, &u.u2)] {
        let nl = advective_product(ui, ui);
        for (slot, v) in o.coeffs_mut().iter_mut().enumerate().skip(1) {
            *v -= nl.coeffs()[slot];
        }
    }
    out
}

/// Solves `(γ₀ I − dt M_n)` per mode and component. The arithmetic reduces to
/// the scalar solver's when both couplings vanish.
fn coupled_implicit_solve(p: &CoupledParams, dt: f64, gamma0: f64, r1: &mut [f64], r2: &mut [f64]) {
    r1[0] /= gamma0;
    r2[0] /= gamma0;
    for n in 1..=p.modes {
        let b = p.mode_block(n);
        let a = gamma0 - dt * b[0][0];
        let (q1, q2) = (dt * b[0][1], dt * b[1][0]);
        let det = a * a - q1 * q2;
        for slot in [sin_slot(n), cos_slot(n)] {
            let (x, y) = (r1[slot], r2[slot]);
            r1[slot] = (a * x + q1 * y) / det;
            r2[slot] = (q2 * x + a * y) / det;
        }
    }
}

/// Feedback or no control for the coupled system.
pub trait CoupledControl {
    fn num_controls(&self) -> usize;
    fn amplitudes(&self, t: f64, u: &CoupledField, out: &mut [f64]);
    /// Adds the actuator forcing to each field's right-hand side.
    fn add_forcing(&self, amplitudes: &[f64], rhs1: &mut [f64], rhs2: &mut [f64]);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CoupledUncontrolled;

impl CoupledControl for CoupledUncontrolled {
    fn num_controls(&self) -> usize {
        0
    }

    fn amplitudes(&self, _t: f64, _u: &CoupledField, _out: &mut [f64]) {}

    fn add_forcing(&self, _amplitudes: &[f64], _rhs1: &mut [f64], _rhs2: &mut [f64]) {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledTrajectory {
    pub dt: f64,
    pub stride: usize,
    pub times: Vec<f64>,
    pub states: Vec<CoupledField>,
    /// Field-1 actuators first, then field-2 actuators.
    pub controls: Vec<Vec<f64>>,
}

impl CoupledTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &CoupledField {
        self.states.last().expect("trajectory has at least one state")
    }
}

fn coupled_explicit<C: CoupledControl + ?Sized>(u: &CoupledField, control: &C, f: &[f64], e: &mut CoupledField) {
    for (ui, ei) in [(&u.u1, &mut e.u1), (&u.u2, &mut e.u2)] {
        let c = ui.coeffs();
        let out = ei.coeffs_mut();
        advective_product_into(c, c, out);
        out[0] = 0.0;
        for v in out.iter_mut() {
            *v = -*v;
        }
    }
    let (e1, e2) = (&mut e.u1, &mut e.u2);
    control.add_forcing(f, e1.coeffs_mut(), e2.coeffs_mut());
}

fn linear_rhs_mix(a: &SpectralField, b: &SpectralField, ea: &SpectralField, eb: &SpectralField, dt: f64) -> Vec<f64> {
    let (un, unm1, en, enm1) = (a.coeffs(), b.coeffs(), ea.coeffs(), eb.coeffs());
    (0..un.len())
        .map(|i| 2.0 * un[i] - 0.5 * unm1[i] + dt * (2.0 * en[i] - enm1[i]))
        .collect()
}

fn check_coupled(u: &CoupledField, t: f64) -> Result<()> {
    let m = u.max_abs_coeff();
    if !m.is_finite() || m > BLOW_UP_THRESHOLD {
        return Err(GksError::BlowUp { time: t, magnitude: m });
    }
    Ok(())
}

/// IMEX-BDF2 for the coupled system, started with IMEX Euler; mirrors the
/// scalar integrator step for step.
pub fn simulate_coupled<C: CoupledControl + ?Sized>(
    p: &CoupledParams,
    u0: &CoupledField,
    control: &C,
    cfg: &StepperConfig,
) -> Result<CoupledTrajectory> {
    p.validate()?;
    cfg.validate()?;
    if u0.modes() != p.modes {
        return Err(GksError::DimensionMismatch(format!(
            "initial state has {} modes, parameters specify {}",
            u0.modes(),
            p.modes
        )));
    }
    if !u0.is_finite() {
        return Err(GksError::NonFinite("initial state".into()));
    }
    let dt = cfg.dt;
    let steps = cfg.steps();
    let mut traj = CoupledTrajectory {
        dt,
        stride: cfg.record_every,
        times: Vec::new(),
        states: Vec::new(),
        controls: Vec::new(),
    };
    let mut f = vec![0.0; control.num_controls()];
    let mut u = u0.clone();
    let mut e = CoupledField::zeros(p.modes);
    control.amplitudes(0.0, &u, &mut f);
    coupled_explicit(&u, control, &f, &mut e);
    traj.times.push(0.0);
    traj.states.push(u.clone());
    traj.controls.push(f.clone());

    let mut u_prev = u.clone();
    let mut e_prev = e.clone();
    {
        let mut next = u.clone();
        next.u1.axpy(dt, &e.u1);
        next.u2.axpy(dt, &e.u2);
        let (a, b) = (&mut next.u1, &mut next.u2);
        coupled_implicit_solve(p, dt, 1.0, a.coeffs_mut(), b.coeffs_mut());
        u = next;
    }
    check_coupled(&u, dt)?;

    for step in 1..=steps {
        let t = step as f64 * dt;
        control.amplitudes(t, &u, &mut f);
        std::mem::swap(&mut e_prev, &mut e);
        coupled_explicit(&u, control, &f, &mut e);
        if step % cfg.record_every == 0 || step == steps {
            traj.times.push(t);
            traj.states.push(u.clone());
            traj.controls.push(f.clone());
        }
        if step == steps {
            break;
        }
        let mut r1 = linear_rhs_mix(&u.u1, &u_prev.u1, &e.u1, &e_prev.u1, dt);
        let mut r2 = linear_rhs_mix(&u.u2, &u_prev.u2, &e.u2, &e_prev.u2, dt);
        coupled_implicit_solve(p, dt, 1.5, &mut r1, &mut r2);
        let next = CoupledField {
            u1: SpectralField::from_coeffs(r1)?,
            u2: SpectralField::from_coeffs(r2)?,
        };
        u_prev = std::mem::replace(&mut u, next);
        check_coupled(&u, t + dt)?;
    }
    Ok(traj)
}

/// Controlled block: slots `0..=2 l1` of both fields, field 1 first.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledMatrices {
    pub a_u: DMatrix<f64>,
    pub b_u: DMatrix<f64>,
    /// Target eigenvalue assigned to each column of `closed_loop`.
    pub targets: Vec<Complex64>,
    /// Desired closed-loop block `A_u + B_u K`.
    pub closed_loop: DMatrix<f64>,
}

/// Index of field `i`, slot `s` within the controlled block of width `w`.
fn block_index(i: usize, slot: usize, w: usize) -> usize {
    i * w + slot
}

/// Builds `A_u`, `B_u` (block diagonal: each field sees only its own
/// actuators) and the target closed-loop block.
///
/// Each mode block `M` with eigenvalues `λ±` is mapped to `p(M)`, the linear
/// polynomial sending `λ±` to their targets, so the closed loop keeps the
/// eigenvectors of `M` and needs no diagonalisation (the block may be
/// defective when one coupling vanishes).
pub fn build_coupled_matrices(p: &CoupledParams, acts: [&ActuatorSet; 2], margin: f64) -> CoupledMatrices {
    let w = p.block_slots();
    let nb = 2 * w;
    let (m1, m2) = (acts[0].len(), acts[1].len());
    let mut a_u = DMatrix::zeros(nb, nb);
    let mut b_u = DMatrix::zeros(nb, m1 + m2);
    let mut closed = DMatrix::zeros(nb, nb);
    let mut targets = vec![Complex64::new(0.0, 0.0); nb];
    for slot in 0..w {
        let n = slot_mode(slot);
        let blk = p.mode_block(n);
        for i in 0..2 {
            for j in 0..2 {
                a_u[(block_index(i, slot, w), block_index(j, slot, w))] = blk[i][j];
            }
        }
        for (k, _) in acts[0].positions().iter().enumerate() {
            b_u[(block_index(0, slot, w), k)] = acts[0].entry(k, slot);
        }
        for (k, _) in acts[1].positions().iter().enumerate() {
            b_u[(block_index(1, slot, w), m1 + k)] = acts[1].entry(k, slot);
        }
        let (lp, lm) = p.mode_rates(n);
        let push = |t: f64| if t > -margin { t - margin } else { t };
        let tp = push(target_rule(lp, n == 0, 0.0));
        let tm = push(target_rule(lm, n == 0, 0.0));
        targets[block_index(0, slot, w)] = Complex64::new(tp, 0.0);
        targets[block_index(1, slot, w)] = Complex64::new(tm, 0.0);
        // p(M) = tm I + (tp − tm)/(lp − lm) (M − lm I).
        let slope = if lp != lm { (tp - tm) / (lp - lm) } else { 0.0 };
        for i in 0..2 {
            for j in 0..2 {
                let id = if i == j { 1.0 } else { 0.0 };
                let v = tm * id + slope * (blk[i][j] - lm * id);
                closed[(block_index(i, slot, w), block_index(j, slot, w))] = v;
            }
        }
    }
    CoupledMatrices {
        a_u,
        b_u,
        targets,
        closed_loop: closed,
    }
}

/// `K = B_u⁺ (Λ* − A_u)`; requires `B_u` to have full row rank.
pub fn coupled_gain(mats: &CoupledMatrices) -> Result<DMatrix<f64>> {
    let (n, m) = mats.b_u.shape();
    if m < n {
        return Err(GksError::InvalidParameter(format!(
            "{m} actuators cannot place {n} coupled slots; use at least {n}"
        )));
    }
    check_input_matrix(&mats.b_u)?;
    let rhs = &mats.closed_loop - &mats.a_u;
    let bbt = &mats.b_u * mats.b_u.transpose();
    let y = bbt.lu().solve(&rhs).ok_or(GksError::IllConditioned {
        condition: f64::INFINITY,
    })?;
    Ok(mats.b_u.transpose() * y)
}

/// A coupled steady target; `None` means zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledTarget {
    pub state: Option<CoupledField>,
}

impl CoupledTarget {
    pub fn zero() -> Self {
        CoupledTarget { state: None }
    }

    pub fn steady(state: CoupledField) -> Self {
        CoupledTarget { state: Some(state) }
    }

    pub fn at(&self, modes: usize) -> CoupledField {
        self.state.clone().unwrap_or_else(|| CoupledField::zeros(modes))
    }

    /// Lyapunov margin over both fields.
    pub fn margin(&self) -> f64 {
        match &self.state {
            None => 0.0,
            Some(s) => {
                let a = lyapunov_margin(&Target::Steady {
                    profile: s.u1.clone(),
                });
                let b = lyapunov_margin(&Target::Steady {
                    profile: s.u2.clone(),
                });
                a.max(b)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoupledFeedbackLaw {
    gain: DMatrix<f64>,
    columns: [Vec<Vec<f64>>; 2],
    target: CoupledField,
    block: usize,
}

impl CoupledFeedbackLaw {
    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }
}

impl CoupledControl for CoupledFeedbackLaw {
    fn num_controls(&self) -> usize {
        self.columns[0].len() + self.columns[1].len()
    }

    fn amplitudes(&self, _t: f64, u: &CoupledField, out: &mut [f64]) {
        let w = self.block;
        let mut err = vec![0.0; 2 * w];
        for s in 0..w {
            err[s] = u.u1.coeffs()[s] - self.target.u1.coeffs()[s];
            err[w + s] = u.u2.coeffs()[s] - self.target.u2.coeffs()[s];
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..2 * w).map(|j| self.gain[(i, j)] * err[j]).sum();
        }
    }

    fn add_forcing(&self, amplitudes: &[f64], rhs1: &mut [f64], rhs2: &mut [f64]) {
        let m1 = self.columns[0].len();
        for (col, f) in self.columns[0].iter().zip(&amplitudes[..m1]) {
            for (r, b) in rhs1.iter_mut().zip(col) {
                *r += b * f;
            }
        }
        for (col, f) in self.columns[1].iter().zip(&amplitudes[m1..]) {
            for (r, b) in rhs2.iter_mut().zip(col) {
                *r += b * f;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoupledController {
    pub actuators: [ActuatorSet; 2],
    pub matrices: CoupledMatrices,
    pub gain: DMatrix<f64>,
    pub law: CoupledFeedbackLaw,
}

pub fn design_coupled_controller(
    p: &CoupledParams,
    actuators: [ActuatorSet; 2],
    target: &CoupledTarget,
    policy: MarginPolicy,
) -> Result<CoupledController> {
    p.validate()?;
    let nb = 2 * p.block_slots();
    let margin = if policy.applies(actuators[0].len() + actuators[1].len(), nb) {
        target.margin()
    } else {
        0.0
    };
    let matrices = build_coupled_matrices(p, [&actuators[0], &actuators[1]], margin);
    let gain = coupled_gain(&matrices)?;
    let columns = [0, 1].map(|i| {
        (0..actuators[i].len())
            .map(|k| (0..p.dim()).map(|slot| actuators[i].entry(k, slot)).collect())
            .collect()
    });
    let law = CoupledFeedbackLaw {
        gain: gain.clone(),
        columns,
        target: target.at(p.modes),
        block: p.block_slots(),
    };
    Ok(CoupledController {
        actuators,
        matrices,
        gain,
        law,
    })
}

/// Eigenvalues of `A_u + B_u K`, sorted by real part.
pub fn coupled_closed_loop_spectrum(ctl: &CoupledController) -> Result<Vec<Complex64>> {
    let m = &ctl.matrices.a_u + &ctl.matrices.b_u * &ctl.gain;
    let mut ev = eigenvalues(&m)?;
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(ev)
}

/// Steady residual `M U − P(u_i u_i,x)`, mean equations dropped.
fn coupled_residual(u: &CoupledField, p: &CoupledParams) -> Vec<f64> {
    let r = coupled_rhs(u, p);
    let mut out = Vec::with_capacity(4 * p.modes);
    out.extend_from_slice(&r.u1.coeffs()[1..]);
    out.extend_from_slice(&r.u2.coeffs()[1..]);
    out
}

fn unpack(x: &[f64], modes: usize) -> CoupledField {
    let mut u = CoupledField::zeros(modes);
    u.u1.coeffs_mut()[1..].copy_from_slice(&x[..2 * modes]);
    u.u2.coeffs_mut()[1..].copy_from_slice(&x[2 * modes..]);
    u
}

fn coupled_jacobian(u: &CoupledField, p: &CoupledParams) -> DMatrix<f64> {
    let d = 4 * p.modes;
    let mut jac = DMatrix::zeros(d, d);
    for col in 0..d {
        let mut e = vec![0.0; d];
        e[col] = 1.0;
        let w = unpack(&e, p.modes);
        let mut lin = apply_coupled_linear(p, &w);
        for (o, ui, wi) in [(&mut lin.u1, &u.u1, &w.u1), (&mut lin.u2, &u.u2, &w.u2)] {
            let mut nl = advective_product(ui, wi);
            nl += &advective_product(wi, ui);
            for (slot, v) in o.coeffs_mut().iter_mut().enumerate().skip(1) {
                *v -= nl.coeffs()[slot];
            }
        }
        for (r, v) in lin.u1.coeffs()[1..].iter().chain(&lin.u2.coeffs()[1..]).enumerate() {
            jac[(r, col)] = *v;
        }
    }
    jac
}

/// Damped Newton on the coupled steady equations (minimum-norm steps, so the
/// translation direction does not stall the solve).
pub fn coupled_newton(guess: &CoupledField, p: &CoupledParams, opts: &NewtonOptions) -> Result<CoupledField> {
    p.validate()?;
    let norm = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut x = guess.u1.coeffs()[1..].to_vec();
    x.extend_from_slice(&guess.u2.coeffs()[1..]);
    let mut r = coupled_residual(&unpack(&x, p.modes), p);
    let mut rn = norm(&r);
    for _ in 0..opts.max_iterations {
        if rn < opts.tolerance {
            break;
        }
        let jac = coupled_jacobian(&unpack(&x, p.modes), p);
        let svd = jac.svd(true, true);
        let smax = svd.singular_values.iter().fold(0.0f64, |a, &b| a.max(b));
        let rhs = DVector::from_iterator(r.len(), r.iter().map(|v| -v));
        let step = svd
            .solve(&rhs, 1e-11 * smax)
            .map_err(|_| GksError::SingularJacobian {
                condition: f64::INFINITY,
            })?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + lambda * b).collect();
            let rt = coupled_residual(&unpack(&trial, p.modes), p);
            let nt = norm(&rt);
            if nt.is_finite() && nt < rn {
                x = trial;
                r = rt;
                rn = nt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if rn >= opts.tolerance {
        return Err(GksError::NewtonFailed {
            iterations: opts.max_iterations,
            residual: rn,
        });
    }
    Ok(unpack(&x, p.modes))
}

/// Seed from the scalar unimodal state: with `u2 = r u1`, `r = √(α2/α1)`,
/// both linear parts read `−νu'''' − (1 + s)u''` (`s = √(α1α2)`), and
/// `u1 = (1 + s) v` with `v` a KS steady state at `ν/(1 + s)`.
pub fn coupled_seed(p: &CoupledParams) -> Result<CoupledField> {
    p.validate()?;
    let s = p.coupling();
    let nu_eff = p.nu / (1.0 + s);
    if nu_eff >= 1.0 {
        return Err(GksError::InvalidParameter(format!(
            "effective viscosity {nu_eff} leaves no nontrivial scalar state"
        )));
    }
    let q = GksParams::new(nu_eff, 0.0, 0.0, p.modes)?;
    let eq = steady_state_on_branch(&q, 1, &branch_following())?;
    let v = &eq.profile;
    let r = if p.alpha1 != 0.0 {
        (p.alpha2 / p.alpha1).abs().sqrt()
    } else {
        1.0
    };
    Ok(CoupledField {
        u1: v * (1.0 + s),
        u2: v * ((1.0 + s) * r),
    })
}

/// Nontrivial coupled steady state from [`coupled_seed`].
pub fn coupled_steady_state(p: &CoupledParams) -> Result<CoupledField> {
    let seed = coupled_seed(p)?;
    let u = coupled_newton(&seed, p, &NewtonOptions::default())?;
    if u.l2_norm() < 1e-6 {
        return Err(GksError::NewtonFailed {
            iterations: 0,
            residual: 0.0,
        });
    }
    Ok(u)
}

/// Max-norm of the steady residual.
pub fn coupled_residual_norm(u: &CoupledField, p: &CoupledParams) -> f64 {
    coupled_residual(u, p).iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// `½Σ_i ∫‖u_i − ū_i‖² + ½Σ_i ‖u_i(T) − ū_i‖² + γ/2 Σ_j ∫ f_j²`.
pub fn coupled_cost(traj: &CoupledTrajectory, target: &CoupledTarget, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(GksError::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    let modes = traj.last().modes();
    let bar = target.at(modes);
    let d: Vec<f64> = traj.states.iter().map(|u| u.distance(&bar).powi(2)).collect();
    let trap = |v: &[f64]| -> f64 {
        traj.times
            .windows(2)
            .zip(v.windows(2))
            .map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1]))
            .sum()
    };
    let mut cost = 0.5 * trap(&d) + 0.5 * d.last().copied().unwrap_or(0.0);
    let m = traj.controls.first().map_or(0, |f| f.len());
    for j in 0..m {
        let sq: Vec<f64> = traj.controls.iter().map(|f| f[j] * f[j]).collect();
        cost += 0.5 * gamma * trap(&sq);
    }
    Ok(cost)
}

/// `max_t ‖u1‖ + ‖u2‖`.
pub fn coupled_boundedness_monitor(traj: &CoupledTrajectory) -> f64 {
    traj.states.iter().map(|u| u.sum_of_norms()).fold(0.0, f64::max)
}

/// Ceiling for the monitor: the scalar envelope at the effective viscosity
/// `ν/(1 + s)`, scaled by the seed amplitudes of both fields.
pub fn coupled_boundedness_ceiling(p: &CoupledParams) -> f64 {
    let s = p.coupling();
    let scalar = GksParams {
        nu: p.nu / (1.0 + s),
        mu: 0.0,
        delta: 0.0,
        modes: p.modes,
    };
    let r = if p.alpha1 != 0.0 {
        (p.alpha2 / p.alpha1).abs().sqrt()
    } else {
        1.0
    };
    crate::dynamics::boundedness_ceiling(&scalar) * (1.0 + s) * (1.0 + r.max(1.0 / r.max(1e-12)))
}

/// `d/dt ½(‖u1 − ū1‖² + ‖u2 − ū2‖²)` by differences of the samples.
pub fn coupled_lyapunov_rates(traj: &CoupledTrajectory, target: &CoupledTarget) -> Vec<f64> {
    let bar = target.at(traj.last().modes());
    let v: Vec<f64> = traj.states.iter().map(|u| 0.5 * u.distance(&bar).powi(2)).collect();
    let t = &traj.times;
    let n = v.len();
    (0..n)
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
            (v[b] - v[a]) / (t[b] - t[a])
        })
        .collect()
}

/// First time after `transient` where the Lyapunov rate exceeds the
/// tolerance.
pub fn coupled_lyapunov_violation(traj: &CoupledTrajectory, target: &CoupledTarget, transient: f64) -> Option<f64> {
    coupled_lyapunov_rates(traj, target)
        .iter()
        .zip(&traj.times)
        .find(|(&r, &t)| t >= transient && r > LYAPUNOV_TOLERANCE)
        .map(|(_, &t)| t)
}
