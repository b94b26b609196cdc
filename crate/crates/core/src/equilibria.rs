//! Steady states and travelling waves: Galerkin residual, damped Newton,
//! natural-parameter continuation and linear stability.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{apply_linear, simulate, StepperConfig, Uncontrolled};
use crate::error::{GksError, Result};
use crate::feedback::Target;
use crate::spectral::{advective_product, cos_slot, eigenvalues, sin_slot, GksParams, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumKind {
    Steady,
    Travelling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stability {
    Stable,
    /// `growth` is the leading real part of the linearised spectrum.
    Unstable { growth: f64 },
    Unknown,
}

impl Stability {
    pub fn label(&self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable { .. } => "unstable",
            Stability::Unknown => "unknown",
        }
    }
}

/// A converged steady state (`speed == 0`) or travelling wave `U(x − ct)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub profile: SpectralField,
    pub speed: f64,
    pub params: GksParams,
    pub kind: EquilibriumKind,
    /// Max-norm of the residual at convergence.
    pub residual: f64,
    pub stability: Stability,
}

impl Equilibrium {
    /// `ū(·, t)` coefficients; travelling waves are rotated mode by mode.
    pub fn target_at(&self, t: f64) -> SpectralField {
        tw_target_coeffs(&self.profile, self.speed, t)
    }

    pub fn as_target(&self) -> Target {
        match self.kind {
            EquilibriumKind::Steady => Target::Steady {
                profile: self.profile.clone(),
            },
            EquilibriumKind::Travelling => Target::Travelling {
                profile: self.profile.clone(),
                speed: self.speed,
            },
        }
    }
}

/// `U(x − ct)` in coefficient form.
pub fn tw_target_coeffs(profile: &SpectralField, speed: f64, t: f64) -> SpectralField {
    profile.translate(speed * t)
}

/// Residual of the projected travelling-wave equation
/// `−cU' + νU'''' + μH[U'''] + δU''' + U'' + UU' = 0`, ordered
/// `[sin 1, cos 1, sin 2, cos 2, …]` (the mean equation is identically zero
/// for mean-free profiles and is omitted).
pub fn residual_tw(u: &SpectralField, c: f64, p: &GksParams) -> Vec<f64> {
    let mut lin = vec![0.0; u.len()];
    apply_linear(p, u.coeffs(), &mut lin);
    let nl = advective_product(u, u);
    let mut r = vec![0.0; 2 * p.modes];
    for n in 1..=p.modes {
        let k = n as f64;
        let (s, co) = (u.sin(n), u.cos(n));
        // −cU' contributes (cn U^c, −cn U^s).
        r[2 * n - 2] = -lin[sin_slot(n)] + nl.coeffs()[sin_slot(n)] + c * k * co;
        r[2 * n - 1] = -lin[cos_slot(n)] + nl.coeffs()[cos_slot(n)] - c * k * s;
    }
    r
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Layout of Newton unknowns.
#[derive(Debug, Clone, Copy)]
struct Layout {
    kind: EquilibriumKind,
    modes: usize,
}

impl Layout {
    fn pack(&self, u: &SpectralField, c: f64) -> Vec<f64> {
        let mut x = Vec::with_capacity(2 * self.modes);
        match self.kind {
            EquilibriumKind::Steady => x.extend_from_slice(&u.coeffs()[1..]),
            EquilibriumKind::Travelling => {
                x.push(c);
                x.extend_from_slice(&u.coeffs()[2..]);
            }
        }
        x
    }

    fn unpack(&self, x: &[f64]) -> (SpectralField, f64) {
        let mut u = SpectralField::zeros(self.modes);
        match self.kind {
            EquilibriumKind::Steady => {
                u.coeffs_mut()[1..].copy_from_slice(x);
                (u, 0.0)
            }
            EquilibriumKind::Travelling => {
                u.coeffs_mut()[2..].copy_from_slice(&x[1..]);
                (u, x[0])
            }
        }
    }
}

/// Jacobian of [`residual_tw`] with respect to the Newton unknowns.
fn jacobian(layout: &Layout, u: &SpectralField, c: f64, p: &GksParams) -> DMatrix<f64> {
    let dim = 2 * p.modes;
    let mut jac = DMatrix::zeros(dim, dim);
    let first_slot = match layout.kind {
        EquilibriumKind::Steady => 1,
        EquilibriumKind::Travelling => 2,
    };
    let offset = match layout.kind {
        EquilibriumKind::Steady => 0,
        EquilibriumKind::Travelling => 1,
    };
    let mut lin = vec![0.0; u.len()];
    for slot in first_slot..u.len() {
        let mut w = SpectralField::zeros(p.modes);
        w.coeffs_mut()[slot] = 1.0;
        let mut col = advective_product(u, &w);
        col += &advective_product(&w, u);
        apply_linear(p, w.coeffs(), &mut lin);
        let wc = w.coeffs();
        for n in 1..=p.modes {
            let k = n as f64;
            let rs = -lin[sin_slot(n)] + col.coeffs()[sin_slot(n)] + c * k * wc[cos_slot(n)];
            let rc = -lin[cos_slot(n)] + col.coeffs()[cos_slot(n)] - c * k * wc[sin_slot(n)];
            jac[(2 * n - 2, slot - first_slot + offset)] = rs;
            jac[(2 * n - 1, slot - first_slot + offset)] = rc;
        }
    }
    if layout.kind == EquilibriumKind::Travelling {
        // ∂R/∂c = −U' projected: (n U^c, −n U^s).
        for n in 1..=p.modes {
            let k = n as f64;
            jac[(2 * n - 2, 0)] = k * u.cos(n);
            jac[(2 * n - 1, 0)] = -k * u.sin(n);
        }
    }
    jac
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tolerance: 1e-10,
            max_iterations: 50,
        }
    }
}

/// Minimum-norm least-squares step; singular values below `1e-11 σ_max` are
/// dropped so that the translation null direction does not stall Newton.
fn pinv_step(jac: DMatrix<f64>, rhs: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let svd = jac.svd(true, true);
    let s = &svd.singular_values;
    let smax = s.iter().fold(0.0f64, |a, &b| a.max(b));
    let smin = s.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if smax == 0.0 || !smax.is_finite() {
        return Err(GksError::SingularJacobian {
            condition: f64::INFINITY,
        });
    }
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let step = svd
        .solve(rhs, 1e-11 * smax)
        .map_err(|_| GksError::SingularJacobian { condition: cond })?;
    Ok((step, cond))
}

/// Damped Newton on the steady (`δ = 0`, `c = 0`) or travelling-wave system.
///
/// Travelling waves use the gauge `U₁ˢ = 0` with `c` as an unknown; the guess
/// is rotated onto the gauge first.
pub fn newton_solve(
    guess: &SpectralField,
    speed_guess: f64,
    kind: EquilibriumKind,
    p: &GksParams,
    opts: &NewtonOptions,
) -> Result<Equilibrium> {
    p.validate()?;
    if guess.modes() != p.modes {
        return Err(GksError::DimensionMismatch(format!(
            "guess has {} modes, parameters specify {}",
            guess.modes(),
            p.modes
        )));
    }
    if kind == EquilibriumKind::Steady && p.delta != 0.0 {
        return Err(GksError::InvalidParameter(
            "steady states require delta = 0; dispersion makes them travel".into(),
        ));
    }
    let layout = Layout {
        kind,
        modes: p.modes,
    };
    let mut u0 = guess.clone();
    u0.set_mean(0.0);
    if kind == EquilibriumKind::Travelling {
        u0 = gauge_rotate(&u0);
    }
    let mut x = layout.pack(&u0, speed_guess);
    let eval = |x: &[f64]| {
        let (u, c) = layout.unpack(x);
        residual_tw(&u, c, p)
    };
    let mut r = eval(&x);
    let mut rnorm = max_norm(&r);
    let mut cond = 1.0;
    for _ in 0..opts.max_iterations {
        if rnorm < opts.tolerance {
            break;
        }
        let (u, c) = layout.unpack(&x);
        let jac = jacobian(&layout, &u, c, p);
        let rhs = DVector::from_iterator(r.len(), r.iter().map(|v| -v));
        let (step, cn) = pinv_step(jac, &rhs)?;
        cond = cn;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + lambda * b).collect();
            let rt = eval(&trial);
            let nt = max_norm(&rt);
            if nt.is_finite() && nt < rnorm {
                x = trial;
                r = rt;
                rnorm = nt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if rnorm >= opts.tolerance {
        if cond > 1e14 {
            return Err(GksError::SingularJacobian { condition: cond });
        }
        return Err(GksError::NewtonFailed {
            iterations: opts.max_iterations,
            residual: rnorm,
        });
    }
    let (mut u, mut c) = layout.unpack(&x);
    if kind == EquilibriumKind::Travelling && c < 0.0 && p.delta == 0.0 {
        // −U(−ξ) travels with speed −c.
        u = (&u.reflect()) * -1.0;
        u = gauge_rotate(&u);
        c = -c;
    }
    let residual = max_norm(&residual_tw(&u, c, p));
    Ok(Equilibrium {
        profile: u,
        speed: c,
        params: *p,
        kind,
        residual,
        stability: Stability::Unknown,
    })
}

/// Translates a profile so that its first sine coefficient vanishes with a
/// non-negative first cosine coefficient. Profiles without a first harmonic
/// are returned unchanged.
pub fn gauge_rotate(u: &SpectralField) -> SpectralField {
    let (s, c) = (u.sin(1), u.cos(1));
    if s == 0.0 && c >= 0.0 {
        return u.clone();
    }
    if s.hypot(c) < 1e-14 * u.l2_norm().max(1e-300) {
        return u.clone();
    }
    // translate(a) maps (s, c) to (s cos a + c sin a, c cos a − s sin a).
    let a = (-s).atan2(c);
    let mut v = u.translate(a);
    v.set_sin(1, 0.0);
    v
}

/// Distance to the orbit of `profile` under translation, with the shift that
/// attains it: `min_a ‖u − profile(· − a)‖`.
pub fn phase_distance(u: &SpectralField, profile: &SpectralField) -> (f64, f64) {
    let modes = u.modes().min(profile.modes());
    let corr = |a: f64| {
        let mut acc = u.mean() * profile.mean();
        for n in 1..=modes {
            let (sa, ca) = (n as f64 * a).sin_cos();
            let (s, c) = (profile.sin(n), profile.cos(n));
            acc += u.sin(n) * (s * ca + c * sa) + u.cos(n) * (c * ca - s * sa);
        }
        acc
    };
    let grid = 8 * modes.max(8) * 4;
    let h = TAU / grid as f64;
    let (mut best, mut best_v) = (0.0, f64::NEG_INFINITY);
    for j in 0..grid {
        let a = h * j as f64;
        let v = corr(a);
        if v > best_v {
            best_v = v;
            best = a;
        }
    }
    // Golden-section refinement on the bracketing cell.
    let (mut lo, mut hi) = (best - h, best + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c1 = hi - g * (hi - lo);
        let c2 = lo + g * (hi - lo);
        if corr(c1) > corr(c2) {
            hi = c2;
        } else {
            lo = c1;
        }
    }
    let a = 0.5 * (lo + hi);
    let a = if corr(a) >= best_v { a } else { best };
    let d2 = u.l2_norm().powi(2) + profile.resized(u.modes()).l2_norm().powi(2) - 2.0 * corr(a);
    (d2.max(0.0).sqrt(), a.rem_euclid(TAU))
}

/// Weakly nonlinear guess for the `n`-cell steady state:
/// `a sin(nx) + b sin(2nx)` with amplitudes from the balance between growth of
/// mode `n`, damping of mode `2n` and their quadratic interaction.
pub fn seed_n_modal(n: usize, p: &GksParams) -> SpectralField {
    let modes = p.modes;
    let lam_n = p.growth_rate(n);
    let mut u = SpectralField::zeros(modes);
    if 2 * n > modes {
        u.set_sin(n, lam_n.abs().sqrt().max(0.1));
        return u;
    }
    let lam_2n = p.growth_rate(2 * n);
    let phi_n = SpectralField::sine_mode(modes, n, 1.0);
    let phi_2n = SpectralField::sine_mode(modes, 2 * n, 1.0);
    let r = advective_product(&phi_n, &phi_n).sin(2 * n);
    let mut cross = advective_product(&phi_n, &phi_2n);
    cross += &advective_product(&phi_2n, &phi_n);
    let q = cross.sin(n);
    // −λ_n a + q a b = 0,  −λ_2n b + r a² = 0.
    let a2 = lam_n * lam_2n / (q * r);
    let a = if a2 > 0.0 && a2.is_finite() {
        a2.sqrt()
    } else {
        lam_n.abs().sqrt().max(0.1)
    };
    let b = r * a * a / lam_2n;
    u.set_sin(n, a);
    u.set_sin(2 * n, b);
    u
}

/// Which equation parameter a branch is continued in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuationParameter {
    Nu,
    Mu,
    Delta,
}

impl ContinuationParameter {
    pub fn get(&self, p: &GksParams) -> f64 {
        match self {
            ContinuationParameter::Nu => p.nu,
            ContinuationParameter::Mu => p.mu,
            ContinuationParameter::Delta => p.delta,
        }
    }

    pub fn set(&self, p: &GksParams, v: f64) -> GksParams {
        let mut q = *p;
        match self {
            ContinuationParameter::Nu => q.nu = v,
            ContinuationParameter::Mu => q.mu = v,
            ContinuationParameter::Delta => q.delta = v,
        }
        q
    }

    pub fn name(&self) -> &'static str {
        match self {
            ContinuationParameter::Nu => "nu",
            ContinuationParameter::Mu => "mu",
            ContinuationParameter::Delta => "delta",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOptions {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    /// Corrections larger than this fraction of the predicted profile's norm
    /// are treated as failures (guards against jumping to another branch).
    pub max_jump: f64,
    pub newton: NewtonOptions,
    /// Run a perturbation check at every accepted point.
    pub classify: bool,
    pub stability: StabilityOptions,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            initial_step: 1e-2,
            min_step: 1e-5,
            max_step: 5e-2,
            max_jump: 0.2,
            newton: NewtonOptions::default(),
            classify: false,
            stability: StabilityOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    /// The requested end value was reached.
    Reached,
    /// The step fell below the minimum; a fold is likely near `at`.
    StepUnderflow { at: f64 },
    /// The truncation became too small for the parameters.
    InvalidParameters { at: f64, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub parameter: ContinuationParameter,
    pub values: Vec<f64>,
    pub points: Vec<Equilibrium>,
    pub termination: Termination,
}

/// Natural-parameter continuation from `start` towards `end`.
///
/// Secant predictor, Newton corrector; a failed correction halves the step,
/// success after two easy solves doubles it (bounded by `max_step`).
pub fn continue_branch(
    start: &Equilibrium,
    parameter: ContinuationParameter,
    end: f64,
    opts: &ContinuationOptions,
) -> Result<Branch> {
    let mut points = vec![start.clone()];
    let mut values = vec![parameter.get(&start.params)];
    if opts.classify {
        points[0].stability = classify_stability(&points[0], &opts.stability)?;
    }
    let dir = (end - values[0]).signum();
    let mut h = opts.initial_step.abs().min(opts.max_step);
    let mut termination = Termination::Reached;
    while dir != 0.0 && (end - values.last().unwrap()) * dir > 1e-12 {
        let cur = values.last().copied().unwrap();
        let step = (h * dir).abs().min((end - cur).abs()) * dir;
        let next = cur + step;
        let params = parameter.set(&points.last().unwrap().params, next);
        if let Err(e) = params.validate() {
            termination = Termination::InvalidParameters {
                at: next,
                message: e.to_string(),
            };
            break;
        }
        let last = points.last().unwrap();
        let (guess, c_guess) = if points.len() >= 2 {
            let prev = &points[points.len() - 2];
            let pv = values[values.len() - 2];
            let w = (next - cur) / (cur - pv);
            let mut g = &last.profile - &prev.profile;
            g.scale(w);
            g += &last.profile;
            (g, last.speed + w * (last.speed - prev.speed))
        } else {
            (last.profile.clone(), last.speed)
        };
        let solved = newton_solve(&guess, c_guess, last.kind, &params, &opts.newton)
            .ok()
            .filter(|eq| {
                let jump = phase_distance(&eq.profile, &guess).0;
                jump <= opts.max_jump * guess.l2_norm().max(1e-8)
            });
        match solved {
            Some(mut eq) => {
                if opts.classify {
                    eq.stability = classify_stability(&eq, &opts.stability)?;
                }
                points.push(eq);
                values.push(next);
                h = (h * 1.5).min(opts.max_step);
            }
            None => {
                h *= 0.5;
                if h < opts.min_step {
                    termination = Termination::StepUnderflow { at: cur };
                    break;
                }
            }
        }
    }
    Ok(Branch {
        parameter,
        values,
        points,
        termination,
    })
}

/// Steady state at `p` on the branch that bifurcates from zero at the
/// `n`-th onset `ν = (1 + μn)/n²`, reached by continuation in `ν` from just
/// below the onset.
pub fn steady_state_on_branch(p: &GksParams, n: usize, opts: &ContinuationOptions) -> Result<Equilibrium> {
    p.validate()?;
    if p.delta != 0.0 {
        return Err(GksError::InvalidParameter(
            "steady states require delta = 0; dispersion makes them travel".into(),
        ));
    }
    if n == 0 {
        return Err(GksError::InvalidParameter("branch index starts at 1".into()));
    }
    let onset = (1.0 + p.mu * n as f64) / (n * n) as f64;
    if !(onset > p.nu) {
        return Err(GksError::InvalidParameter(format!(
            "branch {n} bifurcates at nu = {onset}, below the requested nu = {}",
            p.nu
        )));
    }
    let start = GksParams::new(0.97 * onset, p.mu, 0.0, p.modes)?;
    let eq = newton_solve(&seed_n_modal(n, &start), 0.0, EquilibriumKind::Steady, &start, &opts.newton)?;
    let branch = continue_branch(&eq, ContinuationParameter::Nu, p.nu, opts)?;
    if branch.termination != Termination::Reached {
        return Err(GksError::InvalidParameter(format!(
            "branch {n} stopped before nu = {}: {:?}",
            p.nu, branch.termination
        )));
    }
    let out = branch.points.last().expect("branch holds its start").clone();
    if out.profile.l2_norm() < 1e-6 {
        return Err(GksError::InvalidParameter(format!("branch {n} collapsed to zero")));
    }
    Ok(out)
}

/// Continuation settings that follow the steady branches used by the
/// feedback experiments.
pub fn branch_following() -> ContinuationOptions {
    ContinuationOptions {
        initial_step: 1e-3,
        max_step: 2e-2,
        ..ContinuationOptions::default()
    }
}

/// `kU(kx)` travels with speed `kc` at `(ν/k², μ/k, δ/k)`. The result is
/// re-solved on `modes` modes.
pub fn dilate_equilibrium(eq: &Equilibrium, k: usize, modes: usize) -> Result<Equilibrium> {
    let kf = k as f64;
    let q = GksParams::new(
        eq.params.nu / (kf * kf),
        eq.params.mu / kf,
        eq.params.delta / kf,
        modes,
    )?;
    let guess = eq.profile.dilate(k, modes);
    let mut out = newton_solve(&guess, kf * eq.speed, eq.kind, &q, &NewtonOptions::default())?;
    out.stability = Stability::Unknown;
    Ok(out)
}

/// Recipe for [`pulse_wave`]: a dispersive single pulse is grown by direct
/// simulation at `(nu0, delta0)` and then continued to the requested
/// parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSeed {
    pub nu0: f64,
    pub delta0: f64,
    pub horizon: f64,
    pub continuation: ContinuationOptions,
}

impl Default for PulseSeed {
    fn default() -> Self {
        PulseSeed {
            nu0: 0.25,
            delta0: 0.1,
            horizon: 200.0,
            continuation: ContinuationOptions {
                initial_step: 1e-3,
                max_step: 1e-2,
                min_step: 1e-7,
                ..ContinuationOptions::default()
            },
        }
    }
}

/// `pulses`-pulse travelling wave at `p`, built as a dilated single pulse.
pub fn pulse_wave(p: &GksParams, pulses: usize, seed: &PulseSeed) -> Result<Equilibrium> {
    p.validate()?;
    if pulses == 0 || pulses > p.modes {
        return Err(GksError::InvalidParameter(format!(
            "pulse count {pulses} must lie in 1..={}",
            p.modes
        )));
    }
    let k = pulses as f64;
    let base_modes = p.modes / pulses;
    let q = GksParams::new(seed.nu0, 0.0, seed.delta0, base_modes)?;
    let u0 = SpectralField::project(base_modes, |x| x.sin() + 0.3 * (2.0 * x + 1.0).cos());
    let dt = StepperConfig::default_dt(q.nu);
    let cfg = StepperConfig::new(dt, seed.horizon, (0.5 / dt).round() as usize)?;
    let traj = simulate(&q, &u0, &Uncontrolled, &cfg)?;
    let (a, b) = (&traj.states[traj.len() - 2], traj.last());
    let (_, shift) = phase_distance(b, a);
    let shift = if shift > std::f64::consts::PI { shift - TAU } else { shift };
    let h = traj.times[traj.len() - 1] - traj.times[traj.len() - 2];
    let mut eq = newton_solve(a, shift / h, EquilibriumKind::Travelling, &q, &seed.continuation.newton)?;
    let legs = [
        (ContinuationParameter::Nu, k * k * p.nu),
        (ContinuationParameter::Mu, k * p.mu),
        (ContinuationParameter::Delta, k * p.delta),
    ];
    for (param, end) in legs {
        if param.get(&eq.params) == end {
            continue;
        }
        let br = continue_branch(&eq, param, end, &seed.continuation)?;
        if br.termination != Termination::Reached {
            return Err(GksError::InvalidParameter(format!(
                "pulse branch stopped while continuing {}: {:?}",
                param.name(),
                br.termination
            )));
        }
        eq = br.points.last().expect("branch holds its start").clone();
    }
    if eq.profile.l2_norm() < 1e-6 {
        return Err(GksError::InvalidParameter("pulse branch collapsed to zero".into()));
    }
    if pulses == 1 && base_modes == p.modes {
        return Ok(eq);
    }
    dilate_equilibrium(&eq, pulses, p.modes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityOptions {
    /// Eigenvalues with real part above this count as unstable.
    pub threshold: f64,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        StabilityOptions { threshold: 1e-6 }
    }
}

/// Spectrum of the linearisation about the equilibrium in its comoving frame,
/// restricted to mean-free perturbations, sorted by decreasing real part.
pub fn linear_spectrum(eq: &Equilibrium) -> Result<Vec<Complex64>> {
    let p = &eq.params;
    let layout = Layout {
        kind: EquilibriumKind::Steady,
        modes: p.modes,
    };
    let jac = -jacobian(&layout, &eq.profile, eq.speed, p);
    let mut ev = eigenvalues(&jac)?;
    ev.sort_by(|a, b| b.re.total_cmp(&a.re));
    Ok(ev)
}

/// Linear stability modulo translation: the eigenvalue closest to zero is the
/// translation mode and is dropped (for non-constant profiles).
pub fn classify_stability(eq: &Equilibrium, opts: &StabilityOptions) -> Result<Stability> {
    if !eq.profile.is_finite() {
        return Err(GksError::NonFinite("equilibrium profile".into()));
    }
    let mut ev = linear_spectrum(eq)?;
    if eq.profile.l2_norm() > 1e-12 {
        let idx = (0..ev.len())
            .min_by(|&i, &j| ev[i].norm().total_cmp(&ev[j].norm()))
            .expect("non-empty spectrum");
        ev.remove(idx);
    }
    let growth = ev.first().map_or(f64::NEG_INFINITY, |z| z.re);
    Ok(if growth > opts.threshold {
        Stability::Unstable { growth }
    } else {
        Stability::Stable
    })
}
