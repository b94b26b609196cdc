//! IMEX-BDF2 time integration of the Galerkin system.
//!
//! The linear operator (including the dispersive rotation) is treated
//! implicitly mode by mode; the quadratic nonlinearity and actuator forcing
//! are extrapolated explicitly.

use serde::{Deserialize, Serialize};

use crate::error::{GksError, Result};
use crate::spectral::{advective_product_into, cos_slot, sin_slot, GksParams, SpectralField};

/// Coefficient magnitude beyond which a run is declared to have blown up.
pub const BLOW_UP_THRESHOLD: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub dt: f64,
    pub t_final: f64,
    pub record_every: usize,
}

impl StepperConfig {
    pub fn new(dt: f64, t_final: f64, record_every: usize) -> Result<Self> {
        let cfg = StepperConfig {
            dt,
            t_final,
            record_every,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Default step: `1e-3` for `ν ≥ 0.1`, `2.5e-4` below.
    pub fn default_dt(nu: f64) -> f64 {
        if nu >= 0.1 {
            1e-3
        } else {
            2.5e-4
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.dt.is_finite() || !self.t_final.is_finite() {
            return Err(GksError::NonFinite(format!(
                "dt = {}, t_final = {}",
                self.dt, self.t_final
            )));
        }
        if self.dt <= 0.0 {
            return Err(GksError::InvalidTimeStep(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.t_final < self.dt {
            return Err(GksError::InvalidTimeStep(format!(
                "final time {} is shorter than one step {}",
                self.t_final, self.dt
            )));
        }
        if self.record_every == 0 {
            return Err(GksError::InvalidParameter(
                "record_every must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// Recorded states and actuator amplitudes at uniformly spaced times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Integration step.
    pub dt: f64,
    /// Steps between consecutive samples.
    pub stride: usize,
    pub times: Vec<f64>,
    pub states: Vec<SpectralField>,
    /// Amplitudes `f_i(t)` at each recorded time (empty rows without control).
    pub controls: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &SpectralField {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn sample_spacing(&self) -> f64 {
        self.dt * self.stride as f64
    }

    pub fn l2_norms(&self) -> Vec<f64> {
        self.states.iter().map(|u| u.l2_norm()).collect()
    }
}

/// A rule producing actuator amplitudes and their projection onto the modes.
pub trait ControlLaw {
    fn num_controls(&self) -> usize;

    /// Writes `f(t)` for state `u` into `out`.
    fn amplitudes(&self, t: f64, u: &SpectralField, out: &mut [f64]);

    /// Adds `Σ_i b_i f_i` (Galerkin coefficients) to `rhs`.
    fn add_forcing(&self, amplitudes: &[f64], rhs: &mut [f64]);
}

/// No actuation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Uncontrolled;

impl ControlLaw for Uncontrolled {
    fn num_controls(&self) -> usize {
        0
    }

    fn amplitudes(&self, _t: f64, _u: &SpectralField, _out: &mut [f64]) {}

    fn add_forcing(&self, _amplitudes: &[f64], _rhs: &mut [f64]) {}
}

/// Solves `(γ₀ I − dt L) x = rhs` in place, block by block. `L` carries the
/// growth rate on the diagonal and the dispersive rotation off it; `sign`
/// flips the rotation (used for the transposed operator).
pub(crate) fn implicit_solve(p: &GksParams, dt: f64, gamma0: f64, sign: f64, rhs: &mut [f64]) {
    rhs[0] /= gamma0;
    for n in 1..=p.modes {
        let a = gamma0 - dt * p.growth_rate(n);
        let q = sign * dt * p.dispersion(n);
        let (s, c) = (rhs[sin_slot(n)], rhs[cos_slot(n)]);
        let det = a * a + q * q;
        rhs[sin_slot(n)] = (a * s - q * c) / det;
        rhs[cos_slot(n)] = (q * s + a * c) / det;
    }
}

/// Applies the linear operator `L` (growth rates plus dispersion).
pub fn apply_linear(p: &GksParams, u: &[f64], out: &mut [f64]) {
    out[0] = 0.0;
    for n in 1..=p.modes {
        let a = p.growth_rate(n);
        let d = p.dispersion(n);
        let (s, c) = (u[sin_slot(n)], u[cos_slot(n)]);
        out[sin_slot(n)] = a * s - d * c;
        out[cos_slot(n)] = d * s + a * c;
    }
}

/// One IMEX-BDF2 step:
/// `(3/2 I − dt L) uⁿ⁺¹ = 2uⁿ − ½uⁿ⁻¹ + dt(2Eⁿ − Eⁿ⁻¹)`.
pub fn step_imex_bdf2(
    p: &GksParams,
    dt: f64,
    u_n: &SpectralField,
    u_nm1: &SpectralField,
    e_n: &SpectralField,
    e_nm1: &SpectralField,
) -> SpectralField {
    let mut rhs = SpectralField::zeros(p.modes);
    {
        let r = rhs.coeffs_mut();
        let (un, unm1, en, enm1) = (u_n.coeffs(), u_nm1.coeffs(), e_n.coeffs(), e_nm1.coeffs());
        for i in 0..r.len() {
            r[i] = 2.0 * un[i] - 0.5 * unm1[i] + dt * (2.0 * en[i] - enm1[i]);
        }
        implicit_solve(p, dt, 1.5, 1.0, r);
    }
    rhs
}

/// First-order IMEX Euler step `(I − dt L) u¹ = u⁰ + dt E⁰`, used to start BDF2.
pub fn step_imex_euler(p: &GksParams, dt: f64, u: &SpectralField, e: &SpectralField) -> SpectralField {
    let mut out = u.clone();
    out.axpy(dt, e);
    implicit_solve(p, dt, 1.0, 1.0, out.coeffs_mut());
    out
}

/// Explicit part `E(u) = −P_N(u u_x) + Σ b_i f_i` written into `out`.
pub(crate) fn explicit_term<C: ControlLaw + ?Sized>(
    u: &SpectralField,
    control: &C,
    amplitudes: &[f64],
    out: &mut [f64],
) {
    let c = u.coeffs();
    advective_product_into(c, c, out);
    out[0] = 0.0;
    for v in out.iter_mut() {
        *v = -*v;
    }
    control.add_forcing(amplitudes, out);
}

fn check_blow_up(u: &SpectralField, t: f64) -> Result<()> {
    let m = u.max_abs_coeff();
    if !m.is_finite() || m > BLOW_UP_THRESHOLD {
        return Err(GksError::BlowUp {
            time: t,
            magnitude: m,
        });
    }
    Ok(())
}

/// Integrates from `u0` over `[0, T]`, recording every `record_every` steps
/// (the final state is always recorded).
pub fn simulate<C: ControlLaw + ?Sized>(
    p: &GksParams,
    u0: &SpectralField,
    control: &C,
    cfg: &StepperConfig,
) -> Result<Trajectory> {
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
    let m = control.num_controls();
    let mut traj = Trajectory {
        dt,
        stride: cfg.record_every,
        times: Vec::with_capacity(steps / cfg.record_every + 2),
        states: Vec::with_capacity(steps / cfg.record_every + 2),
        controls: Vec::with_capacity(steps / cfg.record_every + 2),
    };

    let mut f = vec![0.0; m];
    let mut u = u0.clone();
    let mut e = SpectralField::zeros(p.modes);
    control.amplitudes(0.0, &u, &mut f);
    explicit_term(&u, control, &f, e.coeffs_mut());
    traj.times.push(0.0);
    traj.states.push(u.clone());
    traj.controls.push(f.clone());

    let mut u_prev = u.clone();
    let mut e_prev = e.clone();
    u = step_imex_euler(p, dt, &u, &e);
    check_blow_up(&u, dt)?;

    for step in 1..=steps {
        let t = step as f64 * dt;
        control.amplitudes(t, &u, &mut f);
        std::mem::swap(&mut e_prev, &mut e);
        explicit_term(&u, control, &f, e.coeffs_mut());
        if step % cfg.record_every == 0 || step == steps {
            traj.times.push(t);
            traj.states.push(u.clone());
            traj.controls.push(f.clone());
        }
        if step == steps {
            break;
        }
        let next = step_imex_bdf2(p, dt, &u, &u_prev, &e, &e_prev);
        u_prev = std::mem::replace(&mut u, next);
        check_blow_up(&u, t + dt)?;
    }
    Ok(traj)
}

/// Upper bound on `‖u‖` for unforced runs: an envelope of the peak norms of
/// long chaotic integrations (`T = 200`) with a tenfold safety factor.
pub fn boundedness_ceiling(p: &GksParams) -> f64 {
    let kc = p.critical_wavenumber();
    10.0 * (5.0 * kc + 3.0 * (p.mu.abs() + p.delta.abs()) * kc * kc + 1.0)
}
