//! Tracking costs, the backward adjoint solve and gradient descent on the
//! actuator positions.
//!
//! The gradient treats the gain `K` as fixed while the actuator shapes move:
//! the forward closed loop is `u_t = Lu − P(uu_x) + B(x) K P_u(u − ū)`, and
//! the adjoint `p` solves
//!
//! ```text
//! −p_t = Lᵀp + P(u p_x) + P_uᵀ Kᵀ B(x)ᵀ p + W(u − ū) + γ P_uᵀ Kᵀ f,
//! p(T) = W(u(T) − ū(T)),
//! ```
//!
//! so that `∂C/∂x_i = ∫ f_i ∂_{x_i}⟨b_i, p⟩ dt`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{implicit_solve, simulate, StepperConfig, Trajectory};
use crate::error::{GksError, Result};
use crate::feedback::{
    build_matrices, design_controller_with, wrap_angle, ActuatorSet, ActuatorShape, Controller, FeedbackLaw,
    MarginPolicy, Target, MIN_SEPARATION,
};
use crate::spectral::{advective_product, slot_mode, GksParams, SpectralField};

/// Which Sobolev norm the tracking terms use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// `C1`: L².
    L2,
    /// `C2`: L² plus first derivative.
    H1,
    /// `C3`: L² plus first and second derivatives.
    H2,
}

impl NormKind {
    /// Weight of a slot with wavenumber `n`.
    pub fn weight(&self, n: usize) -> f64 {
        let k2 = (n * n) as f64;
        match self {
            NormKind::L2 => 1.0,
            NormKind::H1 => 1.0 + k2,
            NormKind::H2 => 1.0 + k2 + k2 * k2,
        }
    }

    /// `Σ w(n) v_slot²`.
    pub fn squared_norm(&self, v: &SpectralField) -> f64 {
        v.coeffs()
            .iter()
            .enumerate()
            .map(|(slot, c)| self.weight(slot_mode(slot)) * c * c)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub norm: NormKind,
    pub gamma: f64,
    pub horizon: f64,
}

impl CostSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(GksError::InvalidParameter(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(GksError::InvalidParameter(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// `½∫‖u − ū‖²_W dt`.
    pub tracking: f64,
    /// `½‖u(T) − ū(T)‖²_W`.
    pub terminal: f64,
    /// `γ/2 Σ_i ∫ f_i² dt`.
    pub penalty: f64,
    /// Sum of the three terms above.
    pub total: f64,
    /// `Σ_i ‖f_i‖_{L²(0,T)}`.
    pub control_energy: f64,
    /// Total with the penalty `γ/2 Σ_i ‖f_i‖_{L²(0,T)}` (unsquared).
    pub total_unsquared: f64,
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

fn check_horizon(traj: &Trajectory, horizon: f64) -> Result<()> {
    let end = *traj.times.last().unwrap_or(&0.0);
    if (end - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(GksError::DimensionMismatch(format!(
            "trajectory ends at {end}, cost horizon is {horizon}"
        )));
    }
    Ok(())
}

/// Trapezoid quadrature of the tracking and penalty terms over the recorded
/// samples.
pub fn evaluate_cost(traj: &Trajectory, target: &Target, spec: &CostSpec) -> Result<CostBreakdown> {
    spec.validate()?;
    check_horizon(traj, spec.horizon)?;
    let dist: Vec<f64> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, u)| spec.norm.squared_norm(&(u - &target.at(t, u.modes()))))
        .collect();
    let tracking = 0.5 * trapezoid(&traj.times, &dist);
    let terminal = 0.5 * dist.last().copied().unwrap_or(0.0);
    let m = traj.controls.first().map_or(0, |f| f.len());
    let mut penalty = 0.0;
    let mut control_energy = 0.0;
    for i in 0..m {
        let sq: Vec<f64> = traj.controls.iter().map(|f| f[i] * f[i]).collect();
        let e = trapezoid(&traj.times, &sq);
        penalty += e;
        control_energy += e.sqrt();
    }
    let penalty = 0.5 * spec.gamma * penalty;
    Ok(CostBreakdown {
        tracking,
        terminal,
        penalty,
        total: tracking + terminal + penalty,
        control_energy,
        total_unsquared: tracking + terminal + 0.5 * spec.gamma * control_energy,
    })
}

/// Adjoint states on the forward time grid (stored in increasing time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjointTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<SpectralField>,
}

/// `W v` in place.
fn apply_weight(norm: NormKind, v: &mut SpectralField) {
    for (slot, c) in v.coeffs_mut().iter_mut().enumerate() {
        *c *= norm.weight(slot_mode(slot));
    }
}

/// Explicit part of the adjoint right-hand side at a forward sample.
fn adjoint_explicit(
    p_state: &SpectralField,
    u: &SpectralField,
    f: &[f64],
    t: f64,
    law: Option<&FeedbackLaw>,
    target: &Target,
    spec: &CostSpec,
) -> SpectralField {
    let mut e = advective_product(u, p_state);
    let mut g = u - &target.at(t, u.modes());
    apply_weight(spec.norm, &mut g);
    e += &g;
    if let Some(law) = law {
        let mut v = law.input_transpose(p_state.coeffs());
        for (vi, fi) in v.iter_mut().zip(f) {
            *vi += spec.gamma * fi;
        }
        law.add_gain_transpose(&v, e.coeffs_mut());
    }
    e
}

/// Integrates the adjoint backwards with IMEX-BDF2 on the forward grid.
///
/// The forward trajectory must be recorded at every step.
pub fn solve_adjoint(
    p: &GksParams,
    traj: &Trajectory,
    law: Option<&FeedbackLaw>,
    target: &Target,
    spec: &CostSpec,
) -> Result<AdjointTrajectory> {
    spec.validate()?;
    check_horizon(traj, spec.horizon)?;
    if traj.stride != 1 {
        return Err(GksError::InvalidParameter(format!(
            "the adjoint needs every forward step, trajectory stride is {}",
            traj.stride
        )));
    }
    if traj.len() < 2 {
        return Err(GksError::InvalidParameter("trajectory has fewer than two samples".into()));
    }
    let n = traj.len();
    let dt = traj.dt;
    let mut out = vec![SpectralField::zeros(p.modes); n];

    let mut p_now = &traj.states[n - 1] - &target.at(traj.times[n - 1], p.modes);
    apply_weight(spec.norm, &mut p_now);
    out[n - 1] = p_now.clone();

    let explicit = |k: usize, state: &SpectralField| {
        adjoint_explicit(state, &traj.states[k], &traj.controls[k], traj.times[k], law, target, spec)
    };

    let mut e_now = explicit(n - 1, &p_now);
    // IMEX Euler start.
    let mut p_next = p_now.clone();
    p_next.axpy(dt, &e_now);
    implicit_solve(p, dt, 1.0, -1.0, p_next.coeffs_mut());
    check_adjoint(&p_next, traj.times[n - 2])?;
    out[n - 2] = p_next.clone();

    let mut p_prev = p_now;
    p_now = p_next;
    let mut e_prev = e_now;
    for k in (0..n - 2).rev() {
        e_now = explicit(k + 1, &p_now);
        let mut rhs = SpectralField::zeros(p.modes);
        {
            let r = rhs.coeffs_mut();
            let (a, b, ea, eb) = (p_now.coeffs(), p_prev.coeffs(), e_now.coeffs(), e_prev.coeffs());
            for i in 0..r.len() {
                r[i] = 2.0 * a[i] - 0.5 * b[i] + dt * (2.0 * ea[i] - eb[i]);
            }
        }
        implicit_solve(p, dt, 1.5, -1.0, rhs.coeffs_mut());
        check_adjoint(&rhs, traj.times[k])?;
        out[k] = rhs.clone();
        p_prev = std::mem::replace(&mut p_now, rhs);
        e_prev = e_now;
    }
    Ok(AdjointTrajectory {
        times: traj.times.clone(),
        states: out,
    })
}

fn check_adjoint(p: &SpectralField, t: f64) -> Result<()> {
    let m = p.max_abs_coeff();
    if !m.is_finite() || m > crate::dynamics::BLOW_UP_THRESHOLD {
        return Err(GksError::BlowUp { time: t, magnitude: m });
    }
    Ok(())
}

/// `P_i = ∫ f_i(t) ∂_{x_i}⟨b_i, p(t)⟩ dt`; the descent direction is `−P`.
pub fn position_gradient(traj: &Trajectory, adj: &AdjointTrajectory, actuators: &ActuatorSet) -> Result<Vec<f64>> {
    if adj.times.len() != traj.times.len() {
        return Err(GksError::DimensionMismatch(format!(
            "adjoint has {} samples, forward has {}",
            adj.times.len(),
            traj.times.len()
        )));
    }
    let m = actuators.len();
    let mut grad = vec![0.0; m];
    let mut integrand = vec![0.0; traj.len()];
    for (i, g) in grad.iter_mut().enumerate() {
        for (k, v) in integrand.iter_mut().enumerate() {
            *v = traj.controls[k][i] * actuators.sample_slope(i, &adj.states[k]);
        }
        *g = trapezoid(&traj.times, &integrand);
    }
    Ok(grad)
}

pub fn descent_direction(traj: &Trajectory, adj: &AdjointTrajectory, actuators: &ActuatorSet) -> Result<Vec<f64>> {
    Ok(position_gradient(traj, adj, actuators)?.into_iter().map(|g| -g).collect())
}

/// Everything that stays fixed while the actuators move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementProblem {
    pub params: GksParams,
    pub target: Target,
    pub spec: CostSpec,
    pub initial: SpectralField,
    pub shape: ActuatorShape,
    pub dt: f64,
    pub margin: MarginPolicy,
}

impl PlacementProblem {
    fn stepper(&self) -> Result<StepperConfig> {
        StepperConfig::new(self.dt, self.spec.horizon, 1)
    }

    pub fn controller(&self, positions: &[f64]) -> Result<Controller> {
        let acts = ActuatorSet::new(positions.to_vec(), self.shape)?;
        design_controller_with(&self.params, acts, self.target.clone(), self.margin)
    }

    /// Closed-loop run and its cost with the gain designed for `positions`.
    pub fn evaluate(&self, positions: &[f64]) -> Result<(Controller, Trajectory, CostBreakdown)> {
        let ctl = self.controller(positions)?;
        let traj = simulate(&self.params, &self.initial, &ctl.law, &self.stepper()?)?;
        let cost = evaluate_cost(&traj, &self.target, &self.spec)?;
        Ok((ctl, traj, cost))
    }

    /// Cost with the gain `gain` held fixed while the actuators sit at
    /// `positions`; this is the functional whose gradient the adjoint gives.
    pub fn frozen_gain_cost(&self, positions: &[f64], gain: &nalgebra::DMatrix<f64>) -> Result<CostBreakdown> {
        let acts = ActuatorSet::new(positions.to_vec(), self.shape)?;
        let mats = build_matrices(&self.params, &acts);
        let law = FeedbackLaw::new(gain.clone(), &mats, self.target.clone())?;
        let traj = simulate(&self.params, &self.initial, &law, &self.stepper()?)?;
        evaluate_cost(&traj, &self.target, &self.spec)
    }

    /// Gradient of [`Self::frozen_gain_cost`] at the controller's positions.
    pub fn gradient(&self, ctl: &Controller, traj: &Trajectory) -> Result<Vec<f64>> {
        let adj = solve_adjoint(&self.params, traj, Some(&ctl.law), &self.target, &self.spec)?;
        position_gradient(traj, &adj, &ctl.actuators)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementOptions {
    pub max_iterations: usize,
    /// Halvings tried per line search.
    pub max_trials: usize,
    /// First trial moves the fastest actuator by this fraction of `2π`.
    pub initial_fraction: f64,
}

impl Default for PlacementOptions {
    fn default() -> Self {
        PlacementOptions {
            max_iterations: 25,
            max_trials: 20,
            initial_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementIterate {
    pub iteration: usize,
    pub positions: Vec<f64>,
    pub cost: CostBreakdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementStop {
    ZeroGradient,
    NoDecrease,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementResult {
    pub iterates: Vec<PlacementIterate>,
    pub stop: PlacementStop,
}

impl PlacementResult {
    pub fn best(&self) -> &PlacementIterate {
        self.iterates.last().expect("at least the starting iterate")
    }
}

/// Wraps onto the circle and pushes apart actuators closer than
/// [`MIN_SEPARATION`], keeping each actuator's index.
pub fn project_positions(x: &[f64]) -> Vec<f64> {
    let m = x.len();
    let mut order: Vec<(f64, usize)> = x.iter().map(|&v| wrap_angle(v)).zip(0..m).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    for j in 1..m {
        if order[j].0 - order[j - 1].0 < MIN_SEPARATION {
            order[j].0 = order[j - 1].0 + MIN_SEPARATION;
        }
    }
    let mut out = vec![0.0; m];
    for (v, i) in order {
        // Pushing can run past 2π; the wrapped point then sits just after 0,
        // clear of the first actuator unless the circle is nearly full.
        let w = wrap_angle(v);
        out[i] = if w == 0.0 { MIN_SEPARATION * 0.5 } else { w };
    }
    out
}

/// Gradient descent with backtracking; stops as soon as a line search finds
/// no strict decrease.
pub fn optimize_placement(
    problem: &PlacementProblem,
    x0: &[f64],
    opts: &PlacementOptions,
) -> Result<PlacementResult> {
    problem.spec.validate()?;
    let (mut ctl, mut traj, mut cost) = problem.evaluate(x0)?;
    let mut x = ctl.actuators.positions().to_vec();
    let mut iterates = vec![PlacementIterate {
        iteration: 0,
        positions: x.clone(),
        cost,
    }];
    for it in 1..=opts.max_iterations {
        let grad = problem.gradient(&ctl, &traj)?;
        let h: Vec<f64> = grad.iter().map(|g| -g).collect();
        let hmax = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if hmax == 0.0 || !hmax.is_finite() {
            return Ok(PlacementResult {
                iterates,
                stop: PlacementStop::ZeroGradient,
            });
        }
        let mut s = opts.initial_fraction * std::f64::consts::TAU / hmax;
        let mut accepted = None;
        for _ in 0..opts.max_trials {
            let trial: Vec<f64> = x.iter().zip(&h).map(|(xi, hi)| xi + s * hi).collect();
            let trial = project_positions(&trial);
            if let Ok(found) = problem.evaluate(&trial) {
                if found.2.total < cost.total {
                    accepted = Some((trial, found));
                    break;
                }
            }
            s *= 0.5;
        }
        let Some((trial, (c, t, k))) = accepted else {
            return Ok(PlacementResult {
                iterates,
                stop: PlacementStop::NoDecrease,
            });
        };
        x = trial;
        ctl = c;
        traj = t;
        cost = k;
        iterates.push(PlacementIterate {
            iteration: it,
            positions: x.clone(),
            cost,
        });
    }
    Ok(PlacementResult {
        iterates,
        stop: PlacementStop::IterationLimit,
    })
}
