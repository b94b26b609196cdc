use anyhow::{bail, ensure, Context, Result};
use gks_core::coupled::{
    coupled_boundedness_ceiling, coupled_boundedness_monitor, coupled_cost, coupled_lyapunov_violation,
    coupled_steady_state, design_coupled_controller, simulate_coupled, CoupledField, CoupledTarget,
    CoupledUncontrolled,
};
use gks_core::dynamics::boundedness_ceiling;
use gks_core::equilibria::{
    branch_following, classify_stability, continue_branch, newton_solve, phase_distance, pulse_wave,
    seed_n_modal, steady_state_on_branch, ContinuationOptions, ContinuationParameter, Equilibrium,
    EquilibriumKind, PulseSeed, Stability, StabilityOptions,
};
use gks_core::feedback::{
    design_controller_with, lyapunov_monitor, margin_report, robustness_verdict, uncertainty_norm, Controller,
    RobustnessVerdict, Target, LYAPUNOV_TOLERANCE,
};
use gks_core::optimal::{optimize_placement, CostSpec, PlacementProblem};
use gks_core::{simulate, GksParams, SpectralField, StepperConfig, Trajectory, Uncontrolled};
use serde::Serialize;
use std::path::Path;

use crate::config::{
    CoupledConfig, CoupledTargetKind, EquilibriaConfig, FeedbackConfig, Initial, OptimizeConfig, PlacementConfig,
    SimulateConfig, TargetConfig, TargetKind,
};
use crate::output::{
    coefficients_txt, controls_csv, coupled_controls_csv, coupled_grid_csv, grid_csv, matrix_csv, series_csv, OutDir,
};

/// Initial state after the optional uncontrolled spin-up.
fn initial_state(init: &Initial, p: &GksParams, dt: f64) -> Result<SpectralField> {
    let u0 = init.field(p.modes)?;
    if init.spinup == 0.0 {
        return Ok(u0);
    }
    let steps = (init.spinup / dt).round() as usize;
    let cfg = StepperConfig::new(dt, init.spinup, steps.max(1))?;
    let traj = simulate(p, &u0, &Uncontrolled, &cfg).context("spin-up run")?;
    Ok(traj.last().clone())
}

struct ResolvedTarget {
    target: Target,
    equilibrium: Option<Equilibrium>,
}

impl ResolvedTarget {
    /// `‖u − ū(t)‖`, minimised over phase for travelling targets.
    fn distance(&self, u: &SpectralField, t: f64) -> f64 {
        match &self.equilibrium {
            Some(eq) if eq.kind == EquilibriumKind::Travelling => phase_distance(u, &eq.target_at(t)).0,
            _ => (u - &self.target.at(t, u.modes())).l2_norm(),
        }
    }
}

fn resolve_target(p: &GksParams, cfg: &TargetConfig) -> Result<ResolvedTarget> {
    let q = match &cfg.params {
        Some(tp) => GksParams::new(tp.nu, tp.mu, tp.delta, p.modes)?,
        None => *p,
    };
    let equilibrium = match cfg.kind {
        TargetKind::Zero => {
            ensure!(cfg.branch.is_none() && cfg.pulses.is_none(), "zero target takes no branch or pulses");
            None
        }
        TargetKind::Steady => {
            ensure!(cfg.pulses.is_none(), "target.pulses applies to travelling targets");
            let n = cfg.branch.unwrap_or(1);
            Some(steady_state_on_branch(&q, n, &branch_following()).context("computing the steady target")?)
        }
        TargetKind::Travelling => {
            ensure!(cfg.branch.is_none(), "target.branch applies to steady targets");
            let k = cfg.pulses.unwrap_or(1);
            Some(pulse_wave(&q, k, &PulseSeed::default()).context("computing the travelling target")?)
        }
    };
    let target = equilibrium.as_ref().map_or(Target::Zero, |eq| eq.as_target());
    Ok(ResolvedTarget { target, equilibrium })
}

#[derive(Serialize)]
struct SimulateSummary {
    max_l2: f64,
    boundedness_ceiling: f64,
    bounded: bool,
    final_l2: f64,
}

pub fn simulate_cmd(mut cfg: SimulateConfig, out: &Path) -> Result<()> {
    cfg.output.validate()?;
    let p = cfg.equation.resolve()?;
    let stepper = cfg.stepper.resolve(p.nu)?;
    let u0 = initial_state(&cfg.initial, &p, stepper.dt)?;
    let traj = simulate(&p, &u0, &Uncontrolled, &stepper)?;
    let mut dir = OutDir::create(out)?;
    dir.write("trajectory.csv", &grid_csv(&traj, cfg.output.grid))?;
    let norms: Vec<_> = traj.states.iter().map(|u| u.norms()).collect();
    let l2: Vec<f64> = norms.iter().map(|n| n.l2).collect();
    let h1: Vec<f64> = norms.iter().map(|n| n.h1()).collect();
    let h2: Vec<f64> = norms.iter().map(|n| n.h2()).collect();
    dir.write("norms.csv", &series_csv(&["l2", "h1", "h2"], &traj.times, &[&l2, &h1, &h2]))?;
    let max_l2 = l2.iter().copied().fold(0.0, f64::max);
    let ceiling = boundedness_ceiling(&p);
    dir.json(
        "summary.json",
        &SimulateSummary {
            max_l2,
            boundedness_ceiling: ceiling,
            bounded: max_l2 <= ceiling,
            final_l2: traj.last().l2_norm(),
        },
    )?;
    dir.finish("simulate", &cfg)?;
    ensure!(max_l2 <= ceiling, "boundedness monitor exceeded: {max_l2} > {ceiling}");
    Ok(())
}

#[derive(Serialize)]
struct FeedbackSummary {
    actuators: Vec<f64>,
    placement_method: String,
    target_eigenvalues: Vec<[f64; 2]>,
    eigenvector_condition: f64,
    target_l2: f64,
    target_speed: f64,
    final_distance: f64,
    peak_control: f64,
    final_control: f64,
    lyapunov_max_rate: f64,
    lyapunov_violation: Option<[f64; 2]>,
}

struct ClosedLoop {
    params: GksParams,
    controller: Controller,
    target: ResolvedTarget,
    traj: Trajectory,
}

fn run_feedback(cfg: &mut FeedbackConfig, dir: &mut OutDir) -> Result<ClosedLoop> {
    cfg.output.validate()?;
    let p = cfg.equation.resolve()?;
    let stepper = cfg.stepper.resolve(p.nu)?;
    let acts = cfg.actuators.set()?;
    let target = resolve_target(&p, &cfg.target)?;
    let controller = design_controller_with(&p, acts, target.target.clone(), cfg.margin)?;
    let u0 = initial_state(&cfg.initial, &p, stepper.dt)?;
    let traj = simulate(&p, &u0, &controller.law, &stepper)?;

    dir.write("trajectory.csv", &grid_csv(&traj, cfg.output.grid))?;
    dir.write("controls.csv", &controls_csv(&traj.times, &traj.controls))?;
    dir.write("gain.csv", &matrix_csv(&controller.gain.k))?;
    if let Some(eq) = &target.equilibrium {
        dir.write("target.txt", &coefficients_txt(&eq.profile))?;
    }
    let dist: Vec<f64> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(t, u)| target.distance(u, *t))
        .collect();
    let norms = traj.l2_norms();
    dir.write("residual.csv", &series_csv(&["distance", "l2"], &traj.times, &[&dist, &norms]))?;
    let lyap = lyapunov_monitor(&traj, &target.target);
    dir.write("lyapunov.csv", &series_csv(&["V", "dVdt"], &lyap.times, &[&lyap.energy, &lyap.rate]))?;

    let amp = |f: &Vec<f64>| f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let summary = FeedbackSummary {
        actuators: controller.actuators.positions().to_vec(),
        placement_method: format!("{:?}", controller.gain.method),
        target_eigenvalues: controller.gain.targets.iter().map(|z| [z.re, z.im]).collect(),
        eigenvector_condition: controller.gain.eigenvector_condition,
        target_l2: target.equilibrium.as_ref().map_or(0.0, |e| e.profile.l2_norm()),
        target_speed: target.equilibrium.as_ref().map_or(0.0, |e| e.speed),
        final_distance: *dist.last().unwrap(),
        peak_control: traj.controls.iter().map(amp).fold(0.0, f64::max),
        final_control: traj.controls.last().map_or(0.0, amp),
        lyapunov_max_rate: lyap.max_rate_after(cfg.transient),
        lyapunov_violation: lyap
            .first_violation(cfg.transient, LYAPUNOV_TOLERANCE)
            .map(|(t, r)| [t, r]),
    };
    dir.json("summary.json", &summary)?;
    Ok(ClosedLoop {
        params: p,
        controller,
        target,
        traj,
    })
}

pub fn feedback_cmd(mut cfg: FeedbackConfig, out: &Path) -> Result<()> {
    let mut dir = OutDir::create(out)?;
    run_feedback(&mut cfg, &mut dir)?;
    dir.finish("feedback", &cfg)
}

#[derive(Serialize)]
struct RobustnessSummary {
    eps_nu: f64,
    eps_mu: f64,
    eps_delta: f64,
    uncertainty_norm: f64,
    zeta: f64,
    verdict: RobustnessVerdict,
    final_distance: f64,
}

pub fn robustness_cmd(mut cfg: FeedbackConfig, out: &Path) -> Result<()> {
    let mut dir = OutDir::create(out)?;
    let run = run_feedback(&mut cfg, &mut dir)?;
    let report = margin_report(&run.controller.matrices, &run.controller.gain)?;
    dir.json("margin.json", &report)?;
    let p = run.params;
    let (eps_nu, eps_mu, eps_delta) = match &cfg.target.params {
        Some(tp) => (p.nu - tp.nu, p.mu - tp.mu, p.delta - tp.delta),
        None => (0.0, 0.0, 0.0),
    };
    let norm = uncertainty_norm(eps_nu, eps_mu, run.controller.matrices.unstable_dim());
    let last = run.traj.len() - 1;
    dir.json(
        "robustness.json",
        &RobustnessSummary {
            eps_nu,
            eps_mu,
            eps_delta,
            uncertainty_norm: norm,
            zeta: report.zeta,
            verdict: robustness_verdict(report.zeta, norm),
            final_distance: run.target.distance(&run.traj.states[last], run.traj.times[last]),
        },
    )?;
    dir.finish("robustness", &cfg)
}

#[derive(Serialize)]
struct BranchSummary {
    branch: usize,
    onset: f64,
    points: usize,
    termination: String,
}

pub fn equilibria_cmd(mut cfg: EquilibriaConfig, out: &Path) -> Result<()> {
    let p = cfg.equation.resolve()?;
    ensure!(p.delta == 0.0, "steady branches require delta = 0");
    let c = &mut cfg.continuation;
    ensure!(!c.branches.is_empty(), "continuation.branches is empty");
    let d = branch_following();
    let opts = ContinuationOptions {
        initial_step: *c.initial_step.get_or_insert(d.initial_step),
        max_step: *c.max_step.get_or_insert(d.max_step),
        min_step: *c.min_step.get_or_insert(d.min_step),
        classify: c.classify,
        ..d
    };
    let mut dir = OutDir::create(out)?;
    let mut summaries = Vec::new();
    for &n in &c.branches {
        ensure!(n >= 1, "branch indices start at 1");
        let onset = (1.0 + p.mu * n as f64) / (n * n) as f64;
        let start = GksParams::new(0.97 * onset, p.mu, 0.0, p.modes)?;
        if c.nu_end >= start.nu {
            bail!("branch {n} starts at nu = {}, not above nu_end = {}", start.nu, c.nu_end);
        }
        let mut eq = newton_solve(&seed_n_modal(n, &start), 0.0, EquilibriumKind::Steady, &start, &opts.newton)?;
        if opts.classify {
            eq.stability = classify_stability(&eq, &StabilityOptions::default())?;
        }
        let branch = continue_branch(&eq, ContinuationParameter::Nu, c.nu_end, &opts)?;
        let mut csv = String::from("param,L2norm,stable,c\n");
        for (i, (v, e)) in branch.values.iter().zip(&branch.points).enumerate() {
            let stable = match e.stability {
                Stability::Stable => "1",
                Stability::Unstable { .. } => "0",
                Stability::Unknown => "",
            };
            csv.push_str(&format!("{v},{},{stable},{}\n", e.profile.l2_norm(), e.speed));
            dir.write(&format!("coefficients/branch{n}/{i:04}.txt"), &coefficients_txt(&e.profile))?;
        }
        dir.write(&format!("branch{n}.csv"), &csv)?;
        summaries.push(BranchSummary {
            branch: n,
            onset,
            points: branch.points.len(),
            termination: format!("{:?}", branch.termination),
        });
    }
    dir.json("summary.json", &summaries)?;
    dir.finish("equilibria", &cfg)
}

#[derive(Serialize)]
struct OptimizeSummary {
    stop: String,
    accepted_iterations: usize,
    initial_cost: f64,
    final_cost: f64,
    final_positions: Vec<f64>,
}

pub fn optimize_cmd(mut cfg: OptimizeConfig, out: &Path) -> Result<()> {
    let p = cfg.equation.resolve()?;
    let dt = *cfg.dt.get_or_insert(StepperConfig::default_dt(p.nu));
    ensure!(dt > 0.0, "dt must be positive");
    ensure!(cfg.cost.horizon >= dt, "cost.horizon = {} is shorter than dt = {dt}", cfg.cost.horizon);
    let acts = cfg.actuators.set()?;
    let target = resolve_target(&p, &cfg.target)?;
    let spec = CostSpec {
        norm: cfg.cost.norm,
        gamma: cfg.cost.gamma,
        horizon: cfg.cost.horizon,
    };
    spec.validate()?;
    let problem = PlacementProblem {
        params: p,
        target: target.target.clone(),
        spec,
        initial: initial_state(&cfg.initial, &p, dt)?,
        shape: acts.shape(),
        dt,
        margin: cfg.margin,
    };
    let opts = cfg
        .placement
        .get_or_insert(PlacementConfig {
            max_iterations: None,
            max_trials: None,
            initial_fraction: None,
        })
        .options();
    let result = optimize_placement(&problem, acts.positions(), &opts)?;
    let m = acts.len();
    let mut csv = format!(
        "iter,cost,control_energy{}\n",
        (1..=m).map(|i| format!(",x{i}")).collect::<String>()
    );
    for it in &result.iterates {
        csv.push_str(&format!("{},{},{}", it.iteration, it.cost.total, it.cost.control_energy));
        for x in &it.positions {
            csv.push_str(&format!(",{x}"));
        }
        csv.push('\n');
    }
    let mut dir = OutDir::create(out)?;
    dir.write("iterates.csv", &csv)?;
    let best = result.best();
    let ctl = problem.controller(&best.positions)?;
    dir.write("gain.csv", &matrix_csv(&ctl.gain.k))?;
    dir.json(
        "summary.json",
        &OptimizeSummary {
            stop: format!("{:?}", result.stop),
            accepted_iterations: result.iterates.len() - 1,
            initial_cost: result.iterates[0].cost.total,
            final_cost: best.cost.total,
            final_positions: best.positions.clone(),
        },
    )?;
    dir.finish("optimize", &cfg)
}

#[derive(Serialize)]
struct CoupledSummary {
    l1: usize,
    l2: usize,
    m: usize,
    target_l2: f64,
    final_distance: f64,
    cost: f64,
    boundedness_monitor: f64,
    boundedness_ceiling: f64,
    lyapunov_violation: Option<f64>,
}

pub fn coupled_cmd(mut cfg: CoupledConfig, out: &Path) -> Result<()> {
    cfg.output.validate()?;
    let p = cfg.equation.params()?;
    let stepper = cfg.stepper.resolve(p.nu)?;
    let u1 = initial_coupled(&cfg.initial.u1, &p)?;
    let u2 = initial_coupled(&cfg.initial.u2, &p)?;
    let u0 = CoupledField::new(u1, u2)?;
    let mut dir = OutDir::create(out)?;
    let (target, traj, m1) = match cfg.target {
        CoupledTargetKind::None => {
            let traj = simulate_coupled(&p, &u0, &CoupledUncontrolled, &stepper)?;
            (CoupledTarget::zero(), traj, 0)
        }
        kind => {
            let target = if kind == CoupledTargetKind::Steady {
                let s = coupled_steady_state(&p).context("computing the coupled steady state")?;
                dir.write("target_u1.txt", &coefficients_txt(&s.u1))?;
                dir.write("target_u2.txt", &coefficients_txt(&s.u2))?;
                CoupledTarget::steady(s)
            } else {
                CoupledTarget::zero()
            };
            let acts = cfg.actuators.set()?;
            let m1 = acts.len();
            let ctl = design_coupled_controller(&p, [acts.clone(), acts], &target, cfg.margin)?;
            dir.write("gain.csv", &matrix_csv(&ctl.gain))?;
            let traj = simulate_coupled(&p, &u0, &ctl.law, &stepper)?;
            (target, traj, m1)
        }
    };
    dir.write("trajectory.csv", &coupled_grid_csv(&traj, cfg.output.grid))?;
    if m1 > 0 {
        dir.write("controls.csv", &coupled_controls_csv(&traj, m1))?;
    }
    let (l1, l2, m) = p.unstable_counts();
    let monitor = coupled_boundedness_monitor(&traj);
    let ceiling = coupled_boundedness_ceiling(&p);
    let bar = target.at(p.modes);
    dir.json(
        "summary.json",
        &CoupledSummary {
            l1,
            l2,
            m,
            target_l2: bar.l2_norm(),
            final_distance: traj.last().distance(&bar),
            cost: coupled_cost(&traj, &target, cfg.gamma)?,
            boundedness_monitor: monitor,
            boundedness_ceiling: ceiling,
            lyapunov_violation: if m1 > 0 {
                coupled_lyapunov_violation(&traj, &target, cfg.transient)
            } else {
                None
            },
        },
    )?;
    dir.finish("coupled", &cfg)?;
    ensure!(monitor <= ceiling, "boundedness monitor exceeded: {monitor} > {ceiling}");
    Ok(())
}

fn initial_coupled(init: &Initial, p: &gks_core::coupled::CoupledParams) -> Result<SpectralField> {
    ensure!(init.spinup == 0.0, "spin-up is not supported for coupled runs");
    init.field(p.modes)
}
