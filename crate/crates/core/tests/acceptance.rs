//! One PASS/FAIL line per acceptance criterion. Verdicts are printed, not
//! asserted: criteria that the prescribed method cannot meet are reported as
//! FAIL with the measured values.

mod common;

use std::f64::consts::TAU;
use std::io::Write;
use std::time::Instant;

use gks_core::coupled::{
    coupled_lyapunov_violation, coupled_steady_state, design_coupled_controller, simulate_coupled, CoupledField,
    CoupledParams, CoupledTarget, CoupledUncontrolled,
};
use gks_core::equilibria::{branch_following, phase_distance, pulse_wave, steady_state_on_branch, Equilibrium, PulseSeed};
use gks_core::feedback::{
    design_controller, design_controller_with, gain_bound, lyapunov_monitor, target_spectrum, ActuatorSet,
    ActuatorShape, MarginPolicy, Target, LYAPUNOV_TOLERANCE,
};
use gks_core::optimal::{
    evaluate_cost, optimize_placement, CostSpec, NormKind, PlacementOptions, PlacementProblem,
};
use gks_core::{eigenvalues, nonlinear_galerkin, simulate, GksParams, SpectralField, StepperConfig, Trajectory, Uncontrolled};
use nalgebra::DMatrix;
use rand::Rng;

use common::{collocation_advective, random_field, relative_error, rng};

const TRANSIENT: f64 = 1.0;
const TW_DT: f64 = 7.8125e-6;
const TW_TOL: f64 = 5e-2;

fn emit(line: &str) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").unwrap();
    out.flush().unwrap();
}

struct Report {
    lines: Vec<(bool, String)>,
    /// Lyapunov rate after the transient for each passing closed-loop run.
    lyapunov: Vec<(String, f64)>,
}

impl Report {
    /// Written straight to stdout so the table survives the test harness's
    /// output capture.
    fn line(&mut self, pass: bool, name: &str, detail: String) {
        emit(&format!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" }));
        self.lines.push((pass, name.to_string()));
    }
}

fn five_mode(modes: usize) -> SpectralField {
    let mut u = SpectralField::zeros(modes);
    for v in u.coeffs_mut().iter_mut().take(11) {
        *v = 1.0;
    }
    u
}

fn first_mode(modes: usize) -> SpectralField {
    let mut u = SpectralField::zeros(modes);
    u.set_sin(1, 1.0);
    u.set_cos(1, 1.0);
    u
}

fn point(m: usize) -> ActuatorSet {
    ActuatorSet::equidistant(m, ActuatorShape::Point).unwrap()
}

fn stepper(dt: f64, t: f64, every: f64) -> StepperConfig {
    StepperConfig::new(dt, t, ((every / dt).round() as usize).max(1)).unwrap()
}

fn max_rate(traj: &Trajectory, target: &Target) -> f64 {
    lyapunov_monitor(traj, target).max_rate_after(TRANSIENT)
}

fn zero_stabilisation(rep: &mut Report) {
    let mut pass = true;
    let mut detail = Vec::new();
    for (nu, m) in [(0.2, 5), (0.4, 3)] {
        let start = Instant::now();
        let p = GksParams::new(nu, 0.0, 0.0, 32).unwrap();
        let ctl = design_controller(&p, point(m), Target::Zero).unwrap();
        let traj = simulate(&p, &five_mode(32), &ctl.law, &stepper(1e-3, 5.0, 0.01)).unwrap();
        let worst = traj
            .times
            .iter()
            .zip(&traj.states)
            .filter(|(t, _)| **t >= 3.0 - 1e-12)
            .map(|(_, u)| u.l2_norm())
            .fold(0.0, f64::max);
        let secs = start.elapsed().as_secs_f64();
        pass &= worst < 1e-3 && secs < 10.0;
        detail.push(format!("nu={nu} m={m} max|u| on [3,5] = {worst:.3e} ({secs:.2}s)"));
    }
    rep.line(pass, "zero-solution stabilisation (< 1e-3 on [3,5])", detail.join("; "));
}

fn electrified(rep: &mut Report) {
    let p = GksParams::new(0.2, 0.5, 0.0, 32).unwrap();
    let ctl = design_controller(&p, point(5), Target::Zero).unwrap();
    let traj = simulate(&p, &five_mode(32), &ctl.law, &stepper(1e-3, 5.0, 0.05)).unwrap();
    let last = traj.last().l2_norm();
    rep.line(
        last < 1e-3,
        "electrified stabilisation (|u(5)| < 1e-3)",
        format!("nu=0.2 mu=0.5 m=5 (n_u={}) |u(5)| = {last:.3e}", p.unstable_dim()),
    );
}

fn steady_targets(rep: &mut Report) {
    let mut pass = true;
    let mut detail = Vec::new();
    for (nu, mu, branch) in [(0.1115, 0.0, 2), (0.35, 0.3, 1)] {
        let p = GksParams::new(nu, mu, 0.0, 32).unwrap();
        let eq = steady_state_on_branch(&p, branch, &branch_following()).unwrap();
        let target = eq.as_target();
        let ctl = design_controller(&p, point(5), target.clone()).unwrap();
        let traj = simulate(&p, &first_mode(32), &ctl.law, &stepper(1e-3, 5.0, 0.05)).unwrap();
        let dist = (traj.last() - &eq.profile).l2_norm();
        let amp = |f: &Vec<f64>| f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let peak = traj.controls.iter().map(amp).fold(0.0, f64::max);
        let end = amp(traj.controls.last().unwrap());
        let ok = dist < 1e-2 && end < 0.1 * peak;
        if ok {
            rep.lyapunov.push((format!("steady nu={nu} mu={mu}"), max_rate(&traj, &target)));
        }
        pass &= ok;
        detail.push(format!(
            "nu={nu} mu={mu}: |u(5)-U| = {dist:.2e}, |f(5)|/peak = {:.2e}",
            end / peak
        ));
    }
    rep.line(pass, "steady-state stabilisation (< 1e-2 by t=5, f(T) < 10% peak)", detail.join("; "));
}

struct WaveRun {
    final_distance: f64,
    lyapunov: f64,
}

fn wave_run(p: &GksParams, eq: &Equilibrium, m: usize, u0: &SpectralField, dt: f64, t: f64) -> WaveRun {
    let target = eq.as_target();
    let ctl = design_controller_with(p, point(m), target.clone(), MarginPolicy::Auto).unwrap();
    let traj = simulate(p, u0, &ctl.law, &stepper(dt, t, 0.1)).unwrap();
    let last = traj.len() - 1;
    WaveRun {
        final_distance: phase_distance(&traj.states[last], &eq.target_at(traj.times[last])).0,
        lyapunov: max_rate(&traj, &target),
    }
}

fn chaotic_state(p: &GksParams) -> SpectralField {
    let mut u0 = SpectralField::zeros(p.modes);
    u0.set_sin(1, 0.1);
    u0.set_cos(3, 0.05);
    simulate(p, &u0, &Uncontrolled, &stepper(2.5e-4, 50.0, 50.0)).unwrap().last().clone()
}

fn travelling_waves(rep: &mut Report, chaos: &SpectralField) {
    let p = GksParams::new(0.01, 0.0, 0.0, 64).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for k in 1..=3 {
        let eq = pulse_wave(&p, k, &PulseSeed::default()).unwrap();
        let run = wave_run(&p, &eq, 21, chaos, TW_DT, 20.0);
        let ok = run.final_distance < TW_TOL;
        if ok {
            rep.lyapunov.push((format!("{k}-pulse wave"), run.lyapunov));
        }
        pass &= ok;
        detail.push(format!("{k}-pulse c={:.3} d(20) = {:.2e}", eq.speed, run.final_distance));
    }
    rep.line(pass, "travelling-wave control (m=21, < 5e-2 by T=20)", detail.join("; "));
}

fn robustness(rep: &mut Report, chaos: &SpectralField) {
    let p = GksParams::new(0.01, 0.0, 0.0, 64).unwrap();
    let eq = pulse_wave(&p, 1, &PulseSeed::default()).unwrap();
    let mut parts = Vec::new();

    let a = wave_run(&p, &eq, 19, chaos, TW_DT, 20.0);
    let a_ok = a.final_distance < TW_TOL;
    if a_ok {
        rep.lyapunov.push(("1-pulse wave, m=19".into(), a.lyapunov));
    }
    parts.push((a_ok, format!("(a) m=19 d(20) = {:.2e}", a.final_distance)));

    // m=17 must not meet the wave criterion.
    let b = wave_run(&p, &eq, 17, chaos, 2.5e-4, 20.0);
    parts.push((b.final_distance >= TW_TOL, format!("(b) m=17 d(20) = {:.2e}", b.final_distance)));

    // Target wave from perturbed parameters, plant and controller unchanged.
    for (label, q, plant) in [
        ("(c) nu 0.01 -> 0.013", GksParams::new(0.013, 0.0, 0.0, 64), p),
        (
            "(d) delta 0.03 -> 0.04",
            GksParams::new(0.01, 0.0, 0.03, 64),
            GksParams::new(0.01, 0.0, 0.04, 64).unwrap(),
        ),
    ] {
        let eq = pulse_wave(&q.unwrap(), 1, &PulseSeed::default()).unwrap();
        let run = wave_run(&plant, &eq, 21, chaos, 2.5e-4, 200.0);
        parts.push((run.final_distance < TW_TOL, format!("{label} d(200) = {:.2e}", run.final_distance)));
    }

    let pass = parts.iter().all(|(ok, _)| *ok);
    let detail = parts
        .iter()
        .map(|(ok, d)| format!("{d} [{}]", if *ok { "ok" } else { "not met" }))
        .collect::<Vec<_>>()
        .join("; ");
    rep.line(pass, "robustness suite (a) m=19 passes, (b) m=17 fails, (c), (d) within 5e-2", detail);
}

fn pole_placement(rep: &mut Report) {
    let mut r = rng(2024);
    let mut worst_eig: f64 = 0.0;
    let mut bound_ok = true;
    let mut sets = 0;
    for (nu, mu) in [(0.2, 0.0), (0.2, 0.5), (0.35, 0.3)] {
        let p = GksParams::new(nu, mu, 0.0, 32).unwrap();
        let mut want: Vec<f64> = target_spectrum(&p).iter().map(|z| z.re).collect();
        want.sort_by(f64::total_cmp);
        let mut accepted = 0;
        while accepted < 100 {
            let x: Vec<f64> = (0..p.unstable_dim()).map(|_| r.random_range(0.0..TAU)).collect();
            let Ok(acts) = ActuatorSet::new(x, ActuatorShape::Point) else { continue };
            let Ok(ctl) = design_controller(&p, acts, Target::Zero) else { continue };
            accepted += 1;
            let m = &ctl.matrices;
            let closed = &m.a_u + &m.b_u * &ctl.gain.k;
            let mut got = eigenvalues(&closed).unwrap();
            got.sort_by(|a, b| a.re.total_cmp(&b.re));
            for (z, w) in got.iter().zip(&want) {
                worst_eig = worst_eig.max((z.re - w).abs().max(z.im.abs()) / w.abs().max(1.0));
            }
            let norm2 = |a: &DMatrix<f64>| a.clone().svd(false, false).singular_values.max();
            let k = norm2(&ctl.gain.k);
            bound_ok &= k <= gain_bound(&m.a_u, &m.b_u, &ctl.gain) * (1.0 + 1e-9);
        }
        sets += accepted;
    }
    rep.line(
        worst_eig < 1e-8 && bound_ok,
        "pole placement (100 random sets x 3, eig to 1e-8, gain bound)",
        format!("{sets} sets, worst eigenvalue error {worst_eig:.2e}, gain bound holds: {bound_ok}"),
    );
}

fn nonlinearity(rep: &mut Report) {
    let mut r = rng(7);
    let mut worst: f64 = 0.0;
    for n in [8usize, 16, 32] {
        for _ in 0..1000 {
            let u = random_field(&mut r, n);
            worst = worst.max(relative_error(nonlinear_galerkin(&u).coeffs(), &collocation_advective(&u, &u)));
        }
    }
    rep.line(
        worst < 1e-12,
        "nonlinearity oracle (1000 fields at N=8,16,32, < 1e-12)",
        format!("worst relative error {worst:.2e}"),
    );
}

fn adjoint_gradient(rep: &mut Report) {
    let mut u0 = SpectralField::zeros(16);
    u0.set_sin(1, 1.0);
    u0.set_cos(1, 0.4);
    u0.set_sin(2, -0.3);
    let prob = PlacementProblem {
        params: GksParams::new(0.5, 0.0, 0.0, 16).unwrap(),
        target: Target::Zero,
        spec: CostSpec {
            norm: NormKind::L2,
            gamma: 1.0,
            horizon: 1.0,
        },
        initial: u0,
        shape: ActuatorShape::Smoothed { width: 0.2 },
        dt: 1e-3,
        margin: MarginPolicy::Auto,
    };
    let x = [0.7, 2.6, 4.9];
    let (ctl, traj, _) = prob.evaluate(&x).unwrap();
    let grad = prob.gradient(&ctl, &traj).unwrap();
    let mut r = rng(5);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let d: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
        let at = |s: f64| -> Vec<f64> { x.iter().zip(&d).map(|(a, b)| a + s * b).collect() };
        let fd = (prob.frozen_gain_cost(&at(h), &ctl.gain.k).unwrap().total
            - prob.frozen_gain_cost(&at(-h), &ctl.gain.k).unwrap().total)
            / (2.0 * h);
        let predicted: f64 = grad.iter().zip(&d).map(|(g, v)| g * v).sum();
        worst = worst.max((predicted - fd).abs() / fd.abs());
    }
    rep.line(
        worst < 0.1,
        "adjoint gradient vs central differences (20 directions, 10%)",
        format!("worst relative mismatch {worst:.2e}"),
    );
}

fn placement_problem(nu: f64, norm: NormKind) -> PlacementProblem {
    let p = GksParams::new(nu, 0.0, 0.0, 32).unwrap();
    let mut u0 = SpectralField::zeros(32);
    u0.set_sin(1, 1.0);
    u0.set_cos(1, 1.0);
    PlacementProblem {
        params: p,
        target: Target::Zero,
        spec: CostSpec {
            norm,
            gamma: 1.0,
            horizon: 10.0,
        },
        initial: u0,
        shape: ActuatorShape::Point,
        dt: 1e-3,
        margin: MarginPolicy::Auto,
    }
}

fn optimisation_trends(rep: &mut Report) {
    let prob = placement_problem(0.9, NormKind::L2);
    let x0 = point(3).positions().to_vec();
    let res = optimize_placement(&prob, &x0, &PlacementOptions::default()).unwrap();
    let costs: Vec<f64> = res.iterates.iter().map(|it| it.cost.total).collect();
    let decreasing = costs.len() > 1 && costs.windows(2).all(|w| w[1] < w[0]);

    let energy = |nu: f64| {
        let p = placement_problem(nu, NormKind::L2);
        let m = p.params.unstable_dim();
        p.evaluate(point(m).positions()).unwrap().2.control_energy
    };
    let (e01, e09) = (energy(0.1), energy(0.9));

    let (_, traj, _) = prob.evaluate(&x0).unwrap();
    let c = |n| {
        evaluate_cost(&traj, &Target::Zero, &CostSpec { norm: n, ..prob.spec })
            .unwrap()
            .total
    };
    let (c1, c2, c3) = (c(NormKind::L2), c(NormKind::H1), c(NormKind::H2));

    rep.line(
        decreasing && e01 > e09 && c1 <= c2 && c2 <= c3,
        "placement optimisation trends",
        format!(
            "nu=0.9 costs {:.4} -> {:.4} over {} iterates; energy nu=0.1 {e01:.3} vs nu=0.9 {e09:.3}; C1,C2,C3 = {c1:.3}, {c2:.3}, {c3:.3}",
            costs[0],
            costs[costs.len() - 1],
            costs.len()
        ),
    );
}

fn coupled(rep: &mut Report) {
    let p = CoupledParams::new(0.5, 0.8, 0.5, 32).unwrap();
    let counts = p.unstable_counts();
    let u0 = CoupledField::new(five_mode(32), first_mode(32)).unwrap();
    let acts = point(4);
    let mut detail = vec![format!("(l1, l2) = ({}, {})", counts.0, counts.1)];
    let mut pass = counts.0 == 1 && counts.1 == 0;

    let steady = coupled_steady_state(&p).unwrap();
    for (name, target, t) in [
        ("zero", CoupledTarget::zero(), 80.0),
        ("steady", CoupledTarget::steady(steady), 20.0),
    ] {
        let ctl = design_coupled_controller(&p, [acts.clone(), acts.clone()], &target, MarginPolicy::Auto).unwrap();
        let traj = simulate_coupled(&p, &u0, &ctl.law, &stepper(1e-3, t, 0.1)).unwrap();
        let d = traj.last().distance(&target.at(32));
        if d < 1e-2 {
            let v = coupled_lyapunov_violation(&traj, &target, TRANSIENT);
            rep.lyapunov.push((format!("coupled {name}"), if v.is_some() { f64::INFINITY } else { 0.0 }));
        }
        pass &= d < 1e-2;
        detail.push(format!("{name} target d({t}) = {d:.2e}"));
    }

    // Decoupled system against two scalar runs.
    let z = CoupledParams::new(0.2, 0.0, 0.0, 16).unwrap();
    let q = z.scalar();
    let (mut a, mut b) = (first_mode(16), five_mode(16));
    a.scale(0.1);
    b.scale(0.1);
    b.set_mean(0.0);
    let cfg = stepper(1e-3, 2.0, 0.1);
    let free = simulate_coupled(&z, &CoupledField::new(a.clone(), b.clone()).unwrap(), &CoupledUncontrolled, &cfg).unwrap();
    let s1 = simulate(&q, &a, &Uncontrolled, &cfg).unwrap();
    let s2 = simulate(&q, &b, &Uncontrolled, &cfg).unwrap();
    let bitwise = free
        .states
        .iter()
        .enumerate()
        .all(|(k, s)| s.u1 == s1.states[k] && s.u2 == s2.states[k]);
    let ctl = design_coupled_controller(&z, [point(5), point(5)], &CoupledTarget::zero(), MarginPolicy::Auto).unwrap();
    let sc = design_controller(&q, point(5), Target::Zero).unwrap();
    let closed = simulate_coupled(&z, &CoupledField::new(a.clone(), b.clone()).unwrap(), &ctl.law, &cfg).unwrap();
    let c1 = simulate(&q, &a, &sc.law, &cfg).unwrap();
    let c2 = simulate(&q, &b, &sc.law, &cfg).unwrap();
    let gap = closed
        .states
        .iter()
        .enumerate()
        .map(|(k, s)| (&s.u1 - &c1.states[k]).max_abs_coeff().max((&s.u2 - &c2.states[k]).max_abs_coeff()))
        .fold(0.0, f64::max);
    pass &= bitwise && gap < 1e-12;
    detail.push(format!("alpha=0: uncontrolled bitwise {bitwise}, controlled gap {gap:.1e}"));

    rep.line(pass, "coupled system (m=4 per field)", detail.join("; "));
}

fn lyapunov(rep: &mut Report) {
    let bad: Vec<String> = rep
        .lyapunov
        .iter()
        .filter(|(_, r)| *r > LYAPUNOV_TOLERANCE)
        .map(|(n, r)| format!("{n} ({r:.1e})"))
        .collect();
    let worst = rep.lyapunov.iter().map(|(_, r)| *r).fold(f64::NEG_INFINITY, f64::max);
    rep.line(
        bad.is_empty() && !rep.lyapunov.is_empty(),
        "Lyapunov rate <= 0 after transient on passing runs",
        if bad.is_empty() {
            format!("{} runs, largest rate {worst:.2e}", rep.lyapunov.len())
        } else {
            format!("violations: {}", bad.join(", "))
        },
    );
}

#[test]
fn acceptance() {
    let mut rep = Report {
        lines: Vec::new(),
        lyapunov: Vec::new(),
    };
    zero_stabilisation(&mut rep);
    electrified(&mut rep);
    steady_targets(&mut rep);
    let chaos = chaotic_state(&GksParams::new(0.01, 0.0, 0.0, 64).unwrap());
    travelling_waves(&mut rep, &chaos);
    robustness(&mut rep, &chaos);
    pole_placement(&mut rep);
    nonlinearity(&mut rep);
    adjoint_gradient(&mut rep);
    optimisation_trends(&mut rep);
    coupled(&mut rep);
    lyapunov(&mut rep);
    let passed = rep.lines.iter().filter(|(p, _)| *p).count();
    emit(&format!("{passed}/{} criteria pass", rep.lines.len()));
}
