//! Run configurations. Every table rejects unknown keys; defaults are filled
//! in by `resolve` so the manifest records exactly what ran, and a manifest
//! can be passed back as `--config`.

use anyhow::{bail, ensure, Context, Result};
use gks_core::coupled::CoupledParams;
use gks_core::feedback::{ActuatorSet, ActuatorShape, MarginPolicy};
use gks_core::optimal::NormKind;
use gks_core::{GksParams, SpectralField, StepperConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const DEFAULT_GRID: usize = 256;

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        // A previous run's manifest: replay its resolved configuration.
        let mut v: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let cfg = v.get_mut("config").map(serde_json::Value::take).unwrap_or(v);
        return serde_json::from_value(cfg).with_context(|| format!("reading config from {}", path.display()));
    }
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Equation {
    pub nu: f64,
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub delta: f64,
    /// Galerkin modes; chosen from the unstable count when absent.
    pub modes: Option<usize>,
}

impl Equation {
    pub fn resolve(&mut self) -> Result<GksParams> {
        let p = match self.modes {
            Some(n) => GksParams::new(self.nu, self.mu, self.delta, n)?,
            None => GksParams::with_default_modes(self.nu, self.mu, self.delta)?,
        };
        self.modes = Some(p.modes);
        Ok(p)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stepper {
    pub dt: Option<f64>,
    pub t_final: f64,
    /// Time between recorded samples; defaults to 0.1.
    pub record_interval: Option<f64>,
}

impl Stepper {
    pub fn resolve(&mut self, nu: f64) -> Result<StepperConfig> {
        let dt = *self.dt.get_or_insert(StepperConfig::default_dt(nu));
        ensure!(dt > 0.0 && dt.is_finite(), "stepper.dt must be positive, got {dt}");
        ensure!(
            self.t_final >= dt,
            "stepper.t_final = {} is shorter than one step dt = {dt}",
            self.t_final
        );
        let interval = *self.record_interval.get_or_insert(0.1);
        ensure!(interval > 0.0, "stepper.record_interval must be positive");
        let every = ((interval / dt).round() as usize).max(1);
        Ok(StepperConfig::new(dt, self.t_final, every)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    /// Unit coefficient on the mean and the first five sine and cosine modes.
    FiveMode,
    /// `(sin x + cos x)/√π`.
    FirstMode,
    /// Explicit coefficient vector in slot order.
    Coefficients,
    /// Uniform random coefficients on the first `excited` modes.
    Random,
    Zero,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Initial {
    pub kind: InitialKind,
    pub values: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub amplitude: Option<f64>,
    pub excited: Option<usize>,
    /// Uncontrolled run of this length before the experiment starts.
    #[serde(default)]
    pub spinup: f64,
}

impl Initial {
    pub fn field(&self, modes: usize) -> Result<SpectralField> {
        let mut u = SpectralField::zeros(modes);
        match self.kind {
            InitialKind::Zero => {}
            InitialKind::FiveMode => {
                ensure!(modes >= 5, "five-mode data needs at least 5 modes");
                for v in u.coeffs_mut().iter_mut().take(11) {
                    *v = 1.0;
                }
            }
            InitialKind::FirstMode => {
                u.set_sin(1, 1.0);
                u.set_cos(1, 1.0);
            }
            InitialKind::Coefficients => {
                let values = self.values.as_ref().context("initial.values is required for kind = \"coefficients\"")?;
                ensure!(
                    values.len() <= u.len(),
                    "initial.values has {} entries, only {} slots available",
                    values.len(),
                    u.len()
                );
                u.coeffs_mut()[..values.len()].copy_from_slice(values);
            }
            InitialKind::Random => {
                let seed = self.seed.context("initial.seed is required for kind = \"random\"")?;
                let amp = self.amplitude.unwrap_or(1.0);
                let excited = self.excited.unwrap_or(5).min(modes);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for v in u.coeffs_mut().iter_mut().take(2 * excited + 1).skip(1) {
                    *v = amp * rng.random_range(-1.0..1.0);
                }
            }
        }
        ensure!(self.spinup >= 0.0, "initial.spinup must be non-negative");
        Ok(u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Point,
    Smoothed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Actuators {
    /// Equidistant actuators; exclusive with `positions`.
    pub count: Option<usize>,
    pub positions: Option<Vec<f64>>,
    #[serde(default = "point")]
    pub shape: ShapeKind,
    pub width: Option<f64>,
}

fn point() -> ShapeKind {
    ShapeKind::Point
}

impl Actuators {
    pub fn shape(&self) -> Result<ActuatorShape> {
        Ok(match self.shape {
            ShapeKind::Point => {
                ensure!(self.width.is_none(), "actuators.width only applies to smoothed actuators");
                ActuatorShape::Point
            }
            ShapeKind::Smoothed => ActuatorShape::Smoothed {
                width: self.width.context("actuators.width is required for smoothed actuators")?,
            },
        })
    }

    pub fn set(&self) -> Result<ActuatorSet> {
        let shape = self.shape()?;
        match (&self.count, &self.positions) {
            (Some(_), Some(_)) => bail!("give either actuators.count or actuators.positions, not both"),
            (None, None) => bail!("actuators.count or actuators.positions is required"),
            (Some(m), None) => {
                ensure!(*m >= 1, "actuators.count must be at least 1");
                Ok(ActuatorSet::equidistant(*m, shape)?)
            }
            (None, Some(x)) => Ok(ActuatorSet::new(x.clone(), shape)?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Zero,
    Steady,
    Travelling,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetParams {
    pub nu: f64,
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub kind: TargetKind,
    /// Steady branch index (bifurcation from the `n`-th onset).
    pub branch: Option<usize>,
    /// Pulse count of a travelling target.
    pub pulses: Option<usize>,
    /// Equation parameters at which the target is computed, when they differ
    /// from the plant's.
    pub params: Option<TargetParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    #[serde(default = "default_grid")]
    pub grid: usize,
}

impl Default for Output {
    fn default() -> Self {
        Output { grid: DEFAULT_GRID }
    }
}

fn default_grid() -> usize {
    DEFAULT_GRID
}

impl Output {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.grid >= 1, "output.grid must be at least 1");
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub equation: Equation,
    pub stepper: Stepper,
    pub initial: Initial,
    #[serde(default)]
    pub output: Output,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackConfig {
    pub equation: Equation,
    pub stepper: Stepper,
    pub initial: Initial,
    pub actuators: Actuators,
    pub target: TargetConfig,
    #[serde(default)]
    pub margin: MarginPolicy,
    /// Lyapunov rates are checked after this time.
    #[serde(default = "default_transient")]
    pub transient: f64,
    #[serde(default)]
    pub output: Output,
}

fn default_transient() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchConfig {
    pub branches: Vec<usize>,
    pub nu_end: f64,
    pub initial_step: Option<f64>,
    pub max_step: Option<f64>,
    pub min_step: Option<f64>,
    #[serde(default = "yes")]
    pub classify: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriaConfig {
    /// `nu` is ignored here; each branch starts at its own onset.
    pub equation: Equation,
    pub continuation: BranchConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    #[serde(default = "l2")]
    pub norm: NormKind,
    #[serde(default = "unit")]
    pub gamma: f64,
    pub horizon: f64,
}

fn l2() -> NormKind {
    NormKind::L2
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementConfig {
    pub max_iterations: Option<usize>,
    pub max_trials: Option<usize>,
    pub initial_fraction: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub equation: Equation,
    pub initial: Initial,
    pub actuators: Actuators,
    pub target: TargetConfig,
    pub cost: CostConfig,
    pub dt: Option<f64>,
    #[serde(default)]
    pub margin: MarginPolicy,
    pub placement: Option<PlacementConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupledEquation {
    pub nu: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub modes: usize,
}

impl CoupledEquation {
    pub fn params(&self) -> Result<CoupledParams> {
        Ok(CoupledParams::new(self.nu, self.alpha1, self.alpha2, self.modes)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupledInitial {
    pub u1: Initial,
    pub u2: Initial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoupledTargetKind {
    Zero,
    Steady,
    /// No control; the run is uncontrolled.
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupledConfig {
    pub equation: CoupledEquation,
    pub stepper: Stepper,
    pub initial: CoupledInitial,
    /// Actuators of each field (same layout on both).
    pub actuators: Actuators,
    pub target: CoupledTargetKind,
    #[serde(default)]
    pub margin: MarginPolicy,
    #[serde(default = "unit")]
    pub gamma: f64,
    #[serde(default = "default_transient")]
    pub transient: f64,
    #[serde(default)]
    pub output: Output,
}

impl PlacementConfig {
    /// Options with defaults written back into the configuration.
    pub fn options(&mut self) -> gks_core::optimal::PlacementOptions {
        let d = gks_core::optimal::PlacementOptions::default();
        gks_core::optimal::PlacementOptions {
            max_iterations: *self.max_iterations.get_or_insert(d.max_iterations),
            max_trials: *self.max_trials.get_or_insert(d.max_trials),
            initial_fraction: *self.initial_fraction.get_or_insert(d.initial_fraction),
        }
    }
}
