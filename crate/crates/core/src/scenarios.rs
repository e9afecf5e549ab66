//! Initial conditions, named experiment setups and the run loop.

use std::f64::consts::FRAC_PI_4;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::model::{ModelParams, SimState};
use crate::stepper::{
    check_state, check_step, Scheme, StageTimings, StepConfig, Stepper, Violation,
};

/// Compactly supported bump `exp(1 - 1/(1 - 16 r^2))`, zero for `16 r^2 >= 1`.
pub fn bump(r2: f64) -> f64 {
    let s = 1.0 - 16.0 * r2;
    if s <= 0.0 {
        0.0
    } else {
        (1.0 - 1.0 / s).exp()
    }
}

/// Tumor bump centered at the origin.
pub fn ic_gaussian_tumor(grid: GridSpec) -> ScalarField {
    ScalarField::from_fn(grid, |x, y, z| bump(x * x + y * y + z * z))
}

/// ECM ring `1/2 + 1/2 (1 - 2 |phi_T0 - 1/2|)`, cresting where the tumor fraction is 1/2.
pub fn ic_ecm_ring(phi_t0: &ScalarField) -> ScalarField {
    phi_t0.map(|p| 0.5 + 0.5 * (1.0 - 2.0 * (p - 0.5).abs()))
}

/// Which half of the domain (split at x = 0) starts with ECM density 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EcmSplit {
    /// `theta = 1` for `x < 0`, `1/2` for `x >= 0`.
    #[default]
    Left,
    /// `theta = 1` for `x >= 0`, `1/2` for `x < 0`.
    Right,
}

pub fn ic_ecm_halves(grid: GridSpec, split: EcmSplit) -> ScalarField {
    ScalarField::from_fn(grid, |x, _, _| match (split, x < 0.0) {
        (EcmSplit::Left, true) | (EcmSplit::Right, false) => 1.0,
        _ => 0.5,
    })
}

/// Sphere bump at (-0.15, -0.15, 0) plus an ellipsoidal bump (y semi-axis
/// stretched by 1.35, rotated by pi/4 in the xy-plane) at (0.15, 0.15, 0),
/// summed and clamped to 1.
pub fn ic_3d_two_tumors(grid: GridSpec) -> Result<ScalarField> {
    if grid.dim() != 3 {
        return Err(Error::config(
            "the two-tumor initial condition needs a 3D grid",
        ));
    }
    let (c, s) = (FRAC_PI_4.cos(), FRAC_PI_4.sin());
    Ok(ScalarField::from_fn(grid, |x, y, z| {
        let ball = bump((x + 0.15).powi(2) + (y + 0.15).powi(2) + z * z);
        let (dx, dy) = (x - 0.15, y - 0.15);
        let xr = c * dx - s * dy;
        let yr = s * dx + c * dy;
        let ellipse = bump(xr * xr + (yr / 1.35).powi(2) + z * z);
        (ball + ellipse).min(1.0)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    /// Central bump with the ECM ring around it.
    GaussianRing,
    /// Central bump with piecewise-constant ECM halves.
    GaussianHalves,
    /// Two separated bumps in 3D with the ECM ring profile.
    TwoTumors,
    /// No tumor; ECM at its ring-formula background 1/2.
    Empty,
}

impl FromStr for InitialCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian_ring" => Ok(Self::GaussianRing),
            "gaussian_halves" => Ok(Self::GaussianHalves),
            "two_tumors" => Ok(Self::TwoTumors),
            "empty" => Ok(Self::Empty),
            other => Err(Error::config(format!(
                "unknown initial condition `{other}`"
            ))),
        }
    }
}

/// Overwrite one node of one field after a given step. Used to exercise the
/// structure monitors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultInjection {
    pub step: usize,
    /// `phi_T`, `phi_N`, `phi_sigma`, `phi_M`, `theta`, `psi_sigma` or `psi_M`.
    pub field: String,
    #[serde(default)]
    pub node: usize,
    pub value: f64,
}

impl FaultInjection {
    pub fn apply(&self, state: &mut SimState, params: &ModelParams) -> Result<()> {
        let (field, value) = match self.field.as_str() {
            "phi_T" => (&mut state.phi_t, self.value),
            "phi_N" => (&mut state.phi_n, self.value),
            "phi_sigma" => (&mut state.phi_sigma, self.value),
            "phi_M" => (&mut state.phi_m, self.value),
            "theta" => (&mut state.theta, self.value),
            "psi_sigma" => (
                &mut state.phi_sigma,
                params.phi_sigma0_max * (self.value + 1.0) / 2.0,
            ),
            "psi_M" => (&mut state.phi_m, (self.value + 1.0) / 2.0),
            other => {
                return Err(Error::config(format!(
                    "fault.field: unknown field `{other}`"
                )))
            }
        };
        let slot = field.data_mut().get_mut(self.node).ok_or_else(|| {
            Error::config(format!("fault.node {} is outside the grid", self.node))
        })?;
        *slot = value;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorConfig {
    /// Check the pointwise structure invariants after every step.
    pub check: bool,
    /// Stop at the first step with a violation.
    pub abort_on_breach: bool,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            check: true,
            abort_on_breach: true,
        }
    }
}

/// A fully specified simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub grid: GridSpec,
    pub params: ModelParams,
    pub initial: InitialCondition,
    pub ecm_split: EcmSplit,
    pub t_final: f64,
    pub tau: f64,
    pub scheme: Scheme,
    pub snapshot_times: Vec<f64>,
    pub monitors: MonitorConfig,
    pub nutrient_right_edge_source: bool,
    pub fault: Option<FaultInjection>,
}

/// Snapshot times used by the 2D figures.
pub const SNAPSHOTS_2D: [f64; 4] = [0.0, 8.0, 9.0, 10.0];
/// Snapshot times used by the 3D figure.
pub const SNAPSHOTS_3D: [f64; 4] = [0.0, 1.0, 2.0, 3.0];

pub const SCENARIO_NAMES: [&str; 3] = ["tumor_ring_2d", "nutrient_source_2d", "two_tumors_3d"];

impl Scenario {
    /// Tumor with a surrounding ECM ring, N = 128, tau = 1e-3, T = 10.
    pub fn tumor_ring_2d(preset: &str) -> Result<Self> {
        Ok(Self {
            name: "tumor_ring_2d".into(),
            grid: GridSpec::new(2, 128)?,
            params: ModelParams::preset(preset)?,
            initial: InitialCondition::GaussianRing,
            ecm_split: EcmSplit::Left,
            t_final: 10.0,
            tau: 1e-3,
            scheme: Scheme::Etdrk2,
            snapshot_times: SNAPSHOTS_2D.to_vec(),
            monitors: MonitorConfig::default(),
            nutrient_right_edge_source: false,
            fault: None,
        })
    }

    /// ECM halves and a nutrient source on the right edge.
    pub fn nutrient_source_2d(preset: &str) -> Result<Self> {
        Ok(Self {
            name: "nutrient_source_2d".into(),
            initial: InitialCondition::GaussianHalves,
            nutrient_right_edge_source: true,
            ..Self::tumor_ring_2d(preset)?
        })
    }

    /// Two tumors in 3D, N = 128, tau = 8e-3, T = 3.
    pub fn two_tumors_3d(preset: &str) -> Result<Self> {
        Ok(Self {
            name: "two_tumors_3d".into(),
            grid: GridSpec::new(3, 128)?,
            initial: InitialCondition::TwoTumors,
            t_final: 3.0,
            tau: 8e-3,
            snapshot_times: SNAPSHOTS_3D.to_vec(),
            ..Self::tumor_ring_2d(preset)?
        })
    }

    pub fn named(name: &str, preset: &str) -> Result<Self> {
        match name {
            "tumor_ring_2d" => Self::tumor_ring_2d(preset),
            "nutrient_source_2d" => Self::nutrient_source_2d(preset),
            "two_tumors_3d" => Self::two_tumors_3d(preset),
            other => Err(Error::config(format!(
                "unknown scenario `{other}` (expected one of {})",
                SCENARIO_NAMES.join(", ")
            ))),
        }
    }

    /// Same scenario on a different resolution.
    pub fn with_cells(mut self, n: usize) -> Result<Self> {
        self.grid = GridSpec::new(self.grid.dim(), n)?;
        Ok(self)
    }

    /// Same scenario with a new final time; snapshot times past it are dropped.
    pub fn with_t_final(mut self, t_final: f64) -> Self {
        self.t_final = t_final;
        self.snapshot_times.retain(|&t| t <= t_final);
        self
    }

    pub fn step_config(&self) -> StepConfig {
        StepConfig {
            tau: self.tau,
            scheme: self.scheme,
            nutrient_right_edge_source: self.nutrient_right_edge_source,
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.tau).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.step_config().validate(&self.params)?;
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(Error::config(format!(
                "t_final must be finite and >= 0, got {}",
                self.t_final
            )));
        }
        for &t in &self.snapshot_times {
            if !(0.0..=self.t_final).contains(&t) {
                return Err(Error::config(format!(
                    "snapshot_times entry {t} lies outside [0, t_final = {}]",
                    self.t_final
                )));
            }
        }
        match (self.initial, self.grid.dim()) {
            (InitialCondition::TwoTumors, 2) => {
                return Err(Error::config("initial = two_tumors needs dim = 3"));
            }
            (InitialCondition::GaussianHalves, 3) => {
                return Err(Error::config("initial = gaussian_halves needs dim = 2"));
            }
            _ => {}
        }
        if let Some(f) = &self.fault {
            if f.node >= self.grid.len() {
                return Err(Error::config(format!(
                    "fault.node {} is outside the grid",
                    f.node
                )));
            }
        }
        let s0 = self.build_initial_state()?;
        if let Some(v) = check_state(&s0, &self.params).first() {
            return Err(Error::config(format!(
                "initial state is not admissible: {v}"
            )));
        }
        Ok(())
    }

    fn build_initial_state(&self) -> Result<SimState> {
        let g = self.grid;
        let phi_t = match self.initial {
            InitialCondition::GaussianRing | InitialCondition::GaussianHalves => {
                ic_gaussian_tumor(g)
            }
            InitialCondition::TwoTumors => ic_3d_two_tumors(g)?,
            InitialCondition::Empty => ScalarField::zeros(g),
        };
        let theta = match self.initial {
            InitialCondition::GaussianHalves => ic_ecm_halves(g, self.ecm_split),
            _ => ic_ecm_ring(&phi_t),
        };
        Ok(SimState {
            t: 0.0,
            phi_n: ScalarField::zeros(g),
            phi_sigma: ScalarField::constant(g, self.params.phi_sigma0_max),
            phi_m: ScalarField::zeros(g),
            phi_t,
            theta,
        })
    }

    /// Validated initial state: necrotic fraction and MDE zero, nutrient at its maximum.
    pub fn initial_state(&self) -> Result<SimState> {
        self.validate()?;
        self.build_initial_state()
    }
}

/// Scalar diagnostics of one time level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonitorRecord {
    pub step: usize,
    pub t: f64,
    pub phi_t_max: f64,
    pub phi_t_min: f64,
    pub phi_n_max: f64,
    pub phi_n_min: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    /// `max(phi_N - phi_T)`, negative while the necrotic fraction stays inside the tumor.
    pub phi_n_excess: f64,
    pub psi_sigma_norm: f64,
    pub psi_m_norm: f64,
    pub tumor_mass: f64,
    pub com_x: f64,
}

impl MonitorRecord {
    pub fn of(step: usize, s: &SimState, params: &ModelParams) -> Self {
        let smax = params.phi_sigma0_max;
        let psi_sigma_norm = s
            .phi_sigma
            .data()
            .iter()
            .fold(0.0f64, |m, v| m.max((2.0 * v / smax - 1.0).abs()));
        let psi_m_norm = s
            .phi_m
            .data()
            .iter()
            .fold(0.0f64, |m, v| m.max((2.0 * v - 1.0).abs()));
        let g = s.phi_t.grid();
        let (mut mass, mut moment) = (0.0, 0.0);
        for (idx, v) in s.phi_t.data().iter().enumerate() {
            let w = g.quadrature_weight(idx) * v;
            mass += w;
            moment += w * g.position(idx)[0];
        }
        Self {
            step,
            t: s.t,
            phi_t_max: s.phi_t.max(),
            phi_t_min: s.phi_t.min(),
            phi_n_max: s.phi_n.max(),
            phi_n_min: s.phi_n.min(),
            theta_min: s.theta.min(),
            theta_max: s.theta.max(),
            phi_n_excess: s
                .phi_n
                .data()
                .iter()
                .zip(s.phi_t.data())
                .fold(f64::NEG_INFINITY, |m, (n, t)| m.max(n - t)),
            psi_sigma_norm,
            psi_m_norm,
            tumor_mass: mass,
            com_x: if mass > 0.0 { moment / mass } else { 0.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Breach {
    pub step: usize,
    pub violation: Violation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    StructureBreach { step: usize, detail: String },
    NumericalFailure { step: usize, stage: &'static str },
}

/// Everything recorded by [`run`].
#[derive(Debug, Clone)]
pub struct RunReport {
    pub scenario: String,
    pub outcome: Outcome,
    pub steps_taken: usize,
    pub monitor: Vec<MonitorRecord>,
    pub breaches: Vec<Breach>,
    pub final_state: SimState,
    pub timings: StageTimings,
    pub wall_time: Duration,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Completed && self.breaches.is_empty()
    }

    /// Converts a failed outcome into the matching error.
    pub fn into_result(self) -> Result<RunReport> {
        match &self.outcome {
            Outcome::Completed => Ok(self),
            Outcome::StructureBreach { step, detail } => Err(Error::Structure {
                step: *step,
                detail: detail.clone(),
            }),
            Outcome::NumericalFailure { step, stage } => {
                Err(Error::Numerical { step: *step, stage })
            }
        }
    }
}

/// Steps `scenario` to its final time, calling `on_snapshot` at every
/// requested snapshot time. Configuration errors and snapshot-sink errors are
/// returned as `Err`; numerical failures and structure breaches end the run
/// and are reported in [`RunReport::outcome`].
pub fn run<F>(scenario: &Scenario, mut on_snapshot: F) -> Result<RunReport>
where
    F: FnMut(&SimState) -> Result<()>,
{
    let start = Instant::now();
    let mut state = scenario.initial_state()?;
    let stepper = Stepper::new(
        scenario.grid,
        scenario.params.clone(),
        scenario.step_config(),
    )?;
    let params = stepper.params();
    let steps = scenario.steps();
    let mut snap_steps: Vec<usize> = scenario
        .snapshot_times
        .iter()
        .map(|t| (t / scenario.tau).round() as usize)
        .collect();
    snap_steps.sort_unstable();
    snap_steps.dedup();
    let mut next_snap = snap_steps.iter().peekable();

    let mut timings = StageTimings::default();
    let mut monitor = vec![MonitorRecord::of(0, &state, params)];
    let mut breaches = Vec::new();
    let mut outcome = Outcome::Completed;
    let mut steps_taken = 0;

    if next_snap.next_if_eq(&&0).is_some() {
        on_snapshot(&state)?;
    }
    for n in 0..steps {
        let mut next = match stepper.step_timed(&state, n, Some(&mut timings)) {
            Ok(s) => s,
            Err(Error::Numerical { step, stage }) => {
                outcome = Outcome::NumericalFailure { step, stage };
                break;
            }
            Err(e) => return Err(e),
        };
        // Clean up accumulated drift in t.
        next.t = (n + 1) as f64 * scenario.tau;
        if let Some(f) = scenario.fault.as_ref().filter(|f| f.step == n + 1) {
            f.apply(&mut next, params)?;
        }
        steps_taken = n + 1;
        monitor.push(MonitorRecord::of(n + 1, &next, params));
        if scenario.monitors.check {
            let found = check_step(&state, &next, params);
            if !found.is_empty() {
                let detail = found[0].to_string();
                breaches.extend(found.into_iter().map(|violation| Breach {
                    step: n + 1,
                    violation,
                }));
                if scenario.monitors.abort_on_breach {
                    outcome = Outcome::StructureBreach {
                        step: n + 1,
                        detail,
                    };
                    state = next;
                    break;
                }
            }
        }
        state = next;
        if next_snap.next_if_eq(&&(n + 1)).is_some() {
            on_snapshot(&state)?;
        }
    }

    Ok(RunReport {
        scenario: scenario.name.clone(),
        outcome,
        steps_taken,
        monitor,
        breaches,
        final_state: state,
        timings,
        wall_time: start.elapsed(),
    })
}
