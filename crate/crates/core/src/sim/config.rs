//! Scenario configuration: the JSON document consumed by the simulator, the
//! CLI and the teleop service.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::LiftedBuildParams;
use crate::geometry::FootprintShape;
use crate::grid::{GridSpec, LiftedSpec};
use crate::mpc::MpcParams;
use crate::poisson::SolverParams;
use crate::robot::RobotState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Free-form remarks; shipped scenarios explain their parameter choices here.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub grid: GridSpec,
    pub footprint: FootprintShape,
    pub start: RobotState,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    pub goal: GoalSchedule,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub field: FieldConfig,
    /// Control tick, seconds.
    #[serde(default = "default_control_dt")]
    pub control_dt: f64,
    /// Simulated seconds; the log has `duration / control_dt + 1` rows.
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub perception: PerceptionConfig,
    #[serde(default)]
    pub goal_tolerance: GoalTolerance,
    #[serde(default)]
    pub deadlock: DeadlockConfig,
    /// Ablation: lock the heading at its initial value (omega = 0).
    #[serde(default)]
    pub freeze_heading: bool,
}

fn default_control_dt() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub shape: FootprintShape,
    /// `(x, y, theta)` at `spawn_time`.
    pub pose: [f64; 3],
    /// m/s, constant.
    #[serde(default)]
    pub velocity: [f64; 2],
    /// Seconds; the obstacle is invisible before this.
    #[serde(default)]
    pub spawn_time: f64,
    /// Half-width (m) of a uniform random offset applied to the spawn position.
    #[serde(default)]
    pub spawn_jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum GoalSchedule {
    Fixed {
        pose: RobotState,
    },
    /// Visited in order; each is considered reached within `goal_tolerance`.
    Waypoints {
        poses: Vec<RobotState>,
    },
    /// Goals arrive at runtime; the robot holds `initial` (or its start) until then.
    Teleop {
        #[serde(default)]
        initial: Option<RobotState>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    /// Proportional nominal controller through the one-step filter.
    Dcbf,
    #[default]
    Mpc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    #[serde(default)]
    pub kind: ControllerKind,
    /// `rho` and `limits` are shared with the one-step filter.
    #[serde(default)]
    pub mpc: MpcParams,
    /// Per-axis gains of the nominal controller used with `dcbf`.
    #[serde(default = "default_gain")]
    pub nominal_gain: [f64; 3],
}

fn default_gain() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            kind: ControllerKind::default(),
            mpc: MpcParams::default(),
            nominal_gain: default_gain(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub n_theta: usize,
    pub n_t: usize,
    /// Seconds between time slices.
    pub dt_field: f64,
    /// Rebuild the field every `rebuild_every` control ticks.
    pub rebuild_every: usize,
    /// Extra footprint dilation in cells (see `LiftedBuildParams::margin_cells`).
    pub margin_cells: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            n_theta: 16,
            n_t: 6,
            dt_field: 0.2,
            rebuild_every: 1,
            margin_cells: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptionConfig {
    /// Probability of flipping each perceived cell per tick; 0 disables noise.
    pub flip_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GoalTolerance {
    /// Meters.
    pub position: f64,
    /// Radians.
    pub heading: f64,
}

impl Default for GoalTolerance {
    fn default() -> Self {
        GoalTolerance {
            position: 0.05,
            heading: 0.1,
        }
    }
}

/// The robot is deadlocked when, before reaching the goal, it stays within
/// `min_progress` of its position `window` seconds earlier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeadlockConfig {
    pub window: f64,
    pub min_progress: f64,
}

impl Default for DeadlockConfig {
    fn default() -> Self {
        DeadlockConfig {
            window: 10.0,
            min_progress: 0.1,
        }
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be positive and finite, got {v}")))
    }
}

fn non_negative(path: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be non-negative and finite, got {v}")))
    }
}

fn inside(path: &str, grid: &GridSpec, p: &RobotState) -> Result<()> {
    if !(p.x.is_finite() && p.y.is_finite() && p.theta.is_finite()) {
        return Err(Error::config(path, "pose is not finite"));
    }
    if !grid.contains(p.position()) {
        let (lo, hi) = grid.extent();
        return Err(Error::config(
            path,
            format!(
                "({}, {}) lies outside the grid [{}, {}] x [{}, {}]",
                p.x, p.y, lo[0], hi[0], lo[1], hi[1]
            ),
        ));
    }
    Ok(())
}

fn at(path: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::config(path, e.to_string())
}

impl ScenarioConfig {
    /// Parses and validates; errors name the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Number of control ticks after the initial one.
    pub fn n_ticks(&self) -> usize {
        (self.duration / self.control_dt).round() as usize
    }

    pub fn lifted_spec(&self) -> Result<LiftedSpec> {
        LiftedSpec::new(self.grid, self.field.n_theta, self.field.n_t, self.field.dt_field)
    }

    pub fn build_params(&self) -> LiftedBuildParams {
        LiftedBuildParams {
            n_theta: self.field.n_theta,
            n_t: self.field.n_t,
            dt_field: self.field.dt_field,
            footprint: self.footprint.clone(),
            solver: self.solver,
            margin_cells: self.field.margin_cells,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate().map_err(at("grid"))?;
        self.footprint.validate().map_err(at("footprint"))?;
        inside("start", &self.grid, &self.start)?;
        for (i, o) in self.obstacles.iter().enumerate() {
            let p = format!("obstacles[{i}]");
            o.shape.validate().map_err(at(&format!("{p}.shape")))?;
            if o.pose.iter().chain(&o.velocity).any(|c| !c.is_finite()) {
                return Err(Error::config(format!("{p}.pose"), "pose and velocity must be finite"));
            }
            non_negative(&format!("{p}.spawn_time"), o.spawn_time)?;
            non_negative(&format!("{p}.spawn_jitter"), o.spawn_jitter)?;
        }
        match &self.goal {
            GoalSchedule::Fixed { pose } => inside("goal.pose", &self.grid, pose)?,
            GoalSchedule::Waypoints { poses } => {
                if poses.is_empty() {
                    return Err(Error::config("goal.poses", "needs at least one waypoint"));
                }
                for (i, p) in poses.iter().enumerate() {
                    inside(&format!("goal.poses[{i}]"), &self.grid, p)?;
                }
            }
            GoalSchedule::Teleop { initial: Some(p) } => inside("goal.initial", &self.grid, p)?,
            GoalSchedule::Teleop { initial: None } => {}
        }
        let mpc = &self.controller.mpc;
        mpc.validate().map_err(at("controller.mpc"))?;
        for (i, g) in self.controller.nominal_gain.iter().enumerate() {
            non_negative(&format!("controller.nominal_gain[{i}]"), *g)?;
        }
        self.solver.validate().map_err(at("solver"))?;
        if self.field.n_theta == 0 {
            return Err(Error::config("field.n_theta", "must be at least 1"));
        }
        if self.field.n_t == 0 {
            return Err(Error::config("field.n_t", "must be at least 1"));
        }
        positive("field.dt_field", self.field.dt_field)?;
        self.lifted_spec().map_err(at("field"))?;
        if self.field.rebuild_every == 0 {
            return Err(Error::config("field.rebuild_every", "must be at least 1"));
        }
        positive("control_dt", self.control_dt)?;
        positive("duration", self.duration)?;
        let n = self.duration / self.control_dt;
        if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::config(
                "duration",
                format!("must be a whole number of control ticks ({} s)", self.control_dt),
            ));
        }
        if self.field.n_t > 1 {
            // a field must cover the lookahead until the next rebuild
            let stale = (self.field.rebuild_every - 1) as f64 * self.control_dt;
            let lookahead = match self.controller.kind {
                ControllerKind::Mpc => mpc.horizon as f64 * mpc.dt,
                ControllerKind::Dcbf => self.control_dt,
            };
            let span = (self.field.n_t - 1) as f64 * self.field.dt_field;
            if stale + lookahead > span * (1.0 + 1e-9) {
                return Err(Error::config(
                    "field.n_t",
                    format!(
                        "time slices cover {span} s but the controller looks {:.3} s ahead of a field up to {stale:.3} s old",
                        lookahead
                    ),
                ));
            }
        }
        let fp = self.perception.flip_probability;
        if !(0.0..=1.0).contains(&fp) {
            return Err(Error::config(
                "perception.flip_probability",
                format!("must lie in [0, 1], got {fp}"),
            ));
        }
        positive("goal_tolerance.position", self.goal_tolerance.position)?;
        positive("goal_tolerance.heading", self.goal_tolerance.heading)?;
        positive("deadlock.window", self.deadlock.window)?;
        positive("deadlock.min_progress", self.deadlock.min_progress)?;
        Ok(())
    }
}
