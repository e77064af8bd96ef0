//! The closed loop: render, estimate motion, build the field, control, log, step.

use std::collections::VecDeque;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::LiftedSafetyField;
use crate::filter::{dcbf_filter, sample_clamped};
use crate::forecast::{estimate_velocities, BuildReport, FieldBuilder};
use crate::geometry::collision_check;
use crate::grid::angle_diff;
use crate::mpc::{solve_mpc, MpcParams, MpcSolution};
use crate::occupancy::OccupancyGrid;
use crate::robot::{ControlInput, InputLimits, RobotState};

use super::config::{ControllerKind, GoalSchedule, ObstacleSpec, ScenarioConfig};
use super::log::{LogRow, RowStats, RunSummary, TrajectoryLog};
use super::world::{Obstacle, World};

/// What one tick produced besides its log row.
#[derive(Debug, Clone)]
pub struct TickOutcome {
    pub row: LogRow,
    /// Set when this tick built (or reused from cache) a new field.
    pub build: Option<BuildReport>,
    /// Controller or field failure; the tick applied zero input.
    pub failure: Option<String>,
}

/// A scenario in progress. [`Simulation::tick`] runs one control period;
/// [`run_scenario`] drives it to the configured duration.
pub struct Simulation {
    config: ScenarioConfig,
    world: World,
    builder: FieldBuilder,
    rng: ChaCha8Rng,
    tick: usize,
    prev_occ: Option<OccupancyGrid>,
    occ: Option<OccupancyGrid>,
    field: Option<LiftedSafetyField>,
    plan: Option<MpcSolution>,
    goal: RobotState,
    waypoint: usize,
    history: VecDeque<(f64, [f64; 2])>,
    goal_reached_at: Option<f64>,
    deadlock_at: Option<f64>,
    max_heading_deviation: f64,
    failures: usize,
    audit_violations: usize,
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let start = RobotState::new(config.start.x, config.start.y, config.start.theta);
        let world = World::new(config.grid, start).with_obstacles(&config.obstacles, &mut rng);
        let builder = FieldBuilder::new(config.build_params(), config.grid.resolution)?;
        let goal = match &config.goal {
            GoalSchedule::Fixed { pose } => *pose,
            GoalSchedule::Waypoints { poses } => poses[0],
            GoalSchedule::Teleop { initial } => initial.unwrap_or(start),
        };
        Ok(Simulation {
            world,
            builder,
            rng,
            tick: 0,
            prev_occ: None,
            occ: None,
            field: None,
            plan: None,
            goal: RobotState::new(goal.x, goal.y, goal.theta),
            waypoint: 0,
            history: VecDeque::new(),
            goal_reached_at: None,
            deadlock_at: None,
            max_heading_deviation: 0.0,
            failures: 0,
            audit_violations: 0,
            config,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    /// Simulated time of the next tick.
    pub fn time(&self) -> f64 {
        self.tick as f64 * self.config.control_dt
    }

    pub fn ticks_done(&self) -> usize {
        self.tick
    }

    pub fn is_finished(&self) -> bool {
        self.tick > self.config.n_ticks()
    }

    pub fn goal(&self) -> RobotState {
        self.goal
    }

    /// Last perceived occupancy.
    pub fn occupancy(&self) -> Option<&OccupancyGrid> {
        self.occ.as_ref()
    }

    /// Field the controller last used.
    pub fn field(&self) -> Option<&LiftedSafetyField> {
        self.field.as_ref()
    }

    pub fn plan(&self) -> Option<&MpcSolution> {
        self.plan.as_ref()
    }

    /// Replaces the goal. Rejects poses outside the grid.
    pub fn set_goal(&mut self, goal: RobotState) -> Result<()> {
        if !(goal.x.is_finite() && goal.y.is_finite() && goal.theta.is_finite())
            || !self.config.grid.contains(goal.position())
        {
            return Err(Error::InvalidParams(format!(
                "goal ({}, {}) outside the grid",
                goal.x, goal.y
            )));
        }
        self.goal = RobotState::new(goal.x, goal.y, goal.theta);
        self.goal_reached_at = None;
        self.deadlock_at = None;
        self.history.clear();
        Ok(())
    }

    /// Adds an obstacle at the current time. Rejects poses outside the grid.
    pub fn spawn_obstacle(&mut self, spec: ObstacleSpec) -> Result<()> {
        spec.shape.validate()?;
        if spec.pose.iter().chain(&spec.velocity).any(|c| !c.is_finite())
            || !self.config.grid.contains([spec.pose[0], spec.pose[1]])
        {
            return Err(Error::InvalidParams(format!(
                "obstacle pose ({}, {}) outside the grid",
                spec.pose[0], spec.pose[1]
            )));
        }
        self.world.obstacles.push(Obstacle {
            shape: spec.shape,
            pose: spec.pose,
            velocity: spec.velocity,
            spawn_time: self.world.t,
        });
        Ok(())
    }

    /// Changes `rho`, the horizon and the controller kind between ticks.
    pub fn set_params(&mut self, rho: Option<f64>, horizon: Option<usize>, kind: Option<ControllerKind>) -> Result<()> {
        let mut cfg = self.config.clone();
        if let Some(r) = rho {
            cfg.controller.mpc.rho = r;
        }
        if let Some(n) = horizon {
            cfg.controller.mpc.horizon = n;
        }
        if let Some(k) = kind {
            cfg.controller.kind = k;
        }
        cfg.validate()?;
        if cfg.controller.mpc.horizon != self.config.controller.mpc.horizon {
            self.plan = None;
        }
        self.config = cfg;
        Ok(())
    }

    fn limits(&self) -> InputLimits {
        let mut l = self.config.controller.mpc.limits;
        if self.config.freeze_heading {
            l.lower[2] = 0.0;
            l.upper[2] = 0.0;
        }
        l
    }

    fn perceive(&mut self) -> OccupancyGrid {
        let mut occ = self.world.render();
        let p = self.config.perception.flip_probability;
        if p > 0.0 {
            let g = occ.spec;
            for iy in 0..g.ny {
                for ix in 0..g.nx {
                    if self.rng.gen_bool(p) {
                        let v = occ.is_occupied(ix, iy);
                        occ.set(ix, iy, !v);
                    }
                }
            }
        }
        occ
    }

    fn near(&self, a: &RobotState, b: &RobotState) -> bool {
        let tol = &self.config.goal_tolerance;
        (a.x - b.x).hypot(a.y - b.y) <= tol.position && angle_diff(a.theta, b.theta).abs() <= tol.heading
    }

    fn control(&mut self, t: f64, field: &LiftedSafetyField) -> Result<(ControlInput, f64)> {
        let state = self.world.robot;
        let mut params: MpcParams = self.config.controller.mpc.clone();
        params.limits = self.limits();
        match self.config.controller.kind {
            ControllerKind::Dcbf => {
                let k = self.config.controller.nominal_gain;
                let u_nom = ControlInput::new(
                    k[0] * (self.goal.x - state.x),
                    k[1] * (self.goal.y - state.y),
                    k[2] * angle_diff(self.goal.theta, state.theta),
                );
                let out = dcbf_filter(
                    &state,
                    &u_nom,
                    field,
                    t,
                    params.rho,
                    self.config.control_dt,
                    &params.limits,
                )?;
                self.plan = None;
                Ok((out.input, 0.0))
            }
            ControllerKind::Mpc => {
                let warm = self.plan.as_ref().map(|p| {
                    if (params.dt - self.config.control_dt).abs() <= 1e-12 {
                        p.shifted_inputs()
                    } else {
                        p.inputs.clone()
                    }
                });
                let sol = solve_mpc(&state, &self.goal, field, t, &params, warm.as_deref())?;
                // The SQP enforces linearized constraints only; the applied
                // input must also pass the exact sampled decay condition.
                let guarded = dcbf_filter(
                    &state,
                    &sol.inputs[0],
                    field,
                    t,
                    params.rho,
                    self.config.control_dt,
                    &params.limits,
                )?;
                let out = (guarded.input, sol.slack_total);
                self.plan = Some(sol);
                Ok(out)
            }
        }
    }

    /// Runs one control period and returns its log row.
    pub fn tick(&mut self) -> TickOutcome {
        let t = self.time();
        let dt = self.config.control_dt;
        let mut failure = None;

        let raw = self.world.render();
        let occ = if self.config.perception.flip_probability > 0.0 {
            self.perceive()
        } else {
            raw.clone()
        };

        let mut build = None;
        let mut field_ms = 0.0;
        if self.field.is_none() || self.tick.is_multiple_of(self.config.field.rebuild_every) {
            let started = Instant::now();
            let prev = self.prev_occ.as_ref().unwrap_or(&occ);
            let built = estimate_velocities(prev, &occ, dt).and_then(|tracks| self.builder.build(&occ, &tracks, t));
            field_ms = started.elapsed().as_secs_f64() * 1e3;
            match built {
                Ok((field, report)) => {
                    self.field = Some(field);
                    build = Some(report);
                }
                Err(e) => failure = Some(format!("field build: {e}")),
            }
        }
        self.prev_occ = Some(occ.clone());
        self.occ = Some(occ);

        let mut u = ControlInput::ZERO;
        let mut slack = 0.0;
        let mut solve_ms = 0.0;
        let mut h_value = f64::NAN;
        if let Some(field) = self.field.take() {
            let started = Instant::now();
            match self.control(t, &field) {
                Ok((cmd, s)) => {
                    u = cmd;
                    slack = s;
                }
                Err(e) => {
                    self.plan = None;
                    failure.get_or_insert(format!("controller: {e}"));
                }
            }
            solve_ms = started.elapsed().as_secs_f64() * 1e3;
            let pose = self.world.robot.as_array();
            h_value = sample_clamped(&field, pose, t.clamp(field.t0, field.t_end()))
                .map(|s| s.value)
                .unwrap_or(f64::NAN);
            self.field = Some(field);
        }
        if failure.is_some() {
            self.failures += 1;
        }

        let robot = self.world.robot;
        if h_value > 0.0 && collision_check(&raw, &self.config.footprint, robot.as_array()).unwrap_or(true) {
            self.audit_violations += 1;
        }
        self.track_goal(t, &robot);
        let dev = angle_diff(robot.theta, self.config.start.theta).abs();
        self.max_heading_deviation = self.max_heading_deviation.max(dev);

        let row = LogRow {
            t,
            x: robot.x,
            y: robot.y,
            theta: robot.theta,
            v_x: u.v_x,
            v_y: u.v_y,
            omega: u.omega,
            h_value,
            slack,
            solve_ms,
            field_ms,
        };
        self.world.step(&u, dt);
        self.tick += 1;
        TickOutcome { row, build, failure }
    }

    fn track_goal(&mut self, t: f64, robot: &RobotState) {
        if self.goal_reached_at.is_some() {
            return;
        }
        if self.near(robot, &self.goal) {
            if let GoalSchedule::Waypoints { poses } = &self.config.goal {
                if self.waypoint + 1 < poses.len() {
                    self.waypoint += 1;
                    let p = poses[self.waypoint];
                    self.goal = RobotState::new(p.x, p.y, p.theta);
                    self.history.clear();
                    return;
                }
            }
            self.goal_reached_at = Some(t);
            return;
        }
        let window = self.config.deadlock.window;
        self.history.push_back((t, robot.position()));
        while let Some(&(t0, _)) = self.history.front() {
            if t - t0 > window + 1e-9 {
                self.history.pop_front();
            } else {
                break;
            }
        }
        let covered = self.history.front().is_some_and(|&(t0, _)| t - t0 >= window - 1e-9);
        if covered && self.deadlock_at.is_none() {
            let p = robot.position();
            let stalled = self
                .history
                .iter()
                .all(|(_, q)| (q[0] - p[0]).hypot(q[1] - p[1]) < self.config.deadlock.min_progress);
            if stalled {
                self.deadlock_at = Some(t);
            }
        }
    }

    pub fn summary(&self, rows: &[LogRow]) -> RunSummary {
        RunSummary {
            stats: RowStats::of(rows),
            goal_reached_at: self.goal_reached_at,
            deadlock: self.deadlock_at.is_some(),
            deadlock_at: self.deadlock_at,
            max_heading_deviation: self.max_heading_deviation,
            failures: self.failures,
            audit_violations: self.audit_violations,
        }
    }

    /// Ticks until the configured duration, calling `observe` after each tick.
    pub fn run_with(
        mut self,
        mut observe: impl FnMut(&Simulation, &TickOutcome) -> Result<()>,
    ) -> Result<TrajectoryLog> {
        let mut rows = Vec::with_capacity(self.config.n_ticks() + 1);
        while !self.is_finished() {
            let out = self.tick();
            observe(&self, &out)?;
            rows.push(out.row);
        }
        let summary = self.summary(&rows);
        Ok(TrajectoryLog { rows, summary })
    }
}

/// Runs the scenario to completion. Per-tick failures are counted in the
/// summary; only an invalid config is an error.
pub fn run_scenario(config: ScenarioConfig) -> Result<TrajectoryLog> {
    Simulation::new(config)?.run_with(|_, _| Ok(()))
}
