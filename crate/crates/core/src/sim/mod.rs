//! Deterministic closed-loop simulation: scenario configs, the world model,
//! the control loop and its logs.

pub mod config;
pub mod log;
pub mod runner;
pub mod world;

pub use config::{
    ControllerConfig, ControllerKind, DeadlockConfig, FieldConfig, GoalSchedule, GoalTolerance, ObstacleSpec,
    PerceptionConfig, ScenarioConfig,
};
pub use log::{read_csv, write_csv, LogRow, Percentiles, RowStats, RunSummary, TrajectoryLog};
pub use runner::{run_scenario, Simulation, TickOutcome};
pub use world::{step_world, Obstacle, World};

/// The shipped scenarios, as found in the repository's `scenarios/` directory.
pub mod scenarios {
    use super::ScenarioConfig;

    pub const DODGEBALL_JSON: &str = include_str!("../../../../scenarios/dodgeball.json");
    pub const CORRIDOR_JSON: &str = include_str!("../../../../scenarios/corridor.json");
    pub const TELEOP_JSON: &str = include_str!("../../../../scenarios/teleop.json");

    /// Elliptical robot holding its pose while a ball is thrown past it.
    pub fn dodgeball() -> ScenarioConfig {
        ScenarioConfig::from_json(DODGEBALL_JSON).expect("shipped scenario is valid")
    }

    /// Rectangular robot that must turn sideways to pass a narrow gap.
    pub fn corridor() -> ScenarioConfig {
        ScenarioConfig::from_json(CORRIDOR_JSON).expect("shipped scenario is valid")
    }

    /// [`corridor`] with the heading locked at its start value.
    pub fn corridor_frozen() -> ScenarioConfig {
        let mut cfg = corridor();
        cfg.name = "corridor-frozen-heading".into();
        cfg.freeze_heading = true;
        cfg
    }

    /// Open room with a few fixed obstacles, goals supplied live.
    pub fn teleop() -> ScenarioConfig {
        ScenarioConfig::from_json(TELEOP_JSON).expect("shipped scenario is valid")
    }
}
