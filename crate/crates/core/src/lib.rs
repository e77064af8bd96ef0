//! Poisson safety fields for planar robots with non-circular footprints.
//!
//! A safety field `h(x, y, theta, t)` is positive where the robot fits and
//! zero on the boundary of the configuration-space obstacles. It is built by
//! inflating a predicted occupancy map with the robot footprint for each
//! heading and solving a Poisson equation per slice. Controllers in
//! [`filter`] and [`mpc`] then keep `h` decaying no faster than a chosen rate.

pub mod error;
pub mod field;
pub mod filter;
pub mod forecast;
pub mod geometry;
pub mod grid;
pub mod heading;
pub mod mpc;
pub mod occupancy;
pub mod poisson;
pub mod qp;
pub mod robot;
pub mod sim;

pub use error::{Error, Result};
pub use field::{FieldSample, LiftedSafetyField, ScalarField};
pub use filter::{dcbf_filter, FilterOutput, FilterStatus};
pub use forecast::{
    build_lifted_field, estimate_velocities, predict_occupancy, BuildReport, FieldBuilder, LiftedBuildParams,
    ObstacleTrack,
};
pub use geometry::{
    buffer_safe_set, collision_check, rasterize_footprint, rasterize_footprint_with_margin, FootprintShape, Kernel,
};
pub use grid::{angle_diff, wrap_angle, GridSpec, LiftedSpec};
pub use heading::{allocate_heading, HeadingSplit};
pub use mpc::{plan_cost, rollout, solve_mpc, MpcParams, MpcSolution, MpcStatus};
pub use occupancy::OccupancyGrid;
pub use poisson::{residual, solve_poisson, ExteriorMode, PoissonProblem, SolveReport, SolverParams};
pub use qp::{kkt_residual, solve_qp, QpSettings, QpSolution, QpStatus};
pub use robot::{ControlInput, InputLimits, RobotState};
