//! A proportional controller drives the robot straight at a wall; the
//! one-step filter lets `h` decay at most geometrically.
//!
//!     cargo run --release -p psf-core --example dcbf_filter

use psf_core::{
    build_lifted_field, dcbf_filter, ControlInput, FootprintShape, GridSpec, InputLimits, LiftedBuildParams,
    OccupancyGrid, RobotState, SolverParams,
};

fn main() -> psf_core::Result<()> {
    let grid = GridSpec::new(80, 50, 0.04, [0.0, 0.0])?;
    let occ = OccupancyGrid::from_fn(grid, |[x, _]| x > 2.4);
    let params = LiftedBuildParams {
        n_theta: 16,
        n_t: 1,
        dt_field: 0.1,
        footprint: FootprintShape::Ellipse { a: 0.3, b: 0.15 },
        solver: SolverParams::default(),
        margin_cells: 1,
    };
    let (field, _) = build_lifted_field(&occ, &[], &params, 0.0, None)?;

    let (rho, dt) = (0.8, 0.05);
    let limits = InputLimits::symmetric(1.0, 1.5);
    let goal = [3.0, 1.0];
    let mut s = RobotState::new(1.0, 1.0, 0.0);
    let h0 = field.sample(s.position(), s.theta, 0.0)?;
    println!(
        "{:>4} {:>7} {:>7} {:>9} {:>9} {:>7}  status",
        "k", "x", "theta", "h", "rho^k h0", "v_x"
    );
    for k in 0..60 {
        let nominal = ControlInput::new(2.0 * (goal[0] - s.x), 2.0 * (goal[1] - s.y), 0.0);
        let out = dcbf_filter(&s, &nominal, &field, 0.0, rho, dt, &limits)?;
        if k % 5 == 0 {
            println!(
                "{k:>4} {:>7.3} {:>7.3} {:>9.5} {:>9.5} {:>7.3}  {:?}",
                s.x,
                s.theta,
                out.h_now,
                rho.powi(k) * h0,
                out.input.v_x,
                out.status
            );
        }
        s = RobotState::new(
            s.x + out.input.v_x * dt,
            s.y + out.input.v_y * dt,
            s.theta + out.input.omega * dt,
        );
    }
    println!(
        "stopped at x = {:.3}; the wall is at 2.4, the robot half-length 0.3",
        s.x
    );
    Ok(())
}
