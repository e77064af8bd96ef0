//! One MPC solve past a pillar: the plan, its field values and the solver
//! status, with the time per solve.
//!
//!     cargo run --release -p psf-core --example mpc_plan

use std::time::Instant;

use psf_core::{
    build_lifted_field, solve_mpc, FootprintShape, GridSpec, LiftedBuildParams, MpcParams, OccupancyGrid, RobotState,
    SolverParams,
};

fn main() -> psf_core::Result<()> {
    let grid = GridSpec::new(100, 60, 0.04, [0.0, 0.0])?;
    let occ = OccupancyGrid::from_fn(grid, |[x, y]| (x - 2.0).hypot(y - 1.2) < 0.3);
    let params = LiftedBuildParams {
        n_theta: 16,
        n_t: 1,
        dt_field: 0.1,
        footprint: FootprintShape::rectangle(0.6, 0.2),
        solver: SolverParams {
            tol: 1e-4,
            ..SolverParams::default()
        },
        margin_cells: 1,
    };
    let (field, _) = build_lifted_field(&occ, &[], &params, 0.0, None)?;

    // A long cold-start horizon needs more SQP passes than the warm-started
    // per-tick default; the linearized decay rows only bind near the iterate.
    let mpc = MpcParams {
        horizon: 12,
        dt: 0.1,
        sqp_iters: 10,
        ..MpcParams::default()
    };
    let start = RobotState::new(1.0, 1.25, 0.0);
    let goal = RobotState::new(3.2, 1.2, 0.0);
    let sol = solve_mpc(&start, &goal, &field, 0.0, &mpc, None)?;
    println!(
        "status {:?}, {} SQP iterations, cost {:.3}, slack {:.2e}",
        sol.status, sol.sqp_iterations, sol.cost, sol.slack_total
    );
    println!(
        "{:>3} {:>7} {:>7} {:>7} {:>8}   {:>6} {:>6} {:>6}",
        "i", "x", "y", "theta", "h", "v_x", "v_y", "omega"
    );
    for (i, (xi, h)) in sol.states.iter().zip(&sol.h_knots).enumerate() {
        print!("{i:>3} {:>7.3} {:>7.3} {:>7.3} {:>8.5}", xi.x, xi.y, xi.theta, h);
        match sol.inputs.get(i) {
            Some(u) => println!("   {:>6.3} {:>6.3} {:>6.3}", u.v_x, u.v_y, u.omega),
            None => println!(),
        }
    }

    let runs = 200;
    let started = Instant::now();
    let mut warm = sol.inputs.clone();
    for _ in 0..runs {
        warm = solve_mpc(&start, &goal, &field, 0.0, &mpc, Some(&warm))?.inputs;
    }
    let per = started.elapsed().as_secs_f64() / runs as f64;
    println!("warm-started solve: {:.2} ms ({:.0} Hz)", per * 1e3, 1.0 / per);
    Ok(())
}
