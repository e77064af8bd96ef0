//! Per-tick pipeline cost on a 128 x 128 grid with moving obstacles:
//! velocity estimation, a warm-started 16 x 6 slice field build and one MPC
//! solve.
//!
//!     cargo run --release -p psf-core --example throughput [-- tol ticks]

use std::time::Instant;

use psf_core::sim::{Obstacle, World};
use psf_core::{
    estimate_velocities, solve_mpc, FieldBuilder, FootprintShape, GridSpec, LiftedBuildParams, MpcParams, RobotState,
    SolverParams,
};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn main() -> psf_core::Result<()> {
    let tol: f64 = std::env::args().nth(1).map_or(1e-3, |s| s.parse().expect("tolerance"));
    let grid = GridSpec::new(128, 128, 0.04, [0.0, 0.0])?;
    let mut world = World::new(grid, RobotState::new(2.5, 2.5, 0.0));
    let disk = |r: f64| FootprintShape::Ellipse { a: r, b: r };
    for (pose, velocity) in [
        ([4.5, 1.0, 0.0], [-1.0, 0.5]),
        ([0.8, 4.0, 0.0], [0.8, -0.6]),
        ([3.5, 4.2, 0.0], [0.0, -1.2]),
    ] {
        world.obstacles.push(Obstacle {
            shape: disk(0.15),
            pose,
            velocity,
            spawn_time: 0.0,
        });
    }
    world.obstacles.push(Obstacle {
        shape: FootprintShape::rectangle(0.2, 1.6),
        pose: [1.2, 1.4, 0.0],
        velocity: [0.0, 0.0],
        spawn_time: 0.0,
    });
    let params = LiftedBuildParams {
        n_theta: 16,
        n_t: 6,
        dt_field: 0.1,
        footprint: FootprintShape::Ellipse { a: 0.35, b: 0.12 },
        solver: SolverParams {
            tol,
            ..SolverParams::default()
        },
        margin_cells: 1,
    };
    let mpc = MpcParams::default();
    let mut builder = FieldBuilder::new(params, grid.resolution)?;
    let goal = RobotState::new(3.0, 2.2, 1.0);
    let dt = 0.05;
    let mut prev = world.render();
    let (mut tick_ms, mut mpc_ms, mut iters) = (vec![], vec![], vec![]);
    let ticks: usize = std::env::args().nth(2).map_or(40, |s| s.parse().expect("ticks"));
    for k in 0..ticks {
        let t = k as f64 * dt;
        let occ = world.render();
        let started = Instant::now();
        let tracks = estimate_velocities(&prev, &occ, dt)?;
        let (field, report) = builder.build(&occ, &tracks, t)?;
        let solve_started = Instant::now();
        let sol = solve_mpc(&world.robot, &goal, &field, t, &mpc, None)?;
        let done = Instant::now();
        if k > 0 {
            tick_ms.push((done - started).as_secs_f64() * 1e3);
            mpc_ms.push((done - solve_started).as_secs_f64() * 1e3);
            iters.push(report.max_iterations as f64);
        }
        world.step(&sol.inputs[0], dt);
        prev = occ;
    }
    println!("tolerance            {tol:e}");
    println!("threads              {}", rayon::current_num_threads());
    println!(
        "pipeline median      {:.1} ms ({:.1} Hz)",
        median(tick_ms.clone()),
        1e3 / median(tick_ms)
    );
    println!(
        "mpc median           {:.2} ms ({:.0} Hz)",
        median(mpc_ms.clone()),
        1e3 / median(mpc_ms)
    );
    println!("sweeps/slice median  {:.0}", median(iters));
    Ok(())
}
