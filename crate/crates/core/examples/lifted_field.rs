//! Builds a field over position, heading and time from two occupancy frames
//! with a moving box, and shows how `h` at a fixed point changes with the
//! robot heading and as the box approaches.
//!
//!     cargo run --release -p psf-core --example lifted_field

use psf_core::{
    build_lifted_field, estimate_velocities, FootprintShape, GridSpec, LiftedBuildParams, OccupancyGrid, SolverParams,
};

fn main() -> psf_core::Result<()> {
    let grid = GridSpec::new(100, 60, 0.03, [0.0, 0.0])?;
    let dt = 0.1;
    let frame = |x0: f64| OccupancyGrid::from_fn(grid, move |[x, y]| (x - x0).abs() < 0.15 && (y - 0.9).abs() < 0.15);
    let (prev, cur) = (frame(2.4), frame(2.4 - 0.8 * dt));
    let tracks = estimate_velocities(&prev, &cur, dt)?;
    for t in &tracks {
        println!(
            "track {}: centroid {:.2?} m, velocity {:.2?} m/s",
            t.component_id, t.centroid, t.velocity
        );
    }

    let params = LiftedBuildParams {
        n_theta: 16,
        n_t: 6,
        dt_field: 0.25,
        footprint: FootprintShape::rectangle(0.6, 0.2),
        solver: SolverParams {
            tol: 1e-4,
            ..SolverParams::default()
        },
        margin_cells: 1,
    };
    let (field, report) = build_lifted_field(&cur, &tracks, &params, 0.0, None)?;
    println!(
        "{} slices, {} sweeps total, worst residual {:.1e}, {:.0} ms",
        params.n_theta * params.n_t,
        report.total_iterations,
        report.worst_residual,
        report.wall_time * 1e3
    );

    let p = [1.3, 0.9];
    print!("\nh at {p:?}\n  theta \\ t");
    for k in 0..params.n_t {
        print!("{:>8.2}", k as f64 * params.dt_field);
    }
    println!();
    for j in (0..params.n_theta).step_by(2) {
        let theta = j as f64 * std::f64::consts::TAU / params.n_theta as f64;
        print!("  {theta:>8.2}");
        for k in 0..params.n_t {
            print!("{:>8.4}", field.sample(p, theta, k as f64 * params.dt_field)?);
        }
        println!();
    }
    let g = field.gradient(p, 0.0, 0.5)?;
    println!(
        "\ngradient at heading 0, t 0.5: d/dx {:.3}, d/dy {:.3}, d/dtheta {:.3}",
        g[0], g[1], g[2]
    );
    Ok(())
}
