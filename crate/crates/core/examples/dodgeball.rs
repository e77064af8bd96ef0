//! Runs the shipped dodgeball scenario and reports how the robot got out of
//! the ball's way.
//!
//! cargo run --release -p psf-core --example dodgeball [-- out.csv]

use psf_core::sim::{run_scenario, scenarios};

fn main() -> psf_core::Result<()> {
    let cfg = scenarios::dodgeball();
    let theta0 = cfg.start.theta;
    let log = run_scenario(cfg)?;
    for r in log.rows.iter().step_by(2) {
        println!(
            "t={:4.1}  pose=({:.3}, {:.3}, {:+.3})  h={:+.5}  slack={:.1e}  field {:5.1} ms  solve {:4.1} ms",
            r.t,
            r.x,
            r.y,
            psf_core::angle_diff(r.theta, theta0),
            r.h_value,
            r.slack,
            r.field_ms,
            r.solve_ms
        );
    }
    let s = &log.summary;
    println!("min h            {:.5}", s.stats.min_h);
    println!("peak |dtheta|    {:.3} rad", s.max_heading_deviation);
    println!("audit violations {}", s.audit_violations);
    println!("failures         {}", s.failures);
    println!(
        "field ms p50/p95 {:.1} / {:.1}",
        s.stats.field_ms.p50, s.stats.field_ms.p95
    );
    println!(
        "solve ms p50/p95 {:.2} / {:.2}",
        s.stats.solve_ms.p50, s.stats.solve_ms.p95
    );
    if let Some(path) = std::env::args().nth(1) {
        log.write_csv(std::fs::File::create(path)?)?;
    }
    Ok(())
}
