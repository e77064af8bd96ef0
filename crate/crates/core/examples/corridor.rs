//! The narrow-gap corridor, with and without heading freedom.
//!
//! A 0.6 x 0.2 m robot starts broadside to a 0.35 m gap. With the heading free
//! it turns and slips through; with the heading frozen it stalls at the wall.
//!
//! cargo run --release -p psf-core --example corridor

use psf_core::sim::{run_scenario, scenarios};

fn main() -> psf_core::Result<()> {
    for cfg in [scenarios::corridor(), scenarios::corridor_frozen()] {
        let name = cfg.name.clone();
        let log = run_scenario(cfg)?;
        let s = &log.summary;
        let last = log.rows.last().expect("non-empty log");
        println!("{name}");
        println!("  final pose       ({:.3}, {:.3}, {:.3})", last.x, last.y, last.theta);
        match s.goal_reached_at {
            Some(t) => println!("  goal reached at  {t:.1} s"),
            None => println!("  goal not reached"),
        }
        println!("  deadlock         {} {:?}", s.deadlock, s.deadlock_at);
        println!("  min h            {:.5}", s.stats.min_h);
        println!("  audit violations {}", s.audit_violations);
        println!("  failures         {}", s.failures);
        println!(
            "  solve ms p50/p95 {:.2} / {:.2}",
            s.stats.solve_ms.p50, s.stats.solve_ms.p95
        );
    }
    Ok(())
}
