//! Splits a yaw-rate command between a rate-limited body and a secondary
//! heading that is pulled back to zero.
//!
//!     cargo run --release -p psf-core --example heading_allocation

use psf_core::allocate_heading;

fn main() -> psf_core::Result<()> {
    let dt = 0.05;
    println!(
        "{:>7} {:>7} {:>7} {:>14}   {:>8} {:>8} {:>9}",
        "omega", "beta0", "lambda", "limits", "alpha", "beta", "cost"
    );
    for (omega, beta0, lambda, limits) in [
        (0.5, 0.0, 1.0, [-1.0, 1.0]),
        (2.5, 0.0, 1.0, [-1.0, 1.0]),
        (2.5, 0.0, 100.0, [-1.0, 1.0]),
        (0.0, 0.2, 10.0, [-1.0, 1.0]),
        (0.0, 0.2, 10.0, [-0.5, 0.5]),
        (-3.0, -0.1, 0.0, [-1.5, 1.5]),
    ] {
        let s = allocate_heading(omega, beta0, lambda, dt, limits)?;
        println!(
            "{omega:>7.2} {beta0:>7.2} {lambda:>7.1} {:>14}   {:>8.4} {:>8.4} {:>9.2e}",
            format!("[{}, {}]", limits[0], limits[1]),
            s.omega_alpha,
            s.omega_beta,
            s.cost(omega, beta0, lambda, dt)
        );
    }
    Ok(())
}
