//! Solves the Poisson problem on a unit disk and compares it with the
//! closed-form solution `1 - r^2`, at two resolutions.
//!
//!     cargo run --release -p psf-core --example poisson_disk

use psf_core::{solve_poisson, GridSpec, OccupancyGrid, SolverParams};

fn disk_error(n: usize) -> (f64, f64, usize) {
    let res = 2.56 / (n - 1) as f64;
    let spec = GridSpec::new(n, n, res, [-1.28, -1.28]).unwrap();
    // level set of the unit circle, so the solver can place the boundary sub-cell
    let occ = OccupancyGrid::from_level_set(spec, |p| 1.0 - p[0].hypot(p[1]));
    let (h, report) = solve_poisson(&occ, &SolverParams::default(), None).unwrap();
    assert!(report.converged);
    let mut err = 0.0f64;
    for (i, occupied) in occ.cells().iter().enumerate() {
        if !occupied {
            let (ix, iy) = spec.coords(i);
            let p = spec.cell_center(ix, iy);
            err = err.max((h.values[i] - (1.0 - p[0] * p[0] - p[1] * p[1])).abs());
        }
    }
    (err, report.wall_time, report.iterations)
}

fn main() {
    let (coarse, t, it) = disk_error(129);
    println!("129x129: max error {coarse:.3e}, {it} iterations, {:.1} ms", t * 1e3);
    let (fine, t, it) = disk_error(257);
    println!("257x257: max error {fine:.3e}, {it} iterations, {:.1} ms", t * 1e3);
    println!("refinement ratio {:.2}", coarse / fine);
}
