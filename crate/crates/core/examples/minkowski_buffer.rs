//! Inflates a small room by a 0.6 x 0.2 m robot at two headings and checks a
//! few poses against the exact footprint-vs-cell test.
//!
//!     cargo run --release -p psf-core --example minkowski_buffer

use psf_core::{buffer_safe_set, collision_check, rasterize_footprint, FootprintShape, GridSpec, OccupancyGrid};

fn draw(g: &OccupancyGrid) {
    for iy in (0..g.spec.ny).rev() {
        let row: String = (0..g.spec.nx)
            .map(|ix| if g.is_occupied(ix, iy) { '#' } else { '.' })
            .collect();
        println!("  {row}");
    }
}

fn main() -> psf_core::Result<()> {
    let grid = GridSpec::new(48, 24, 0.05, [0.0, 0.0])?;
    let room = OccupancyGrid::from_fn(grid, |[x, y]| {
        let pillar = (x - 1.2).abs() < 0.15 && (y - 0.6).abs() < 0.15;
        let shelf = (0.3..0.9).contains(&x) && y > 0.9;
        pillar || shelf
    });
    let robot = FootprintShape::rectangle(0.6, 0.2);
    println!("room ({} free cells):", room.free_count());
    draw(&room);

    for theta in [0.0, std::f64::consts::FRAC_PI_2] {
        let kernel = rasterize_footprint(&robot, theta, grid.resolution)?;
        let free = buffer_safe_set(&room, &kernel)?;
        println!(
            "\nheading {theta:.2} rad, kernel {}x{}: {} free centroid cells",
            kernel.nx,
            kernel.ny,
            free.free_count()
        );
        draw(&free);
    }

    // Buffered-free poses never collide; heading decides which ones fit.
    println!();
    for pose in [[0.6, 0.66, 0.0], [0.6, 0.66, 1.57], [1.2, 0.3, 0.0], [1.2, 0.3, 1.57]] {
        let kernel = rasterize_footprint(&robot, pose[2], grid.resolution)?;
        let free = buffer_safe_set(&room, &kernel)?;
        println!(
            "pose {pose:?}: buffered free {:5}  collides {}",
            !free.occupied_at([pose[0], pose[1]]),
            collision_check(&room, &robot, pose)?
        );
    }
    Ok(())
}
