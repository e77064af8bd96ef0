//! Writes a lifted field in PSF1 and reads it back.
//!
//!     cargo run --release -p psf-core --example psf1_export [-- out.psf1]

use std::fs::File;
use std::io::{BufReader, BufWriter};

use psf_core::{build_lifted_field, FootprintShape, GridSpec, LiftedBuildParams, LiftedSafetyField, OccupancyGrid};

fn main() -> psf_core::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("room.psf1"), Into::into);
    let grid = GridSpec::new(64, 48, 0.05, [-1.6, -1.2])?;
    let occ = OccupancyGrid::from_fn(grid, |[x, y]| x.abs() < 0.1 && y.abs() > 0.4);
    let params = LiftedBuildParams {
        n_theta: 8,
        n_t: 2,
        dt_field: 0.5,
        footprint: FootprintShape::Ellipse { a: 0.25, b: 0.1 },
        solver: Default::default(),
        margin_cells: 1,
    };
    let (field, _) = build_lifted_field(&occ, &[], &params, 12.5, None)?;
    field.write_psf1(BufWriter::new(File::create(&path)?))?;
    let bytes = std::fs::metadata(&path)?.len();

    let back = LiftedSafetyField::read_psf1(BufReader::new(File::open(&path)?))?;
    let s = back.spec;
    println!("{}: {bytes} bytes", path.display());
    println!(
        "  {}x{} cells of {} m from {:?}, {} headings, {} times every {} s from t0 = {}",
        s.grid.nx, s.grid.ny, s.grid.resolution, s.grid.origin, s.n_theta, s.n_t, s.dt_field, back.t0
    );
    let err = field
        .values()
        .iter()
        .zip(back.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("  largest f32 rounding error {err:.1e}");
    Ok(())
}
