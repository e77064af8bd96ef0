//! `psf run | solve | replay`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use psf_core::sim::{read_csv, scenarios, write_csv, RowStats, ScenarioConfig, Simulation};
use psf_core::{build_lifted_field, OccupancyGrid};

type Res<T> = Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(name = "psf", version, about = "Poisson safety-field simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario to completion (or serve it live with --serve) and write its log.
    Run {
        /// Scenario JSON (see scenarios/).
        #[arg(long)]
        config: PathBuf,
        /// Trajectory CSV to write.
        #[arg(long)]
        log: PathBuf,
        /// Write every newly built field here as field_<tick>.psf1.
        #[arg(long)]
        export_fields: Option<PathBuf>,
        /// Serve the scenario over WebSocket at this address (goal mode `teleop`).
        #[arg(long)]
        serve: Option<String>,
        /// Pin the heading to the start heading.
        #[arg(long)]
        freeze_heading: bool,
        /// Override the configured duration, seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Build a static lifted field from a PGM occupancy map and write PSF1.
    Solve {
        /// Binary PGM (P5): 0 occupied, 255 free.
        #[arg(long)]
        occupancy: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Footprint, field and solver settings; defaults to the shipped teleop scenario.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Meters per cell; defaults to the config's grid.
        #[arg(long)]
        resolution: Option<f64>,
        /// World position of cell (0, 0)'s center.
        #[arg(long, num_args = 2, value_names = ["X", "Y"], allow_negative_numbers = true)]
        origin: Option<Vec<f64>>,
    },
    /// Summarize a trajectory CSV.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Also print every n-th row.
        #[arg(long)]
        every: Option<usize>,
    },
}

fn main() -> ExitCode {
    let result = match Cli::parse().cmd {
        Cmd::Run {
            config,
            log,
            export_fields,
            serve,
            freeze_heading,
            duration,
        } => run(&config, &log, export_fields.as_deref(), serve, freeze_heading, duration),
        Cmd::Solve {
            occupancy,
            out,
            config,
            resolution,
            origin,
        } => solve(&occupancy, &out, config.as_deref(), resolution, origin),
        Cmd::Replay { log, every } => replay(&log, every),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(
    config: &Path,
    log: &Path,
    export: Option<&Path>,
    serve: Option<String>,
    freeze_heading: bool,
    duration: Option<f64>,
) -> Res<()> {
    let mut config = ScenarioConfig::from_path(config)?;
    config.freeze_heading |= freeze_heading;
    if let Some(d) = duration {
        config.duration = d;
    }
    let out = File::create(log)?;

    if let Some(addr) = serve {
        if export.is_some() {
            return Err("--export-fields is not available with --serve".into());
        }
        let runtime = tokio::runtime::Runtime::new()?;
        let served = runtime.block_on(psf_teleop::serve(config, addr))?;
        write_csv(&served.rows, BufWriter::new(out))?;
        eprintln!(
            "{} ticks, max tick jitter {:.1}%",
            served.rows.len(),
            100.0 * served.cadence.max_jitter()
        );
        return Ok(());
    }

    if let Some(dir) = export {
        std::fs::create_dir_all(dir)?;
    }
    let trajectory = Simulation::new(config)?.run_with(|sim, tick| {
        if let (Some(dir), Some(report), Some(field)) = (export, &tick.build, sim.field()) {
            if !report.cached {
                let path = dir.join(format!("field_{:06}.psf1", sim.ticks_done() - 1));
                field.write_psf1(BufWriter::new(File::create(path)?))?;
            }
        }
        Ok(())
    })?;
    trajectory.write_csv(BufWriter::new(out))?;
    println!("{}", serde_json::to_string_pretty(&trajectory.summary)?);
    Ok(())
}

fn solve(
    occupancy: &Path,
    out: &Path,
    config: Option<&Path>,
    resolution: Option<f64>,
    origin: Option<Vec<f64>>,
) -> Res<()> {
    let config = match config {
        Some(p) => ScenarioConfig::from_path(p)?,
        None => scenarios::teleop(),
    };
    let resolution = resolution.unwrap_or(config.grid.resolution);
    let origin = origin.map_or([0.0, 0.0], |o| [o[0], o[1]]);
    let occ = OccupancyGrid::read_pgm(BufReader::new(File::open(occupancy)?), resolution, origin)?;
    let (field, report) = build_lifted_field(&occ, &[], &config.build_params(), 0.0, None)?;
    field.write_psf1(BufWriter::new(File::create(out)?))?;
    let s = field.spec;
    eprintln!(
        "{}x{} cells, {} headings x {} times, {} sweeps (max {} per slice), residual {:.2e}, {:.0} ms",
        s.grid.nx,
        s.grid.ny,
        s.n_theta,
        s.n_t,
        report.total_iterations,
        report.max_iterations,
        report.worst_residual,
        report.wall_time * 1e3
    );
    if !report.converged() {
        eprintln!("warning: {} slices hit the iteration cap", report.not_converged.len());
    }
    Ok(())
}

fn replay(log: &Path, every: Option<usize>) -> Res<()> {
    let rows = read_csv(BufReader::new(File::open(log)?))?;
    if let Some(n) = every.filter(|&n| n > 0) {
        println!(
            "{:>8} {:>8} {:>8} {:>7} {:>7} {:>7} {:>7} {:>9} {:>8}",
            "t", "x", "y", "theta", "v_x", "v_y", "omega", "h", "solve_ms"
        );
        for r in rows.iter().step_by(n) {
            println!(
                "{:8.2} {:8.3} {:8.3} {:7.3} {:7.3} {:7.3} {:7.3} {:9.4} {:8.2}",
                r.t, r.x, r.y, r.theta, r.v_x, r.v_y, r.omega, r.h_value, r.solve_ms
            );
        }
    }
    println!("{}", serde_json::to_string_pretty(&RowStats::of(&rows))?);
    Ok(())
}
