//! Serves the shipped teleop room (or a scenario file) until ctrl-c.
//!
//!     cargo run --release -p psf-teleop --example teleop_server -- [addr] [scenario.json]

use psf_core::sim::{scenarios, ScenarioConfig};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let addr = args.next().unwrap_or_else(|| "127.0.0.1:8080".into());
    let config = match args.next() {
        Some(path) => ScenarioConfig::from_path(path)?,
        None => scenarios::teleop(),
    };
    let served = psf_teleop::serve(config, addr).await?;
    eprintln!(
        "served {} ticks, max tick jitter {:.1}%",
        served.rows.len(),
        100.0 * served.cadence.max_jitter()
    );
    Ok(())
}
