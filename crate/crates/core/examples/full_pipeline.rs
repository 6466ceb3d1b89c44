//! Run every pipeline command in order on a config file, the same way the
//! `partforge` binary does one command at a time.
//!
//! Usage: `full_pipeline [config] [key=value]...`; defaults to the smoke config.

use std::path::PathBuf;

use partforge::pipeline::{run, Command, ExperimentConfig};

fn main() -> partforge::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut args = std::env::args().skip(1);
    let config = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.json"));
    let overrides: Vec<String> = args.collect();
    let cfg = ExperimentConfig::load(&config, &overrides, None)?;
    for c in Command::ALL {
        println!("== {c}");
        print!("{}", run(c, &cfg)?);
    }
    Ok(())
}
