use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use partforge::pipeline::{run, Command, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(
    name = "partforge",
    about = "Part detector training and part-based classification pipeline"
)]
struct Cli {
    /// gen | cluster | train-parts | train-root | detect | eval-parts | train-classifier | classify | rescore | eval-classification | report
    #[arg(value_parser = |s: &str| s.parse::<Command>().map_err(|e| e.to_string()))]
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Override a config field, e.g. `--set clustering.eps=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = ExperimentConfig::load(&cli.config, &cli.set, cli.seed).and_then(|cfg| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs.unwrap_or(0))
            .build()
            .map_err(|e| partforge::Error::ConfigInvalid(format!("--jobs: {e}")))?;
        pool.install(|| run(cli.command, &cfg))
    });
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("partforge {}: error: {e}", cli.command);
            ExitCode::FAILURE
        }
    }
}
