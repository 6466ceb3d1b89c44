//! Compare the no-parts, 3-way and parts variants on both classification tasks.
//!
//! Usage: `action_classification [seed] [train] [test]`

use partforge::classify::{Mode, Variant};
use partforge::pipeline::{run_benchmark, ExperimentConfig};
use partforge::Task;

fn main() -> partforge::Result<()> {
    env_logger::init();
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut cfg = ExperimentConfig::default();
    cfg.seed = args.first().copied().unwrap_or(0);
    cfg.dataset.seed = cfg.seed;
    if let Some(&n) = args.get(1) {
        cfg.dataset.counts.train = n as usize;
    }
    if let Some(&n) = args.get(2) {
        cfg.dataset.counts.test = n as usize;
    }
    let out = run_benchmark(
        &cfg,
        &[Task::Action, Task::Attribute],
        &Variant::ALL,
        &[Mode::Oracle, Mode::Detected],
    )?;
    print!("{}", out.parts.render());
    if let Some(r) = out.root_hit_rate {
        println!("root hit rate {:.1}%", 100.0 * r);
    }
    for r in &out.reports {
        println!(
            "{:<10} {:<9} {:<9} mAP {:>5.1}",
            r.task,
            r.variant,
            r.mode,
            100.0 * r.map
        );
    }
    println!("{:.1}s", out.seconds);
    Ok(())
}
