//! Generate a small synthetic dataset, write it to disk and summarize its labels.
//!
//! Usage: `synthetic_dataset [out_dir] [seed]`

use std::collections::BTreeMap;
use std::path::PathBuf;

use partforge::synth::{load_split, make_dataset, write_dataset, DatasetConfig, Split, SplitCounts};
use partforge::Attribute;

fn main() -> partforge::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("partforge-synth"));
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let config = DatasetConfig {
        counts: SplitCounts {
            train: 40,
            val: 10,
            test: 10,
        },
        seed,
        ..DatasetConfig::default()
    };
    let data = make_dataset(&config)?;
    write_dataset(&out, &data)?;

    for split in Split::ALL {
        let loaded = load_split(&out, split)?;
        let mut actions: BTreeMap<String, usize> = BTreeMap::new();
        let mut attrs = [0usize; 3];
        let mut empty = 0;
        for rec in loaded.images() {
            if rec.instances.is_empty() {
                empty += 1;
            }
            for inst in &rec.instances {
                *actions.entry(inst.action.name().to_string()).or_default() += 1;
                for a in Attribute::ALL {
                    if inst.attributes.get(a) == Some(true) {
                        attrs[a.index()] += 1;
                    }
                }
            }
        }
        println!(
            "{}: {} images ({} person-free)",
            split.name(),
            loaded.images().len(),
            empty
        );
        println!("  actions {actions:?}");
        for a in Attribute::ALL {
            println!("  {:<12} {} positive", a.name(), attrs[a.index()]);
        }
    }
    println!("written to {}", out.display());
    Ok(())
}
