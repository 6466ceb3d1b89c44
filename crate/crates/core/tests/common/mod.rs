#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const STEPS: [&str; 11] = [
    "gen",
    "cluster",
    "train-parts",
    "train-root",
    "detect",
    "eval-parts",
    "train-classifier",
    "classify",
    "rescore",
    "eval-classification",
    "report",
];

/// Copy of the smoke config inside `dir`, with data and work directories next to it.
pub fn smoke_config(dir: &Path) -> PathBuf {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.json");
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(src).unwrap()).unwrap();
    v["data_dir"] = "data".into();
    v["work_dir"] = "work".into();
    let path = dir.join("smoke.json");
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

pub fn partforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_partforge"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn partforge")
}

pub fn run_ok(cmd: &str, config: &Path, extra: &[&str]) -> String {
    let mut args = vec![cmd, "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = partforge(&args);
    assert!(
        out.status.success(),
        "{cmd} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn run_pipeline(config: &Path, extra: &[&str]) {
    for step in STEPS {
        run_ok(step, config, extra);
    }
}

/// Every file under `root`, keyed by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}
