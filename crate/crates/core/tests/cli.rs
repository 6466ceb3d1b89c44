mod common;

use std::fs;

use common::{partforge, run_ok, run_pipeline, smoke_config, snapshot};
use partforge::partdesign::ClusterInventory;
use partforge::PartType;

#[test]
fn classify_without_a_bank_is_a_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path());
    run_ok("gen", &cfg, &[]);
    let out = partforge(&["classify", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing artifact"), "{err}");
    assert!(err.contains("action-parts.json"), "{err}");
}

#[test]
fn bad_configs_fail_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path());
    for extra in [["--set", "clustering.eps=-1"], ["--set", "bogus=1"]] {
        let mut args = vec!["gen", "--config", cfg.to_str().unwrap()];
        args.extend_from_slice(&extra);
        let out = partforge(&args);
        assert!(!out.status.success());
        assert!(String::from_utf8_lossy(&out.stderr).contains("invalid configuration"));
    }
    let out = partforge(&["gen", "--config", dir.path().join("nope.json").to_str().unwrap()]);
    assert!(!out.status.success());
    let out = partforge(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn huge_eps_gives_one_cluster_per_part_type() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path());
    run_ok("gen", &cfg, &[]);
    run_ok("cluster", &cfg, &["--set", "clustering.eps=1e12"]);
    let inv = ClusterInventory::load(&dir.path().join("work/clusters.json")).unwrap();
    assert_eq!(inv.clusters.len(), 3);
    for t in PartType::ALL {
        assert_eq!(inv.count(t), 1);
    }
}

#[test]
fn seed_flag_changes_the_data_and_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path());
    let ann = dir.path().join("data/train/annotations.json");
    run_ok("gen", &cfg, &["--seed", "11"]);
    let a = fs::read(&ann).unwrap();
    run_ok("gen", &cfg, &["--seed", "12"]);
    assert_ne!(a, fs::read(&ann).unwrap());
    run_ok("gen", &cfg, &["--seed", "11"]);
    assert_eq!(a, fs::read(&ann).unwrap());
}

#[test]
fn commands_do_not_touch_their_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path());
    run_pipeline(&cfg, &[]);
    let data = snapshot(&dir.path().join("data"));
    let models = snapshot(&dir.path().join("work/models"));
    for step in [
        "detect",
        "eval-parts",
        "train-classifier",
        "classify",
        "eval-classification",
    ] {
        run_ok(step, &cfg, &[]);
    }
    assert_eq!(data, snapshot(&dir.path().join("data")));
    assert_eq!(models, snapshot(&dir.path().join("work/models")));
}

#[test]
fn detected_mode_needs_a_root_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path());
    for step in ["gen", "cluster", "train-parts", "detect", "train-classifier"] {
        run_ok(step, &cfg, &[]);
    }
    let out = partforge(&[
        "classify",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "classifier.mode=detected",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("root.jsonl"));
    let text = run_ok("classify", &cfg, &[]);
    assert!(text.contains("predictions"));
}
