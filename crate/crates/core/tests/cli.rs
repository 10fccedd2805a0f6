use std::process::Command;

fn otafd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_otafd"))
}

#[test]
fn run_writes_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    std::fs::write(
        &config,
        "[learner]\nrounds = 5\n[data]\ntrain_samples = 200\ntest_samples = 100\n[experiment]\nmethods = [\"proposed\", \"orthogonal\"]\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = otafd()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    for name in ["proposed.csv", "orthogonal.csv", "summary.json", "config.toml"] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let csv = std::fs::read_to_string(out.join("proposed.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(String::from_utf8_lossy(&status.stdout).contains("mean final test accuracy"));
}

#[test]
fn dump_effective_config_applies_overrides() {
    let out = otafd()
        .args(["run", "--dump-effective-config", "--antennas", "7", "--gamma", "0.5", "--methods", "uniform,error_free"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = otafd::experiment::ExperimentConfig::from_toml(&text).unwrap();
    assert_eq!(cfg.channel.num_antennas, 7);
    assert_eq!(cfg.learner.distill_weight, 0.5);
    assert_eq!(cfg.experiment.methods.len(), 2);
}

#[test]
fn verify_prints_one_line_per_check() {
    let out = otafd().args(["verify", "--instances", "5"]).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(!text.is_empty());
    assert!(text.lines().all(|l| l.starts_with("PASS ") || l.starts_with("FAIL ")));
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[experiment]\nmethods = [\"telepathy\"]\n").unwrap();
    let out = otafd().args(["run", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let missing = otafd().args(["run", "--config", "/nonexistent/x.toml"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}
