use std::process::{Command, Output};

fn rsapa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsapa")).args(args).output().unwrap()
}

const SMALL: [&str; 8] = ["--channels", "3", "--errors", "2", "--snr-db", "0,10", "--scheme", "conv-upa"];

#[test]
fn sweep_writes_csv_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("snr.csv");
    let mut args = vec!["sweep-snr", "--out", path.to_str().unwrap(), "--scheme", "rs-apar"];
    args.extend(SMALL);
    let out = rsapa(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), rsapa::harness::SWEEP_HEADER);
    assert_eq!(lines.count(), 4);
}

#[test]
fn same_seed_gives_same_output() {
    let mut args = vec!["sweep-err", "--seed", "5", "--err-var", "0,0.2"];
    args.extend(SMALL);
    let a = rsapa(&args);
    args.extend(["--jobs", "2"]);
    let b = rsapa(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn config_file_is_loaded_and_overridden() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    let spec = rsapa::harness::ExperimentSpec {
        n_channels: 2,
        n_errors: 1,
        snr_grid_db: vec![5.0],
        ..rsapa::harness::ExperimentSpec::snr_sweep_preset()
    };
    std::fs::write(&cfg, spec.to_toml_string().unwrap()).unwrap();
    let out = rsapa(&["sweep-snr", "--config", cfg.to_str().unwrap(), "--scheme", "rs-apa"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("5.0,0.1,rs-apa,"));
}

#[test]
fn bad_configuration_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "unknown_field = 3\n").unwrap();
    assert_eq!(rsapa(&["sweep-snr", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(rsapa(&["sweep-snr", "--channels", "0"]).status.code(), Some(1));
    assert_eq!(rsapa(&["sweep-snr", "--precoder", "nope"]).status.code(), Some(1));
    assert_eq!(rsapa(&["convergence", "--scheme", "conv-upa"]).status.code(), Some(1));
}

#[test]
fn unwritable_output_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("x.csv");
    let mut args = vec!["sweep-snr", "--out", path.to_str().unwrap()];
    args.extend(SMALL);
    assert_eq!(rsapa(&args).status.code(), Some(3));
}

#[test]
fn complexity_and_validate_succeed() {
    let out = rsapa(&["complexity", "--n", "4", "--reps", "0"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("4,rs-apa,1630,30,48900"));
    assert!(text.contains("4,rs-apar,1660,30,49800"));

    let out = rsapa(&["validate", "--instances", "3", "--draws", "5000"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().matches("PASS").count(), 3);
}
