use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_anc-harness"))
}

fn small_config(dir: &std::path::Path) -> std::path::PathBuf {
    let text = fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../presets/scenario1.toml"
    ))
    .unwrap()
    .replace("n_iters = 10000", "n_iters = 800");
    let path = dir.join("small.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn complexity_prints_table_rows() {
    let out = bin()
        .args(["complexity", "--L", "16", "--M", "7", "--p", "2"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text
        .lines()
        .any(|l| l.split_whitespace().collect::<Vec<_>>() == ["FXHEKM", "59", "1", "46", "4"]));
    assert!(text
        .lines()
        .any(|l| l.split_whitespace().collect::<Vec<_>>() == ["FXLMS", "33", "0", "43", "0"]));
}

#[test]
fn run_then_theory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out_dir = dir.path().join("res");
    let out = bin()
        .arg("run")
        .arg(&cfg)
        .args(["--trials", "3", "--seed", "9", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "mse.csv",
        "anr.csv",
        "theory.txt",
        "manifest.txt",
        "secondary_estimate.txt",
        "plot.gp",
    ] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let manifest = fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed_base = 9"));
    assert!(manifest.contains("n_trials = 3"));
    assert_eq!(
        fs::read_to_string(out_dir.join("mse.csv"))
            .unwrap()
            .lines()
            .count(),
        801
    );

    let out = bin().arg("theory").arg(&out_dir).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("difference:"));
}

#[test]
fn sweep_writes_subdirectories() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out_dir = dir.path().join("sw");
    let out = bin()
        .arg("sweep")
        .arg(&cfg)
        .args([
            "--param", "p", "--values", "1.5,2", "--trials", "2", "--out",
        ])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_dir.join("p=1.5/anr.csv").exists());
    assert!(out_dir.join("p=2/anr.csv").exists());
    assert!(out_dir.join("objective_curves.csv").exists());
}

#[test]
fn identify_writes_tap_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["identify", "scenario1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let taps = fs::read_to_string(dir.path().join("secondary_estimate.txt")).unwrap();
    assert_eq!(taps.lines().count(), 7);
}

#[test]
fn bad_inputs_fail_cleanly() {
    let out = bin().args(["run", "no-such-preset"]).output().unwrap();
    assert!(!out.status.success());
    let out = bin()
        .args(["sweep", "scenario1", "--param", "gain", "--values", "1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown sweep parameter"));
    let dir = tempfile::tempdir().unwrap();
    let out = bin().arg("theory").arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
}
