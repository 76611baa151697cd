use std::fs;
use std::path::Path;

use robust_anc::harness::{
    emit_csv, emit_sweep, parse_metric_csv, preset, run_experiment, scenario1, scenario2, sweep,
    ExperimentConfig, PreparedExperiment, SweepParam,
};
use robust_anc::noise::sample_gaussian;
use robust_anc::paths::{primary_taps, secondary_taps};
use robust_anc::signal::convolve_stream;
use robust_anc::{AlgorithmKind, Error, PathModel, TapVector};

fn presets_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../presets"))
}

/// y(n) = Σ_k h(k)·x(n−k), written out directly.
fn direct_convolution(h: &[f64], x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            (0..h.len())
                .filter(|&k| k <= n)
                .map(|k| h[k] * x[n - k])
                .sum()
        })
        .collect()
}

fn small(mut cfg: ExperimentConfig) -> ExperimentConfig {
    cfg.n_iters = 1500;
    cfg.n_trials = 4;
    cfg
}

#[test]
fn streaming_filter_matches_convolution_sum() {
    let x = sample_gaussian(1.0, 300, 11).unwrap();
    let got = convolve_stream(primary_taps()).process_block(&x);
    let want = direct_convolution(primary_taps().as_slice(), &x);
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() <= 1e-12);
    }
}

#[test]
fn cascaded_paths_equal_product_polynomial() {
    let x = sample_gaussian(1.0, 300, 12).unwrap();
    let mut p = convolve_stream(primary_taps());
    let mut s = convolve_stream(secondary_taps());
    let cascade: Vec<f64> = x.iter().map(|&u| s.process(p.process(u))).collect();
    // (P·S)(z) = 0.5·P(z)², coefficients by hand.
    let p = primary_taps();
    let mut ps = vec![0.0; 13];
    for i in 0..7 {
        for j in 0..7 {
            ps[i + j] += 0.5 * p[i] * p[j];
        }
    }
    assert_eq!(p.convolve(&secondary_taps()).as_slice(), &ps[..]);
    let direct = direct_convolution(&ps, &x);
    for (a, b) in cascade.iter().zip(&direct) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn filtered_reference_is_estimate_convolved_with_input() {
    let cfg = small(scenario2());
    let prep = PreparedExperiment::new(&cfg).unwrap();
    let noise = prep.trial_noise(1).unwrap();
    let hekm = cfg
        .algorithms
        .iter()
        .find(|a| a.kind() == AlgorithmKind::Fxhekm)
        .unwrap();
    let trace = prep.run_trace_on(hekm, &noise.x, &noise.v).unwrap();
    let want = direct_convolution(prep.secondary_estimate.taps(), &noise.x);
    for (a, b) in trace.x_filtered.iter().zip(&want) {
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
    }
    // Disturbance is the clean primary-path signal plus measurement noise.
    let clean = direct_convolution(primary_taps().as_slice(), &noise.x);
    for ((d, c), v) in trace.d.iter().zip(&clean).zip(&noise.v) {
        assert!((d - c - v).abs() <= 1e-9 * c.abs().max(1.0));
    }
}

#[test]
fn shipped_presets_equal_builtin_presets() {
    for name in ["scenario1", "scenario2"] {
        let file = ExperimentConfig::load(&presets_dir().join(format!("{name}.toml"))).unwrap();
        assert_eq!(file, preset(name).unwrap(), "{name}");
    }
}

#[test]
fn presets_hold_the_published_settings() {
    let s1 = scenario1();
    assert_eq!((s1.filter_len, s1.n_trials), (16, 250));
    assert_eq!(s1.noise.scale, 0.1);
    assert_eq!(s1.noise.alpha_s, 2.0);
    assert_eq!(scenario2().noise.alpha_s, 1.5);
    assert_eq!(s1.paths.primary, vec![0.0, 0.0, 0.25, 0.5, 1.0, 0.5, 0.25]);
    assert_eq!(
        s1.paths.secondary,
        vec![0.0, 0.0, 0.125, 0.25, 0.5, 0.25, 0.125]
    );
    assert_eq!(s1.algorithms.len(), 7);
}

#[test]
fn emitted_files_round_trip() {
    let res = run_experiment(&small(scenario1())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_csv(&res, dir.path()).unwrap();
    let mse = parse_metric_csv(&fs::read_to_string(dir.path().join("mse.csv")).unwrap()).unwrap();
    let anr = parse_metric_csv(&fs::read_to_string(dir.path().join("anr.csv")).unwrap()).unwrap();
    for (i, a) in res.algorithms.iter().enumerate() {
        assert_eq!(mse[i], a.mse);
        assert_eq!(anr[i], a.anr);
    }
    let header = fs::read_to_string(dir.path().join("anr.csv")).unwrap();
    assert_eq!(
        header.lines().next().unwrap(),
        "iteration,FXLMS,FXGMCC,FXGHT,IFXGMCC,FXGR,FXECH,FXHEKM"
    );
    let est = PathModel::load(&dir.path().join("secondary_estimate.txt")).unwrap();
    assert_eq!(est, res.secondary_estimate);
    let theory = fs::read_to_string(dir.path().join("theory.txt")).unwrap();
    assert_eq!(
        robust_anc::analysis::TheoryReport::from_text(&theory).unwrap(),
        res.theory.clone().unwrap()
    );
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed_base = 2024"));
    assert!(manifest.contains("realized_snr_db"));
    assert!(dir.path().join("plot.gp").exists());
}

#[test]
fn rerun_is_identical() {
    let cfg = small(scenario2());
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert!(a.same_outcome(&b));
}

#[test]
fn single_trial_matches_its_slot_in_the_ensemble() {
    let cfg = small(scenario2());
    let prep = PreparedExperiment::new(&cfg).unwrap();
    let res = run_experiment(&cfg).unwrap();
    for t in [0, 3] {
        let alone = prep.run_trial(t).unwrap();
        assert_eq!(alone.sigma_v, res.sigma_v[t]);
        for (a, o) in res.algorithms.iter().zip(&alone.outcomes) {
            assert_eq!(a.diverged[t], o.diverged);
            assert_eq!(a.trial_anr_plateau[t], o.anr_plateau);
        }
    }
}

#[test]
fn loaded_estimate_replaces_identification() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s_hat.txt");
    PathModel::new(secondary_taps()).save(&path).unwrap();
    let mut cfg = small(scenario1());
    cfg.paths.secondary_estimate_file = Some(path);
    let prep = PreparedExperiment::new(&cfg).unwrap();
    assert_eq!(prep.secondary_estimate.taps(), secondary_taps().as_slice());
    assert_eq!(prep.identification_misalignment, None);
}

#[test]
fn sweep_writes_one_directory_per_value_and_curves() {
    let mut cfg = small(scenario2());
    cfg.n_trials = 2;
    cfg.n_iters = 400;
    let values = [0.4, 1.0];
    let results = sweep(&cfg, SweepParam::Alpha, &values).unwrap();
    assert_eq!(results.len(), 2);
    let dir = tempfile::tempdir().unwrap();
    emit_sweep(&cfg, SweepParam::Alpha, &values, &results, dir.path()).unwrap();
    assert!(dir.path().join("alpha=0.4/mse.csv").exists());
    assert!(dir.path().join("alpha=1/anr.csv").exists());
    let curves = fs::read_to_string(dir.path().join("objective_curves.csv")).unwrap();
    assert_eq!(
        curves.lines().next().unwrap(),
        "e,J_alpha=0.4,dJ_alpha=0.4,J_alpha=1,dJ_alpha=1"
    );
    assert_eq!(curves.lines().count(), 602);
}

#[test]
fn unwritable_output_reports_the_path() {
    let res = run_experiment(&small(scenario1())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    match emit_csv(&res, &blocker.join("out")) {
        Err(Error::Io { path, .. }) => assert!(path.starts_with(&blocker)),
        other => panic!("expected an I/O error, got {other:?}"),
    }
}

#[test]
fn unknown_algorithm_in_config_is_rejected() {
    let text = scenario1().to_toml().replace("\"FXGR\"", "\"FXNOPE\"");
    assert!(matches!(
        ExperimentConfig::from_toml(&text),
        Err(Error::Config(_))
    ));
}

#[test]
fn invalid_taps_are_rejected() {
    assert!(TapVector::new(vec![]).is_err());
    assert!(TapVector::new(vec![1.0, f64::NAN]).is_err());
}
