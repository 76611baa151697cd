use approx::assert_relative_eq;
use proptest::prelude::*;

use robust_anc::algorithms::{hekm_gate, hekm_objective, hekm_phi};
use robust_anc::analysis::{covariance_recursion_check, steady_state_mse, TheoryInputs};
use robust_anc::metrics::{anr_series, ensemble_mse};
use robust_anc::noise::{sample_alpha_stable, NoiseSpec};
use robust_anc::paths::{primary_taps, secondary_taps};
use robust_anc::signal::{convolve_stream, FirFilter};
use robust_anc::{
    AlgorithmKind, AlgorithmParams, Controller, HekmParams, PathModel, PlantState, TapVector,
};

fn taps() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 1..10)
}

fn signal(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, n)
}

fn filter(t: &[f64]) -> FirFilter {
    convolve_stream(TapVector::new(t.to_vec()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fir_is_linear(t in taps(), x in signal(40), y in signal(40), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let out = filter(&t).process_block(&mix);
        let fx = filter(&t).process_block(&x);
        let fy = filter(&t).process_block(&y);
        for i in 0..mix.len() {
            prop_assert!((out[i] - (a * fx[i] + b * fy[i])).abs() <= 1e-9);
        }
    }

    #[test]
    fn fir_is_time_invariant(t in taps(), x in signal(30), k in 0usize..8) {
        let mut delayed = vec![0.0; k];
        delayed.extend_from_slice(&x);
        let out = filter(&t).process_block(&delayed);
        let base = filter(&t).process_block(&x);
        prop_assert!(out[..k].iter().all(|v| *v == 0.0));
        prop_assert_eq!(&out[k..], &base[..]);
    }

    #[test]
    fn noise_is_reproducible(alpha in 0.3f64..=2.0, beta in -1.0f64..=1.0, seed: u64) {
        let spec = NoiseSpec::new(alpha, beta, 1.0, 0.0, 0.1, seed).unwrap();
        let a = sample_alpha_stable(&spec, 200).unwrap();
        let b = sample_alpha_stable(&spec, 200).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn noise_scale_is_equivariant(alpha in 0.3f64..=2.0, c in 0.0f64..10.0, seed: u64) {
        let one = sample_alpha_stable(&NoiseSpec::new(alpha, 0.0, 1.0, 0.0, 1.0, seed).unwrap(), 200).unwrap();
        let scaled = sample_alpha_stable(&NoiseSpec::new(alpha, 0.0, 1.0, 0.0, c, seed).unwrap(), 200).unwrap();
        for (u, v) in one.iter().zip(&scaled) {
            prop_assert!((c * u - v).abs() <= 1e-12 * (c * u).abs().max(1e-300));
        }
    }

    #[test]
    fn anr_is_scale_invariant(e in signal(60), d in signal(60), c in 0.01f64..100.0) {
        let a = anr_series(&e, &d, 0.99).unwrap();
        let ce: Vec<f64> = e.iter().map(|v| c * v).collect();
        let cd: Vec<f64> = d.iter().map(|v| c * v).collect();
        let b = anr_series(&ce, &cd, 0.99).unwrap();
        for (x, y) in a.values_db.iter().zip(&b.values_db) {
            match (x, y) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-9),
                (None, None) => {}
                _ => prop_assert!(false, "definedness differs: {x:?} vs {y:?}"),
            }
        }
    }

    #[test]
    fn mse_ignores_trial_order(trials in prop::collection::vec(signal(20), 2..8), shift in 0usize..8) {
        let mut rotated = trials.clone();
        let k = shift % trials.len();
        rotated.rotate_left(k);
        let a = ensemble_mse(&trials).unwrap();
        let b = ensemble_mse(&rotated).unwrap();
        for (x, y) in a.values_db.iter().zip(&b.values_db) {
            match (x, y) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-9),
                (None, None) => {}
                _ => prop_assert!(false),
            }
        }
    }

    #[test]
    fn steady_state_mse_grows_with_step(
        eigs in prop::collection::vec(1e-3f64..1.0, 1..16),
        phi in 0.1f64..10.0,
        mu in 1e-3f64..1.0,
        bump in 1.0001f64..1.5,
        j_min in 1e-4f64..1.0,
    ) {
        let a = TheoryInputs::new(eigs.clone(), phi, mu, j_min).unwrap();
        let b = a.with_mu(mu * bump);
        if let (Ok(sa), Ok(sb)) = (steady_state_mse(&a), steady_state_mse(&b)) {
            prop_assert!(sb.j_inf >= sa.j_inf);
        }
    }

    #[test]
    fn covariance_recursion_reaches_closed_form(
        eigs in prop::collection::vec(prop_oneof![Just(0.0), 1e-2f64..1.0], 1..6),
        a_target in 0.05f64..1.9,
        j_min in 1e-4f64..1.0,
    ) {
        // Choose μΦ so that the largest mode sits at `a_target`.
        let lmax = eigs.iter().copied().fold(0.0, f64::max);
        prop_assume!(lmax > 0.0);
        let mu_phi = (a_target / lmax).sqrt();
        let inputs = TheoryInputs::new(eigs.clone(), 1.0, mu_phi, j_min).unwrap();
        let u = covariance_recursion_check(&inputs, 10_000_000).unwrap();
        for (ui, &l) in u.iter().zip(inputs.eigenvalues()) {
            if l == 0.0 {
                prop_assert_eq!(*ui, 0.0);
            } else {
                let want = j_min / (2.0 - mu_phi * mu_phi * l);
                prop_assert!((ui - want).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn hekm_update_respects_normalization_bound(
        e in -0.199f64..0.199,
        xs in prop::collection::vec(-1.0f64..1.0, 4),
        p in 1.0f64..3.0,
        alpha in 0.1f64..2.0,
        eta in 0.1f64..3.0,
    ) {
        let params = HekmParams { p, alpha, eta, ..HekmParams::reference() };
        let mut c = Controller::new(AlgorithmParams::Fxhekm(params), 4).unwrap();
        for &x in xs.iter().rev() {
            c.push_filtered(x);
        }
        let r = c.filtered_reference().norm_sq();
        c.update(e);
        let mu = params.step_size();
        for (k, w) in c.weights().as_slice().iter().enumerate() {
            let xk = c.filtered_reference().as_slice()[k];
            let bound = mu * e.abs().powf(p - 1.0) * xk.abs() / (params.delta_reg + r);
            prop_assert!(w.abs() <= bound * (1.0 + 1e-12) + 1e-300);
        }
    }

    #[test]
    fn closed_gate_leaves_weights_bitwise_unchanged(seed: u64, zeta in 0.01f64..0.3) {
        let params = HekmParams { zeta, ..HekmParams::reference() };
        let spec = NoiseSpec::standard(1.5, 0.1, seed).unwrap();
        let x = sample_alpha_stable(&spec, 600).unwrap();
        let mut plant = PlantState::new(
            PathModel::new(primary_taps()),
            PathModel::new(secondary_taps()),
            PathModel::new(secondary_taps()),
        );
        let mut c = Controller::new(AlgorithmParams::Fxhekm(params), 8).unwrap();
        for &xn in &x {
            let y = c.output(xn);
            let s = plant.step(xn, 0.0, y);
            c.push_filtered(s.x_filtered);
            let before: Vec<u64> = c.weights().as_slice().iter().map(|w| w.to_bits()).collect();
            c.update(s.e);
            if !hekm_gate(s.e, zeta) {
                let after: Vec<u64> = c.weights().as_slice().iter().map(|w| w.to_bits()).collect();
                prop_assert_eq!(before, after);
            }
        }
    }

    #[test]
    fn score_is_derivative_of_objective(e in 0.01f64..4.0, p in 1.2f64..3.0, alpha in 0.1f64..2.0) {
        let params = HekmParams { p, alpha, delta_reg: 0.0, ..HekmParams::reference() };
        let h = 1e-6;
        let fd = (hekm_objective(e + h, &params) - hekm_objective(e - h, &params)) / (2.0 * h);
        let analytic = params.step_size() * hekm_phi(e, 1.0, &params);
        prop_assert!((fd - analytic).abs() <= 1e-6 * analytic.abs().max(1e-9));
    }
}

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn symmetric_law_matches_its_mirror_image() {
    for (alpha, seed) in [(1.5, 3), (0.8, 4), (1.0, 5), (2.0, 6)] {
        let x =
            sample_alpha_stable(&NoiseSpec::standard(alpha, 1.0, seed).unwrap(), 20_000).unwrap();
        let y: Vec<f64> = sample_alpha_stable(
            &NoiseSpec::standard(alpha, 1.0, seed + 100).unwrap(),
            20_000,
        )
        .unwrap()
        .into_iter()
        .map(|v| -v)
        .collect();
        // 0.1% critical value for two samples of 20 000.
        let crit = 1.95 * (2.0f64 / 20_000.0).sqrt();
        let d = ks_statistic(&x, &y);
        assert!(d < crit, "alpha {alpha}: KS {d} >= {crit}");
    }
}

fn max_derivative(params: &HekmParams) -> f64 {
    let p = HekmParams {
        delta_reg: 0.0,
        ..*params
    };
    (1..=3000)
        .map(|i| {
            let e = i as f64 * 1e-3;
            (p.step_size() * hekm_phi(e, 1.0, &p)).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn larger_exponent_gives_larger_gradient() {
    let lo = HekmParams {
        p: 1.5,
        ..HekmParams::reference()
    };
    let hi = HekmParams {
        p: 2.0,
        ..HekmParams::reference()
    };
    assert!(max_derivative(&hi) > max_derivative(&lo));
}

#[test]
fn smaller_alpha_does_not_shrink_gradient() {
    let big = HekmParams {
        alpha: 1.0,
        ..HekmParams::reference()
    };
    let small = HekmParams {
        alpha: 0.4,
        ..HekmParams::reference()
    };
    assert!(max_derivative(&small) >= max_derivative(&big));
}

#[test]
fn every_competitor_score_is_odd_through_the_controller() {
    for kind in AlgorithmKind::ALL {
        let params = AlgorithmParams::reference(kind);
        for e in [0.01, 0.1, 0.15, 0.5] {
            assert_relative_eq!(
                params.score(e, 1.0),
                -params.score(-e, 1.0),
                max_relative = 1e-12
            );
        }
        assert_eq!(params.score(0.0, 1.0), 0.0);
    }
}
