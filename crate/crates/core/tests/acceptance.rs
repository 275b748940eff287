//! Acceptance suite. Each test is one numbered criterion, checks the
//! stated tolerance, and prints a single summary line (visible with
//! `--nocapture`); the harness itself prints the pass/fail verdict per
//! criterion.

use std::time::Instant;

use rand::Rng;

use mvcca_core::harness::{run_experiment, ExperimentConfig, FieldValue, OutputFormat};
use mvcca_core::hermite;
use mvcca_core::intersection::population_filter;
use mvcca_core::linalg::{sin_theta_norm, SubspaceBasis};
use mvcca_core::nonlinear::{invariance_check, InvertibleMapSpec};
use mvcca_core::rng::SeededStream;
use mvcca_core::spectrum::{build_from_targets, MixingEnsemble, TargetSpectra};
use mvcca_core::harness::MixingConfig;

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_json_str(text).expect("acceptance config parses")
}

fn summary_float(record: &mvcca_core::harness::RunRecord, key: &str) -> f64 {
    match record.summary.get(key) {
        Some(FieldValue::Float(v)) => *v,
        other => panic!("summary {key} is {other:?}, expected a float"),
    }
}

/// Criterion 1: population canonical correlations of constructed
/// ensembles match the prescribed spectra to 1e-10, over 100 random
/// feasible targets with rank up to 5 and view dimensions up to 8.
#[test]
fn criterion_1_spectrum_fidelity() {
    let start = Instant::now();
    let mut max_dev = 0.0f64;
    let stream = SeededStream::new(101, 0);
    for case in 0..100u64 {
        let mut rng = stream.derive(case).rng();
        let r = rng.gen_range(1..=5usize);
        let d_s = [
            rng.gen_range(r..=8usize),
            rng.gen_range(r..=8usize),
            rng.gen_range(r..=8usize),
        ];
        // products of per-view gains are feasible by construction
        let mut gains = [vec![0.0; r], vec![0.0; r], vec![0.0; r]];
        for g in &mut gains {
            for v in g.iter_mut() {
                *v = rng.gen_range(0.3..0.95);
            }
            g.sort_by(|a, b| b.partial_cmp(a).unwrap());
        }
        let pair = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x * y).collect()
        };
        let targets = TargetSpectra {
            r,
            t12: pair(&gains[0], &gains[1]),
            t13: pair(&gains[0], &gains[2]),
            t23: pair(&gains[1], &gains[2]),
            d_s,
        };
        targets.validate().expect("generated targets are valid");
        let ensemble = build_from_targets(&targets, stream.derive(1000 + case))
            .expect("generated targets are feasible");
        for (i, j, t) in [
            (0usize, 1usize, &targets.t12),
            (0, 2, &targets.t13),
            (1, 2, &targets.t23),
        ] {
            let sv = ensemble
                .population_normalized_crosscov(i, j)
                .unwrap()
                .svd
                .singular_values
                .clone();
            for k in 0..sv.len() {
                let target = if k < r { t[k] } else { 0.0 };
                max_dev = max_dev.max((sv[k] - target).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(max_dev <= 1e-10, "spectra deviate by {max_dev:.3e}");
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:.2?}, budget 5s");
    println!(
        "criterion 1 (spectrum fidelity): PASS, max deviation {max_dev:.3e} over 100 ensembles in {elapsed:.2?}"
    );
}

/// Criterion 2: Gauss-Hermite orthonormality and Mehler cross moments at
/// degree 6, 64 nodes, t in 0.1..0.9, all within 1e-8 of t^n delta_nm.
#[test]
fn criterion_2_mehler_certification() {
    let start = Instant::now();
    let record = run_experiment(&config(
        r#"{"experiment": "hermite-cert", "seed": 20}"#,
    ))
    .expect("certification run completes");
    let orth = summary_float(&record, "orth_dev");
    let cross = summary_float(&record, "max_cross_dev");
    let elapsed = start.elapsed();
    assert_eq!(record.assert_ok(), Some(true));
    assert!(orth <= 1e-8, "orthonormality deviation {orth:.3e}");
    assert!(cross <= 1e-8, "cross-moment deviation {cross:.3e}");
    assert_eq!(record.summary.get("agreement_all"), Some(&FieldValue::Bool(true)));
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:.2?}, budget 10s");
    println!(
        "criterion 2 (Mehler certification): PASS, orthonormality {orth:.3e}, cross moments {cross:.3e} in {elapsed:.2?}"
    );
}

/// Criterion 3: the closed-form dominance test agrees with explicit mode
/// enumeration on 500 random correlation vectors, and the leading-mode
/// order flips exactly as the ratio t_r / t_1^2 crosses 1.
#[test]
fn criterion_3_dominance_equivalence() {
    let stream = SeededStream::new(33, 0);
    let vectors = hermite::random_correlation_vectors(500, 4, (0.05, 0.95), stream);
    assert_eq!(vectors.len(), 500);
    let mut ties = 0usize;
    for t in &vectors {
        if t[t.len() - 1] == t[0] * t[0] {
            ties += 1;
            continue;
        }
        let holds = hermite::dominance_check(t).unwrap().holds;
        let linear = hermite::leading_modes_are_linear(t, 4).unwrap();
        assert_eq!(holds, linear, "disagreement on t = {t:?}");
    }

    let t1 = 0.5f64;
    for k in 0..=20u32 {
        let ratio = 0.5 + f64::from(k) / 20.0;
        let t = [t1, t1 * t1 * ratio];
        let linear = hermite::leading_modes_are_linear(&t, 4).unwrap();
        let holds = hermite::dominance_check(&t).unwrap().holds;
        if ratio == 1.0 {
            // exact tie: the gap test is indeterminate (not strictly
            // positive) while lexicographic tie-breaking lists the linear
            // mode first
            assert!(!holds);
            assert!(linear);
        } else {
            assert_eq!(linear, ratio > 1.0, "flip misplaced at ratio {ratio}");
            assert_eq!(holds, ratio > 1.0, "gap test misplaced at ratio {ratio}");
        }
    }
    println!(
        "criterion 3 (dominance equivalence): PASS, 500 vectors agree ({ties} ties skipped), flip sits at ratio 1"
    );
}

/// Criterion 4: on the all-0.8 Gaussian ensemble with 5-dimensional views,
/// both error medians decay with fitted slope in [-0.65, -0.35] over
/// n = 1e3..1e5, 50 trials, single-threaded within 5 minutes.
#[test]
fn criterion_4_finite_sample_rate() {
    let cfg = config(
        r#"{
            "experiment": "rate",
            "seed": 404,
            "targets": {"r": 1, "t12": [0.8], "t13": [0.8], "t23": [0.8], "dS": [5, 5, 5]},
            "n_grid": [1000, 3000, 10000, 30000, 100000],
            "trials": 50
        }"#,
    );
    let start = Instant::now();
    let record = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_experiment(&cfg))
        .expect("rate run completes");
    let elapsed = start.elapsed();
    let pairwise = summary_float(&record, "slope_pairwise");
    let multiview = summary_float(&record, "slope_multiview");
    for (name, slope) in [("pairwise", pairwise), ("multi-view", multiview)] {
        assert!(
            (-0.65..=-0.35).contains(&slope),
            "{name} slope {slope:.4} outside [-0.65, -0.35]"
        );
    }
    assert_eq!(record.assert_ok(), Some(true));
    assert!(
        elapsed.as_secs_f64() < 300.0,
        "took {elapsed:.2?}, budget 5 min"
    );
    println!(
        "criterion 4 (finite-sample rate): PASS, slopes pairwise {pairwise:.3}, multi-view {multiview:.3}, single-threaded in {elapsed:.2?}"
    );
}

/// Criterion 5: at n = 1e5 the pairwise Wedin bound and the two-step
/// multi-view chain bound hold in at least 95% of 100 trials, and the
/// population gap respects its dominance lower bound t_r - t_1^2.
#[test]
fn criterion_5_perturbation_bound_chain() {
    let cfg = config(
        r#"{
            "experiment": "intersection",
            "seed": 505,
            "targets": {"r": 1, "t12": [0.8], "t13": [0.8], "t23": [0.8], "dS": [5, 5, 5]}
        }"#,
    );
    let record = run_experiment(&cfg).expect("intersection run completes");
    assert_eq!(record.rows.len(), 100);
    let pair_fraction = summary_float(&record, "pair_bound_fraction");
    let chain_fraction = summary_float(&record, "chain_fraction");
    assert!(
        pair_fraction >= 0.95,
        "pairwise bound held in only {pair_fraction:.3} of trials"
    );
    assert!(
        chain_fraction >= 0.95,
        "chain bound held in only {chain_fraction:.3} of trials"
    );
    assert_eq!(
        record.summary.get("delta_vs_dominance_ok"),
        Some(&FieldValue::Bool(true)),
        "population gap fell below t_r - t_1^2"
    );
    assert_eq!(record.assert_ok(), Some(true));
    println!(
        "criterion 5 (perturbation-bound chain): PASS, pairwise {pair_fraction:.2}, chain {chain_fraction:.2} of 100 trials at n=100000"
    );
}

/// Criterion 6: the planted span{e1,e2} / span{e1,e3} example yields
/// view-0 filter eigenvalues (1, 0.5, 0.5) and a 1-eigenspace equal to the
/// planted intersection, both to 1e-10, at any mixing scale.
#[test]
fn criterion_6_intersection_exactness() {
    let mut worst_eig = 0.0f64;
    let mut worst_sin = 0.0f64;
    for kappa in [0.5f64, 2.0, 10.0] {
        let full = MixingConfig {
            rows: 3,
            cols: 3,
            data: vec![kappa, 0.0, 0.0, 0.0, kappa, 0.0, 0.0, 0.0, kappa],
        };
        let first_two = MixingConfig {
            rows: 2,
            cols: 3,
            data: vec![kappa, 0.0, 0.0, 0.0, kappa, 0.0],
        };
        let first_and_third = MixingConfig {
            rows: 2,
            cols: 3,
            data: vec![kappa, 0.0, 0.0, 0.0, 0.0, kappa],
        };
        let ensemble = MixingEnsemble::from_mixings(vec![
            full.to_matrix().unwrap(),
            first_two.to_matrix().unwrap(),
            first_and_third.to_matrix().unwrap(),
        ])
        .unwrap();
        let filter = population_filter(&ensemble, 0).unwrap();
        for (k, expected) in [1.0, 0.5, 0.5].iter().enumerate() {
            worst_eig = worst_eig.max((filter.eigenvalues[k] - expected).abs());
        }
        let planted = SubspaceBasis::standard(3, &[0]).unwrap();
        let recovered = filter.top_eigenspace(1).unwrap().basis;
        worst_sin = worst_sin.max(sin_theta_norm(&planted, &recovered).unwrap());
    }
    assert!(worst_eig <= 1e-10, "eigenvalues off by {worst_eig:.3e}");
    assert!(worst_sin <= 1e-10, "1-eigenspace off by {worst_sin:.3e}");
    println!(
        "criterion 6 (intersection exactness): PASS, eigenvalue deviation {worst_eig:.3e}, sin-theta {worst_sin:.3e}"
    );
}

/// Criterion 7: oracle-encoded observations reproduce source-level sample
/// moments to 1e-10 and invert back to the sources within 1e-8, over 20
/// rounds of freshly drawn nonlinear generator triples.
#[test]
fn criterion_7_reparameterization_wiring() {
    let targets = TargetSpectra::equal_pairs(&[0.85, 0.6], 3);
    let ensemble = build_from_targets(&targets, SeededStream::new(77, 0)).unwrap();
    let prior = serde_json::from_str(r#"{"family": "gaussian"}"#).unwrap();
    let mut max_moment = 0.0f64;
    let mut max_round_trip = 0.0f64;
    for round in 0..20u64 {
        let spec_stream = SeededStream::new(77, 1).derive(round);
        let specs: Vec<InvertibleMapSpec> = (0..3)
            .map(|v| {
                InvertibleMapSpec::random(ensemble.view_dim(v), spec_stream.derive(v as u64))
                    .unwrap()
            })
            .collect();
        let report = invariance_check(
            &ensemble,
            &specs,
            &prior,
            2_000,
            SeededStream::for_trial(77, round, 0),
        )
        .expect("moment preservation holds");
        max_moment = max_moment.max(report.max_deviation);
        for err in report.round_trip_max_err {
            max_round_trip = max_round_trip.max(err);
        }
    }
    assert!(max_moment <= 1e-10, "moment deviation {max_moment:.3e}");
    assert!(max_round_trip < 1e-8, "round trip error {max_round_trip:.3e}");
    println!(
        "criterion 7 (reparameterization wiring): PASS, moments {max_moment:.3e}, round trip {max_round_trip:.3e} over 20 generator triples"
    );
}

/// Criterion 8: every experiment kind, re-run with the same config and
/// seed, emits byte-identical CSV and JSON, including across thread
/// counts.
#[test]
fn criterion_8_determinism() {
    let configs = [
        r#"{"experiment": "construct-spectrum", "seed": 8,
            "targets": {"r": 2, "t12": [0.8, 0.5], "t13": [0.8, 0.5], "t23": [0.8, 0.5], "dS": [3, 3, 3]}}"#,
        r#"{"experiment": "hermite-cert", "seed": 8, "max_degree": 3,
            "quadrature_nodes": 24, "t_grid": [0.2, 0.7]}"#,
        r#"{"experiment": "dominance", "seed": 8, "n": 2000,
            "ratio_grid": [0.6, 1.0, 1.4]}"#,
        r#"{"experiment": "invariance", "seed": 8, "n": 1500,
            "targets": {"r": 1, "t12": [0.8], "t13": [0.8], "t23": [0.8], "dS": [2, 2, 2]}}"#,
        r#"{"experiment": "estimate", "seed": 8, "rank": 1, "n": 1500, "trials": 2,
            "targets": {"r": 1, "t12": [0.8], "t13": [0.8], "t23": [0.8], "dS": [2, 2, 2]}}"#,
        r#"{"experiment": "intersection", "seed": 8, "trials": 3, "n": 1500,
            "targets": {"r": 1, "t12": [0.8], "t13": [0.8], "t23": [0.8], "dS": [2, 2, 2]}}"#,
        r#"{"experiment": "rate", "seed": 8, "trials": 20,
            "n_grid": [200, 800, 3200, 12800],
            "targets": {"r": 1, "t12": [0.8], "t13": [0.8], "t23": [0.8], "dS": [2, 2, 2]}}"#,
    ];
    let dir = tempfile::tempdir().unwrap();
    for (k, text) in configs.iter().enumerate() {
        let cfg = config(text);
        let first = run_experiment(&cfg).unwrap();
        let second = run_experiment(&cfg).unwrap();
        assert_eq!(
            first.to_csv_string(),
            second.to_csv_string(),
            "CSV differs for {}",
            cfg.experiment
        );
        assert_eq!(
            first.to_json_string(),
            second.to_json_string(),
            "JSON differs for {}",
            cfg.experiment
        );
        for (format, record) in [(OutputFormat::Csv, &first), (OutputFormat::Json, &second)] {
            let a = dir.path().join(format!("{k}_a.{}", format.extension()));
            let b = dir.path().join(format!("{k}_b.{}", format.extension()));
            mvcca_core::harness::emit(record, format, &a).unwrap();
            mvcca_core::harness::emit(record, format, &b).unwrap();
            assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        }
    }

    // thread count must not leak into the artifacts
    let cfg = config(configs[6]);
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_experiment(&cfg))
        .unwrap();
    let wide = rayon::ThreadPoolBuilder::new()
        .num_threads(8)
        .build()
        .unwrap()
        .install(|| run_experiment(&cfg))
        .unwrap();
    assert_eq!(single.to_csv_string(), wide.to_csv_string());
    assert_eq!(single.to_json_string(), wide.to_json_string());
    println!(
        "criterion 8 (determinism): PASS, byte-identical CSV/JSON for all 7 experiments and across thread counts"
    );
}
