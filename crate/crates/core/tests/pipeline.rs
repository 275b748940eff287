//! Cross-module flows: sampling through whitening and recovery, nonlinear
//! wrapping, disk round trips, and non-Gaussian priors.

use mvcca_core::cca::empirical_normalized_crosscov;
use mvcca_core::intersection::{population_filter, IntersectionFilter};
use mvcca_core::io;
use mvcca_core::linalg::sin_theta_norm;
use mvcca_core::nonlinear::InvertibleMapSpec;
use mvcca_core::prior::{sample_sources, sample_standardized, PriorSpec};
use mvcca_core::rng::SeededStream;
use mvcca_core::spectrum::{build_from_targets, TargetSpectra, VIEW_PAIRS};
use mvcca_core::cca::ViewDataset;

#[test]
fn linear_pipeline_recovers_spectra_rank_and_subspaces() {
    let r = 2;
    let targets = TargetSpectra::equal_pairs(&[0.85, 0.6], 4);
    let ensemble = build_from_targets(&targets, SeededStream::new(21, 0)).unwrap();
    let data = sample_sources(&ensemble, &PriorSpec::Gaussian, 200_000, SeededStream::new(21, 1))
        .unwrap();

    let mut bases: Vec<Vec<_>> = vec![Vec::new(); 3];
    let mut objective = 0.0;
    for &(i, j) in &VIEW_PAIRS {
        let cca = empirical_normalized_crosscov(&data[i], &data[j]).unwrap();
        for k in 0..r {
            let dev = (cca.correlations()[k] - targets.t12[k]).abs();
            assert!(
                dev < 0.02,
                "pair ({i},{j}) correlation {k} off by {dev:.4}"
            );
        }
        for k in r..cca.correlations().len() {
            assert!(cca.correlations()[k] < 0.02);
        }
        objective += cca.nuclear_norm();
        bases[i].push(cca.left_basis(r).unwrap());
        bases[j].push(cca.right_basis(r).unwrap());
    }
    let population_objective: f64 = 3.0 * targets.t12.iter().sum::<f64>();
    assert!((objective - population_objective).abs() < 0.1);

    for (v, view_bases) in bases.iter().enumerate() {
        let filter = IntersectionFilter::from_bases(v, view_bases).unwrap();
        assert_eq!(filter.select_rank(0.9).unwrap(), r);
        let empirical = filter.top_eigenspace(r).unwrap();
        let population = population_filter(&ensemble, v)
            .unwrap()
            .top_eigenspace(r)
            .unwrap();
        let sin = sin_theta_norm(&population.basis, &empirical.basis).unwrap();
        assert!(sin < 0.05, "view {v} subspace error {sin:.4}");
    }
}

#[test]
fn nonlinear_views_encode_back_to_the_linear_estimates() {
    let targets = TargetSpectra::equal_pairs(&[0.8, 0.5], 4);
    let ensemble = build_from_targets(&targets, SeededStream::new(22, 0)).unwrap();
    let sources =
        sample_sources(&ensemble, &PriorSpec::Gaussian, 5_000, SeededStream::new(22, 1)).unwrap();
    let maps: Vec<InvertibleMapSpec> = (0..3)
        .map(|v| InvertibleMapSpec::random(4, SeededStream::new(22, 2).derive(v as u64)).unwrap())
        .collect();
    let encoded: Vec<ViewDataset> = (0..3)
        .map(|v| {
            let observed = maps[v].apply_dataset(&sources[v]).unwrap();
            maps[v].encode_dataset(&observed).unwrap()
        })
        .collect();
    for v in 0..3 {
        let round_trip = (encoded[v].data() - sources[v].data()).amax();
        assert!(round_trip < 1e-9, "view {v} round trip {round_trip:.3e}");
    }
    for &(i, j) in &VIEW_PAIRS {
        let direct = empirical_normalized_crosscov(&sources[i], &sources[j]).unwrap();
        let wrapped = empirical_normalized_crosscov(&encoded[i], &encoded[j]).unwrap();
        for (a, b) in direct.correlations().iter().zip(wrapped.correlations()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((direct.matrix() - wrapped.matrix()).amax() < 1e-9);
    }
}

#[test]
fn datasets_round_trip_through_csv_and_binary_bitwise() {
    let data = sample_standardized(&PriorSpec::Gaussian, 50, 3, SeededStream::new(23, 0)).unwrap();
    let dataset = ViewDataset::new(data, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let csv_path = dir.path().join("view.csv");
    io::write_dataset_csv(&csv_path, &dataset).unwrap();
    let from_csv = io::read_dataset_csv(&csv_path).unwrap();
    assert_eq!(from_csv.view_index(), 1);
    assert_eq!(from_csv.num_samples(), 50);
    for (a, b) in dataset.data().iter().zip(from_csv.data().iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }

    let bin_path = dir.path().join("view.bin");
    io::write_dataset_binary(&bin_path, &dataset).unwrap();
    let from_bin = io::read_dataset_binary(&bin_path).unwrap();
    assert_eq!(from_bin.view_index(), 1);
    for (a, b) in dataset.data().iter().zip(from_bin.data().iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn poisson_sources_reach_the_same_population_spectra() {
    let targets = TargetSpectra::equal_pairs(&[0.7], 3);
    let ensemble = build_from_targets(&targets, SeededStream::new(24, 0)).unwrap();
    let prior = PriorSpec::Poisson { rate: 4.0 };
    let data = sample_sources(&ensemble, &prior, 40_000, SeededStream::new(24, 1)).unwrap();
    for &(i, j) in &VIEW_PAIRS {
        let cca = empirical_normalized_crosscov(&data[i], &data[j]).unwrap();
        let dev = (cca.correlations()[0] - 0.7).abs();
        assert!(dev < 0.05, "pair ({i},{j}) off by {dev:.4}");
        assert!(cca.correlations()[1] < 0.05);
    }
}
