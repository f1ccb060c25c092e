mod common;

use std::path::PathBuf;

use common::*;
use proptest::prelude::*;
use tfrecon::eval::{
    nmse, nmse_normalized, render_gray, run_experiment, run_experiment_csv, write_pgm, CaseSpec,
    ExperimentSpec, Method, CSV_HEADER,
};
use tfrecon::siggen::ideal_tfd;
use tfrecon::threshnet::{UNetArch, WeightBundle};
use tfrecon::{BenchmarkCase, Error, MaskSpec, TfMatrix};

fn random_tf(n: usize, seed: u64) -> TfMatrix {
    TfMatrix::from_column_major(n, random_real(n * n, &mut rng(seed))).unwrap()
}

fn scaled(w: &TfMatrix, c: f64) -> TfMatrix {
    TfMatrix::from_column_major(w.n(), w.as_slice().iter().map(|v| v * c).collect()).unwrap()
}

#[test]
fn nmse_matches_direct_sums() {
    for seed in 0..10 {
        let reference = random_tf(16, seed);
        let estimate = random_tf(16, seed + 100);
        let err: f64 = reference
            .as_slice()
            .iter()
            .zip(estimate.as_slice())
            .map(|(r, e)| (r - e).powi(2))
            .sum();
        let energy: f64 = reference.as_slice().iter().map(|r| r * r).sum();
        let want = 10.0 * (err / energy).log10();
        assert!((nmse(&estimate, &reference).unwrap() - want).abs() < 1e-12);
    }
}

#[test]
fn nmse_worked_examples() {
    let mut reference = TfMatrix::zeros(4);
    reference.set(1, 2, 2.0);
    let mut estimate = TfMatrix::zeros(4);
    estimate.set(1, 2, 1.0);
    // half the amplitude leaves a quarter of the energy as error
    assert!((nmse(&estimate, &reference).unwrap() + 6.020_599_913_279_624).abs() < 1e-12);
    estimate.set(0, 0, 1.0);
    // error energy 1 + 1 over reference energy 4
    assert!((nmse(&estimate, &reference).unwrap() + 3.010_299_956_639_812).abs() < 1e-12);
    assert_eq!(
        nmse_normalized(&TfMatrix::zeros(4), &reference).unwrap(),
        0.0
    );
    assert!(matches!(
        nmse(&reference, &TfMatrix::zeros(4)),
        Err(Error::ZeroReference)
    ));
}

#[test]
fn normalized_nmse_ignores_gain() {
    let reference = random_tf(12, 1);
    let estimate = random_tf(12, 2);
    let base = nmse_normalized(&estimate, &reference).unwrap();
    for c in [1e-6, 0.5, 7.0, 1e5] {
        let a = nmse_normalized(&scaled(&estimate, c), &reference).unwrap();
        let b = nmse_normalized(&estimate, &scaled(&reference, c)).unwrap();
        assert!((a - base).abs() < 1e-9 && (b - base).abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn nmse_is_sign_symmetric(seed in any::<u64>()) {
        let reference = random_tf(8, seed);
        let estimate = random_tf(8, seed ^ 0xABCD);
        let plain = nmse(&estimate, &reference).unwrap();
        let flipped = nmse(&scaled(&estimate, -1.0), &scaled(&reference, -1.0)).unwrap();
        prop_assert!((plain - flipped).abs() < 1e-12);
        let norm_plain = nmse_normalized(&estimate, &reference).unwrap();
        let norm_flipped = nmse_normalized(&scaled(&estimate, -1.0), &scaled(&reference, -1.0)).unwrap();
        prop_assert!((norm_plain - norm_flipped).abs() < 1e-12);
    }

    #[test]
    fn rendering_ignores_positive_gain_and_sign(seed in any::<u64>(), c in 1e-3f64..1e3) {
        let w = random_tf(16, seed);
        let img = render_gray(&w, 20.0).unwrap();
        prop_assert_eq!(&img, &render_gray(&scaled(&w, c), 20.0).unwrap());
        prop_assert_eq!(&img, &render_gray(&scaled(&w, -1.0), 20.0).unwrap());
        prop_assert!(img.contains(&255));
    }
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

#[test]
fn case1_ideal_image_matches_fixture() {
    let ideal = ideal_tfd(&BenchmarkCase::Case1.spec()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("case1.pgm");
    write_pgm(&ideal, &out, 20.0).unwrap();
    let bytes = std::fs::read(&out).unwrap();
    let path = fixture("case1_ideal.pgm");
    if std::env::var_os("TFRECON_BLESS").is_some() {
        std::fs::write(&path, &bytes).unwrap();
    }
    let expected = std::fs::read(&path).expect("fixture missing; rerun with TFRECON_BLESS=1");
    assert_eq!(bytes.len(), 15 + 128 * 128);
    assert!(bytes.starts_with(b"P5\n128 128\n255\n"));
    assert!(
        bytes == expected,
        "rendered image differs from the stored fixture"
    );
}

#[test]
fn render_rejects_bad_range() {
    let w = random_tf(4, 0);
    assert!(render_gray(&w, 0.0).is_err());
    assert!(render_gray(&w, f64::NAN).is_err());
}

fn small_spec(cases: Vec<CaseSpec>, methods: Vec<Method>) -> ExperimentSpec {
    ExperimentSpec {
        cases,
        snr_grid: vec![10.0, 30.0],
        runs: 3,
        methods,
        seed: 11,
        weights: None,
    }
}

#[test]
fn csv_layout() {
    let spec = small_spec(
        vec![CaseSpec::Benchmark(1), CaseSpec::Benchmark(4)],
        vec![Method::Wvd, Method::Ista],
    );
    let csv = run_experiment_csv(&spec, None).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 1 + 2 * 2 * 2);
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 6, "{line}");
        assert!(["1", "4"].contains(&fields[0]));
        assert!(["10", "30"].contains(&fields[1]));
        assert!(["wvd", "ista"].contains(&fields[2]));
        let mean: f64 = fields[3].parse().unwrap();
        let std: f64 = fields[4].parse().unwrap();
        assert!(mean.is_finite() && std >= 0.0);
        assert_eq!(fields[3].split('.').nth(1).unwrap().len(), 4);
        assert_eq!(fields[5], "3");
    }
}

#[test]
fn sweep_is_deterministic_and_grid_independent() {
    let both = small_spec(
        vec![CaseSpec::Benchmark(2), CaseSpec::Benchmark(5)],
        vec![Method::Wvd],
    );
    let a = run_experiment_csv(&both, None).unwrap();
    assert_eq!(a, run_experiment_csv(&both, None).unwrap());
    // case 5 alone reproduces its rows from the larger sweep
    let alone = run_experiment_csv(
        &small_spec(vec![CaseSpec::Benchmark(5)], vec![Method::Wvd]),
        None,
    )
    .unwrap();
    for line in alone.lines().skip(1) {
        assert!(a.lines().any(|l| l == line), "{line}");
    }
    let mut other = both.clone();
    other.seed = 12;
    assert_ne!(a, run_experiment_csv(&other, None).unwrap());
}

#[test]
fn single_case_spec_file() {
    let spec: ExperimentSpec = serde_json::from_str(
        r#"{"case": 1, "snr_grid": [45], "runs": 3, "methods": ["wvd"], "seed": 7}"#,
    )
    .unwrap();
    let rows = run_experiment(&spec, None).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(
        (rows[0].case.as_str(), rows[0].snr_db, rows[0].runs),
        ("1", 45.0, 3)
    );
    // WVD of a two-chirp mixture is dominated by cross-terms; it never looks like the ideal
    assert!(rows[0].mean_nmse_db > -3.0);
}

#[test]
fn custom_mixtures_are_accepted() {
    let mut spec = small_spec(
        vec![CaseSpec::Custom(BenchmarkCase::Case4.spec())],
        vec![Method::Wvd],
    );
    spec.snr_grid = vec![20.0];
    let rows = run_experiment(&spec, None).unwrap();
    assert_eq!(rows[0].case, "custom0");
    assert!(matches!(
        run_experiment(
            &small_spec(vec![CaseSpec::Benchmark(9)], vec![Method::Wvd]),
            None
        ),
        Err(Error::Experiment(_))
    ));
}

#[test]
fn uista_runs_from_a_weight_file() {
    let spec = small_spec(vec![CaseSpec::Benchmark(1)], vec![Method::Uista]);
    assert!(matches!(
        run_experiment(&spec, None),
        Err(Error::Experiment(_))
    ));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.uwb");
    WeightBundle::seeded(UNetArch::default(), 2, 128, 3)
        .with_mask(MaskSpec::WIDE)
        .save(&path)
        .unwrap();
    let rows = run_experiment(&spec, Some(&path)).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows
        .iter()
        .all(|r| r.method == Method::Uista && r.mean_nmse_db.is_finite()));
    let mut from_spec = spec.clone();
    from_spec.weights = Some(path);
    assert_eq!(run_experiment(&from_spec, None).unwrap(), rows);
}
