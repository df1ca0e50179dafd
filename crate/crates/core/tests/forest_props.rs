use ppm_core::forest::{
    self, BatchForest, BatchHyperparameters, BatchOptions, BinnedMatrix, IncHyperparameters,
    IncrementalForest, Matrix, Model,
};
use ppm_core::metrics::auc;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Rows over a small value grid, labelled by a random rule so the data can
/// also be noisy.
fn dataset(max_rows: usize) -> impl Strategy<Value = Matrix> {
    (1usize..6, 2usize..max_rows).prop_flat_map(|(w, n)| {
        (
            prop::collection::vec(prop::collection::vec((0u8..6).prop_map(f64::from), w), n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(|(rows, labels)| Matrix::from_rows(&rows, labels).unwrap())
    })
}

/// Drops rows whose features repeat with a different label.
fn consistent(m: &Matrix) -> Matrix {
    let mut seen: std::collections::HashMap<Vec<u64>, bool> = Default::default();
    let (mut rows, mut labels) = (Vec::new(), Vec::new());
    for (r, &l) in m.rows().zip(m.labels()) {
        let k: Vec<u64> = r.iter().map(|v| v.to_bits()).collect();
        if *seen.entry(k).or_insert(l) == l {
            rows.push(r.to_vec());
            labels.push(l);
        }
    }
    Matrix::from_rows(&rows, labels).unwrap()
}

fn small_batch() -> BatchHyperparameters {
    BatchHyperparameters {
        n_trees: 7,
        max_depth: 6,
        min_samples_leaf: 1,
        max_features_fraction: 0.6,
    }
}

fn small_inc() -> IncHyperparameters {
    IncHyperparameters {
        n_trees: 5,
        grace_period: 10,
        split_confidence: 0.05,
        tie_threshold: 0.1,
        max_features_fraction: 0.7,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn training_is_a_pure_function_of_inputs(m in dataset(120), seed in any::<u64>()) {
        let a = forest::train_batch(&m, &small_batch(), seed).unwrap();
        let b = forest::train_batch(&m, &small_batch(), seed).unwrap();
        prop_assert_eq!(&a, &b);
        let c = forest::train_incremental_initial(&m, &small_inc(), seed).unwrap();
        let d = forest::train_incremental_initial(&m, &small_inc(), seed).unwrap();
        prop_assert_eq!(&c, &d);
    }

    #[test]
    fn probabilities_are_in_unit_interval(m in dataset(120), seed in any::<u64>()) {
        for model in [
            forest::train_batch(&m, &small_batch(), seed).unwrap(),
            forest::train_incremental_initial(&m, &small_inc(), seed).unwrap(),
        ] {
            for p in model.predict_matrix(&m).unwrap() {
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }
    }

    #[test]
    fn plain_cart_fits_consistent_data_exactly(m in dataset(150)) {
        let m = consistent(&m);
        let hp = BatchHyperparameters {
            n_trees: 1,
            max_depth: 10_000,
            min_samples_leaf: 1,
            max_features_fraction: 1.0,
        };
        let opts = BatchOptions { bootstrap: false, ..Default::default() };
        let f = BatchForest::fit_binned(&BinnedMatrix::new(&m), &hp, 0, opts).unwrap();
        for (r, &l) in m.rows().zip(m.labels()) {
            prop_assert_eq!(f.predict_proba(r).unwrap() > 0.5, l);
        }
    }

    #[test]
    fn incremental_update_is_associative(m in dataset(200), cut in 0.0f64..1.0, seed in any::<u64>()) {
        let k = ((m.n_rows() as f64) * cut) as usize;
        let base = IncrementalForest::init(m.width(), &small_inc(), seed).unwrap();
        let mut split = base.clone();
        split.update(&m.slice(0..k)).unwrap();
        split.update(&m.slice(k..m.n_rows())).unwrap();
        let mut whole = base;
        whole.update(&m).unwrap();
        for r in m.rows() {
            prop_assert_eq!(split.predict_proba(r).unwrap(), whole.predict_proba(r).unwrap());
        }
    }
}

/// Ten features; the label depends on `x0` and flips sign after the drift.
fn flip_data(n: usize, flipped: bool, rng: &mut ChaCha8Rng) -> Matrix {
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..10).map(|_| rng.random::<f64>()).collect();
        labels.push((row[0] > 0.5) != flipped);
        rows.push(row);
    }
    Matrix::from_rows(&rows, labels).unwrap()
}

#[test]
fn concept_flip_is_followed_by_updates_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let before = flip_data(5_000, false, &mut rng);
    let after = flip_data(10_000, true, &mut rng);
    let test = flip_data(2_000, true, &mut rng);
    let hp = IncHyperparameters::default();
    let frozen = forest::train_incremental_initial(&before, &hp, 1).unwrap();
    let updated = forest::update(frozen.clone(), &after).unwrap();
    let batch = forest::train_batch(&before, &BatchHyperparameters::default(), 1).unwrap();
    let score = |m: &Model| auc(&m.predict_matrix(&test).unwrap(), test.labels()).unwrap();
    let (f, u, b) = (score(&frozen), score(&updated), score(&batch));
    assert!(u >= 0.9, "updated {u}");
    assert!(f <= 0.6, "frozen {f}");
    assert!(b <= 0.6, "frozen batch {b}");
}
