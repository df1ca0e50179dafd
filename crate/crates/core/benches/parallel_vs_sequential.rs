use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ppm_core::forest::{
    BatchForest, BatchHyperparameters, BatchOptions, BinnedMatrix, IncHyperparameters,
    IncrementalForest, Matrix, Model,
};
use ppm_core::par::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn data(n: usize, width: usize) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..width)
                .map(|_| f64::from(rng.random_range(0u8..4)))
                .collect()
        })
        .collect();
    let labels = rows.iter().map(|r| r[0] + r[1] > 3.0).collect();
    Matrix::from_rows(&rows, labels).unwrap()
}

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn batch_fit(c: &mut Criterion) {
    let binned = BinnedMatrix::new(&data(5_000, 60));
    let hp = BatchHyperparameters {
        n_trees: 32,
        max_depth: 12,
        ..Default::default()
    };
    let mut g = c.benchmark_group("batch_fit");
    g.sample_size(10);
    for (name, execution) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let opts = BatchOptions {
                    execution,
                    ..Default::default()
                };
                black_box(BatchForest::fit_binned(&binned, &hp, 7, opts).unwrap())
            })
        });
    }
    g.finish();
}

fn incremental_update(c: &mut Criterion) {
    let d = data(5_000, 60);
    let hp = IncHyperparameters::default();
    let mut g = c.benchmark_group("incremental_update");
    g.sample_size(10);
    for (name, execution) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let mut f = IncrementalForest::init(d.width(), &hp, 7).unwrap();
                f.set_execution(execution);
                f.update(&d).unwrap();
                black_box(f)
            })
        });
    }
    g.finish();
}

fn predict(c: &mut Criterion) {
    let d = data(5_000, 60);
    let model = Model::Batch(BatchForest::fit(&d, &BatchHyperparameters::default(), 7).unwrap());
    let mut g = c.benchmark_group("predict_matrix");
    g.sample_size(10);
    for (name, execution) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(model.predict_matrix_with(execution, &d).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, batch_fit, incremental_update, predict);
criterion_main!(benches);
