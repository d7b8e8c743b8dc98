//! Population workloads. Run once with default features and once with
//! `--no-default-features`; the benchmark ids are shared, so criterion's
//! change report for the second run is the parallel/sequential comparison.

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use compresslens::data_model::{AuditConfig, CompressionSpec, PredictionLog};
use compresslens::par::{IntoParallelIterator, ParallelIterator};
use compresslens::pie_audit::identify_pies;
use compresslens::stats_audit::{audit_classes, welch_t_test};
use compresslens::synth::{synthesize, SynthLongTailSpec};
use compresslens::trainer::{train_population, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn mode() -> &'static str {
    if compresslens::par::is_parallel() {
        "parallel"
    } else {
        "sequential"
    }
}

/// `models` noisy copies of the ground truth as rank-1 predictions.
fn random_log(
    seed: u64,
    classes: usize,
    examples: usize,
    models: usize,
    accuracy: f64,
) -> PredictionLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth: Vec<usize> = (0..examples).map(|_| rng.gen_range(0..classes)).collect();
    let rankings = (0..models)
        .map(|_| {
            truth
                .iter()
                .map(|&y| {
                    vec![if rng.gen_bool(accuracy) {
                        y
                    } else {
                        rng.gen_range(0..classes)
                    }]
                })
                .collect()
        })
        .collect();
    let ids = (0..examples as u64).collect();
    PredictionLog::new(
        "bench",
        CompressionSpec::NONE,
        classes,
        ids,
        truth,
        rankings,
    )
    .expect("valid log")
}

fn train(c: &mut Criterion) {
    let spec = SynthLongTailSpec {
        train_size: 1000,
        test_size: 400,
        ..SynthLongTailSpec::default()
    };
    let (train, test) = synthesize(&spec).expect("synthetic split");
    let config = TrainConfig {
        steps: 200,
        population_size: 8,
        hidden_layers: vec![64],
        lr_decay_steps: None,
        ..TrainConfig::default()
    };
    let mut group = c.benchmark_group("train_population");
    group.sample_size(10);
    group.bench_function("8_models_200_steps", |b| {
        b.iter(|| {
            train_population(&train, &test, &config, CompressionSpec::NONE, None).expect("trains")
        })
    });
    group.finish();
    eprintln!("train_population ran in {} mode", mode());
}

fn audits(c: &mut Criterion) {
    let base = random_log(1, 100, 20_000, 30, 0.8);
    let comp = random_log(1, 100, 20_000, 30, 0.75);
    let config = AuditConfig::default();
    c.bench_function("audit_classes/100_classes_30_models", |b| {
        b.iter(|| audit_classes(black_box(&base), black_box(&comp), &config).expect("audits"))
    });
    c.bench_function("identify_pies/20000_examples_30_models", |b| {
        b.iter(|| identify_pies(black_box(&base), black_box(&comp)).expect("same examples"))
    });
}

fn h0(c: &mut Criterion) {
    c.bench_function("h0_monte_carlo/2000_classes", |b| {
        b.iter(|| {
            (0..2000u64)
                .into_par_iter()
                .filter(|&class| {
                    let mut rng = ChaCha8Rng::seed_from_u64(class);
                    let normal = Normal::new(0.0, 0.03).expect("valid normal");
                    let a: Vec<f64> = (0..30).map(|_| normal.sample(&mut rng)).collect();
                    let b: Vec<f64> = (0..30).map(|_| normal.sample(&mut rng)).collect();
                    welch_t_test(&a, &b).expect("valid samples").p_value <= 0.05
                })
                .count()
        })
    });
}

criterion_group!(benches, train, audits, h0);
criterion_main!(benches);
