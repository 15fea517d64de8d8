use criterion::{criterion_group, criterion_main, Criterion};

use beepmis::experiment::{run_trials, run_trials_sequential, RunConfig};

fn config() -> RunConfig {
    RunConfig::from_json(
        r#"{
            "graph": {"kind": "erdos_renyi", "n": 60, "p": 0.1, "seed": 1},
            "resample_graph": true,
            "protocol": "beep",
            "params": {"eps": 0.2},
            "interval": 60,
            "trials": 32,
            "seed": 7
        }"#,
    )
    .expect("bench config")
}

fn batches(c: &mut Criterion) {
    let cfg = config();
    let mut group = c.benchmark_group("beep_batch_32x60");
    group.sample_size(10);
    group.bench_function("sequential", |b| b.iter(|| run_trials_sequential(&cfg)));
    // Without the `parallel` feature this measures the same path twice.
    group.bench_function("default", |b| b.iter(|| run_trials(&cfg)));
    group.finish();
}

criterion_group!(benches, batches);
criterion_main!(benches);
