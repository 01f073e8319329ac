use std::hint::black_box;
use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use vgrow::inject::{grow_design, InjectionConfig};
use vgrow::par::{map_range, Exec};
use vgrow::pipeline::{generate_valid, GenOptions};
use vgrow::trainer::{gate_probability, load_corpus, train, SourceFile};

fn corpus() -> Vec<SourceFile> {
    load_corpus(&Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus")).expect("corpus")
}

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn training(c: &mut Criterion) {
    let files = corpus();
    let mut g = c.benchmark_group("train");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, 3), |b| b.iter(|| train(black_box(&files), 3, true, exec).unwrap()));
    }
    g.finish();
}

fn generation(c: &mut Criterion) {
    let (table, _) = train(&corpus(), 1, true, Exec::Sequential).unwrap();
    let mut g = c.benchmark_group("generate_100");
    g.sample_size(20);
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| map_range(exec, 100, |i| generate_valid(&table, i as u64, GenOptions::default()).is_ok()))
        });
    }
    g.finish();
}

fn growth(c: &mut Criterion) {
    let (table, _) = train(&corpus(), 6, true, Exec::Sequential).unwrap();
    let cfg = InjectionConfig { gate_probability: gate_probability(&table), ..InjectionConfig::default() };
    let mut g = c.benchmark_group("grow_100_t150");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| map_range(exec, 100, |i| grow_design(&table, i as u64, &cfg).is_ok())));
    }
    g.finish();
}

criterion_group!(benches, training, generation, growth);
criterion_main!(benches);
