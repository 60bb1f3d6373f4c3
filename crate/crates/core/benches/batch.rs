//! Seed batches through `run_batch` against a plain sequential loop.
//!
//! `run_batch` is data-parallel with the default `parallel` feature and falls
//! back to a sequential loop under `--no-default-features`; the `sequential`
//! arm is the same work without the shim either way.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use distobs::certify;
use distobs::simkit::{self, GainTable, Prepared};
use distobs::sysdecomp;

fn prepared(areas: usize) -> Prepared {
    let mut s = simkit::power_scenario(areas).unwrap();
    s.gains.table = GainTable::Uniform(10.0);
    s.horizon = 4.0;
    Prepared::new(s).unwrap()
}

fn batch(c: &mut Criterion) {
    let mode = if distobs::par::is_parallel() {
        "rayon"
    } else {
        "fallback"
    };
    let mut group = c.benchmark_group("power4_batch");
    group.sample_size(10);
    let p = prepared(4);
    for seeds in [4u64, 16] {
        let ids: Vec<u64> = (0..seeds).collect();
        group.bench_with_input(BenchmarkId::new(format!("run_batch_{mode}"), seeds), &ids, |b, ids| {
            b.iter(|| simkit::run_batch(&p, ids))
        });
        group.bench_with_input(BenchmarkId::new("sequential", seeds), &ids, |b, ids| {
            b.iter(|| ids.iter().map(|&s| p.run(s)).collect::<Vec<_>>())
        });
    }
    group.finish();
}

fn certify_power8(c: &mut Criterion) {
    let s = simkit::power_scenario(8).unwrap();
    let dec = sysdecomp::decompose(&s.plant).unwrap();
    let gains = sysdecomp::design_gains(&dec, None).unwrap();
    let mut group = c.benchmark_group("certify");
    group.sample_size(10);
    group.bench_function("suggest_gains_power8", |b| {
        b.iter(|| certify::suggest_gains(&dec, &gains, &s.schedule, 1.0).unwrap())
    });
    group.finish();
}

criterion_group!(benches, batch, certify_power8);
criterion_main!(benches);
