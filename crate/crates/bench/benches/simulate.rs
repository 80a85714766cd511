use criterion::{criterion_group, criterion_main, Criterion};
use nldelay::simulator::simulate_ensemble;
use nldelay::EnsembleSpec;
use nldelay_bench::bundled;

fn ensembles(c: &mut Criterion) {
    let mut g = c.benchmark_group("ensemble");
    g.sample_size(10);
    for name in ["delayed-poisson", "fig1", "fig2"] {
        let (s, m) = bundled(name);
        g.bench_function(name, |b| {
            b.iter(|| {
                simulate_ensemble(&EnsembleSpec {
                    q: &m.measure,
                    policy: &m.policy,
                    init: &m.initial,
                    probes: &[100.0],
                    n: 200,
                    seed: 1,
                    workers: 1,
                    sampler: s.sampler(),
                })
                .unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, ensembles);
criterion_main!(benches);
