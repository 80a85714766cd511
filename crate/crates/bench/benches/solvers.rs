use criterion::{criterion_group, criterion_main, Criterion};
use nldelay::dde::solve;
use nldelay::lattice::solve_lattice;
use nldelay::{AsymptoticConstants, History, RatePolicy};
use nldelay_bench::bundled;

fn solvers(c: &mut Criterion) {
    let (_, fig1) = bundled("fig1");
    let RatePolicy::Hyperbolic(h) = &fig1.policy else { unreachable!() };
    c.bench_function("dde/fig1_T100", |b| b.iter(|| solve(h.kernel(), History::Constant(1.0), 100.0, 1e-3).unwrap()));

    let (_, dp) = bundled("delayed-poisson");
    let init = dp.lattice_initial.clone().unwrap();
    c.bench_function("lattice/delayed_poisson_T20", |b| {
        b.iter(|| solve_lattice(&dp.measure, &dp.policy, &init, 20.0, 1e-2).unwrap())
    });

    let (_, fig2) = bundled("fig2");
    c.bench_function("constants/fig2", |b| b.iter(|| AsymptoticConstants::compute(&fig2.measure, &fig2.policy).unwrap()));
}

criterion_group!(benches, solvers);
criterion_main!(benches);
