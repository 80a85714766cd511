//! Checks that tie the simulator to the lattice oracle and the asymptotics.

use nldelay::asymptotics::RecentringPath;
use nldelay::lattice::{solve_lattice, LatticeLaw};
use nldelay::rate_policy::BaseRate;
use nldelay::simulator::{simulate, simulate_ensemble, substream, HistoryMode};
use nldelay::strip_measure::{Atom, JumpAtom, LinearCoupling};
use nldelay::verify::{self, GofTolerances, Recentring};
use nldelay::{
    stats, AsymptoticConstants, EnsembleResult, EnsembleSpec, History, InitialCondition, JumpMarginal, RatePolicy,
    Sampler, StripMeasure, ThetaMeasure,
};
use statrs::distribution::{Discrete, Poisson};

fn ensemble(q: &StripMeasure, p: &RatePolicy, init: &InitialCondition, probes: &[f64], n: usize, seed: u64) -> EnsembleResult {
    simulate_ensemble(&EnsembleSpec {
        q,
        policy: p,
        init,
        probes,
        n,
        seed,
        workers: 4,
        sampler: Sampler::Thinning,
    })
    .unwrap()
}

fn mixed() -> (StripMeasure, RatePolicy) {
    let q = StripMeasure::atomic(
        1,
        vec![
            Atom { weight: 0.5, theta: -1.0, z: vec![1.0] },
            Atom { weight: 0.3, theta: -0.25, z: vec![-2.0] },
            Atom { weight: 0.2, theta: 0.0, z: vec![1.0] },
        ],
    )
    .unwrap();
    let p = RatePolicy::separable(BaseRate::Exponential { scale: 1.0, rate: 0.5 }, 0.5, 1.0).unwrap();
    (q, p)
}

#[test]
fn lattice_moments_match_ensemble() {
    let (q, p) = mixed();
    let init = InitialCondition::origin(1);
    let e = ensemble(&q, &p, &init, &[4.0], 20_000, 21);
    let law = solve_lattice(&q, &p, &LatticeLaw::dirac(vec![0]), 4.0, 1e-2).unwrap().marginal_law(4.0).unwrap();
    let x = e.coordinate(0, 0);
    let se = stats::std_error(&x);
    assert!((stats::mean(&x) - law.mean()[0]).abs() < 3.0 * se);
    // variance standard error from the fourth central moment
    let m = stats::mean(&x);
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / x.len() as f64;
    let var = stats::variance(&x);
    let var_se = ((m4 - var * var) / x.len() as f64).sqrt();
    assert!((var - law.variance()[0]).abs() < 3.0 * var_se);
    assert!(verify::compare_lattice(&x, &law) < 0.02);
}

#[test]
fn classical_poisson_tv_and_counts() {
    let q = StripMeasure::dirac(0.0, vec![1.0]).unwrap();
    let init = InitialCondition::origin(1);
    let e = ensemble(&q, &RatePolicy::ConstantOne, &init, &[3.0], 100_000, 22);
    let law = solve_lattice(&q, &RatePolicy::ConstantOne, &LatticeLaw::dirac(vec![0]), 3.0, 5e-3)
        .unwrap()
        .marginal_law(3.0)
        .unwrap();
    assert!(verify::compare_lattice(&e.at_probe(0), &law) <= 0.02);

    let pois = Poisson::new(3.0).unwrap();
    let mut counts = vec![0u64; 30];
    for &c in &e.jump_counts[..10_000] {
        counts[(c as usize).min(29)] += 1;
    }
    let probs: Vec<f64> = (0..30).map(|k| pois.pmf(k)).collect();
    let (_, _, pval) = stats::chi2_gof(&counts, &probs);
    assert!(pval > 0.01, "p = {pval}");
}

#[test]
fn delayed_counts_are_poisson() {
    // jump times do not depend on the path for constant rates
    let q = StripMeasure::dirac(-0.5, vec![1.0]).unwrap();
    let e = ensemble(&q, &RatePolicy::ConstantOne, &InitialCondition::origin(1), &[5.0], 10_000, 23);
    let pois = Poisson::new(5.0).unwrap();
    let mut counts = vec![0u64; 40];
    for &c in &e.jump_counts {
        counts[(c as usize).min(39)] += 1;
    }
    let probs: Vec<f64> = (0..40).map(|k| pois.pmf(k)).collect();
    assert!(stats::chi2_gof(&counts, &probs).2 > 0.01);
}

#[test]
fn independent_history_keeps_marginals() {
    let q = StripMeasure::dirac(-1.0, vec![1.0]).unwrap();
    let law = JumpMarginal::atomic(vec![JumpAtom { weight: 0.5, z: vec![0.0] }, JumpAtom { weight: 0.5, z: vec![3.0] }]).unwrap();
    let init = InitialCondition { law, mode: HistoryMode::Independent { cells: 50 } };
    let e = ensemble(&q, &RatePolicy::ConstantOne, &init, &[2.5], 20_000, 24);
    let lat = solve_lattice(
        &q,
        &RatePolicy::ConstantOne,
        &LatticeLaw::from_points(1, [(vec![0], 0.5), (vec![3], 0.5)]).unwrap(),
        2.5,
        1e-2,
    )
    .unwrap()
    .marginal_law(2.5)
    .unwrap();
    let x = e.coordinate(0, 0);
    assert!((stats::mean(&x) - lat.mean()[0]).abs() < 3.0 * stats::std_error(&x));
    assert!(verify::compare_lattice(&x, &lat) < 0.03);
}

#[test]
fn lln_examples() {
    let classical = StripMeasure::dirac(0.0, vec![1.0]).unwrap();
    let init = InitialCondition::origin(1);
    let tr = simulate(&classical, &RatePolicy::ConstantOne, &init, 1e4, &mut substream(9, 0)).unwrap();
    assert!((tr.evaluate(1e4).unwrap()[0] / 1e4 - 1.0).abs() <= 0.03);

    let delayed = StripMeasure::dirac(-1.0, vec![1.0]).unwrap();
    let e = ensemble(&delayed, &RatePolicy::ConstantOne, &init, &[100.0, 400.0, 1600.0], 400, 25);
    let report = verify::check_lln(&e, &[0.5], &[0.125]);
    assert!(report.pass, "{report:?}");
    let mean = stats::mean(&e.coordinate(2, 0)) / 1600.0;
    assert!((mean - 0.5).abs() < 0.005);
}

#[test]
fn path_recentring_is_a_common_shift() {
    let eta = ThetaMeasure::dirac(-1.0).unwrap();
    let q = StripMeasure::coupled(eta.clone(), LinearCoupling { offset: vec![0.0], slope: vec![1.0] }).unwrap();
    let p = RatePolicy::hyperbolic(1.01, 1.0, eta, History::Constant(1.0), 400.0, 1e-3).unwrap();
    let init = InitialCondition::constant(JumpMarginal::uniform_box(vec![0.0], vec![1.0]).unwrap());
    let k = AsymptoticConstants::compute(&q, &p).unwrap();
    let path = RecentringPath::compute(&q, &p, k.delay_weight, 400.0, None).unwrap();
    let e = ensemble(&q, &p, &init, &[400.0], 200, 26);
    let x = e.at_probe(0);
    let by_k = verify::rescale(&x, 400.0, &[k.drift[0]]);
    let by_h = verify::recentre_by_path(&x, 400.0, &path).unwrap();
    let shift = (path.eval(400.0).unwrap()[0] + 400.0 * k.drift[0]) / 20.0;
    for (a, b) in by_k.iter().zip(&by_h) {
        assert!((b - a - shift).abs() < 1e-10);
    }
    assert!(shift.abs() < 1.0 / 20.0, "{shift}");
}

#[test]
fn selfsimilar_trend_and_lattice_term() {
    let q = StripMeasure::dirac(-1.0, vec![1.0]).unwrap();
    let k = AsymptoticConstants::compute(&q, &RatePolicy::ConstantOne).unwrap();
    let law = k.limit_law();
    let e = ensemble(&q, &RatePolicy::ConstantOne, &InitialCondition::origin(1), &[100.0, 400.0], 5000, 27);
    let prof = verify::selfsimilar_profile(&e, Recentring::Drift(&[0.5]), &law, &GofTolerances::new(1), Some(1.0)).unwrap();
    assert!(prof.non_increasing, "{:?}", prof.ks);
    assert!(prof.reports.iter().all(|r| r.pass));
    // without the discretisation allowance the lattice bias at t = 100 is visible
    let strict = verify::gof_gaussian(&verify::rescale(&e.at_probe(0), 100.0, &[0.5]), &law, &GofTolerances::new(1)).unwrap();
    assert!(strict.axes[0].ks > strict.axes[0].ks_tolerance);
}
