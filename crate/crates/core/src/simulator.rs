//! Trajectories of the memory jump process and reproducible ensembles.
//!
//! Jump times form a Poisson process of intensity `λ(t)`, produced by
//! thinning against a per-unit-window envelope. At a jump time `T` a mark
//! `(Θ, Z)` is drawn from `α(T,·)Q / λ(T)` and the new state is
//! `X(T⁻ + Θ) + Z`: the path is read `|Θ|` time units in the past.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rate_policy::RatePolicy;
use crate::strip_measure::{JumpMarginal, StripMeasure, TiltStats};

/// Default number of independent cells for [`HistoryMode::Independent`].
pub const DEFAULT_HISTORY_CELLS: usize = 100;

/// Joint law of the initial path `U(θ)`, `θ ∈ [−1, 0]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryMode {
    /// One draw from the initial law held constant on `[−1, 0]`.
    Constant,
    /// Independent draws on `cells` equal sub-intervals of `[−1, 0]`.
    Independent { cells: usize },
}

#[derive(Debug, Clone)]
pub struct InitialCondition {
    pub law: JumpMarginal,
    pub mode: HistoryMode,
}

impl InitialCondition {
    pub fn constant(law: JumpMarginal) -> Self {
        InitialCondition {
            law,
            mode: HistoryMode::Constant,
        }
    }

    pub fn origin(dim: usize) -> Self {
        Self::constant(JumpMarginal::point(vec![0.0; dim]).expect("finite point"))
    }

    pub fn dim(&self) -> usize {
        self.law.dim()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> InitialPath {
        let dim = self.dim();
        match self.mode {
            HistoryMode::Constant => {
                let mut v = vec![0.0; dim];
                self.law.sample_into(rng, &mut v);
                InitialPath::Constant(v)
            }
            HistoryMode::Independent { cells } => {
                let cells = cells.max(1);
                let mut v = vec![0.0; cells * dim];
                for chunk in v.chunks_mut(dim) {
                    self.law.sample_into(rng, chunk);
                }
                InitialPath::Cells { cells, values: v }
            }
        }
    }
}

/// Realised initial path `U`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialPath {
    Constant(Vec<f64>),
    /// Cell `k` covers `[−1 + k/cells, −1 + (k+1)/cells)`; the last cell is closed.
    Cells { cells: usize, values: Vec<f64> },
}

impl InitialPath {
    pub fn eval(&self, theta: f64, dim: usize) -> &[f64] {
        match self {
            InitialPath::Constant(v) => v,
            InitialPath::Cells { cells, values } => {
                let k = (((theta + 1.0) * *cells as f64).floor().max(0.0) as usize).min(cells - 1);
                &values[k * dim..(k + 1) * dim]
            }
        }
    }
}

/// Piecewise-constant càdlàg path on `[−1, horizon]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    horizon: f64,
    initial: InitialPath,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl Trajectory {
    pub fn new(dim: usize, horizon: f64, initial: InitialPath) -> Self {
        Trajectory {
            dim,
            horizon,
            initial,
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Appends a jump; times must be strictly increasing and within the horizon.
    pub fn push(&mut self, t: f64, value: &[f64]) -> Result<()> {
        if self.times.last().is_some_and(|&last| t <= last) || !(0.0..=self.horizon).contains(&t) {
            return Err(Error::Numerical(format!("jump time {t} out of order")));
        }
        self.times.push(t);
        self.values.extend_from_slice(value);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn initial(&self) -> &InitialPath {
        &self.initial
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.times
    }

    pub fn jump_count(&self) -> usize {
        self.times.len()
    }

    pub fn jump_value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    fn check(&self, t: f64) -> Result<()> {
        if !(-1.0..=self.horizon).contains(&t) {
            return Err(Error::OutOfRange {
                what: "t",
                value: t,
                lo: -1.0,
                hi: self.horizon,
            });
        }
        Ok(())
    }

    fn at_index(&self, idx: usize, t: f64) -> &[f64] {
        if idx == 0 {
            self.initial.eval(t.min(0.0), self.dim)
        } else {
            self.jump_value(idx - 1)
        }
    }

    /// `X(t)`: the last jump with `T ≤ t`, or `U` before the first jump.
    pub fn evaluate(&self, t: f64) -> Result<&[f64]> {
        self.check(t)?;
        Ok(self.at_index(self.times.partition_point(|&s| s <= t), t))
    }

    /// `X(t⁻)`: the last jump with `T < t`.
    pub fn left_limit(&self, t: f64) -> Result<&[f64]> {
        self.check(t)?;
        Ok(self.at_index(self.times.partition_point(|&s| s < t), t))
    }
}

/// Jump-time generator used by [`simulate_with`].
trait TimeSource {
    fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<f64>>;
}

struct Thinning<'a> {
    q: &'a StripMeasure,
    policy: &'a RatePolicy,
    horizon: f64,
    t: f64,
    window_end: f64,
    bound: f64,
}

impl<'a> Thinning<'a> {
    fn new(q: &'a StripMeasure, policy: &'a RatePolicy, horizon: f64) -> Self {
        let window_end = horizon.min(1.0);
        Thinning {
            q,
            policy,
            horizon,
            t: 0.0,
            window_end,
            bound: policy.envelope(q, 0.0, window_end),
        }
    }
}

impl TimeSource for Thinning<'_> {
    fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<f64>> {
        loop {
            let e: f64 = rng.sample(Exp1);
            let candidate = self.t + e / self.bound;
            if candidate > self.window_end {
                if self.window_end >= self.horizon {
                    return Ok(None);
                }
                self.t = self.window_end;
                self.window_end = (self.t + 1.0).min(self.horizon);
                self.bound = self.policy.envelope(self.q, self.t, self.window_end);
                continue;
            }
            self.t = candidate;
            let lambda = self.policy.lambda_fast(self.q, candidate);
            if lambda > self.bound {
                return Err(Error::EnvelopeViolation {
                    t: candidate,
                    rate: lambda,
                    bound: self.bound,
                });
            }
            if lambda >= self.bound || rng.random::<f64>() * self.bound < lambda {
                return Ok(Some(candidate));
            }
        }
    }
}

struct Given(std::vec::IntoIter<f64>);

impl TimeSource for Given {
    fn next<R: Rng + ?Sized>(&mut self, _: &mut R) -> Result<Option<f64>> {
        Ok(self.0.next())
    }
}

fn simulate_with<R: Rng + ?Sized>(
    q: &StripMeasure,
    policy: &RatePolicy,
    init: &InitialCondition,
    horizon: f64,
    times: &mut impl TimeSource,
    rng: &mut R,
) -> Result<Trajectory> {
    let dim = q.dim();
    if init.dim() != dim {
        return Err(Error::Config(format!(
            "initial law has dimension {}, measure has {dim}",
            init.dim()
        )));
    }
    let mut traj = Trajectory::new(dim, horizon, init.sample(rng));
    let mut z = vec![0.0; dim];
    let mut next = vec![0.0; dim];
    let mut stats = TiltStats::default();
    while let Some(t) = times.next(rng)? {
        let theta = q.sample_tilted_into(|s| policy.evaluate(t, s), policy.sup_theta(t, q), rng, &mut z, &mut stats)?;
        let lookup = t + theta;
        assert!(
            (t - 1.0..=t).contains(&lookup),
            "memory lookup {lookup} outside [{}, {t}]",
            t - 1.0
        );
        let base = if theta == 0.0 {
            traj.left_limit(t)?
        } else {
            traj.evaluate(lookup)?
        };
        for ((n, b), dz) in next.iter_mut().zip(base).zip(&z) {
            *n = b + dz;
        }
        traj.push(t, &next)?;
    }
    Ok(traj)
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!("horizon must be non-negative, got {horizon}")));
    }
    Ok(())
}

/// Simulates one trajectory on `[0, horizon]` by thinning.
pub fn simulate<R: Rng + ?Sized>(
    q: &StripMeasure,
    policy: &RatePolicy,
    init: &InitialCondition,
    horizon: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    check_horizon(horizon)?;
    let mut source = Thinning::new(q, policy, horizon);
    simulate_with(q, policy, init, horizon, &mut source, rng)
}

/// Jump times of the hyperbolic family from `Λ((0,t]) = log(y(t)/y(0))`,
/// solving `y(T_{n+1}) = y(T_n) e^{E}` on the dense solution.
pub fn inversion_times_hyperbolic<R: Rng + ?Sized>(policy: &RatePolicy, horizon: f64, rng: &mut R) -> Result<Vec<f64>> {
    let RatePolicy::Hyperbolic(h) = policy else {
        return Err(Error::Config("inversion sampler requires a hyperbolic rate".into()));
    };
    check_horizon(horizon)?;
    let y = h.solution();
    if horizon > y.horizon() {
        return Err(Error::OutOfRange {
            what: "horizon",
            value: horizon,
            lo: 0.0,
            hi: y.horizon(),
        });
    }
    let mut times = Vec::new();
    let mut t = 0.0;
    loop {
        let e: f64 = rng.sample(Exp1);
        let target = y.eval(t) * e.exp();
        match y.invert(target, t) {
            Some(next) if next <= horizon => {
                // a draw that does not move time (e ≈ 0) is pushed forward minimally
                t = if next > t { next } else { f64::from_bits(t.to_bits() + 1) };
                times.push(t);
            }
            _ => return Ok(times),
        }
    }
}

/// Hyperbolic trajectory whose jump times come from the inversion sampler.
pub fn simulate_inversion<R: Rng + ?Sized>(
    q: &StripMeasure,
    policy: &RatePolicy,
    init: &InitialCondition,
    horizon: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    let times = inversion_times_hyperbolic(policy, horizon, rng)?;
    simulate_with(q, policy, init, horizon, &mut Given(times.into_iter()), rng)
}

/// Which jump-time generator an ensemble uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampler {
    #[default]
    Thinning,
    Inversion,
}

/// Terminal values of `n` trajectories at each probe time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub probes: Vec<f64>,
    pub dim: usize,
    pub n: usize,
    pub seed: u64,
    /// Row-major `[trajectory][probe][coordinate]`.
    pub values: Vec<f64>,
    /// Number of jumps on `[0, max probe]` per trajectory.
    pub jump_counts: Vec<u64>,
}

impl EnsembleResult {
    pub fn value(&self, traj: usize, probe: usize) -> &[f64] {
        let k = (traj * self.probes.len() + probe) * self.dim;
        &self.values[k..k + self.dim]
    }

    /// All trajectories' values at probe `p`, row-major `n × dim`.
    pub fn at_probe(&self, p: usize) -> Vec<f64> {
        (0..self.n).flat_map(|i| self.value(i, p).iter().copied()).collect()
    }

    /// Coordinate `d` of every trajectory at probe `p`.
    pub fn coordinate(&self, p: usize, d: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.value(i, p)[d]).collect()
    }
}

/// Random stream of trajectory `index` under `master_seed`.
pub fn substream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

pub struct EnsembleSpec<'a> {
    pub q: &'a StripMeasure,
    pub policy: &'a RatePolicy,
    pub init: &'a InitialCondition,
    pub probes: &'a [f64],
    pub n: usize,
    pub seed: u64,
    pub workers: usize,
    pub sampler: Sampler,
}

/// Runs `n` independent trajectories; trajectory `i` draws from
/// [`substream`]`(seed, i)`, so the result does not depend on `workers`.
pub fn simulate_ensemble(spec: &EnsembleSpec<'_>) -> Result<EnsembleResult> {
    if spec.n == 0 {
        return Err(Error::Config("ensemble size must be at least 1".into()));
    }
    if spec.probes.is_empty() || spec.probes.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::Config("probe times must be non-negative and non-empty".into()));
    }
    let horizon = spec.probes.iter().copied().fold(0.0, f64::max);
    let dim = spec.q.dim();
    let run = |i: usize| -> Result<(Vec<f64>, u64)> {
        let mut rng = substream(spec.seed, i as u64);
        let traj = match spec.sampler {
            Sampler::Thinning => simulate(spec.q, spec.policy, spec.init, horizon, &mut rng)?,
            Sampler::Inversion => simulate_inversion(spec.q, spec.policy, spec.init, horizon, &mut rng)?,
        };
        let mut out = Vec::with_capacity(spec.probes.len() * dim);
        for &p in spec.probes {
            out.extend_from_slice(traj.evaluate(p)?);
        }
        Ok((out, traj.jump_count() as u64))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let rows: Vec<Result<(Vec<f64>, u64)>> = pool.install(|| (0..spec.n).into_par_iter().map(run).collect());
    let mut values = Vec::with_capacity(spec.n * spec.probes.len() * dim);
    let mut jump_counts = Vec::with_capacity(spec.n);
    for row in rows {
        let (v, c) = row?;
        values.extend(v);
        jump_counts.push(c);
    }
    Ok(EnsembleResult {
        probes: spec.probes.to_vec(),
        dim,
        n: spec.n,
        seed: spec.seed,
        values,
        jump_counts,
    })
}
