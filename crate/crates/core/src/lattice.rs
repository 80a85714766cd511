//! Exact-law oracle for integer-jump scenarios with atomic delays.
//!
//! The probabilities `uᵢ(t) = P(X(t) = i)` solve the delayed master equation
//!
//! ```text
//! duᵢ/dt = Σ_k w_k α(t,θ_k) u_{i−j_k}(t+θ_k) − λ(t) uᵢ(t)
//! ```
//!
//! integrated here with classical RK4 on a grid that contains every delay, so
//! delayed stage values are grid values or cubic-Hermite midpoints of past
//! steps.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::rate_policy::RatePolicy;
use crate::strip_measure::StripMeasure;

pub const DEFAULT_LATTICE_STEP: f64 = 1e-2;
/// Boundary mass that triggers window growth.
pub const BOUNDARY_TOL: f64 = 1e-14;
/// Mass defect that aborts the solve.
pub const MASS_LEAK_TOL: f64 = 1e-8;
/// Upper bound on stored snapshot entries before snapshots are thinned.
const RECORD_BUDGET: usize = 1 << 25;

/// Law on `ℤ^N` as sorted `(point, mass)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeLaw {
    pub dim: usize,
    pub points: Vec<(Vec<i64>, f64)>,
    /// Total mass before normalisation.
    pub normalization: f64,
}

impl LatticeLaw {
    pub fn from_points(dim: usize, points: impl IntoIterator<Item = (Vec<i64>, f64)>) -> Result<Self> {
        let mut map: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
        for (p, w) in points {
            if p.len() != dim {
                return Err(Error::InvalidMeasure(format!("lattice point {p:?} is not {dim}-dimensional")));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidMeasure(format!("invalid lattice mass {w}")));
            }
            *map.entry(p).or_insert(0.0) += w;
        }
        let total: f64 = map.values().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidMeasure("lattice law has no mass".into()));
        }
        Ok(LatticeLaw {
            dim,
            points: map.into_iter().filter(|(_, w)| *w > 0.0).map(|(p, w)| (p, w / total)).collect(),
            normalization: total,
        })
    }

    pub fn dirac(point: Vec<i64>) -> Self {
        LatticeLaw {
            dim: point.len(),
            points: vec![(point, 1.0)],
            normalization: 1.0,
        }
    }

    pub fn prob(&self, point: &[i64]) -> f64 {
        self.points
            .binary_search_by(|(p, _)| p.as_slice().cmp(point))
            .map(|i| self.points[i].1)
            .unwrap_or(0.0)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (p, w) in &self.points {
            for (mi, pi) in m.iter_mut().zip(p) {
                *mi += w * *pi as f64;
            }
        }
        m
    }

    pub fn variance(&self) -> Vec<f64> {
        let m = self.mean();
        let mut v = vec![0.0; self.dim];
        for (p, w) in &self.points {
            for d in 0..self.dim {
                v[d] += w * (p[d] as f64 - m[d]).powi(2);
            }
        }
        v
    }

    pub fn as_map(&self) -> BTreeMap<Vec<i64>, f64> {
        self.points.iter().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Window {
    lower: Vec<i64>,
    shape: Vec<usize>,
}

impl Window {
    fn len(&self) -> usize {
        self.shape.iter().product()
    }

    fn index(&self, p: &[i64]) -> Option<usize> {
        let mut idx = 0;
        for ((x, lo), n) in p.iter().zip(&self.lower).zip(&self.shape) {
            let off = x - lo;
            if off < 0 || off >= *n as i64 {
                return None;
            }
            idx = idx * n + off as usize;
        }
        Some(idx)
    }

    fn point(&self, mut idx: usize) -> Vec<i64> {
        let mut p = vec![0; self.shape.len()];
        for d in (0..self.shape.len()).rev() {
            p[d] = self.lower[d] + (idx % self.shape[d]) as i64;
            idx /= self.shape[d];
        }
        p
    }

    fn on_boundary(&self, idx: usize) -> bool {
        self.point(idx)
            .iter()
            .zip(&self.lower)
            .zip(&self.shape)
            .any(|((x, lo), n)| *n > 1 && (*x == *lo || *x == lo + *n as i64 - 1))
    }

    fn embed(&self, v: &[f64], into: &Window) -> Vec<f64> {
        let mut out = vec![0.0; into.len()];
        for (i, &x) in v.iter().enumerate() {
            if x != 0.0 {
                out[into.index(&self.point(i)).expect("grown window contains old one")] = x;
            }
        }
        out
    }
}

struct Jump {
    weight: f64,
    theta: f64,
    lag: usize,
    shift: Vec<i64>,
    transfers: Vec<(u32, u32)>,
}

fn transfers(window: &Window, shift: &[i64]) -> Vec<(u32, u32)> {
    (0..window.len())
        .filter_map(|src| {
            let p: Vec<i64> = window.point(src).iter().zip(shift).map(|(a, b)| a + b).collect();
            window.index(&p).map(|dst| (src as u32, dst as u32))
        })
        .collect()
}

/// Solved law trajectory on `[0, horizon]`.
#[derive(Debug, Clone)]
pub struct LatticeEvolution {
    dim: usize,
    window: Window,
    step: f64,
    horizon: f64,
    record_every: usize,
    records: Vec<(Vec<f64>, Vec<f64>)>,
    max_mass_defect: f64,
    min_mass: f64,
    growths: usize,
}

fn is_integer_multiple(x: f64, h: f64) -> Option<usize> {
    let r = x / h;
    ((r - r.round()).abs() < 1e-9 * r.abs().max(1.0)).then(|| r.round() as usize)
}

struct Ring {
    u: Vec<Vec<f64>>,
    du: Vec<Vec<f64>>,
}

impl Ring {
    fn slot(&self, n: usize) -> usize {
        n % self.u.len()
    }
}

/// Integrates the master equation of `(q, policy)` from the constant initial
/// law `init` up to `horizon` with step `h`.
pub fn solve_lattice(
    q: &StripMeasure,
    policy: &RatePolicy,
    init: &LatticeLaw,
    horizon: f64,
    h: f64,
) -> Result<LatticeEvolution> {
    let dim = q.dim();
    if init.dim != dim {
        return Err(Error::Config(format!("initial law is {}-dimensional, measure is {dim}", init.dim)));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!("horizon must be non-negative, got {horizon}")));
    }
    let Some(atoms) = q.atoms() else {
        return Err(Error::InvalidMeasure("lattice oracle needs a fully atomic measure".into()));
    };
    let steps_per_unit = (h > 0.0)
        .then(|| is_integer_multiple(1.0, h))
        .flatten()
        .ok_or_else(|| Error::Config(format!("step {h} must divide 1")))?;
    let mut jumps = Vec::with_capacity(atoms.len());
    for a in &atoms {
        if a.z.iter().any(|x| x.fract() != 0.0 || !x.is_finite()) {
            return Err(Error::InvalidMeasure(format!("jump {:?} is not an integer vector", a.z)));
        }
        let lag = is_integer_multiple(-a.theta, h)
            .ok_or_else(|| Error::Config(format!("step {h} must divide delay {}", a.theta)))?;
        jumps.push(Jump {
            weight: a.weight,
            theta: a.theta,
            lag,
            shift: a.z.iter().map(|&x| x as i64).collect(),
            transfers: Vec::new(),
        });
    }

    // initial window: init support padded by a Poisson tail bound
    let rate_bound = policy.envelope(q, 0.0, horizon.max(1.0));
    let mean_jumps = rate_bound * horizon;
    let reach = mean_jumps + 6.0 * mean_jumps.sqrt();
    let mut lower = vec![i64::MAX; dim];
    let mut upper = vec![i64::MIN; dim];
    for (p, _) in &init.points {
        for d in 0..dim {
            lower[d] = lower[d].min(p[d]);
            upper[d] = upper[d].max(p[d]);
        }
    }
    for d in 0..dim {
        let max_jump = jumps.iter().map(|j| j.shift[d].abs()).max().unwrap_or(0);
        let pad = (reach * max_jump as f64).ceil() as i64 + max_jump;
        lower[d] -= pad;
        upper[d] += pad;
    }
    let mut window = Window {
        shape: lower.iter().zip(&upper).map(|(l, u)| (u - l + 1) as usize).collect(),
        lower,
    };
    for j in &mut jumps {
        j.transfers = transfers(&window, &j.shift);
    }
    let mut u0 = vec![0.0; window.len()];
    for (p, w) in &init.points {
        u0[window.index(p).expect("window covers init")] = *w;
    }
    let mut init_vec = u0.clone();

    let total_steps = (horizon / h).round() as usize;
    let record_every = (total_steps * window.len() / RECORD_BUDGET).max(1);
    let max_lag = jumps.iter().map(|j| j.lag).max().unwrap_or(0).max(1);
    let cap = max_lag.min(steps_per_unit) + 2;
    let mut ring = Ring {
        u: vec![Vec::new(); cap],
        du: vec![Vec::new(); cap],
    };

    let rhs = |t: f64, jumps: &[Jump], current: &[f64], delayed: &dyn Fn(usize, usize) -> Option<Vec<f64>>, out: &mut Vec<f64>| {
        out.clear();
        out.resize(current.len(), 0.0);
        let mut lambda = 0.0;
        for (k, j) in jumps.iter().enumerate() {
            let rate = j.weight * policy.evaluate(t, j.theta);
            lambda += rate;
            let owned;
            let src: &[f64] = if j.lag == 0 {
                current
            } else {
                owned = delayed(k, j.lag);
                owned.as_deref().unwrap_or(current)
            };
            for &(s, d) in &j.transfers {
                out[d as usize] += rate * src[s as usize];
            }
        }
        for (o, c) in out.iter_mut().zip(current) {
            *o -= lambda * c;
        }
    };

    let mut ev = LatticeEvolution {
        dim,
        window: window.clone(),
        step: h,
        horizon: total_steps as f64 * h,
        record_every,
        records: Vec::new(),
        max_mass_defect: 0.0,
        min_mass: 0.0,
        growths: 0,
    };

    let mut u = u0;
    let (mut k1, mut k2, mut k3, mut k4) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut stage = vec![0.0; u.len()];
    for n in 0..=total_steps {
        let t = n as f64 * h;
        // the delayed state at grid index n − lag + c, c ∈ {0, 1/2, 1}
        let past = |n: usize, lag: usize, half: u8, ring: &Ring, init: &[f64]| -> Vec<f64> {
            let base = n as i64 - lag as i64;
            let left = base + i64::from(half == 2);
            if half == 1 {
                if base < 0 {
                    return init.to_vec();
                }
                let (a, b) = (ring.slot(base as usize), ring.slot(base as usize + 1));
                return ring.u[a]
                    .iter()
                    .zip(&ring.u[b])
                    .zip(ring.du[a].iter().zip(&ring.du[b]))
                    .map(|((y0, y1), (f0, f1))| 0.5 * (y0 + y1) + h * (f0 - f1) / 8.0)
                    .collect();
            }
            if left < 0 {
                init.to_vec()
            } else {
                ring.u[ring.slot(left as usize)].clone()
            }
        };
        {
            let ring_ref = &ring;
            let init_ref = &init_vec;
            let d0 = |_k: usize, lag: usize| Some(past(n, lag, 0, ring_ref, init_ref));
            rhs(t, &jumps, &u, &d0, &mut k1);
        }
        let slot = ring.slot(n);
        ring.u[slot] = u.clone();
        ring.du[slot] = k1.clone();
        if n % record_every == 0 || n == total_steps {
            ev.records.push((u.clone(), k1.clone()));
        }
        if n == total_steps {
            break;
        }
        let ring_ref = &ring;
        let init_ref = &init_vec;
        let half = |_k: usize, lag: usize| Some(past(n, lag, 1, ring_ref, init_ref));
        let full = |_k: usize, lag: usize| Some(past(n, lag, 2, ring_ref, init_ref));
        for i in 0..u.len() {
            stage[i] = u[i] + 0.5 * h * k1[i];
        }
        rhs(t + 0.5 * h, &jumps, &stage, &half, &mut k2);
        for i in 0..u.len() {
            stage[i] = u[i] + 0.5 * h * k2[i];
        }
        rhs(t + 0.5 * h, &jumps, &stage, &half, &mut k3);
        for i in 0..u.len() {
            stage[i] = u[i] + h * k3[i];
        }
        rhs(t + h, &jumps, &stage, &full, &mut k4);
        for i in 0..u.len() {
            u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }

        let mass: f64 = u.iter().sum();
        let defect = (mass - 1.0).abs();
        ev.max_mass_defect = ev.max_mass_defect.max(defect);
        ev.min_mass = u.iter().copied().fold(ev.min_mass, f64::min);
        if defect > MASS_LEAK_TOL {
            return Err(Error::Numerical(format!(
                "lattice mass defect {defect:.3e} at t = {:.4}; reduce the step",
                t + h
            )));
        }
        let boundary: f64 = (0..u.len()).filter(|&i| window.on_boundary(i)).map(|i| u[i].abs()).sum();
        if boundary > BOUNDARY_TOL {
            let grown = Window {
                lower: window
                    .lower
                    .iter()
                    .zip(&window.shape)
                    .map(|(l, s)| if *s > 1 { l - (*s as i64 / 2).max(1) } else { *l })
                    .collect(),
                shape: window.shape.iter().map(|&s| if s > 1 { s + 2 * (s / 2).max(1) } else { s }).collect(),
            };
            u = window.embed(&u, &grown);
            init_vec = window.embed(&init_vec, &grown);
            for i in 0..cap {
                if !ring.u[i].is_empty() {
                    ring.u[i] = window.embed(&ring.u[i], &grown);
                    ring.du[i] = window.embed(&ring.du[i], &grown);
                }
            }
            for r in &mut ev.records {
                *r = (window.embed(&r.0, &grown), window.embed(&r.1, &grown));
            }
            for j in &mut jumps {
                j.transfers = transfers(&grown, &j.shift);
            }
            stage = vec![0.0; u.len()];
            window = grown;
            ev.growths += 1;
        }
    }
    ev.window = window;
    Ok(ev)
}

impl LatticeEvolution {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Largest `|Σᵢ uᵢ(t) − 1|` seen during the solve.
    pub fn max_mass_defect(&self) -> f64 {
        self.max_mass_defect
    }

    /// Smallest `uᵢ(t)` seen during the solve (non-positive).
    pub fn min_mass(&self) -> f64 {
        self.min_mass
    }

    pub fn window_growths(&self) -> usize {
        self.growths
    }

    /// Unnormalised state at `t`; snapshots are interpolated by cubic
    /// Hermite when `t` is off the recording grid.
    pub fn state(&self, t: f64) -> Result<Vec<f64>> {
        if !(0.0..=self.horizon + 1e-9).contains(&t) {
            return Err(Error::OutOfRange {
                what: "t",
                value: t,
                lo: 0.0,
                hi: self.horizon,
            });
        }
        let spacing = self.step * self.record_every as f64;
        let pos = t / spacing;
        let last = self.records.len() - 1;
        let i = (pos.floor() as usize).min(last);
        let u = pos - i as f64;
        if u < 1e-9 || i == last {
            return Ok(self.records[i].0.clone());
        }
        let ((y0, f0), (y1, f1)) = (&self.records[i], &self.records[i + 1]);
        // the final record may sit closer than one spacing
        let width = if i + 1 == last { self.horizon - i as f64 * spacing } else { spacing };
        let s = (t - i as f64 * spacing) / width;
        let (s2, s3) = (s * s, s * s * s);
        Ok((0..y0.len())
            .map(|k| {
                (2.0 * s3 - 3.0 * s2 + 1.0) * y0[k]
                    + (s3 - 2.0 * s2 + s) * width * f0[k]
                    + (-2.0 * s3 + 3.0 * s2) * y1[k]
                    + (s3 - s2) * width * f1[k]
            })
            .collect())
    }

    /// Normalised law of `X(t)`; negative round-off is clamped to zero.
    pub fn marginal_law(&self, t: f64) -> Result<LatticeLaw> {
        let state = self.state(t)?;
        let total: f64 = state.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::Numerical(format!("lattice mass {total} at t = {t} is not 1")));
        }
        let mut law = LatticeLaw::from_points(
            self.dim,
            state
                .iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(|(i, &w)| (self.window.point(i), w)),
        )?;
        law.normalization = total;
        Ok(law)
    }
}
