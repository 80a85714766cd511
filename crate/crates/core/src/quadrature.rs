//! Gauss–Legendre rules on the delay interval `[-1, 0]` and a small
//! golden-section maximiser.

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights mapped onto `[-1, 0]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let nf = n as f64;
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, pm1) = legendre(n, x);
                dp = nf * (x * p - pm1) / (x * x - 1.0);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (p, pm1) = legendre(n, x);
            if p.abs() > 1e-12 {
                dp = nf * (x * p - pm1) / (x * x - 1.0);
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes.push(0.5 * (x - 1.0));
            weights.push(0.5 * w);
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

// Returns (P_n(x), P_{n-1}(x)).
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

pub const MAX_NODES: usize = 4096;
pub const REL_TOL: f64 = 1e-10;

/// Integrates `f` over `[-1, 0]`, doubling the node count from `start`
/// until two successive rules agree to `REL_TOL`.
pub fn integrate_adaptive(f: impl Fn(f64) -> f64, start: usize) -> Result<f64> {
    let mut n = start.max(1);
    let mut rule = GaussLegendre::new(n);
    let mut prev = rule.integrate(&f);
    loop {
        let next_n = n * 2;
        if next_n > MAX_NODES {
            return Err(Error::Quadrature {
                nodes: n,
                change: f64::NAN,
            });
        }
        rule = GaussLegendre::new(next_n);
        let cur = rule.integrate(&f);
        let scale = rule.integrate(|x| f(x).abs()).max(cur.abs());
        let change = (cur - prev).abs();
        if change <= REL_TOL * scale || scale == 0.0 {
            return Ok(cur);
        }
        if next_n * 2 > MAX_NODES {
            return Err(Error::Quadrature {
                nodes: next_n,
                change: change / scale,
            });
        }
        prev = cur;
        n = next_n;
    }
}

/// Maximum of `f` on `[lo, hi]`: coarse grid scan followed by golden-section
/// refinement around the best grid point.
pub fn maximize(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    const GRID: usize = 64;
    let step = (hi - lo) / GRID as f64;
    let (mut best_i, mut best) = (0, f(lo));
    for i in 1..=GRID {
        let v = f(lo + step * i as f64);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let mut a = (lo + step * (best_i as f64 - 1.0)).max(lo);
    let mut b = (lo + step * (best_i as f64 + 1.0)).min(hi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        if (b - a).abs() < 1e-14 {
            break;
        }
    }
    best.max(fc).max(fd)
}
