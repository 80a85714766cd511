//! Scalar linear delay equation `y'(t) = ∫ y(t+θ) K(dθ)` on `[-1, 0]`.
//!
//! Integration is classical RK4 on a fixed grid with cubic-Hermite dense
//! output (method of steps): every delayed argument that falls before the
//! current step start is read from the already computed dense output, values
//! inside the history window `[-1, 0]` are read from the history function
//! itself. The characteristic function `Δ(z) = z - ∫ e^{θz} K(dθ)` has a
//! unique positive real root `γ` which governs the growth of `y`.

use std::fmt;
use std::sync::Arc;

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::strip_measure::{ThetaFn, ThetaMeasure};

/// Default integration step.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Positive delay kernel `K = mass · shape` with `shape` a probability
/// measure on `[-1, 0]`.
#[derive(Debug, Clone)]
pub struct DelayKernel {
    shape: ThetaMeasure,
    mass: f64,
}

impl DelayKernel {
    pub fn new(shape: ThetaMeasure, mass: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Config(format!("delay kernel mass must be positive, got {mass}")));
        }
        Ok(DelayKernel { shape, mass })
    }

    /// `c · δ_θ`.
    pub fn dirac(theta: f64, c: f64) -> Result<Self> {
        Self::new(ThetaMeasure::dirac(theta)?, c)
    }

    /// `K(dθ) = a e^{-bθ} η(dθ)`, the kernel of the hyperbolic example.
    pub fn hyperbolic(a: f64, b: f64, eta: &ThetaMeasure) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::Config(format!("hyperbolic rate needs a > 0, got {a}")));
        }
        let (shape, mass) = eta.tilted(Arc::new(move |t: f64| (-b * t).exp()))?;
        Self::new(shape, a * mass)
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn shape(&self) -> &ThetaMeasure {
        &self.shape
    }

    fn integrate_fixed(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.mass * self.shape.integrate_fixed(g)
    }

    fn integrate(&self, g: impl Fn(f64) -> f64) -> Result<f64> {
        Ok(self.mass * self.shape.integrate(g)?)
    }
}

/// Initial history `y⁰` on `[-1, 0]`.
#[derive(Clone)]
pub enum History {
    Constant(f64),
    /// `scale · e^{rate·θ}`
    Exponential { scale: f64, rate: f64 },
    Custom(ThetaFn),
}

impl fmt::Debug for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            History::Constant(c) => write!(f, "Constant({c})"),
            History::Exponential { scale, rate } => write!(f, "Exponential({scale}, {rate})"),
            History::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl History {
    pub fn eval(&self, theta: f64) -> f64 {
        match self {
            History::Constant(c) => *c,
            History::Exponential { scale, rate } => scale * (rate * theta).exp(),
            History::Custom(f) => f(theta),
        }
    }

    /// Largest value on `[-1, 0]`.
    pub fn sup(&self) -> f64 {
        match self {
            History::Constant(c) => *c,
            History::Exponential { scale, rate } => scale * (if *rate < 0.0 { (-rate).exp() } else { 1.0 }),
            History::Custom(f) => crate::quadrature::maximize(&**f, -1.0, 0.0),
        }
    }
}

/// Dense solution of the delay equation on `[-1, horizon]`.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    step: f64,
    horizon: f64,
    y: Vec<f64>,
    dy: Vec<f64>,
    history: History,
}

impl DenseSolution {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn grid_values(&self) -> &[f64] {
        &self.y
    }

    /// `y(t)`; history values for `t < 0`, dense output on `[0, horizon]`.
    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return self.history.eval(t);
        }
        self.hermite(t).0
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.hermite(t).1
    }

    pub fn try_eval(&self, t: f64) -> Result<f64> {
        if !(-1.0..=self.horizon + 1e-12).contains(&t) {
            return Err(Error::OutOfRange {
                what: "t",
                value: t,
                lo: -1.0,
                hi: self.horizon,
            });
        }
        Ok(self.eval(t))
    }

    fn hermite(&self, t: f64) -> (f64, f64) {
        let last = self.y.len() - 1;
        let pos = t / self.step;
        let i = (pos.floor() as usize).min(last.saturating_sub(1));
        if last == 0 {
            return (self.y[0], self.dy[0]);
        }
        let u = pos - i as f64;
        let h = self.step;
        let (y0, y1, f0, f1) = (self.y[i], self.y[i + 1], self.dy[i], self.dy[i + 1]);
        let u2 = u * u;
        let u3 = u2 * u;
        let value = (2.0 * u3 - 3.0 * u2 + 1.0) * y0
            + (u3 - 2.0 * u2 + u) * h * f0
            + (-2.0 * u3 + 3.0 * u2) * y1
            + (u3 - u2) * h * f1;
        let slope = (6.0 * u2 - 6.0 * u) * (y0 - y1) / h
            + (3.0 * u2 - 4.0 * u + 1.0) * f0
            + (3.0 * u2 - 2.0 * u) * f1;
        (value, slope)
    }

    /// `y(t+θ)/y(t)`.
    pub fn ratio_profile(&self, t: f64, theta: f64) -> Result<f64> {
        if t < 0.0 || t + theta < -1.0 - 1e-12 || theta > 0.0 {
            return Err(Error::OutOfRange {
                what: "t+θ",
                value: t + theta,
                lo: -1.0,
                hi: t,
            });
        }
        let den = self.try_eval(t)?;
        if !(den > 0.0) {
            return Err(Error::Numerical(format!("y({t}) = {den} is not positive")));
        }
        Ok(self.eval(t + theta) / den)
    }

    /// Deviation `y(t+θ)/y(t) − e^{γθ}` from the asymptotic profile.
    pub fn ratio_deviation(&self, gamma: f64, t: f64, theta: f64) -> Result<f64> {
        Ok(self.ratio_profile(t, theta)? - (gamma * theta).exp())
    }

    /// Smallest `t ≥ from` with `y(t) = target`, assuming `y` nondecreasing
    /// on `[0, horizon]`. `None` if the target is not reached.
    pub fn invert(&self, target: f64, from: f64) -> Option<f64> {
        let from = from.max(0.0);
        if from > self.horizon {
            return None;
        }
        if self.eval(from) >= target {
            return Some(from);
        }
        let start = ((from / self.step).floor() as usize + 1).min(self.y.len());
        let j = start + self.y[start..].partition_point(|&v| v < target);
        if j >= self.y.len() {
            return None;
        }
        let mut lo = ((j - 1) as f64 * self.step).max(from);
        let mut hi = j as f64 * self.step;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 * hi.max(1.0) {
                break;
            }
        }
        Some(hi)
    }
}

/// Integrates the delay equation on `[0, horizon]` with step `h`.
pub fn solve(kernel: &DelayKernel, history: History, horizon: f64, h: f64) -> Result<DenseSolution> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
    }
    if !(h > 0.0) || ((1.0 / h).round() * h - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("step {h} must be positive and divide 1")));
    }
    let y_start = history.eval(0.0);
    if !(y_start >= 0.0) {
        return Err(Error::Config(format!("history must be nonnegative, y0(0) = {y_start}")));
    }
    let steps = (horizon / h - 1e-9).ceil().max(1.0) as usize;
    let mut sol = DenseSolution {
        step: h,
        horizon: steps as f64 * h,
        y: Vec::with_capacity(steps + 1),
        dy: Vec::with_capacity(steps + 1),
        history,
    };
    sol.y.push(y_start);
    sol.dy.push(0.0);
    // the right-hand side at t = 0 sees only the history
    let f0 = rhs(kernel, &sol, 0.0, 0.0, y_start, 0.0);
    sol.dy[0] = f0;

    for n in 0..steps {
        let tn = n as f64 * h;
        let yn = sol.y[n];
        let k1 = sol.dy[n];
        let k2 = rhs(kernel, &sol, tn, tn + 0.5 * h, yn + 0.5 * h * k1, yn);
        let k3 = rhs(kernel, &sol, tn, tn + 0.5 * h, yn + 0.5 * h * k2, yn);
        let k4 = rhs(kernel, &sol, tn, tn + h, yn + h * k3, yn);
        let next = yn + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let scale = sol.y.iter().rev().take(1).fold(next.abs(), |a, &b| a.max(b.abs()));
        if next < -1e-12 * scale.max(1.0) || !next.is_finite() {
            return Err(Error::Numerical(format!(
                "delay solution became negative ({next}) at t = {}; reduce the step",
                tn + h
            )));
        }
        sol.y.push(next);
        sol.dy.push(0.0);
        let f_next = rhs(kernel, &sol, tn + h, tn + h, next, next);
        sol.dy[n + 1] = f_next;
    }
    Ok(sol)
}

// Right-hand side at stage time `t` with stage value `current`; `tn` is the
// start of the current step (where dense output ends) and `yn` its value.
fn rhs(kernel: &DelayKernel, sol: &DenseSolution, tn: f64, t: f64, current: f64, yn: f64) -> f64 {
    kernel.integrate_fixed(|theta| {
        let s = t + theta;
        if theta == 0.0 || s >= t {
            current
        } else if s < 0.0 {
            sol.history.eval(s)
        } else if s <= tn {
            sol.hermite(s).0
        } else {
            // inside the step being computed
            yn + (s - tn) / (t - tn) * (current - yn)
        }
    })
}

/// `Δ(z) = z − ∫ e^{θz} K(dθ)` for real `z`.
pub fn characteristic_delta(z: f64, kernel: &DelayKernel) -> Result<f64> {
    Ok(z - kernel.integrate(|t| (t * z).exp())?)
}

/// `Δ(z)` for complex `z`.
pub fn characteristic_delta_complex(z: Complex<f64>, kernel: &DelayKernel) -> Result<Complex<f64>> {
    let re = kernel.integrate(|t| (t * z.re).exp() * (t * z.im).cos())?;
    let im = kernel.integrate(|t| (t * z.re).exp() * (t * z.im).sin())?;
    Ok(z - Complex::new(re, im))
}

/// `Δ'(z) = 1 − ∫ θ e^{θz} K(dθ) ≥ 1`.
pub fn characteristic_slope(z: f64, kernel: &DelayKernel) -> Result<f64> {
    Ok(1.0 - kernel.integrate(|t| t * (t * z).exp())?)
}

/// Unique positive root of `Δ`: bisection on `[0, m]` polished by Newton.
pub fn dominant_root(kernel: &DelayKernel) -> Result<f64> {
    let m = kernel.mass();
    let (mut lo, mut hi) = (0.0, m);
    if characteristic_delta(hi, kernel)? == 0.0 {
        return Ok(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if characteristic_delta(mid, kernel)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    let mut gamma = 0.5 * (lo + hi);
    let mut best = characteristic_delta(gamma, kernel)?.abs();
    for _ in 0..5 {
        let d = characteristic_delta(gamma, kernel)?;
        let next = gamma - d / characteristic_slope(gamma, kernel)?;
        let r = characteristic_delta(next, kernel)?.abs();
        if r >= best {
            break;
        }
        best = r;
        gamma = next;
    }
    Ok(gamma)
}
