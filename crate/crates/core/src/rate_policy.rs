//! Jump-rate families `α(t, θ)` and the resulting Poisson intensity.

use std::fmt;
use std::sync::Arc;

use crate::dde::{self, DelayKernel, DenseSolution, History};
use crate::error::{Error, Result};
use crate::quadrature;
use crate::strip_measure::{StripMeasure, ThetaFn, ThetaMeasure};

/// Limit rate `α∞(θ)` of a separable family.
#[derive(Clone)]
pub enum BaseRate {
    Constant(f64),
    /// `scale · e^{rate·θ}`
    Exponential { scale: f64, rate: f64 },
    Custom(ThetaFn),
}

impl fmt::Debug for BaseRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaseRate::Constant(c) => write!(f, "Constant({c})"),
            BaseRate::Exponential { scale, rate } => write!(f, "Exponential({scale}, {rate})"),
            BaseRate::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl BaseRate {
    pub fn eval(&self, theta: f64) -> f64 {
        match self {
            BaseRate::Constant(c) => *c,
            BaseRate::Exponential { scale, rate } => scale * (rate * theta).exp(),
            BaseRate::Custom(f) => f(theta),
        }
    }

    fn sup(&self) -> f64 {
        match self {
            BaseRate::Constant(c) => *c,
            BaseRate::Exponential { .. } => self.eval(-1.0).max(self.eval(0.0)),
            BaseRate::Custom(f) => quadrature::maximize(&**f, -1.0, 0.0),
        }
    }
}

/// `α(t, θ) = α∞(θ) + M e^{-βt}`.
#[derive(Debug, Clone)]
pub struct SeparableRate {
    pub base: BaseRate,
    pub m: f64,
    pub beta: f64,
}

/// `α(t, θ) = a e^{-bθ} y(t+θ)/y(t)` with `y` the solution of
/// `y'(t) = a ∫ e^{-bθ} y(t+θ) η(dθ)`.
#[derive(Debug, Clone)]
pub struct HyperbolicRate {
    a: f64,
    b: f64,
    eta: ThetaMeasure,
    kernel: DelayKernel,
    solution: Arc<DenseSolution>,
    gamma: f64,
    ratio_bound: f64,
}

impl HyperbolicRate {
    /// Solves the auxiliary delay equation up to `horizon + 1` with step `h`.
    pub fn new(a: f64, b: f64, eta: ThetaMeasure, history: History, horizon: f64, h: f64) -> Result<Self> {
        let kernel = DelayKernel::hyperbolic(a, b, &eta)?;
        let y_start = history.eval(0.0);
        if !(y_start > 0.0) {
            return Err(Error::Config(format!(
                "hyperbolic rate needs y0(0) > 0, got {y_start}"
            )));
        }
        let gamma = dde::dominant_root(&kernel)?;
        let solution = dde::solve(&kernel, history.clone(), horizon + 1.0, h)?;
        // y is nondecreasing on [0, ∞), so y(t+θ)/y(t) ≤ max(1, sup y0 / y0(0))
        let ratio_bound = (history.sup() / y_start).max(1.0);
        Ok(HyperbolicRate {
            a,
            b,
            eta,
            kernel,
            solution: Arc::new(solution),
            gamma,
            ratio_bound,
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn eta(&self) -> &ThetaMeasure {
        &self.eta
    }

    pub fn kernel(&self) -> &DelayKernel {
        &self.kernel
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn solution(&self) -> &DenseSolution {
        &self.solution
    }
}

#[derive(Debug, Clone)]
pub enum RatePolicy {
    ConstantOne,
    Separable(SeparableRate),
    Hyperbolic(HyperbolicRate),
}

impl RatePolicy {
    pub fn separable(base: BaseRate, m: f64, beta: f64) -> Result<Self> {
        if !(m >= 0.0 && beta > 0.0) {
            return Err(Error::Config(format!("separable rate needs M >= 0, beta > 0 (got {m}, {beta})")));
        }
        let rate = SeparableRate { base, m, beta };
        for i in 0..=64 {
            let theta = -(i as f64) / 64.0;
            let v = rate.base.eval(theta);
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("limit rate must be positive, got {v} at θ={theta}")));
            }
        }
        Ok(RatePolicy::Separable(rate))
    }

    pub fn hyperbolic(a: f64, b: f64, eta: ThetaMeasure, history: History, horizon: f64, h: f64) -> Result<Self> {
        Ok(RatePolicy::Hyperbolic(HyperbolicRate::new(a, b, eta, history, horizon, h)?))
    }

    /// `α(t, θ)`.
    pub fn evaluate(&self, t: f64, theta: f64) -> f64 {
        match self {
            RatePolicy::ConstantOne => 1.0,
            RatePolicy::Separable(s) => s.base.eval(theta) + s.m * (-s.beta * t).exp(),
            RatePolicy::Hyperbolic(h) => {
                let y = &h.solution;
                h.a * (-h.b * theta).exp() * y.eval(t + theta) / y.eval(t)
            }
        }
    }

    /// `α∞(θ)`.
    pub fn limit(&self, theta: f64) -> f64 {
        match self {
            RatePolicy::ConstantOne => 1.0,
            RatePolicy::Separable(s) => s.base.eval(theta),
            RatePolicy::Hyperbolic(h) => h.a * ((h.gamma - h.b) * theta).exp(),
        }
    }

    /// Upper bound of `α(t, ·)` over the delay support of `q`.
    pub fn sup_theta(&self, t: f64, q: &StripMeasure) -> f64 {
        if let Some(atoms) = q.theta_atoms() {
            return atoms.iter().map(|a| self.evaluate(t, a.theta)).fold(0.0, f64::max);
        }
        match self {
            RatePolicy::ConstantOne => 1.0,
            RatePolicy::Separable(s) => s.base.sup() + s.m * (-s.beta * t).exp(),
            RatePolicy::Hyperbolic(h) => h.a * h.b.max(0.0).exp() * h.ratio_bound * (1.0 + 1e-9),
        }
    }

    /// `λ(t) = ∫ α(t, θ) Q(dθ, dz)`.
    pub fn lambda_t(&self, q: &StripMeasure, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::OutOfRange {
                what: "t",
                value: t,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        match self {
            RatePolicy::ConstantOne => Ok(1.0),
            _ => q.theta_integrate(|theta| self.evaluate(t, theta)),
        }
    }

    /// Fixed-quadrature `λ(t)` for the simulation hot path.
    pub fn lambda_fast(&self, q: &StripMeasure, t: f64) -> f64 {
        match self {
            RatePolicy::ConstantOne => 1.0,
            _ => q.theta_integrate_fixed(|theta| self.evaluate(t, theta)),
        }
    }

    /// `λ∞ = ∫ α∞(θ) Q(dθ, dz)`.
    pub fn lambda_inf(&self, q: &StripMeasure) -> Result<f64> {
        let v = q.theta_integrate(|theta| self.limit(theta))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("limit intensity must be positive, got {v}")));
        }
        Ok(v)
    }

    /// Bound `λ̄ ≥ λ(s)` for every `s ∈ [t0, t1]`.
    pub fn envelope(&self, q: &StripMeasure, t0: f64, t1: f64) -> f64 {
        debug_assert!(t0 <= t1);
        match self {
            RatePolicy::ConstantOne => 1.0,
            RatePolicy::Separable(s) => {
                let limit = q.theta_integrate_fixed(|theta| s.base.eval(theta));
                (limit + s.m * (-s.beta * t0).exp()) * (1.0 + 1e-9)
            }
            RatePolicy::Hyperbolic(h) => {
                let tilt = q.theta_integrate_fixed(|theta| (-h.b * theta).exp());
                h.a * tilt * h.ratio_bound * (1.0 + 1e-9)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strip_measure::{JumpMarginal, StripMeasure};
    use std::f64::consts::E;

    fn fig1_policy(horizon: f64) -> RatePolicy {
        RatePolicy::hyperbolic(1.01, 1.0, ThetaMeasure::dirac(-1.0).unwrap(), History::Constant(1.0), horizon, 1e-3)
            .unwrap()
    }

    fn fig1_measure() -> StripMeasure {
        StripMeasure::dirac(-1.0, vec![-1.0]).unwrap()
    }

    #[test]
    fn constant_one() {
        let q = fig1_measure();
        let p = RatePolicy::ConstantOne;
        assert_eq!(p.lambda_t(&q, 3.0).unwrap(), 1.0);
        assert_eq!(p.lambda_inf(&q).unwrap(), 1.0);
        assert_eq!(p.envelope(&q, 0.0, 1.0), 1.0);
    }

    #[test]
    fn separable_examples() {
        let q = StripMeasure::dirac(-1.0, vec![1.0]).unwrap();
        let p = RatePolicy::separable(BaseRate::Exponential { scale: 1.0, rate: 1.0 }, 0.5, 1.0).unwrap();
        assert!((p.lambda_inf(&q).unwrap() - (-1f64).exp()).abs() < 1e-15);
        let p = RatePolicy::separable(BaseRate::Constant(2.0), 0.0, 1.0).unwrap();
        let uniform = StripMeasure::product(ThetaMeasure::uniform(), JumpMarginal::point(vec![1.0]).unwrap()).unwrap();
        assert!((p.lambda_inf(&uniform).unwrap() - 2.0).abs() < 1e-12);
        let p = RatePolicy::separable(BaseRate::Constant(1.0), 1.0, 1.0).unwrap();
        assert!((p.envelope(&q, 10.0, 20.0) - (1.0 + (-10f64).exp())).abs() < 1e-8);
        assert!(RatePolicy::separable(BaseRate::Constant(-1.0), 0.0, 1.0).is_err());
    }

    #[test]
    fn separable_decay_bound() {
        let q = StripMeasure::product(ThetaMeasure::exponential(1.5).unwrap(), JumpMarginal::point(vec![1.0]).unwrap())
            .unwrap();
        let p = RatePolicy::separable(BaseRate::Exponential { scale: 0.8, rate: 0.5 }, 0.3, 0.7).unwrap();
        let inf = p.lambda_inf(&q).unwrap();
        for i in 0..50 {
            let t = i as f64 * 0.4;
            let l = p.lambda_t(&q, t).unwrap();
            assert!((l - inf).abs() <= 0.3 * (-0.7 * t).exp() + 1e-13);
            assert!(l <= p.envelope(&q, t, t + 1.0));
        }
    }

    #[test]
    fn hyperbolic_limits() {
        let q = fig1_measure();
        let p = fig1_policy(60.0);
        let RatePolicy::Hyperbolic(h) = &p else { unreachable!() };
        let gamma = h.gamma();
        assert!((gamma - 1.00498).abs() < 1e-4);
        assert!((p.lambda_inf(&q).unwrap() - gamma).abs() < 1e-12);
        assert!((p.lambda_t(&q, 50.0).unwrap() - gamma).abs() < 1e-6);
        assert!((p.envelope(&q, 0.0, 1.0) - 1.01 * E).abs() < 1e-8);
    }

    #[test]
    fn hyperbolic_envelope_dominates_rate() {
        let q = fig1_measure();
        let p = fig1_policy(20.0);
        let bound = p.envelope(&q, 0.0, 20.0);
        for i in 0..=1000 {
            let t = 20.0 * i as f64 / 1000.0;
            assert!(p.lambda_t(&q, t).unwrap() <= bound);
            assert!(p.evaluate(t, -1.0) <= p.sup_theta(t, &q) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn hyperbolic_converges_exponentially() {
        let p = fig1_policy(45.0);
        let RatePolicy::Hyperbolic(h) = &p else { unreachable!() };
        let limit = 1.01 * E * (-h.gamma()).exp();
        // the subdominant roots are complex, so take the envelope of the
        // oscillating error over windows longer than its period; beyond t≈16
        // the error reaches the integrator's round-off floor
        let (ts, logs): (Vec<f64>, Vec<f64>) = (2..=14)
            .map(|t| {
                let t = t as f64;
                let err = (0..=150)
                    .map(|k| (p.evaluate(t + 0.01 * k as f64, -1.0) - limit).abs())
                    .fold(0.0, f64::max);
                (t, err.ln())
            })
            .unzip();
        let n = ts.len() as f64;
        let mt = ts.iter().sum::<f64>() / n;
        let ml = logs.iter().sum::<f64>() / n;
        let sxy: f64 = ts.iter().zip(&logs).map(|(t, l)| (t - mt) * (l - ml)).sum();
        let sxx: f64 = ts.iter().map(|t| (t - mt).powi(2)).sum();
        let syy: f64 = logs.iter().map(|l| (l - ml).powi(2)).sum();
        let slope = sxy / sxx;
        let r2 = sxy * sxy / (sxx * syy);
        assert!(slope < 0.0, "slope {slope}");
        assert!(r2 > 0.99, "r2 {r2}");
    }
}
