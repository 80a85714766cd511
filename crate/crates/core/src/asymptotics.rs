//! Closed-form asymptotic constants and the Gaussian limit law.
//!
//! With `α∞` the limit rate and `Q` the jump measure:
//!
//! ```text
//! Γ  = ∫ (−θ) α∞(θ) Q(dθ,dz)
//! K  = (1/(1+Γ)) ∫ α∞(θ) z Q(dθ,dz)
//! D₀ = ∫ α∞(θ) (z+θK)(z+θK)ᵀ Q(dθ,dz)
//! Σ  = D₀ / (1+Γ)
//! ```
//!
//! `(X(t) − Kt)/√t` converges in law to `N(0, Σ)`; when `Σ` is singular the
//! limit is a point mass along its kernel.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Value};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::rate_policy::RatePolicy;
use crate::strip_measure::StripMeasure;

/// Relative eigenvalue threshold (times `trace Σ`) below which an axis is
/// treated as part of the kernel.
pub const KERNEL_THRESHOLD: f64 = 1e-12;

/// Orthogonal diagonalisation `Σ = Pᵀ diag(λ) P`, eigenvalues descending.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectral {
    /// Rows are the principal axes.
    pub rotation: DMatrix<f64>,
    /// One variance per axis; kernel axes carry exactly `0`.
    pub variances: Vec<f64>,
    pub kernel_dim: usize,
}

impl Spectral {
    pub fn of(sigma: &DMatrix<f64>) -> Self {
        let n = sigma.nrows();
        let trace = sigma.trace();
        let is_diagonal = (0..n).all(|i| (0..n).all(|j| i == j || sigma[(i, j)] == 0.0));
        let (values, vectors): (Vec<f64>, DMatrix<f64>) = if is_diagonal {
            ((0..n).map(|i| sigma[(i, i)]).collect(), DMatrix::identity(n, n))
        } else {
            let eig = SymmetricEigen::new(sigma.clone());
            (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let cutoff = KERNEL_THRESHOLD * trace.abs();
        let mut rotation = DMatrix::zeros(n, n);
        let mut variances = Vec::with_capacity(n);
        for (row, &k) in order.iter().enumerate() {
            rotation.set_row(row, &vectors.column(k).transpose());
            let v = values[k];
            variances.push(if v > cutoff && v > 0.0 { v } else { 0.0 });
        }
        let kernel_dim = variances.iter().filter(|&&v| v == 0.0).count();
        Spectral {
            rotation,
            variances,
            kernel_dim,
        }
    }

    pub fn range_dim(&self) -> usize {
        self.variances.len() - self.kernel_dim
    }

    /// Principal-axis coordinates `P x`.
    pub fn rotate(&self, x: &[f64]) -> Vec<f64> {
        let n = self.variances.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.rotation[(i, j)] * x[j]).sum())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct AsymptoticConstants {
    /// `Γ`
    pub delay_weight: f64,
    /// `K`
    pub drift: DVector<f64>,
    pub lambda_inf: f64,
    pub d0: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub spectral: Spectral,
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

impl AsymptoticConstants {
    pub fn compute(q: &StripMeasure, policy: &RatePolicy) -> Result<Self> {
        let lim = |t: f64| policy.limit(t);
        let lambda_inf = policy.lambda_inf(q)?;
        let delay_weight = q.moment0(|t| -t * lim(t))?;
        if delay_weight < -1e-14 {
            return Err(Error::Numerical(format!("negative delay weight {delay_weight}")));
        }
        let delay_weight = delay_weight.max(0.0);
        let drift = q.moment1(lim)? / (1.0 + delay_weight);

        // D₀ = M₂ + M₁θ Kᵀ + K M₁θᵀ + KKᵀ ∫θ²α∞
        let m2 = q.moment2(lim)?;
        let m1_theta = q.moment1(|t| t * lim(t))?;
        let theta2 = q.moment0(|t| t * t * lim(t))?;
        let d0 = symmetrize(
            &(m2 + &m1_theta * drift.transpose() + &drift * m1_theta.transpose() + &drift * drift.transpose() * theta2),
        );
        let sigma = &d0 / (1.0 + delay_weight);
        let spectral = Spectral::of(&sigma);
        let min_eig = SymmetricEigen::new(d0.clone()).eigenvalues.min();
        if min_eig < -1e-12 * d0.trace().abs().max(1.0) {
            return Err(Error::Numerical(format!("D0 is not positive semidefinite (eigenvalue {min_eig})")));
        }
        Ok(AsymptoticConstants {
            delay_weight,
            drift,
            lambda_inf,
            d0,
            sigma,
            spectral,
        })
    }

    pub fn dim(&self) -> usize {
        self.drift.len()
    }

    pub fn limit_law(&self) -> LimitLaw {
        LimitLaw {
            spectral: self.spectral.clone(),
        }
    }

    pub fn to_json(&self) -> Value {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
        };
        json!({
            "Gamma": self.delay_weight,
            "K": self.drift.iter().copied().collect::<Vec<_>>(),
            "lambda_inf": self.lambda_inf,
            "D0": rows(&self.d0),
            "Sigma": rows(&self.sigma),
            "eigenvalues": self.spectral.variances,
            "P": rows(&self.spectral.rotation),
            "kernel_dim": self.spectral.kernel_dim,
        })
    }
}

/// Residual of the fixed-point identity `∫ α∞(θ)[z+θK] Q = K`.
pub fn drift_identity_residual(q: &StripMeasure, policy: &RatePolicy, c: &AsymptoticConstants) -> Result<f64> {
    let lim = |t: f64| policy.limit(t);
    let lhs = q.moment1(lim)? + &c.drift * q.moment0(|t| t * lim(t))?;
    Ok((lhs - &c.drift).amax())
}

/// Drift and covariance written through the tilted law `α∞ Q / λ∞` of
/// `(Θ∞, Z∞)`: `K = λ∞ E[Z]/(1 − λ∞ E[Θ])` and
/// `λ∞/(1 − λ∞ E[Θ]) · E[(Z+ΘK)(Z+ΘK)ᵀ]`.
#[derive(Debug, Clone)]
pub struct TiltedLawConstants {
    pub drift: DVector<f64>,
    pub one_minus_lambda_mean_theta: f64,
    pub covariance: DMatrix<f64>,
}

impl TiltedLawConstants {
    pub fn compute(q: &StripMeasure, policy: &RatePolicy) -> Result<Self> {
        let lambda_inf = policy.lambda_inf(q)?;
        let density = |t: f64| policy.limit(t) / lambda_inf;
        let mean_z = q.moment1(density)?;
        let mean_theta = q.moment0(|t| t * density(t))?;
        let denom = 1.0 - lambda_inf * mean_theta;
        let drift = mean_z * (lambda_inf / denom);
        let n = drift.len();
        let mut second = DMatrix::zeros(n, n);
        // E[(Z+ΘK)(Z+ΘK)ᵀ] expanded coordinate-wise
        let zz = q.moment2(density)?;
        let theta_z = q.moment1(|t| t * density(t))?;
        let theta2 = q.moment0(|t| t * t * density(t))?;
        for i in 0..n {
            for j in 0..n {
                second[(i, j)] = zz[(i, j)]
                    + theta_z[i] * drift[j]
                    + drift[i] * theta_z[j]
                    + theta2 * drift[i] * drift[j];
            }
        }
        Ok(TiltedLawConstants {
            covariance: second * (lambda_inf / denom),
            drift,
            one_minus_lambda_mean_theta: denom,
        })
    }
}

/// Centred Gaussian `π` with covariance `Σ`, degenerate along `ker Σ`.
#[derive(Debug, Clone)]
pub struct LimitLaw {
    spectral: Spectral,
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

impl LimitLaw {
    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn dim(&self) -> usize {
        self.spectral.variances.len()
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let n = self.dim();
        let y: Vec<f64> = self
            .spectral
            .variances
            .iter()
            .map(|&v| if v > 0.0 { v.sqrt() * rng.sample::<f64, _>(StandardNormal) } else { 0.0 })
            .collect();
        for (j, o) in out.iter_mut().enumerate().take(n) {
            *o = (0..n)
                .filter(|&i| y[i] != 0.0)
                .map(|i| self.spectral.rotation[(i, j)] * y[i])
                .sum();
        }
    }

    /// Log-density of the Gaussian restricted to the range of `Σ`.
    pub fn log_density_range(&self, x: &[f64]) -> f64 {
        let y = self.spectral.rotate(x);
        y.iter()
            .zip(&self.spectral.variances)
            .filter(|(_, &v)| v > 0.0)
            .map(|(yi, &v)| -0.5 * (yi * yi / v + (2.0 * std::f64::consts::PI * v).ln()))
            .sum()
    }

    /// CDF of principal coordinate `axis`; a unit step on kernel axes.
    pub fn axis_cdf(&self, axis: usize, y: f64) -> f64 {
        let v = self.spectral.variances[axis];
        if v > 0.0 {
            std_normal_cdf(y / v.sqrt())
        } else if y >= 0.0 {
            1.0
        } else {
            0.0
        }
    }

    /// Peak density of principal coordinate `axis`.
    pub fn axis_peak_density(&self, axis: usize) -> f64 {
        let v = self.spectral.variances[axis];
        1.0 / (2.0 * std::f64::consts::PI * v).sqrt()
    }
}

/// Tabulated recentring path `H(t) = −(1/(1+Γ)) ∫₀ᵗ ∫ α(s,θ) z Q(dθ,dz) ds`.
#[derive(Debug, Clone)]
pub struct RecentringPath {
    dim: usize,
    step: f64,
    horizon: f64,
    values: Vec<f64>,
    initial_slope: Vec<f64>,
}

impl RecentringPath {
    /// Builds `H` on a grid of width `grid_step` (default
    /// `min(0.01, horizon/10⁴)`) by Simpson's rule per cell.
    pub fn compute(
        q: &StripMeasure,
        policy: &RatePolicy,
        delay_weight: f64,
        horizon: f64,
        grid_step: Option<f64>,
    ) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
        }
        let step = grid_step.unwrap_or((horizon / 1e4).min(0.01));
        if !(step > 0.0) {
            return Err(Error::Config(format!("grid step must be positive, got {step}")));
        }
        let dim = q.dim();
        let scale = -1.0 / (1.0 + delay_weight);
        let integrand = |s: f64| q.moment1_fixed(|t| policy.evaluate(s, t)) * scale;
        let cells = (horizon / step).ceil() as usize;
        let mut values = vec![0.0; (cells + 1) * dim];
        let mut left = integrand(0.0);
        let initial_slope: Vec<f64> = left.iter().copied().collect();
        for k in 0..cells {
            let t0 = k as f64 * step;
            let mid = integrand(t0 + 0.5 * step);
            let right = integrand(t0 + step);
            for d in 0..dim {
                values[(k + 1) * dim + d] =
                    values[k * dim + d] + step / 6.0 * (left[d] + 4.0 * mid[d] + right[d]);
            }
            left = right;
        }
        Ok(RecentringPath {
            dim,
            step,
            horizon: cells as f64 * step,
            values,
            initial_slope,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `H(t)`, linearly interpolated; for `t ∈ [−1, 0)` the path is extended
    /// with its slope at `0`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        if !(-1.0..=self.horizon + 1e-9).contains(&t) {
            return Err(Error::OutOfRange {
                what: "t",
                value: t,
                lo: -1.0,
                hi: self.horizon,
            });
        }
        if t < 0.0 {
            return Ok(self.initial_slope.iter().map(|s| s * t).collect());
        }
        let last = self.values.len() / self.dim - 1;
        let pos = t / self.step;
        let k = (pos.floor() as usize).min(last.saturating_sub(1));
        let u = pos - k as f64;
        Ok((0..self.dim)
            .map(|d| {
                let a = self.values[k * self.dim + d];
                let b = self.values[(k + 1).min(last) * self.dim + d];
                a + u * (b - a)
            })
            .collect())
    }

    /// `G(t, θ) = H(t) − H(t+θ)`.
    pub fn shift(&self, t: f64, theta: f64) -> Result<Vec<f64>> {
        let a = self.eval(t)?;
        let b = self.eval(t + theta)?;
        Ok(a.iter().zip(&b).map(|(x, y)| x - y).collect())
    }
}
