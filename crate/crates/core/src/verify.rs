//! Statistical checks of ensembles against the law of large numbers, the
//! Gaussian limit and the lattice oracle.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::asymptotics::{LimitLaw, RecentringPath};
use crate::error::{Error, Result};
use crate::lattice::LatticeLaw;
use crate::simulator::EnsembleResult;
use crate::stats;

/// `Z = √t (X/t − K)` for row-major `n × dim` samples.
pub fn rescale(samples: &[f64], t: f64, k: &[f64]) -> Vec<f64> {
    let dim = k.len();
    let s = t.sqrt();
    samples
        .chunks(dim)
        .flat_map(|row| row.iter().zip(k).map(move |(x, kk)| s * (x / t - kk)))
        .collect()
}

/// Inverse of [`rescale`]: `X = t K + √t Z`.
pub fn unrescale(z: &[f64], t: f64, k: &[f64]) -> Vec<f64> {
    let dim = k.len();
    let s = t.sqrt();
    z.chunks(dim)
        .flat_map(|row| row.iter().zip(k).map(move |(zi, kk)| t * kk + s * zi))
        .collect()
}

/// `(X(t) + H(t)) / √t`.
pub fn recentre_by_path(samples: &[f64], t: f64, path: &RecentringPath) -> Result<Vec<f64>> {
    let h = path.eval(t)?;
    let s = t.sqrt();
    Ok(samples
        .chunks(h.len())
        .flat_map(|row| row.iter().zip(&h).map(|(x, hh)| (x + hh) / s).collect::<Vec<_>>())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlnProbe {
    pub t: f64,
    pub mean: Vec<f64>,
    pub error: Vec<f64>,
    pub half_width: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlnReport {
    pub probes: Vec<LlnProbe>,
    pub covers: bool,
    pub monotone: bool,
    pub pass: bool,
}

/// Tracks `|mean(X(t)/t) − K|` across probes with half-width
/// `3 √(Σᵢᵢ / (t n))`. Passes iff the last probe covers `K` and no error
/// rises by more than the previous half-width.
pub fn check_lln(ensemble: &EnsembleResult, k: &[f64], sigma_diag: &[f64]) -> LlnReport {
    let n = ensemble.n as f64;
    let probes: Vec<LlnProbe> = ensemble
        .probes
        .iter()
        .enumerate()
        .map(|(p, &t)| {
            let dim = ensemble.dim;
            let mean: Vec<f64> = (0..dim)
                .map(|d| stats::mean(&ensemble.coordinate(p, d)) / t)
                .collect();
            LlnProbe {
                t,
                error: mean.iter().zip(k).map(|(m, kk)| (m - kk).abs()).collect(),
                half_width: sigma_diag.iter().map(|s| 3.0 * (s / (t * n)).sqrt()).collect(),
                mean,
            }
        })
        .collect();
    let covers = probes
        .last()
        .is_some_and(|p| p.error.iter().zip(&p.half_width).all(|(e, w)| e <= w));
    let monotone = probes.windows(2).all(|w| {
        w[1].error
            .iter()
            .zip(&w[0].error)
            .zip(&w[0].half_width)
            .all(|((e1, e0), hw)| *e1 <= e0 + hw)
    });
    LlnReport {
        pass: covers && monotone,
        probes,
        covers,
        monotone,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofTolerances {
    /// Multiplier on the 1% KS critical value.
    pub ks_slack: f64,
    /// Extra KS allowance per principal axis (lattice discretisation).
    pub discretization: Vec<f64>,
    /// Largest admissible `|coordinate|` on kernel axes.
    pub kernel_tol: f64,
}

impl GofTolerances {
    pub fn new(dim: usize) -> Self {
        GofTolerances {
            ks_slack: 1.5,
            discretization: vec![0.0; dim],
            kernel_tol: 1e-9,
        }
    }
}

/// KS allowance for a lattice of `spacing` in `X`, rescaled by `√t`,
/// against the peak density of principal axis `axis`.
pub fn lattice_ks_term(spacing: f64, t: f64, law: &LimitLaw, axis: usize) -> f64 {
    let v = law.spectral().variances[axis];
    if v > 0.0 {
        spacing / t.sqrt() * law.axis_peak_density(axis)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisReport {
    pub variance: f64,
    pub kernel: bool,
    pub ks: f64,
    pub ks_tolerance: f64,
    pub max_abs: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub n: usize,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub axes: Vec<AxisReport>,
    /// `Σ_samples Σ_range zᵢ² / λᵢ`, χ² with `n · rank` degrees of freedom.
    pub mahalanobis: f64,
    pub mahalanobis_dof: f64,
    pub mahalanobis_p: f64,
    pub sample_covariance_singular: bool,
    pub tolerances: GofTolerances,
    /// All KS and kernel-axis checks passed.
    pub pass: bool,
}

/// Compares row-major `n × dim` samples with the limit law on each principal
/// axis.
pub fn gof_gaussian(z: &[f64], law: &LimitLaw, tol: &GofTolerances) -> Result<GofReport> {
    let dim = law.dim();
    let n = z.len() / dim;
    if n < 100 {
        return Err(Error::Config(format!("goodness of fit needs n >= 100, got {n}")));
    }
    let (mean, cov) = stats::covariance(z, dim);
    let rotated: Vec<Vec<f64>> = z.chunks(dim).map(|row| law.spectral().rotate(row)).collect();
    let crit = stats::ks_critical(n) * tol.ks_slack;
    let mut axes = Vec::with_capacity(dim);
    let mut mahalanobis = 0.0;
    let mut rank = 0usize;
    for a in 0..dim {
        let ys: Vec<f64> = rotated.iter().map(|r| r[a]).collect();
        let v = law.spectral().variances[a];
        let max_abs = ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
        let kernel = v == 0.0;
        let (ks, ks_tolerance, pass) = if kernel {
            (0.0, 0.0, max_abs <= tol.kernel_tol)
        } else {
            rank += 1;
            mahalanobis += ys.iter().map(|y| y * y / v).sum::<f64>();
            let ks = stats::ks_statistic(&ys, |y| law.axis_cdf(a, y));
            let allowed = crit + tol.discretization.get(a).copied().unwrap_or(0.0);
            (ks, allowed, ks <= allowed)
        };
        axes.push(AxisReport {
            variance: v,
            kernel,
            ks,
            ks_tolerance,
            max_abs,
            skewness: stats::skewness(&ys),
            excess_kurtosis: stats::excess_kurtosis(&ys),
            pass,
        });
    }
    let dof = (n * rank) as f64;
    let singular = {
        let m = nalgebra::DMatrix::from_row_slice(dim, dim, &cov);
        rank > 0 && m.clone().symmetric_eigen().eigenvalues.iter().filter(|&&e| e > 1e-12 * m.trace().abs()).count() < rank
    };
    Ok(GofReport {
        n,
        mean,
        covariance: cov.chunks(dim).map(|r| r.to_vec()).collect(),
        pass: axes.iter().all(|a| a.pass),
        axes,
        mahalanobis,
        mahalanobis_dof: dof,
        mahalanobis_p: if rank > 0 { stats::chi2_sf(mahalanobis, dof) } else { f64::NAN },
        sample_covariance_singular: singular,
        tolerances: tol.clone(),
    })
}

/// Empirical law of integer-valued row-major samples.
pub fn histogram(samples: &[f64], dim: usize) -> BTreeMap<Vec<i64>, f64> {
    let n = (samples.len() / dim) as f64;
    let mut h = BTreeMap::new();
    for row in samples.chunks(dim) {
        *h.entry(row.iter().map(|x| x.round() as i64).collect()).or_insert(0.0) += 1.0 / n;
    }
    h
}

/// `½ Σᵢ |pᵢ − qᵢ|` over the union of supports.
pub fn total_variation(a: &BTreeMap<Vec<i64>, f64>, b: &BTreeMap<Vec<i64>, f64>) -> f64 {
    let mut tv = 0.0;
    for (k, pa) in a {
        tv += (pa - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, pb) in b {
        if !a.contains_key(k) {
            tv += pb;
        }
    }
    0.5 * tv
}

/// Total variation between the empirical law of `samples` and `law`.
pub fn compare_lattice(samples: &[f64], law: &LatticeLaw) -> f64 {
    total_variation(&histogram(samples, law.dim), &law.as_map())
}

/// Expected sampling-noise scale `Σᵢ √(pᵢ/n)` of the empirical law.
pub fn multinomial_tv_bound(law: &LatticeLaw, n: usize) -> f64 {
    law.points.iter().map(|(_, p)| (p / n as f64).sqrt()).sum()
}

#[derive(Debug, Clone, Copy)]
pub enum Recentring<'a> {
    Drift(&'a [f64]),
    Path(&'a RecentringPath),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub t: Vec<f64>,
    pub reports: Vec<GofReport>,
    /// Largest KS per probe over range axes.
    pub ks: Vec<f64>,
    /// KS never rises by more than `trend_slack` from one probe to the next.
    pub non_increasing: bool,
}

pub const TREND_SLACK: f64 = 0.02;

/// Runs [`gof_gaussian`] at every probe of the ensemble. `spacing` (if any)
/// adds the lattice discretisation term per probe.
pub fn selfsimilar_profile(
    ensemble: &EnsembleResult,
    recentring: Recentring<'_>,
    law: &LimitLaw,
    base: &GofTolerances,
    spacing: Option<f64>,
) -> Result<ProfileReport> {
    let mut reports = Vec::new();
    for (p, &t) in ensemble.probes.iter().enumerate() {
        let x = ensemble.at_probe(p);
        let z = match recentring {
            Recentring::Drift(k) => rescale(&x, t, k),
            Recentring::Path(h) => recentre_by_path(&x, t, h)?,
        };
        let mut tol = base.clone();
        if let Some(s) = spacing {
            tol.discretization = (0..law.dim()).map(|a| lattice_ks_term(s, t, law, a)).collect();
        }
        reports.push(gof_gaussian(&z, law, &tol)?);
    }
    let ks: Vec<f64> = reports
        .iter()
        .map(|r| r.axes.iter().filter(|a| !a.kernel).map(|a| a.ks).fold(0.0, f64::max))
        .collect();
    Ok(ProfileReport {
        t: ensemble.probes.clone(),
        non_increasing: ks.windows(2).all(|w| w[1] <= w[0] + TREND_SLACK),
        ks,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::AsymptoticConstants;
    use crate::rate_policy::RatePolicy;
    use crate::strip_measure::StripMeasure;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn delayed_law() -> LimitLaw {
        AsymptoticConstants::compute(&StripMeasure::dirac(-1.0, vec![1.0]).unwrap(), &RatePolicy::ConstantOne)
            .unwrap()
            .limit_law()
    }

    #[test]
    fn rescale_examples() {
        assert_eq!(rescale(&[200.0], 400.0, &[0.5]), vec![0.0]);
        assert!((rescale(&[210.0], 400.0, &[0.5])[0] - 0.5).abs() < 1e-12);
        let z = [0.3, -1.2, 2.5];
        let back = rescale(&unrescale(&z, 17.0, &[0.25]), 17.0, &[0.25]);
        for (a, b) in z.iter().zip(&back) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn gof_null_case() {
        let law = delayed_law();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut z = vec![0.0; 20_000];
        for v in z.iter_mut() {
            let mut s = [0.0];
            law.sample_into(&mut rng, &mut s);
            *v = s[0];
        }
        let r = gof_gaussian(&z, &law, &GofTolerances::new(1)).unwrap();
        assert!(r.pass, "{:?}", r.axes);
        assert!(r.axes[0].ks <= 1.63 / (20_000f64).sqrt() * 1.5);
        assert!(r.mahalanobis_p > 1e-3);
        assert!(gof_gaussian(&z[..50], &law, &GofTolerances::new(1)).is_err());
    }

    #[test]
    fn gof_detects_wrong_scale() {
        let law = delayed_law();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z: Vec<f64> = (0..5000)
            .map(|_| {
                let mut s = [0.0];
                law.sample_into(&mut rng, &mut s);
                2.0 * s[0]
            })
            .collect();
        assert!(!gof_gaussian(&z, &law, &GofTolerances::new(1)).unwrap().pass);
    }

    #[test]
    fn permutation_invariance() {
        let law = delayed_law();
        let z: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 200.0 - 0.25).collect();
        let mut rev = z.clone();
        rev.reverse();
        let tol = GofTolerances::new(1);
        let (a, b) = (gof_gaussian(&z, &law, &tol).unwrap(), gof_gaussian(&rev, &law, &tol).unwrap());
        assert_eq!(a.axes[0].ks, b.axes[0].ks);
        assert!((a.mahalanobis - b.mahalanobis).abs() < 1e-12);
    }

    #[test]
    fn tv_examples() {
        let law = LatticeLaw::from_points(1, [(vec![0], 0.25), (vec![1], 0.75)]).unwrap();
        assert_eq!(total_variation(&law.as_map(), &law.as_map()), 0.0);
        assert!((compare_lattice(&[0.0, 0.0, 1.0, 1.0], &law) - 0.25).abs() < 1e-15);
        assert!((compare_lattice(&[2.0], &law) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lln_on_exact_drift() {
        let e = EnsembleResult {
            probes: vec![10.0, 20.0],
            dim: 1,
            n: 2,
            seed: 0,
            values: vec![5.0, 10.0, 5.0, 10.0],
            jump_counts: vec![0, 0],
        };
        let r = check_lln(&e, &[0.5], &[0.125]);
        assert!(r.pass);
        assert_eq!(r.probes[1].error, vec![0.0]);
    }

    #[test]
    fn kernel_axis_check() {
        let law = AsymptoticConstants::compute(&StripMeasure::dirac(-1.0, vec![1.0, 0.0]).unwrap(), &RatePolicy::ConstantOne)
            .unwrap()
            .limit_law();
        let mut z: Vec<f64> = (0..200).flat_map(|i| [((i % 7) as f64 - 3.0) * 0.1, 0.0]).collect();
        let tol = GofTolerances::new(2);
        assert!(gof_gaussian(&z, &law, &tol).unwrap().axes[1].pass);
        z[1] = 1e-3;
        assert!(!gof_gaussian(&z, &law, &tol).unwrap().axes[1].pass);
    }

    #[test]
    fn discretization_term_value() {
        let term = lattice_ks_term(1.0, 400.0, &delayed_law(), 0);
        assert!((term - 0.05642).abs() < 1e-4, "{term}");
    }
}
