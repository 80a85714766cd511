//! Small statistics toolbox: moments, KS distances, χ² tails.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Asymptotic Kolmogorov coefficient at the 1% level.
pub const KS_COEFF_1PCT: f64 = 1.628;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

pub fn skewness(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    if m2 == 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    if m2 == 0.0 {
        0.0
    } else {
        m4 / (m2 * m2) - 3.0
    }
}

/// Sample covariance of row-major `n × dim` data.
pub fn covariance(flat: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = flat.len() / dim;
    let mut mu = vec![0.0; dim];
    for row in flat.chunks(dim) {
        for (m, x) in mu.iter_mut().zip(row) {
            *m += x;
        }
    }
    mu.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; dim * dim];
    for row in flat.chunks(dim) {
        for i in 0..dim {
            for j in 0..dim {
                cov[i * dim + j] += (row[i] - mu[i]) * (row[j] - mu[j]);
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= n as f64 - 1.0);
    (mu, cov)
}

/// One-sample KS distance `sup |F_n − F|`.
pub fn ks_statistic(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        // group ties so lattice-valued samples are handled exactly
        let x = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == x {
            j += 1;
        }
        let f = cdf(x);
        d = d.max((j as f64 / n - f).abs()).max((f - i as f64 / n).abs());
        i = j;
    }
    d
}

/// Two-sample KS distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

pub fn ks_critical(n: usize) -> f64 {
    KS_COEFF_1PCT / (n as f64).sqrt()
}

pub fn ks_critical_two_sample(n: usize, m: usize) -> f64 {
    KS_COEFF_1PCT * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Upper-tail probability of a χ² variable with `dof` degrees of freedom.
pub fn chi2_sf(x: f64, dof: f64) -> f64 {
    ChiSquared::new(dof).map(|c| 1.0 - c.cdf(x)).unwrap_or(f64::NAN)
}

pub fn chi2_quantile(p: f64, dof: f64) -> f64 {
    ChiSquared::new(dof).map(|c| c.inverse_cdf(p)).unwrap_or(f64::NAN)
}

/// Pearson χ² test of `counts` against bin probabilities `probs`; bins with
/// expected count below 5 are pooled from the tails inward. Returns
/// `(statistic, dof, p-value)`.
pub fn chi2_gof(counts: &[u64], probs: &[f64]) -> (f64, f64, f64) {
    let n: u64 = counts.iter().sum();
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (c, p) in counts.iter().zip(probs) {
        o += *c as f64;
        e += p * n as f64;
        if e >= 5.0 {
            obs.push(o);
            exp.push(e);
            o = 0.0;
            e = 0.0;
        }
    }
    if let (Some(lo), Some(le)) = (obs.last_mut(), exp.last_mut()) {
        *lo += o;
        *le += e;
    }
    let stat: f64 = obs.iter().zip(&exp).map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = (obs.len() as f64 - 1.0).max(1.0);
    (stat, dof, chi2_sf(stat, dof))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::Normal;

    #[test]
    fn moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        assert!(skewness(&xs).abs() < 1e-15);
        assert!((excess_kurtosis(&xs) + 1.36).abs() < 1e-12);
        let (mu, cov) = covariance(&[1.0, 0.0, 3.0, 0.0], 2);
        assert_eq!(mu, vec![2.0, 0.0]);
        assert_eq!(cov, vec![2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn ks_one_sample() {
        let d = ks_statistic(&[0.5], |x| x);
        assert!((d - 0.5).abs() < 1e-15);
        let grid: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_statistic(&grid, |x| x) <= 0.5e-3 + 1e-12);
        let n = Normal::new(0.0, 1.0).unwrap();
        assert!(ks_statistic(&[0.0, 0.0], |x| n.cdf(x)) - 0.5 < 1e-15);
    }

    #[test]
    fn ks_two() {
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(ks_two_sample(&[1.0], &[2.0]), 1.0);
        assert!((ks_critical(10_000) - 0.01628).abs() < 1e-12);
    }

    #[test]
    fn chi2() {
        assert!((chi2_quantile(0.5, 2.0) - 2.0 * 2f64.ln()).abs() < 1e-9);
        assert!((chi2_sf(2.0 * 2f64.ln(), 2.0) - 0.5).abs() < 1e-9);
        let (s, dof, p) = chi2_gof(&[50, 50], &[0.5, 0.5]);
        assert_eq!((s, dof), (0.0, 1.0));
        assert!((p - 1.0).abs() < 1e-12);
    }
}
