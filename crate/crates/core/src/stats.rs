//! Small statistical helpers used by the diagnostics.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Linear interpolation of the order statistics.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// One-sample Kolmogorov–Smirnov statistic against a continuous CDF.
pub fn ks_statistic(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Asymptotic p-value of the KS statistic `d` for `n` samples
/// (Stephens' small-sample correction of the Kolmogorov series).
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `(E|Y|, E Y²)` for `Y = m + σZ`; these are the first two moments of reflected
/// Brownian motion started at `m` when `σ² = t`.
pub fn folded_normal_moments(m: f64, sigma: f64) -> (f64, f64) {
    let first = sigma * (2.0 / PI).sqrt() * (-m * m / (2.0 * sigma * sigma)).exp()
        + m * (1.0 - 2.0 * normal_cdf(-m / sigma));
    (first, m * m + sigma * sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_of_a_perfect_grid() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.005).abs() < 1e-12);
        assert!(ks_p_value(d, 100) > 0.99);
        // the 1% critical value is about 1.628/√n
        let p = ks_p_value(1.628 / 100.0f64.sqrt(), 100);
        assert!((p - 0.01).abs() < 0.003, "{p}");
    }

    #[test]
    fn folded_moments_limits() {
        let (a, b) = folded_normal_moments(0.0, 1.0);
        assert!((a - (2.0 / PI).sqrt()).abs() < 1e-14);
        assert_eq!(b, 1.0);
        let (a, _) = folded_normal_moments(10.0, 1.0);
        assert!((a - 10.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_and_variance() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!((variance(&v) - 5.0 / 3.0).abs() < 1e-15);
    }
}
