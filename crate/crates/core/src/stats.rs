//! Small statistical helpers shared by tests and the experiment harness.

use crate::streams::ParticleStream;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// The error function, re-exported for oracle formulas.
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the sample mean (unbiased variance).
pub fn stderr_of_mean(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n as f64 - 1.0);
    (var / n as f64).sqrt()
}

/// Standard error of a Bernoulli proportion estimate.
pub fn binomial_stderr(p_hat: f64, n: usize) -> f64 {
    (p_hat.clamp(0.0, 1.0) * (1.0 - p_hat.clamp(0.0, 1.0)) / n as f64).sqrt()
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2);
    let mx = mean(x);
    let my = mean(y);
    let mut num = 0.0;
    let mut den = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        num += (xi - mx) * (yi - my);
        den += (xi - mx) * (xi - mx);
    }
    num / den
}

/// Slope of `ln y` against `ln x`; inputs must be positive.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    slope(&lx, &ly)
}

/// Percentile bootstrap upper confidence bound for the mean of `xs`.
///
/// Resamples with replacement `n_resamples` times from a dedicated
/// deterministic stream, so reports are reproducible.
pub fn bootstrap_upper_bound(xs: &[f64], level: f64, n_resamples: usize, seed: u64) -> f64 {
    assert!(!xs.is_empty());
    assert!((0.0..1.0).contains(&level) || level == 1.0);
    let mut stream = ParticleStream::new(seed, u64::MAX);
    let n = xs.len();
    let mut means = Vec::with_capacity(n_resamples);
    for _ in 0..n_resamples {
        let mut acc = 0.0;
        for _ in 0..n {
            // uniform is on (0,1]; shift the top value down one slot.
            let idx = ((stream.next_block().uniform * n as f64).ceil() as usize).min(n) - 1;
            acc += xs[idx];
        }
        means.push(acc / n as f64);
    }
    means.sort_by(|a, b| a.total_cmp(b));
    let idx = ((level * n_resamples as f64).ceil() as usize).clamp(1, n_resamples) - 1;
    means[idx]
}

/// Kolmogorov-Smirnov statistic of a sorted sample against a continuous
/// reference CDF.
///
/// The two-sided comparison below assumes the reference has no atoms;
/// mixed laws should test their atoms separately and pass the conditional
/// CDF of the continuous part.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((((i + 1) as f64) / n - f).abs());
        d = d.max((f - (i as f64) / n).abs());
    }
    d
}

/// Critical KS value at level 0.01 for sample size `n` (asymptotic).
pub fn ks_critical_01(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.0) - 0.841344746068543).abs() < 1e-12);
        assert!((normal_cdf(-2.0) - 0.0227501319481792).abs() < 1e-12);
    }

    #[test]
    fn slope_recovers_linear_law() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 4.0, 6.0, 8.0];
        assert!((slope(&x, &y) - 2.0).abs() < 1e-14);
        let p: Vec<f64> = x.iter().map(|v| v.powf(-0.5)).collect();
        assert!((log_log_slope(&x, &p) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_bound_sits_above_mean() {
        let xs: Vec<f64> = (0..200).map(|i| (i % 7) as f64).collect();
        let ub = bootstrap_upper_bound(&xs, 0.99, 500, 11);
        let m = mean(&xs);
        assert!(ub > m);
        assert!(ub < m + 1.0);
    }

    #[test]
    fn ks_detects_wrong_distribution() {
        // Uniform(0,1) sample against its own CDF and against a shifted one.
        let mut stream = ParticleStream::new(3, 1);
        let mut xs: Vec<f64> = (0..5000).map(|_| stream.next_block().uniform).collect();
        xs.sort_by(|a, b| a.total_cmp(b));
        let d_ok = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        let d_bad = ks_statistic(&xs, |x| (x * x).clamp(0.0, 1.0));
        assert!(d_ok < ks_critical_01(xs.len()), "d_ok={d_ok}");
        assert!(d_bad > ks_critical_01(xs.len()));
    }
}

