//! Test statistics used by the verification batteries: Kolmogorov-Smirnov,
//! chi-square goodness of fit, and least-squares tail fits.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// One-sample KS statistic of sorted samples against a CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let c = cdf(*x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((c - lo).abs()).max((hi - c).abs());
    }
    d
}

/// Chi-square goodness-of-fit over bins with known expected counts.
/// Returns (statistic, p_value) with dof = bins - 1.
pub fn chi2_gof(observed: &[usize], expected: &[f64]) -> (f64, f64) {
    assert_eq!(observed.len(), expected.len());
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(o, e)| {
            let d = *o as f64 - e;
            d * d / e
        })
        .sum();
    let dof = (observed.len() - 1) as f64;
    let dist = ChiSquared::new(dof).expect("positive dof");
    (stat, 1.0 - dist.cdf(stat))
}

/// Ordinary least squares y = a + b x. Returns (a, b, r_squared).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(u, v)| (u - mx) * (v - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (a, b, r2)
}

/// Slope of log y against log x (algebraic-tail exponent is -slope).
pub fn loglog_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (_, b, r2) = linear_fit(&lx, &ly);
    (b, r2)
}

/// Slope of log y against x (exponential rate is -slope).
pub fn loglinear_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (_, b, r2) = linear_fit(x, &ly);
    (b, r2)
}

/// Histogram counts over equal-probability bins given by ascending edges;
/// values outside the edge range fall into the first/last bin.
pub fn bin_counts(samples: &[f64], edges: &[f64]) -> Vec<usize> {
    let nbins = edges.len() + 1;
    let mut counts = vec![0usize; nbins];
    for s in samples {
        let idx = edges.partition_point(|e| e < s);
        counts[idx] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_uniform_exact() {
        let sorted: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let d = ks_statistic(&sorted, |x| x);
        assert!((d - 0.005).abs() < 1e-12);
    }

    #[test]
    fn chi2_matched_counts() {
        let obs = vec![10usize; 10];
        let exp = vec![10.0; 10];
        let (stat, p) = chi2_gof(&obs, &exp);
        assert_eq!(stat, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_line() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 3.0 * v).collect();
        let (a, b, r2) = linear_fit(&x, &y);
        assert!((a - 2.0).abs() < 1e-12);
        assert!((b + 3.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn loglog_recovers_exponent() {
        let x: Vec<f64> = (1..30).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 5.0 / (v * v)).collect();
        let (slope, r2) = loglog_slope(&x, &y);
        assert!((slope + 2.0).abs() < 1e-10);
        assert!(r2 > 0.999);
    }
}
