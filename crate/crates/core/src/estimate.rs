//! The universal Monte Carlo return type and deterministic reductions.
//!
//! All estimators fold per-sample values with pairwise (tree) summation over
//! the sample index, so a result is bitwise-identical for a fixed seed no
//! matter how many workers produced the values.

use serde::Serialize;

/// Mean, standard error of the mean, sample count, and the master seed the
/// estimate was produced from.
#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
    pub master_seed: u64,
}

impl Estimate {
    pub fn from_values(values: &[f64], master_seed: u64) -> Self {
        let n = values.len();
        if n == 0 {
            return Estimate { mean: f64::NAN, std_error: f64::NAN, n: 0, master_seed };
        }
        let sum = pairwise_sum(values);
        let mean = sum / n as f64;
        let sq = pairwise_sum_by(values, |v| (v - mean) * (v - mean));
        let var = if n > 1 { sq / (n as f64 - 1.0) } else { 0.0 };
        Estimate { mean, std_error: (var / n as f64).sqrt(), n, master_seed }
    }

    /// |a - b| expressed in pooled standard errors.
    pub fn sigma_distance(&self, other: &Estimate) -> f64 {
        let pooled = (self.std_error.powi(2) + other.std_error.powi(2)).sqrt();
        if pooled == 0.0 {
            if self.mean == other.mean {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - other.mean).abs() / pooled
        }
    }

    /// |mean - target| in standard errors against a known constant.
    pub fn sigma_to(&self, target: f64) -> f64 {
        if self.std_error == 0.0 {
            if self.mean == target {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - target).abs() / self.std_error
        }
    }
}

/// Pairwise summation; deterministic for a fixed input order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    pairwise_sum_by(values, |v| *v)
}

pub fn pairwise_sum_by<T, F: Fn(&T) -> f64 + Copy>(values: &[T], f: F) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => f(&values[0]),
        2 => f(&values[0]) + f(&values[1]),
        n => {
            let mid = n / 2;
            pairwise_sum_by(&values[..mid], f) + pairwise_sum_by(&values[mid..], f)
        }
    }
}

/// Effective sample size of importance weights: (sum w)^2 / sum w^2.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s = pairwise_sum(weights);
    let s2 = pairwise_sum_by(weights, |w| w * w);
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

/// Self-normalized estimate of sum(w f)/sum(w) with a delete-one jackknife
/// standard error.
pub fn self_normalized(weights: &[f64], fvals: &[f64], master_seed: u64) -> Estimate {
    assert_eq!(weights.len(), fvals.len());
    let n = weights.len();
    let sw = pairwise_sum(weights);
    let swf = {
        let prods: Vec<f64> = weights.iter().zip(fvals).map(|(w, f)| w * f).collect();
        pairwise_sum(&prods)
    };
    let mean = swf / sw;
    if n < 2 {
        return Estimate { mean, std_error: f64::NAN, n, master_seed };
    }
    // Delete-one replicates R_i = (swf - w_i f_i) / (sw - w_i).
    let reps: Vec<f64> = weights
        .iter()
        .zip(fvals)
        .map(|(w, f)| (swf - w * f) / (sw - w))
        .collect();
    let rbar = pairwise_sum(&reps) / n as f64;
    let ssq = pairwise_sum_by(&reps, |r| (r - rbar) * (r - rbar));
    let se = ((n as f64 - 1.0) / n as f64 * ssq).sqrt();
    Estimate { mean, std_error: se, n, master_seed }
}

/// Jackknife standard error for the ratio mean(a)/mean(b); used for
/// partition-function ratios with common random numbers.
pub fn ratio_estimate(a: &[f64], b: &[f64], master_seed: u64) -> Estimate {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let sa = pairwise_sum(a);
    let sb = pairwise_sum(b);
    let mean = sa / sb;
    if n < 2 {
        return Estimate { mean, std_error: f64::NAN, n, master_seed };
    }
    let reps: Vec<f64> = a.iter().zip(b).map(|(x, y)| (sa - x) / (sb - y)).collect();
    let rbar = pairwise_sum(&reps) / n as f64;
    let ssq = pairwise_sum_by(&reps, |r| (r - rbar) * (r - rbar));
    let se = ((n as f64 - 1.0) / n as f64 * ssq).sqrt();
    Estimate { mean, std_error: se, n, master_seed }
}
