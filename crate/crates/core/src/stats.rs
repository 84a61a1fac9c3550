//! Small statistics toolkit: estimates with standard errors, jackknifed
//! variances, deterministic summation and log-linear slope fits.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// A Monte-Carlo estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn exact(value: f64, samples: usize) -> Self {
        Estimate {
            mean: value,
            stderr: 0.0,
            samples,
        }
    }

    /// Sample mean with standard error `sd / sqrt(N)`.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                stderr: f64::INFINITY,
                samples: 0,
            };
        }
        let mean = pairwise_sum(xs) / n as f64;
        if n < 2 {
            return Estimate {
                mean,
                stderr: f64::INFINITY,
                samples: n,
            };
        }
        let ss: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&ss) / (n - 1) as f64;
        Estimate {
            mean,
            stderr: (var / n as f64).sqrt(),
            samples: n,
        }
    }

    /// `|mean - reference|` in units of the standard error.
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = (self.mean - reference).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.stderr
        }
    }

    pub fn scale(self, k: f64) -> Self {
        Estimate {
            mean: self.mean * k,
            stderr: self.stderr * k.abs(),
            samples: self.samples,
        }
    }
}

/// Unbiased sample variance of `xs` with a leave-one-out jackknife standard
/// error. The jackknife needs at least three samples; with two the error is
/// reported as infinite.
pub fn variance_jackknife(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n < 2 {
        return Estimate {
            mean: f64::NAN,
            stderr: f64::INFINITY,
            samples: n,
        };
    }
    let nf = n as f64;
    let mean = pairwise_sum(xs) / nf;
    let dev: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let sq: Vec<f64> = dev.iter().map(|d| d * d).collect();
    let ss = pairwise_sum(&sq);
    let var = ss / (nf - 1.0);
    if n < 3 {
        return Estimate {
            mean: var,
            stderr: f64::INFINITY,
            samples: n,
        };
    }
    // Leave-one-out: removing x_i lowers the centred sum of squares by
    // d_i^2 * n / (n - 1).
    let loo: Vec<f64> = sq
        .iter()
        .map(|d2| (ss - d2 * nf / (nf - 1.0)) / (nf - 2.0))
        .collect();
    let loo_mean = pairwise_sum(&loo) / nf;
    let spread: Vec<f64> = loo.iter().map(|v| (v - loo_mean) * (v - loo_mean)).collect();
    let se = ((nf - 1.0) / nf * pairwise_sum(&spread)).sqrt();
    Estimate {
        mean: var,
        stderr: se,
        samples: n,
    }
}

/// Pairwise (cascade) summation in a fixed order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if xs.len() <= LEAF {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Least-squares slope of `y` against `x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    /// Two-sided 95% confidence interval from Student's t with `k - 2`
    /// degrees of freedom.
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Option<SlopeFit> {
    let k = x.len();
    if k < 3 || y.len() != k {
        return None;
    }
    let kf = k as f64;
    let mx = x.iter().sum::<f64>() / kf;
    let my = y.iter().sum::<f64>() / kf;
    let sxx: f64 = x.iter().map(|xi| (xi - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| (yi - intercept - slope * xi).powi(2))
        .sum();
    let dof = kf - 2.0;
    let se = (rss / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(1.96);
    Some(SlopeFit {
        slope,
        intercept,
        slope_stderr: se,
        ci_low: slope - t * se,
        ci_high: slope + t * se,
    })
}
