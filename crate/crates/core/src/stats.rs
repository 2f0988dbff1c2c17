//! Small statistics helpers shared by the estimators.

use crate::exec::pairwise_sum;
use serde::{Deserialize, Serialize};

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { estimate: value, std_error: 0.0, samples: 0 }
    }

    pub fn from_samples(xs: &[f64]) -> Self {
        let (m, v) = mean_var(xs);
        let n = xs.len();
        Self { estimate: m, std_error: (v / n as f64).sqrt(), samples: n }
    }

    /// `|a - b| <= z * sqrt(se_a^2 + se_b^2)`.
    pub fn agrees_with(&self, other: &Estimate, z: f64) -> bool {
        (self.estimate - other.estimate).abs() <= z * self.std_error.hypot(other.std_error)
    }
}

/// Sample mean and unbiased sample variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = pairwise_sum(xs) / n as f64;
    if n < 2 {
        return (m, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    (m, pairwise_sum(&dev) / (n - 1) as f64)
}

/// Sample covariance with the standard error of the covariance estimate.
pub fn covariance(xs: &[f64], ys: &[f64]) -> Estimate {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    let (mx, _) = mean_var(xs);
    let (my, _) = mean_var(ys);
    let prods: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let (c, vc) = mean_var(&prods);
    Estimate {
        estimate: c * n as f64 / (n as f64 - 1.0).max(1.0),
        std_error: (vc / n as f64).sqrt(),
        samples: n,
    }
}

/// Sample variance with the standard error of the variance estimate.
pub fn variance(xs: &[f64]) -> Estimate {
    covariance(xs, xs)
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// `log(mean(exp(xs)))` evaluated with a max shift, and the delta-method
/// standard error of that log-mean.
pub fn log_mean_exp(xs: &[f64]) -> Estimate {
    let shift = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = xs.iter().map(|x| (x - shift).exp()).collect();
    let e = Estimate::from_samples(&w);
    Estimate {
        estimate: shift + e.estimate.ln(),
        std_error: e.std_error / e.estimate,
        samples: xs.len(),
    }
}
