//! Small descriptive-statistics helpers shared by the Monte Carlo estimators.

use serde::{Deserialize, Serialize};

/// One-sided 95% normal quantile.
pub const Z95_ONE_SIDED: f64 = 1.6448536269514722;
/// Two-sided 95% normal quantile.
pub const Z95_TWO_SIDED: f64 = 1.959963984540054;

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub se: f64,
}

impl Summary {
    /// Values are summed in slice order so results do not depend on how they
    /// were produced.
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary { n, mean: f64::NAN, std_dev: f64::NAN, se: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Summary { n, mean, std_dev: 0.0, se: f64::INFINITY };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let std_dev = var.sqrt();
        Summary { n, mean, std_dev, se: std_dev / (n as f64).sqrt() }
    }
}

pub fn mean(values: &[f64]) -> f64 {
    Summary::of(values).mean
}

/// Linear-interpolated quantile, `prob` in [0, 1].
pub fn quantile(values: &[f64], prob: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = prob.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Large-sample standard error of the median under approximate normality.
pub fn median_se(values: &[f64]) -> f64 {
    let s = Summary::of(values);
    (std::f64::consts::PI / 2.0).sqrt() * s.se
}

/// Ordinary least-squares fit `y = intercept + slope * x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

/// Slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    linear_fit(&lx, &ly).1
}

/// Empirical survival function `P(X > t)` evaluated at each threshold.
pub fn survival(values: &[f64], thresholds: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    thresholds
        .iter()
        .map(|t| values.iter().filter(|v| **v > *t).count() as f64 / n)
        .collect()
}

/// True when `values` never rises by more than `k` combined standard errors
/// between neighbours and ends strictly below where it started.
pub fn is_decreasing_within(values: &[f64], ses: &[f64], k: f64) -> bool {
    if values.len() < 2 {
        return false;
    }
    let steps_ok = values.windows(2).zip(ses.windows(2)).all(|(v, s)| {
        let tol = k * (s[0].powi(2) + s[1].powi(2)).sqrt();
        v[1] <= v[0] + tol
    });
    steps_ok && values[values.len() - 1] < values[0]
}
