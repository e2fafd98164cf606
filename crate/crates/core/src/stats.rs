//! Small statistics toolkit: moments, regression, correlation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean (sample standard deviation / sqrt(n)).
pub fn std_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Two-sided 95% Student-t quantile.
pub fn t_quantile_975(dof: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179,
        2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
        2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    match dof {
        0 => f64::INFINITY,
        d if d <= 30 => TABLE[d - 1],
        d => 1.96 + 2.4 / d as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    /// Half-width of the 95% confidence interval on the slope.
    pub slope_ci95: f64,
}

/// Weighted least squares `y = intercept + slope x`.
///
/// With `weights = None` all points count equally. The slope error is
/// scaled by the residual variance, so it reflects the actual scatter.
pub fn linear_fit(xs: &[f64], ys: &[f64], weights: Option<&[f64]>) -> Result<LinearFit> {
    let n = xs.len();
    if n != ys.len() || weights.is_some_and(|w| w.len() != n) {
        return Err(Error::Fit("length mismatch".into()));
    }
    if n < 2 {
        return Err(Error::Fit(format!("need at least two points, got {n}")));
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    if (0..n).any(|i| !(w(i) > 0.0 && w(i).is_finite())) {
        return Err(Error::Fit("weights must be positive and finite".into()));
    }
    let sw: f64 = (0..n).map(w).sum();
    let mx = (0..n).map(|i| w(i) * xs[i]).sum::<f64>() / sw;
    let my = (0..n).map(|i| w(i) * ys[i]).sum::<f64>() / sw;
    let sxx: f64 = (0..n).map(|i| w(i) * (xs[i] - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Fit("abscissae are degenerate".into()));
    }
    let sxy: f64 = (0..n).map(|i| w(i) * (xs[i] - mx) * (ys[i] - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (slope_stderr, dof) = if n > 2 {
        let rss: f64 = (0..n).map(|i| w(i) * (ys[i] - intercept - slope * xs[i]).powi(2)).sum();
        (((rss / (n - 2) as f64) / sxx).sqrt(), n - 2)
    } else {
        (0.0, 0)
    };
    let slope_ci95 = if dof == 0 { f64::INFINITY } else { t_quantile_975(dof) * slope_stderr };
    Ok(LinearFit { slope, intercept, slope_stderr, slope_ci95 })
}

/// Fit of `ln y = c + p ln x`; `ys` must be positive.
pub fn log_log_fit(xs: &[f64], ys: &[f64], y_stderr: Option<&[f64]>) -> Result<LinearFit> {
    if ys.iter().chain(xs).any(|v| !(*v > 0.0)) {
        return Err(Error::Fit("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let weights: Option<Vec<f64>> = y_stderr.map(|se| {
        ys.iter()
            .zip(se)
            .map(|(y, s)| {
                let rel = s / y;
                if rel > 0.0 {
                    1.0 / (rel * rel)
                } else {
                    1.0
                }
            })
            .collect()
    });
    linear_fit(&lx, &ly, weights.as_deref())
}
