use serde::Serialize;

use crate::error::{Error, Result};

/// Least-squares line through log-log points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Twice the standard error of the slope.
    pub half_width: f64,
}

/// Ordinary least squares on `(x, y)` pairs that are already logarithms.
pub fn rate_fit(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 4 {
        return Err(Error::InvalidInput(format!("rate fit needs at least 4 points, got {}", points.len())));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidInput("rate fit points must be finite".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= f64::EPSILON * points.iter().map(|p| p.0 * p.0).sum::<f64>().max(1.0) {
        return Err(Error::InvalidInput("rate fit abscissae are degenerate".into()));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let half_width = 2.0 * (ssr / (n - 2.0) / sxx).sqrt();
    Ok(RateFit { slope, intercept, half_width })
}

/// Fits `log2(err)` against `log2(x)`.
pub fn rate_fit_log2(xs: &[f64], errs: &[f64]) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = xs.iter().zip(errs).map(|(x, e)| (x.log2(), e.log2())).collect();
    rate_fit(&pts)
}
