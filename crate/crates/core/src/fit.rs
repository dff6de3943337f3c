//! Least-squares line fits used for exponents and rates.

use serde::{Deserialize, Serialize};

/// Result of an ordinary least-squares fit `y ≈ slope·x + intercept`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Sum of squared residuals.
    pub sse: f64,
    /// Total sum of squares of `y` about its mean.
    pub sst: f64,
    pub count: usize,
}

/// Fit a line through the points; `None` with fewer than two distinct abscissae.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<LinearFit> {
    let n = points.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = points.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    let sst = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    Some(LinearFit { slope, intercept, sse, sst, count: n })
}
