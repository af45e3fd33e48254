//! Local dimensions from ball masses, hitting and recurrence times, and the
//! log-log regressions used for every scaling law.

mod hitting;
mod mass;

use alloc::vec::Vec;

pub use hitting::{
    hitting_times_flow, hitting_times_map, hitting_times_suspension, loglaw_regression, recurrence_times_map,
    HitRecord, LogLawReport,
};
pub use mass::{
    ball_mass_curve, flow_vs_section_dimension, local_dimension, BallTally, DimensionPair, DimensionPairReport,
    LocalDimension, MassCurve, MIN_BALL_COUNT, MIN_SAMPLES,
};

use crate::{math, Error, Result};

/// Radii in geometric progression, ascending.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct RadiiGrid {
    pub r_min: f64,
    pub r_max: f64,
    pub count: usize,
}

impl Default for RadiiGrid {
    fn default() -> Self {
        Self { r_min: 1e-3, r_max: math::powf(10.0, -1.5), count: 7 }
    }
}

impl RadiiGrid {
    pub fn new(r_min: f64, r_max: f64, count: usize) -> Result<Self> {
        let g = Self { r_min, r_max, count };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_min > 0.0 && self.r_min < self.r_max && self.r_max.is_finite()) || self.count < 5 {
            return Err(Error::InvalidArgument(alloc::format!(
                "radii grid needs 0 < r_min < r_max and count >= 5, got [{}, {}] x {}",
                self.r_min,
                self.r_max,
                self.count
            )));
        }
        Ok(())
    }

    pub fn radii(&self) -> Vec<f64> {
        let (a, b) = (math::ln(self.r_min), math::ln(self.r_max));
        let n = self.count;
        (0..n)
            .map(|i| if i + 1 == n { self.r_max } else { math::exp(a + (b - a) * i as f64 / (n - 1) as f64) })
            .collect()
    }
}

/// Least-squares line `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub residual_rms: f64,
    pub r_squared: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

/// Ordinary least squares; needs at least 3 points with distinct abscissae.
pub fn fit_ols(xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    let w: Vec<f64> = alloc::vec![1.0; xs.len()];
    fit_wls(xs, ys, &w)
}

/// Weighted least squares with weights `w` (inverse variances). The slope
/// standard error uses the residual scale, so weights are relative.
pub fn fit_wls(xs: &[f64], ys: &[f64], w: &[f64]) -> Result<FitResult> {
    let n = xs.len();
    if ys.len() != n || w.len() != n {
        return Err(Error::InvalidArgument("fit inputs differ in length".into()));
    }
    if n < 3 {
        return Err(Error::TooFewPoints { got: n, need: 3 });
    }
    if xs.iter().chain(ys).chain(w).any(|v| !v.is_finite()) || w.iter().any(|&v| v <= 0.0) {
        return Err(Error::NonFinite("fit input"));
    }
    let sw: f64 = w.iter().sum();
    let mx = xs.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ys.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = xs[i] - mx;
        let dy = ys[i] - my;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * dy;
        syy += w[i] * dy * dy;
    }
    if !(sxx > 0.0) {
        return Err(Error::InvalidArgument("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ssr = 0.0;
    for i in 0..n {
        let e = ys[i] - (slope * xs[i] + intercept);
        ssr += w[i] * e * e;
    }
    let ssr = ssr.max(0.0);
    let dof = (n - 2) as f64;
    let r_squared = if syy > 0.0 { (1.0 - ssr / syy).clamp(0.0, 1.0) } else { 1.0 };
    let x_min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let x_max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(FitResult {
        slope,
        intercept,
        slope_stderr: math::sqrt(ssr / dof / sxx),
        residual_rms: math::sqrt(ssr / sw),
        r_squared,
        x_min,
        x_max,
        points: n,
    })
}

/// Weighted least squares where `w` are exact inverse variances: the slope
/// standard error is `1 / sqrt(sum w (x - xbar)^2)` with no residual rescaling.
pub fn fit_wls_known_variance(xs: &[f64], ys: &[f64], w: &[f64]) -> Result<FitResult> {
    let mut fit = fit_wls(xs, ys, w)?;
    let sw: f64 = w.iter().sum();
    let mx = xs.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(w).map(|(x, w)| w * (x - mx) * (x - mx)).sum();
    fit.slope_stderr = math::sqrt(1.0 / sxx);
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_geometric_and_hits_ends() {
        let g = RadiiGrid::new(1e-3, 1e-1, 5).unwrap().radii();
        assert_eq!(g.len(), 5);
        assert!((g[0] - 1e-3).abs() < 1e-18);
        assert_eq!(g[4], 1e-1);
        assert!((g[2] - 1e-2).abs() < 1e-15);
    }

    #[test]
    fn grid_rejects_too_few() {
        assert!(RadiiGrid::new(1e-3, 1e-1, 4).is_err());
        assert!(RadiiGrid::new(1e-1, 1e-3, 6).is_err());
    }

    #[test]
    fn ols_recovers_exact_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.7 * x - 0.4).collect();
        let f = fit_ols(&xs, &ys).unwrap();
        assert!((f.slope - 1.7).abs() < 1e-12);
        assert!((f.intercept + 0.4).abs() < 1e-12);
        assert!(f.residual_rms < 1e-12 && f.r_squared == 1.0);
    }

    #[test]
    fn ols_needs_three_points() {
        assert_eq!(fit_ols(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::TooFewPoints { got: 2, need: 3 }));
    }

    #[test]
    fn stderr_matches_textbook() {
        // numpy.polyfit(cov=True) style check on a small sample
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [1.1, 1.9, 3.2, 3.8, 5.1];
        let f = fit_ols(&xs, &ys).unwrap();
        assert!((f.slope - 0.99).abs() < 1e-12);
        // residuals .06 -.13 .18 -.21 .10, ssr = .107, sxx = 10
        assert!((f.slope_stderr - (0.107f64 / 30.0).sqrt()).abs() < 1e-12);
    }
}
