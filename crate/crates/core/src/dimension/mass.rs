use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{fit_ols, FitResult, RadiiGrid};
use crate::{math, Error, Result};

/// Fewest samples a mass curve may be estimated from.
pub const MIN_SAMPLES: u64 = 100_000;
/// Fewest samples a ball must hold for its radius to be kept.
pub const MIN_BALL_COUNT: u64 = 100;

/// Streaming ball counts around several probe points at once.
#[derive(Debug, Clone, PartialEq)]
pub struct BallTally {
    pub radii: Vec<f64>,
    /// `buckets[p][i]`: samples whose distance to probe `p` lies in
    /// `(radii[i-1], radii[i]]`.
    pub buckets: Vec<Vec<u64>>,
    pub total: u64,
}

impl BallTally {
    pub fn new(probes: usize, radii: Vec<f64>) -> Self {
        debug_assert!(radii.windows(2).all(|w| w[0] < w[1]));
        let k = radii.len();
        Self { radii, buckets: vec![vec![0; k]; probes], total: 0 }
    }

    #[inline]
    pub fn add(&mut self, probe: usize, d: f64) {
        if d > *self.radii.last().unwrap() {
            return;
        }
        let i = self.radii.partition_point(|&r| r < d);
        self.buckets[probe][i] += 1;
    }

    /// Count one sample toward the normalization (shared by all probes).
    #[inline]
    pub fn sample_done(&mut self) {
        self.total += 1;
    }

    pub fn merge(&mut self, other: &BallTally) {
        assert_eq!(self.radii, other.radii);
        for (a, b) in self.buckets.iter_mut().zip(&other.buckets) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.total += other.total;
    }

    /// Cumulative mass curve of probe `p`, dropping radii with fewer than
    /// `min_count` samples.
    pub fn curve(&self, p: usize, min_count: u64) -> Result<MassCurve> {
        let mut cum = 0u64;
        let mut counts = Vec::with_capacity(self.radii.len());
        for &c in &self.buckets[p] {
            cum += c;
            counts.push(cum);
        }
        MassCurve::from_counts(&self.radii, &counts, self.total, min_count)
    }
}

/// `mu(B_r(x0))` against `r`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MassCurve {
    pub radii: Vec<f64>,
    pub masses: Vec<f64>,
    /// Raw counts per kept radius (empty for synthetic curves).
    pub counts: Vec<u64>,
    pub total: u64,
    pub dropped: Vec<f64>,
    pub warnings: Vec<String>,
}

impl MassCurve {
    pub fn from_counts(radii: &[f64], counts: &[u64], total: u64, min_count: u64) -> Result<Self> {
        if total == 0 {
            return Err(Error::EmptySamples);
        }
        if *counts.last().unwrap_or(&0) == 0 {
            return Err(Error::CenterNotOnAttractor);
        }
        let mut out = MassCurve {
            radii: Vec::new(),
            masses: Vec::new(),
            counts: Vec::new(),
            total,
            dropped: Vec::new(),
            warnings: Vec::new(),
        };
        for (&r, &c) in radii.iter().zip(counts) {
            if c < min_count {
                out.dropped.push(r);
                out.warnings.push(alloc::format!("radius {r} dropped: {c} < {min_count} samples in the ball"));
            } else {
                out.radii.push(r);
                out.counts.push(c);
                out.masses.push(c as f64 / total as f64);
            }
        }
        Ok(out)
    }

    /// Synthetic curve from exact masses.
    pub fn from_masses(radii: &[f64], masses: &[f64]) -> Self {
        MassCurve {
            radii: radii.to_vec(),
            masses: masses.to_vec(),
            counts: Vec::new(),
            total: 0,
            dropped: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

/// Ball masses of a raw sample set around the point with distances `dist`.
pub fn ball_mass_curve<P, D: Fn(&P) -> f64>(samples: &[P], dist: D, grid: &RadiiGrid) -> Result<MassCurve> {
    grid.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if (samples.len() as u64) < MIN_SAMPLES {
        return Err(Error::TooFewPoints { got: samples.len(), need: MIN_SAMPLES as usize });
    }
    let mut t = BallTally::new(1, grid.radii());
    for s in samples {
        t.add(0, dist(s));
        t.sample_done();
    }
    t.curve(0, MIN_BALL_COUNT)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct LocalDimension {
    /// OLS of `ln mass` on `ln r`.
    pub fit: FitResult,
    pub d_hat: f64,
    /// Largest and smallest slope between consecutive radii.
    pub d_plus: f64,
    pub d_minus: f64,
    pub secants: Vec<f64>,
}

pub fn local_dimension(curve: &MassCurve) -> Result<LocalDimension> {
    let pts: Vec<(f64, f64)> = curve
        .radii
        .iter()
        .zip(&curve.masses)
        .filter(|(_, &m)| m > 0.0)
        .map(|(&r, &m)| (math::ln(r), math::ln(m)))
        .collect();
    if pts.len() < 3 {
        return Err(Error::TooFewPoints { got: pts.len(), need: 3 });
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let fit = fit_ols(&xs, &ys)?;
    let secants: Vec<f64> = pts.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
    let d_plus = secants.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let d_minus = secants.iter().copied().fold(f64::INFINITY, f64::min);
    // The OLS slope is a convex combination of the secants; clamp rounding.
    let d_hat = fit.slope.clamp(d_minus, d_plus);
    Ok(LocalDimension { fit, d_hat, d_plus, d_minus, secants })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DimensionPair {
    pub d_section: f64,
    pub d_flow: f64,
    /// `d_flow - (d_section + 1)`.
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DimensionPairReport {
    pub pairs: Vec<DimensionPair>,
    pub mean_difference: f64,
    pub mean_abs_difference: f64,
}

pub fn flow_vs_section_dimension(section: &[LocalDimension], flow: &[LocalDimension]) -> Result<DimensionPairReport> {
    if section.len() != flow.len() || section.is_empty() {
        return Err(Error::InvalidArgument("need equally many non-zero section and flow estimates".into()));
    }
    let pairs: Vec<DimensionPair> = section
        .iter()
        .zip(flow)
        .map(|(s, f)| DimensionPair { d_section: s.d_hat, d_flow: f.d_hat, difference: f.d_hat - (s.d_hat + 1.0) })
        .collect();
    let n = pairs.len() as f64;
    Ok(DimensionPairReport {
        mean_difference: pairs.iter().map(|p| p.difference).sum::<f64>() / n,
        mean_abs_difference: pairs.iter().map(|p| p.difference.abs()).sum::<f64>() / n,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_mass_has_unit_mass_everywhere() {
        let samples = vec![0.25f64; 100_000];
        let c = ball_mass_curve(&samples, |x| (x - 0.25).abs(), &RadiiGrid::default()).unwrap();
        assert!(c.masses.iter().all(|&m| m == 1.0));
    }

    #[test]
    fn far_center_is_not_on_attractor() {
        let samples = vec![0.25f64; 100_000];
        let r = ball_mass_curve(&samples, |x| (x - 5.0).abs(), &RadiiGrid::default());
        assert_eq!(r, Err(Error::CenterNotOnAttractor));
    }

    #[test]
    fn power_law_secants_coincide() {
        let radii = RadiiGrid::new(1e-3, 1e-1, 9).unwrap().radii();
        let masses: Vec<f64> = radii.iter().map(|r| 3.0 * r.powf(1.37)).collect();
        let d = local_dimension(&MassCurve::from_masses(&radii, &masses)).unwrap();
        assert!((d.d_hat - 1.37).abs() < 1e-12);
        assert!((d.d_plus - 1.37).abs() < 1e-12 && (d.d_minus - 1.37).abs() < 1e-12);
    }

    #[test]
    fn tally_is_cumulative() {
        let mut t = BallTally::new(1, vec![0.1, 0.2, 0.4]);
        for d in [0.05, 0.1, 0.15, 0.3, 0.5] {
            t.add(0, d);
            t.sample_done();
        }
        let c = t.curve(0, 0).unwrap();
        assert_eq!(c.counts, [2, 3, 4]);
        assert_eq!(c.total, 5);
    }
}
