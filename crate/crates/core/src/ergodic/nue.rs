use alloc::vec::Vec;

use super::IntervalMap;
use crate::math::{self, KahanSum};
use crate::{Error, Result};

/// Per-seed expansion and recurrence averages for the quotient map, whose
/// singular set is `{0}`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct NueSeed {
    pub x0: f64,
    /// `(1/N) sum ln (1 / f'(x_k))` at the largest horizon.
    pub expansion_average: f64,
    /// `(1/n) sum -ln d_delta(x_k, 0)` for each horizon of the grid.
    pub recurrence_averages: Vec<f64>,
    /// Fraction of the first `N` iterates inside `(-delta, delta)`.
    pub visit_frequency: f64,
    /// `max |ln |x_k||` over those visits (0 if none).
    pub max_visit_log: f64,
    pub partial: bool,
}

impl NueSeed {
    /// `recurrence average <= visit frequency * max |ln|x||` at the largest
    /// horizon, which holds by definition of the truncated distance.
    pub fn bound_holds(&self) -> bool {
        let last = *self.recurrence_averages.last().unwrap_or(&0.0);
        last <= self.visit_frequency * self.max_visit_log * (1.0 + 1e-12) + 1e-300
    }
}

fn check_grid(n_grid: &[u64], delta: f64) -> Result<()> {
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[1] <= w[0]) || n_grid[0] == 0 {
        return Err(Error::InvalidArgument("n grid must be non-empty, positive and increasing".into()));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidArgument(alloc::format!("delta must lie in (0, 1/2), got {delta}")));
    }
    Ok(())
}

pub fn nue_seed<M: IntervalMap>(map: &M, x0: f64, n_grid: &[u64], delta: f64) -> Result<NueSeed> {
    check_grid(n_grid, delta)?;
    let n_max = *n_grid.last().unwrap();
    let mut exp_sum = KahanSum::new();
    let mut rec_sum = KahanSum::new();
    let mut rec = Vec::with_capacity(n_grid.len());
    let mut visits = 0u64;
    let mut max_log: f64 = 0.0;
    let mut next = 0usize;
    let mut x = x0;
    let mut k = 0u64;
    let mut partial = false;
    while k < n_max {
        exp_sum.add(-math::ln(map.derivative(x)));
        let ax = x.abs();
        if ax < delta {
            let l = -math::ln(ax);
            rec_sum.add(l);
            visits += 1;
            max_log = max_log.max(l.abs());
        }
        k += 1;
        if k == n_grid[next] {
            rec.push(rec_sum.value() / k as f64);
            next += 1;
        }
        if k < n_max {
            match map.apply(x) {
                Some(y) => x = y,
                None => {
                    partial = true;
                    break;
                }
            }
        }
    }
    while rec.len() < n_grid.len() {
        rec.push(f64::INFINITY);
    }
    Ok(NueSeed {
        x0,
        expansion_average: exp_sum.value() / k as f64,
        recurrence_averages: rec,
        visit_frequency: visits as f64 / k as f64,
        max_visit_log: max_log,
        partial,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct NueReport {
    pub delta: f64,
    pub epsilon: f64,
    pub n_grid: Vec<u64>,
    pub seeds: usize,
    /// Largest expansion average over seeds; `-c` in `<= -c`.
    pub max_expansion_average: f64,
    /// Seeds whose recurrence average exceeds `epsilon`, per horizon.
    pub tail_counts: Vec<u64>,
    pub tail_fractions: Vec<f64>,
    /// OLS slope of `ln(tail fraction)` against `n` over the nonzero fractions.
    pub log_fraction_slope: Option<f64>,
    /// Seeds violating the truncated-distance bound (must be 0).
    pub bound_violations: u64,
    pub partial_seeds: u64,
}

impl NueReport {
    pub fn from_seeds(seeds: &[NueSeed], n_grid: &[u64], delta: f64, epsilon: f64) -> Result<Self> {
        if seeds.is_empty() {
            return Err(Error::EmptySamples);
        }
        let mut tail = alloc::vec![0u64; n_grid.len()];
        let mut max_exp = f64::NEG_INFINITY;
        let mut viol = 0;
        let mut partial = 0;
        for s in seeds {
            max_exp = max_exp.max(s.expansion_average);
            for (t, &r) in tail.iter_mut().zip(&s.recurrence_averages) {
                if r > epsilon {
                    *t += 1;
                }
            }
            if !s.bound_holds() {
                viol += 1;
            }
            if s.partial {
                partial += 1;
            }
        }
        let fr: Vec<f64> = tail.iter().map(|&c| c as f64 / seeds.len() as f64).collect();
        let pts: Vec<(f64, f64)> =
            n_grid.iter().zip(&fr).filter(|(_, &f)| f > 0.0).map(|(&n, &f)| (n as f64, math::ln(f))).collect();
        let slope = if pts.len() >= 2 {
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
            Some(sxy / sxx)
        } else {
            None
        };
        Ok(Self {
            delta,
            epsilon,
            n_grid: n_grid.to_vec(),
            seeds: seeds.len(),
            max_expansion_average: max_exp,
            tail_counts: tail,
            tail_fractions: fr,
            log_fraction_slope: slope,
            bound_violations: viol,
            partial_seeds: partial,
        })
    }

    /// Tail fractions strictly decrease along the grid (zeros after the
    /// first zero count as decreasing).
    pub fn tail_decreasing(&self) -> bool {
        self.tail_fractions.windows(2).all(|w| w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0))
    }
}

/// Sequential driver over a list of seeds.
pub fn nue_diagnostics<M: IntervalMap>(
    map: &M,
    seeds: &[f64],
    n_grid: &[u64],
    delta: f64,
    epsilon: f64,
) -> Result<NueReport> {
    let per: Result<Vec<NueSeed>> = seeds.iter().map(|&x| nue_seed(map, x, n_grid, delta)).collect();
    NueReport::from_seeds(&per?, n_grid, delta, epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    #[test]
    fn expansion_average_is_at_most_minus_ln_sqrt2() {
        let m = ModelParams::classical();
        let seeds: Vec<f64> = (1..50).map(|i| -0.5 + i as f64 / 50.0 + 1e-3).collect();
        let r = nue_diagnostics(&m, &seeds, &[100, 1000], 0.05, 0.5).unwrap();
        assert!(r.max_expansion_average <= -core::f64::consts::SQRT_2.ln());
        assert_eq!(r.bound_violations, 0);
        assert_eq!(r.tail_counts.len(), 2);
    }

    #[test]
    fn bad_grid_rejected() {
        let m = ModelParams::classical();
        assert!(nue_seed(&m, 0.1, &[100, 10], 0.05).is_err());
        assert!(nue_seed(&m, 0.1, &[100], 0.7).is_err());
    }
}
