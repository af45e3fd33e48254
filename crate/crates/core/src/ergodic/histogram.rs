use alloc::vec;
use alloc::vec::Vec;

use crate::{math, Error, Result};

/// Uniform grid on one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(hi > lo) || bins == 0 {
            return Err(Error::InvalidArgument(alloc::format!("bad axis [{lo}, {hi}] with {bins} bins")));
        }
        Ok(Self { lo, hi, bins })
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn lower_edge(&self, i: usize) -> f64 {
        self.lo + (self.hi - self.lo) * (i as f64 / self.bins as f64)
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (self.hi - self.lo) * ((i as f64 + 0.5) / self.bins as f64)
    }

    /// Bin index; the upper edge belongs to the last bin.
    #[inline]
    pub fn index(&self, v: f64) -> Option<usize> {
        if !(v >= self.lo && v <= self.hi) {
            return None;
        }
        let i = math::floor((v - self.lo) / (self.hi - self.lo) * self.bins as f64) as usize;
        Some(i.min(self.bins - 1))
    }
}

/// Box-partition empirical measure; bins are stored row-major over axes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EmpiricalHistogram {
    pub axes: Vec<Axis>,
    pub counts: Vec<u64>,
    pub total: u64,
    pub out_of_grid: u64,
}

impl EmpiricalHistogram {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidArgument("histogram needs at least one axis".into()));
        }
        let n: usize = axes.iter().map(|a| a.bins).product();
        Ok(Self { axes, counts: vec![0; n], total: 0, out_of_grid: 0 })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    fn flat_index(&self, point: &[f64]) -> Option<usize> {
        let mut idx = 0usize;
        for (a, &v) in self.axes.iter().zip(point) {
            idx = idx * a.bins + a.index(v)?;
        }
        Some(idx)
    }

    pub fn add(&mut self, point: &[f64]) {
        debug_assert_eq!(point.len(), self.axes.len());
        match self.flat_index(point) {
            Some(i) => {
                self.counts[i] += 1;
                self.total += 1;
            }
            None => self.out_of_grid += 1,
        }
    }

    /// Combine with a histogram on the same grid.
    pub fn merge(&mut self, other: &EmpiricalHistogram) -> Result<()> {
        if self.axes != other.axes {
            return Err(Error::InvalidArgument("cannot merge histograms on different grids".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        self.out_of_grid += other.out_of_grid;
        Ok(())
    }

    /// Normalized masses (in-grid samples only).
    pub fn masses(&self) -> Vec<f64> {
        let t = self.total as f64;
        self.counts.iter().map(|&c| if t > 0.0 { c as f64 / t } else { 0.0 }).collect()
    }

    /// Multi-index of a flat bin.
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.axes.len()];
        for (k, a) in self.axes.iter().enumerate().rev() {
            out[k] = flat % a.bins;
            flat /= a.bins;
        }
        out
    }

    pub fn lower_edges(&self, flat: usize) -> Vec<f64> {
        self.unflatten(flat).iter().zip(&self.axes).map(|(&i, a)| a.lower_edge(i)).collect()
    }

    pub fn centers(&self, flat: usize) -> Vec<f64> {
        self.unflatten(flat).iter().zip(&self.axes).map(|(&i, a)| a.center(i)).collect()
    }

    /// `sum_bins mass * g(center)`.
    pub fn integrate<G: Fn(&[f64]) -> f64>(&self, g: G) -> f64 {
        let mut s = math::KahanSum::new();
        let t = self.total as f64;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > 0 {
                s.add(c as f64 / t * g(&self.centers(i)));
            }
        }
        s.value()
    }
}

/// Histogram of `samples` (each of the grid's dimension).
pub fn empirical_measure<'a, I>(samples: I, axes: Vec<Axis>) -> Result<EmpiricalHistogram>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut h = EmpiricalHistogram::new(axes)?;
    let mut seen = false;
    for s in samples {
        seen = true;
        h.add(s);
    }
    if !seen {
        return Err(Error::EmptySamples);
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeated_sample_fills_one_bin() {
        let pts = [[0.1f64]; 100];
        let h = empirical_measure(pts.iter().map(|p| &p[..]), vec![Axis::new(-0.5, 0.5, 10).unwrap()]).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.masses().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn empty_is_an_error() {
        let none: [[f64; 1]; 0] = [];
        let r = empirical_measure(none.iter().map(|p| &p[..]), vec![Axis::new(0.0, 1.0, 4).unwrap()]);
        assert_eq!(r, Err(Error::EmptySamples));
    }

    #[test]
    fn out_of_grid_is_counted() {
        let pts = [[0.1f64, 0.1], [2.0, 0.0], [0.3, 0.4]];
        let axes = vec![Axis::new(0.0, 1.0, 4).unwrap(), Axis::new(0.0, 1.0, 4).unwrap()];
        let h = empirical_measure(pts.iter().map(|p| &p[..]), axes).unwrap();
        assert_eq!((h.total, h.out_of_grid), (2, 1));
        assert_eq!(h.unflatten(1 * 4 + 1), [1, 1]);
    }
}
