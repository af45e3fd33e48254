use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dimension::{fit_ols, FitResult};
use crate::ergodic::IntervalMap;
use crate::math::{self, KahanSum};
use crate::{Error, Result};

/// Fewest lags above the noise floor for the exponential fit.
pub const MIN_FIT_LAGS: usize = 5;

/// Lag sums for `C(n) = E[g(x_{k+n}) f(x_k)] - E[g] E[f]` along orbits.
/// Chunks from independent orbits merge by addition.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrTally {
    pub max_lag: usize,
    /// `sum_k f(x_k) g(x_{k+n})` and the number of pairs, per lag.
    pub prod: Vec<KahanSum>,
    pub pairs: Vec<u64>,
    /// Per-lag sums of `f(x_k)` and `g(x_{k+n})` over the pairs.
    pub lag_f: Vec<KahanSum>,
    pub lag_g: Vec<KahanSum>,
    pub sum_f: KahanSum,
    pub sum_g: KahanSum,
    pub sum_ff: KahanSum,
    pub sum_gg: KahanSum,
    pub count: u64,
    /// Orbits or ensemble members discarded at the singular line.
    pub discarded: u64,
}

impl CorrTally {
    pub fn new(max_lag: usize) -> Self {
        Self {
            max_lag,
            prod: vec![KahanSum::new(); max_lag + 1],
            pairs: vec![0; max_lag + 1],
            lag_f: vec![KahanSum::new(); max_lag + 1],
            lag_g: vec![KahanSum::new(); max_lag + 1],
            sum_f: KahanSum::new(),
            sum_g: KahanSum::new(),
            sum_ff: KahanSum::new(),
            sum_gg: KahanSum::new(),
            count: 0,
            discarded: 0,
        }
    }

    pub fn merge(&mut self, o: &CorrTally) {
        assert_eq!(self.max_lag, o.max_lag);
        for n in 0..=self.max_lag {
            self.prod[n].merge(&o.prod[n]);
            self.pairs[n] += o.pairs[n];
            self.lag_f[n].merge(&o.lag_f[n]);
            self.lag_g[n].merge(&o.lag_g[n]);
        }
        self.sum_f.merge(&o.sum_f);
        self.sum_g.merge(&o.sum_g);
        self.sum_ff.merge(&o.sum_ff);
        self.sum_gg.merge(&o.sum_gg);
        self.count += o.count;
        self.discarded += o.discarded;
    }

    /// Accumulate one orbit segment of length `len` after `burn_in`
    /// iterates. Returns `false` (and counts a discard) if the orbit meets
    /// the singular set.
    pub fn add_orbit<M, G, F>(&mut self, map: &M, x0: f64, burn_in: u64, len: u64, g: &G, f: &F) -> bool
    where
        M: IntervalMap,
        G: Fn(f64) -> f64,
        F: Fn(f64) -> f64,
    {
        let mut x = x0;
        for _ in 0..burn_in {
            match map.apply(x) {
                Some(y) => x = y,
                None => {
                    self.discarded += 1;
                    return false;
                }
            }
        }
        let mut fs = Vec::with_capacity(len as usize);
        let mut gs = Vec::with_capacity(len as usize);
        for k in 0..len {
            fs.push(f(x));
            gs.push(g(x));
            if k + 1 < len {
                match map.apply(x) {
                    Some(y) => x = y,
                    None => {
                        self.discarded += 1;
                        return false;
                    }
                }
            }
        }
        self.add_series(&fs, &gs);
        true
    }

    /// Accumulate one stationary series: pairs `(fs[k], gs[k + n])`.
    /// Inner sums are blocked so the compensated sums see few adds.
    pub fn add_series(&mut self, fs: &[f64], gs: &[f64]) {
        assert_eq!(fs.len(), gs.len());
        let len = fs.len();
        let l = self.max_lag;
        let mut block = vec![0.0f64; l + 1];
        let (mut bf, mut bg, mut bff, mut bgg) = (0.0, 0.0, 0.0, 0.0);
        let (mut tot_f, mut tot_g) = (KahanSum::new(), KahanSum::new());
        let mut start = 0;
        while start < len {
            let end = (start + 4096).min(len);
            for k in start..end {
                let gk = gs[k];
                let lo = k.saturating_sub(l);
                for (b, &fv) in block.iter_mut().zip(fs[lo..=k].iter().rev()) {
                    *b += fv * gk;
                }
                bf += fs[k];
                bg += gk;
                bff += fs[k] * fs[k];
                bgg += gk * gk;
            }
            for b in block.iter_mut().zip(self.prod.iter_mut()) {
                b.1.add(*b.0);
                *b.0 = 0.0;
            }
            self.sum_f.add(bf);
            self.sum_g.add(bg);
            tot_f.add(bf);
            tot_g.add(bg);
            self.sum_ff.add(bff);
            self.sum_gg.add(bgg);
            (bf, bg, bff, bgg) = (0.0, 0.0, 0.0, 0.0);
            start = end;
        }
        let (mut tail_f, mut lead_g) = (0.0, 0.0);
        for n in 0..=l.min(len.saturating_sub(1)) {
            if n > 0 {
                tail_f += fs[len - n];
                lead_g += gs[n - 1];
            }
            self.pairs[n] += (len - n) as u64;
            self.lag_f[n].add(tot_f.value() - tail_f);
            self.lag_g[n].add(tot_g.value() - lead_g);
        }
        self.count += len as u64;
    }

    /// One ensemble member: pairs `(f(x), g(T^n x))` for every lag.
    pub fn add_member<M, G, F>(&mut self, map: &M, x0: f64, g: &G, f: &F) -> bool
    where
        M: IntervalMap,
        G: Fn(f64) -> f64,
        F: Fn(f64) -> f64,
    {
        let mut vals = vec![0.0; self.max_lag + 1];
        let mut x = x0;
        for (n, v) in vals.iter_mut().enumerate() {
            *v = g(x);
            if n < self.max_lag {
                match map.apply(x) {
                    Some(y) => x = y,
                    None => {
                        self.discarded += 1;
                        return false;
                    }
                }
            }
        }
        let fx = f(x0);
        for n in 0..=self.max_lag {
            self.prod[n].add(fx * vals[n]);
            self.pairs[n] += 1;
            self.lag_f[n].add(fx);
            self.lag_g[n].add(vals[n]);
        }
        self.sum_f.add(fx);
        self.sum_g.add(vals[0]);
        self.sum_ff.add(fx * fx);
        self.sum_gg.add(vals[0] * vals[0]);
        self.count += 1;
        true
    }

    pub fn curve(&self, g_name: &str, f_name: &str) -> Result<CorrelationCurve> {
        if self.count < 2 {
            return Err(Error::EmptySamples);
        }
        let c = self.count as f64;
        let (mf, mg) = (self.sum_f.value() / c, self.sum_g.value() / c);
        let var_f = (self.sum_ff.value() / c - mf * mf).max(0.0);
        let var_g = (self.sum_gg.value() / c - mg * mg).max(0.0);
        let values: Vec<f64> = (0..=self.max_lag)
            .map(|n| {
                let m = self.pairs[n] as f64;
                if m > 0.0 {
                    self.prod[n].value() / m - (self.lag_f[n].value() / m) * (self.lag_g[n].value() / m)
                } else {
                    f64::NAN
                }
            })
            .collect();
        let scale = math::sqrt(var_f * var_g);
        Ok(CorrelationCurve {
            lags: (0..=self.max_lag).collect(),
            normalized: values.iter().map(|v| if scale > 0.0 { v / scale } else { 0.0 }).collect(),
            values,
            samples: self.count,
            noise_floor: 3.0 * scale / math::sqrt(c),
            g_name: g_name.into(),
            f_name: f_name.into(),
            discarded: self.discarded,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CorrelationCurve {
    pub lags: Vec<usize>,
    pub values: Vec<f64>,
    /// `values / sqrt(var g var f)`.
    pub normalized: Vec<f64>,
    pub samples: u64,
    /// `3 sqrt(var g var f) / sqrt(samples)`; lags at or below it never enter fits.
    pub noise_floor: f64,
    pub g_name: String,
    pub f_name: String,
    pub discarded: u64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CorrelationFit {
    /// `ln |C(n)|` against `n` over lags `0..usable`.
    pub fit: Option<FitResult>,
    pub usable_lags: usize,
    pub refused: Option<String>,
}

impl CorrelationCurve {
    /// Fit over the leading run of lags whose magnitude exceeds the floor.
    pub fn exponential_fit(&self) -> CorrelationFit {
        let usable = self.values.iter().take_while(|v| v.abs() > self.noise_floor).count();
        if usable < MIN_FIT_LAGS {
            return CorrelationFit {
                fit: None,
                usable_lags: usable,
                refused: Some(alloc::format!("noise floor reached after {usable} < {MIN_FIT_LAGS} lags")),
            };
        }
        let xs: Vec<f64> = (0..usable).map(|n| n as f64).collect();
        let ys: Vec<f64> = self.values[..usable].iter().map(|v| math::ln(v.abs())).collect();
        match fit_ols(&xs, &ys) {
            Ok(f) => CorrelationFit { fit: Some(f), usable_lags: usable, refused: None },
            Err(e) => CorrelationFit { fit: None, usable_lags: usable, refused: Some(alloc::format!("{e}")) },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ergodic::Doubling;
    use crate::model::ModelParams;
    use crate::rng::StreamRng;

    #[test]
    fn constant_observable_has_zero_covariance() {
        let m = ModelParams::classical();
        let mut t = CorrTally::new(5);
        t.add_orbit(&m, 0.2, 100, 100_000, &|_x| 3.0, &|x| x);
        let c = t.curve("const", "x").unwrap();
        assert!(c.values.iter().all(|v| v.abs() < 1e-14), "{:?}", c.values);
    }

    #[test]
    fn orbit_and_ensemble_agree_at_lag_zero() {
        let m = ModelParams::classical();
        let mut t = CorrTally::new(3);
        t.add_orbit(&m, 0.2, 100, 200_000, &|x| x, &|x| x);
        let c = t.curve("x", "x").unwrap();
        assert!(c.values[0] > 0.0);
        assert!((c.normalized[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dyadic_characters_are_uncorrelated() {
        let tau = core::f64::consts::TAU;
        let cosx = |x: f64| (tau * x).cos();
        let mut t = CorrTally::new(6);
        let mut rng = StreamRng::new(11, 0);
        for _ in 0..200_000 {
            t.add_member(&Doubling, rng.uniform(), &cosx, &cosx);
        }
        let c = t.curve("cos", "cos").unwrap();
        assert!((c.values[0] - 0.5).abs() < 0.01);
        for n in 1..=6 {
            assert!(c.values[n].abs() < c.noise_floor, "lag {n}: {}", c.values[n]);
        }
        assert!(c.exponential_fit().fit.is_none());
    }

    #[test]
    fn fair_coin_series_is_white() {
        let mut rng = StreamRng::new(5, 0);
        let bits: Vec<f64> = (0..1_000_000).map(|_| if rng.bit() { 1.0 } else { 0.0 }).collect();
        let mut t = CorrTally::new(6);
        t.add_series(&bits, &bits);
        let c = t.curve("coin", "coin").unwrap();
        assert!((c.values[0] / 0.25 - 1.0).abs() < 0.02);
        assert!(c.values[1..].iter().all(|v| v.abs() < c.noise_floor));
    }

    #[test]
    fn merge_equals_single_pass_counts() {
        let m = ModelParams::classical();
        let mut a = CorrTally::new(4);
        a.add_orbit(&m, 0.1, 10, 50_000, &|x| x, &|x| x);
        let mut b = CorrTally::new(4);
        b.add_orbit(&m, -0.3, 10, 70_000, &|x| x, &|x| x);
        a.merge(&b);
        assert_eq!(a.count, 120_000);
        assert_eq!(a.pairs[4], 120_000 - 8);
    }
}
