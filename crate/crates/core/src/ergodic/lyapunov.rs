use alloc::vec;
use alloc::vec::Vec;

use super::IntervalMap;
use crate::math::{self, KahanSum};
use crate::ode::{propagate_jet, Jet, Params3, Solver, State3, Stepper};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct LyapunovReport {
    /// Sorted descending; per unit time (flow) or per iterate (map).
    pub exponents: Vec<f64>,
    pub horizon: f64,
    pub renorm_period: Option<f64>,
    /// `(horizon so far, running estimates)`.
    pub trace: Vec<(f64, Vec<f64>)>,
    /// Map only: the largest `ln f'` seen along the orbit.
    pub max_log_derivative: Option<f64>,
    pub partial: bool,
}

/// `(1/n) sum ln |f'(f^k x0)|`.
pub fn map_lyapunov<M: IntervalMap>(map: &M, x0: f64, n: u64, trace_points: usize) -> Result<LyapunovReport> {
    if n < 1000 {
        return Err(Error::InvalidArgument(alloc::format!("map_lyapunov needs n >= 1000, got {n}")));
    }
    let stride = (n / trace_points.max(2) as u64).max(1);
    let mut sum = KahanSum::new();
    let mut max_log = f64::NEG_INFINITY;
    let mut trace = Vec::new();
    let mut x = x0;
    let mut done = 0u64;
    let mut partial = false;
    while done < n {
        let l = math::ln(map.derivative(x).abs());
        sum.add(l);
        max_log = max_log.max(l);
        done += 1;
        if done.is_multiple_of(stride) || done == n {
            trace.push((done as f64, vec![sum.value() / done as f64]));
        }
        match map.apply(x) {
            Some(y) => x = y,
            None => {
                partial = done < n;
                break;
            }
        }
    }
    if trace.len() < 2 {
        trace.insert(0, (1.0, vec![trace.first().map_or(0.0, |t| t.1[0])]));
    }
    Ok(LyapunovReport {
        exponents: vec![sum.value() / done as f64],
        horizon: done as f64,
        renorm_period: None,
        trace,
        max_log_derivative: Some(max_log),
        partial,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct FlowLyapunovOptions {
    /// RK4 step for the tangent system.
    pub dt: f64,
    /// Time discarded before the frame starts (state only).
    pub transient: f64,
    pub trace_points: usize,
}

impl Default for FlowLyapunovOptions {
    fn default() -> Self {
        Self { dt: 5e-3, transient: 20.0, trace_points: 50 }
    }
}

/// Benettin/QR estimate of all three exponents of the Lorenz flow.
pub fn flow_lyapunov_spectrum(
    s0: State3,
    p: &Params3,
    t: f64,
    renorm_period: f64,
    opts: &FlowLyapunovOptions,
) -> Result<LyapunovReport> {
    if !(t >= 100.0) {
        return Err(Error::InvalidArgument(alloc::format!("flow spectrum needs T >= 100, got {t}")));
    }
    if !(renorm_period > 0.0 && renorm_period <= t) {
        return Err(Error::InvalidArgument(alloc::format!("bad renormalization period {renorm_period}")));
    }
    let mut start = s0;
    if opts.transient > 0.0 {
        let mut st = Stepper::new(s0, *p, Solver::Rk4 { dt: opts.dt })?;
        st.run_until(opts.transient, |_| true)?;
        start = st.state();
    }
    // Chunks are whole numbers of renormalization periods.
    let periods = math::floor(t / renorm_period + 1e-9).max(1.0) as u64;
    let chunks = (opts.trace_points.max(2) as u64).min(periods);
    let mut jet = Jet::new(start);
    let mut sums = [KahanSum::new(), KahanSum::new(), KahanSum::new()];
    let mut elapsed = 0.0;
    let mut trace = Vec::new();
    let mut done_periods = 0u64;
    for c in 0..chunks {
        let upto = periods * (c + 1) / chunks;
        let len = if c + 1 == chunks { t - elapsed } else { (upto - done_periods) as f64 * renorm_period };
        done_periods = upto;
        let (j, ledger) = propagate_jet(jet, p, len, renorm_period, opts.dt)?;
        jet = j;
        let s = ledger.sums();
        for k in 0..3 {
            sums[k].add(s[k]);
        }
        elapsed += len;
        trace.push((elapsed, sorted(&sums, elapsed)));
    }
    Ok(LyapunovReport {
        exponents: sorted(&sums, elapsed),
        horizon: t,
        renorm_period: Some(renorm_period),
        trace,
        max_log_derivative: None,
        partial: false,
    })
}

fn sorted(sums: &[KahanSum; 3], t: f64) -> Vec<f64> {
    let mut v: Vec<f64> = sums.iter().map(|s| s.value() / t).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ergodic::Doubling;
    use crate::model::ModelParams;
    use crate::ode::equilibrium_spectrum;

    #[test]
    fn doubling_has_exponent_ln2() {
        let r = map_lyapunov(&Doubling, 0.1, 10_000, 10).unwrap();
        assert_eq!(r.exponents[0], core::f64::consts::LN_2);
        assert!(r.trace.len() >= 2);
    }

    #[test]
    fn model_exponent_is_bracketed() {
        let m = ModelParams::classical();
        let r = map_lyapunov(&m, 0.2, 1_000_000, 10).unwrap();
        let l = r.exponents[0];
        assert!(l >= core::f64::consts::SQRT_2.ln());
        assert!(l <= r.max_log_derivative.unwrap());
        assert!(!r.partial);
    }

    #[test]
    fn short_horizon_rejected() {
        assert!(map_lyapunov(&Doubling, 0.1, 999, 10).is_err());
    }

    #[test]
    fn origin_recovers_eigenvalues() {
        let p = Params3::CLASSICAL;
        let opts = FlowLyapunovOptions { dt: 2e-3, transient: 0.0, trace_points: 4 };
        let r = flow_lyapunov_spectrum(State3::ORIGIN, &p, 100.0, 0.05, &opts).unwrap();
        let eig = equilibrium_spectrum(&p).unwrap().sorted_descending();
        for k in 0..3 {
            assert!(((r.exponents[k] - eig[k]) / eig[k]).abs() < 0.01, "{:?}", r.exponents);
        }
    }
}
