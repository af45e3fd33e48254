//! Birkhoff averages, empirical measures, Lyapunov exponents and the
//! expansion / slow-recurrence diagnostics of the quotient map.

mod entropy;
mod histogram;
mod lyapunov;
mod nue;
mod sensitivity;

use alloc::string::String;
use alloc::vec::Vec;

pub use entropy::{entropy_plugin_estimate, itinerary, EntropyReport, GENERATING_PARTITION_CAVEAT};
pub use histogram::{empirical_measure, Axis, EmpiricalHistogram};
pub use lyapunov::{flow_lyapunov_spectrum, map_lyapunov, FlowLyapunovOptions, LyapunovReport};
pub use nue::{nue_diagnostics, nue_seed, NueReport, NueSeed};
pub use sensitivity::{sensitivity_flow, sensitivity_map, SensitivityReport};

use crate::math::KahanSum;
use crate::model::{ModelParams, SINGULAR_EPS};
use crate::ode::{Params3, Solver, State3, Stepper};
use crate::rng::StreamRng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Regularity {
    Continuous,
    Lipschitz,
    BoundedVariation,
}

/// A named real function on phase points.
#[derive(Clone)]
pub struct Observable<F> {
    pub name: String,
    pub regularity: Regularity,
    pub eval: F,
}

impl<F> Observable<F> {
    pub fn new(name: impl Into<String>, regularity: Regularity, eval: F) -> Self {
        Self { name: name.into(), regularity, eval }
    }
}

impl<F> core::fmt::Debug for Observable<F> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Observable").field("name", &self.name).field("regularity", &self.regularity).finish()
    }
}

/// A piecewise-smooth interval map. `apply` returns `None` on the singular
/// set, where the orbit must stop.
pub trait IntervalMap {
    fn apply(&self, x: f64) -> Option<f64>;
    fn derivative(&self, x: f64) -> f64;
}

impl IntervalMap for ModelParams {
    #[inline]
    fn apply(&self, x: f64) -> Option<f64> {
        if x.abs() <= SINGULAR_EPS {
            None
        } else {
            Some(self.f(x))
        }
    }
    #[inline]
    fn derivative(&self, x: f64) -> f64 {
        self.df(x)
    }
}

/// `x -> 2x mod 1`, the constant-derivative fixture.
#[derive(Debug, Clone, Copy, Default)]
pub struct Doubling;

impl IntervalMap for Doubling {
    fn apply(&self, x: f64) -> Option<f64> {
        let y = 2.0 * x;
        Some(if y >= 1.0 { y - 1.0 } else { y })
    }
    fn derivative(&self, _x: f64) -> f64 {
        2.0
    }
}

/// Long-run sampling of an interval map by independent segments.
///
/// Double-precision orbits of the model map are eventually periodic with
/// cycles of only `1e6..1e7` iterates, so a single long orbit samples a
/// finite cycle rather than the invariant measure. Each segment starts from
/// a uniform point of `[lo, hi)` drawn from its own RNG stream and discards
/// `burn_in` iterates.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Segments {
    pub count: u64,
    pub len: u64,
    pub burn_in: u64,
}

impl Segments {
    pub fn new(count: u64, len: u64, burn_in: u64) -> Result<Self> {
        if count == 0 || len == 0 {
            return Err(Error::InvalidArgument("segments need count > 0 and len > 0".into()));
        }
        Ok(Self { count, len, burn_in })
    }

    pub fn total(&self) -> u64 {
        self.count * self.len
    }

    /// Point of segment `i` after burn-in. Starts whose burn-in meets the
    /// singular set are redrawn from the same stream.
    pub fn start<M: IntervalMap>(&self, map: &M, domain: (f64, f64), seed: u64, i: u64) -> f64 {
        let mut rng = StreamRng::new(seed, i);
        'draw: loop {
            let mut x = rng.uniform_in(domain.0, domain.1);
            for _ in 0..self.burn_in {
                match map.apply(x) {
                    Some(y) => x = y,
                    None => continue 'draw,
                }
            }
            return x;
        }
    }

    /// Call `visit` on the `len` points of segment `i`; returns how many
    /// were visited (fewer if the orbit meets the singular set).
    pub fn visit<M: IntervalMap, F: FnMut(f64)>(
        &self,
        map: &M,
        domain: (f64, f64),
        seed: u64,
        i: u64,
        mut visit: F,
    ) -> u64 {
        let mut x = self.start(map, domain, seed, i);
        for k in 0..self.len {
            visit(x);
            if k + 1 < self.len {
                match map.apply(x) {
                    Some(y) => x = y,
                    None => return k + 1,
                }
            }
        }
        self.len
    }
}

/// Quotient domain of the model.
pub const MODEL_DOMAIN: (f64, f64) = (-0.5, 0.5);

/// Running and final time averages.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct BirkhoffReport {
    pub average: f64,
    /// `(horizon so far, running average)`.
    pub trace: Vec<(f64, f64)>,
    pub horizon: f64,
    /// Orbit stopped on the singular set before the requested horizon.
    pub partial: bool,
}

fn trace_stride(total: u64, points: usize) -> u64 {
    if points == 0 {
        u64::MAX
    } else {
        (total / points as u64).max(1)
    }
}

/// `(1/n) sum_{k<n} psi(f^k x0)` for an interval map.
pub fn birkhoff_map<M: IntervalMap, F: Fn(f64) -> f64>(
    map: &M,
    x0: f64,
    obs: &Observable<F>,
    n: u64,
    trace_points: usize,
) -> Result<BirkhoffReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("horizon must be > 0".into()));
    }
    let stride = trace_stride(n, trace_points);
    let mut sum = KahanSum::new();
    let mut trace = Vec::new();
    let mut x = x0;
    let mut done = 0u64;
    let mut partial = false;
    while done < n {
        sum.add((obs.eval)(x));
        done += 1;
        if done.is_multiple_of(stride) {
            trace.push((done as f64, sum.value() / done as f64));
        }
        if done < n {
            match map.apply(x) {
                Some(y) => x = y,
                None => {
                    partial = true;
                    break;
                }
            }
        }
    }
    Ok(BirkhoffReport { average: sum.value() / done as f64, trace, horizon: done as f64, partial })
}

/// `(1/T) int_0^T psi(X^t s0) dt` after discarding a transient, Simpson's
/// rule on each integrator step.
pub fn birkhoff_flow<F: Fn(&State3) -> f64>(
    s0: State3,
    p: &Params3,
    solver: Solver,
    transient: f64,
    horizon: f64,
    obs: &Observable<F>,
    trace_points: usize,
) -> Result<BirkhoffReport> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument("horizon must be > 0".into()));
    }
    let mut st = Stepper::new(s0, *p, solver)?;
    if transient > 0.0 {
        st.run_until(transient, |_| true)?;
    }
    let t_end = transient + horizon;
    let every = if trace_points == 0 { f64::INFINITY } else { horizon / trace_points as f64 };
    let mut next_mark = transient + every;
    let mut sum = KahanSum::new();
    let mut trace = Vec::new();
    while st.time() < t_end {
        let stop = next_mark.min(t_end);
        let step = st.advance(stop)?;
        let mid = step.eval(0.5 * (step.t0 + step.t1));
        let h = step.h();
        sum.add(h / 6.0 * ((obs.eval)(&step.y0) + 4.0 * (obs.eval)(&mid) + (obs.eval)(&step.y1)));
        if step.t1 >= next_mark {
            let el = step.t1 - transient;
            trace.push((el, sum.value() / el));
            next_mark += every;
        }
    }
    Ok(BirkhoffReport { average: sum.value() / horizon, trace, horizon, partial: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments_are_reproducible_and_independent() {
        let m = ModelParams::classical();
        let seg = Segments::new(3, 100, 50).unwrap();
        let a = seg.start(&m, MODEL_DOMAIN, 4, 1);
        assert_eq!(a, seg.start(&m, MODEL_DOMAIN, 4, 1));
        assert_ne!(a, seg.start(&m, MODEL_DOMAIN, 4, 2));
        let mut n = 0;
        assert_eq!(seg.visit(&m, MODEL_DOMAIN, 4, 0, |x| n += (x.abs() <= 0.5) as u64), 100);
        assert_eq!(n, 100);
    }

    #[test]
    fn constant_observable_averages_exactly() {
        let m = ModelParams::classical();
        let c = Observable::new("c", Regularity::Lipschitz, |_x: f64| 0.75);
        let r = birkhoff_map(&m, 0.123, &c, 10_000, 10).unwrap();
        assert_eq!(r.average, 0.75);
        assert_eq!(r.trace.len(), 10);
    }

    #[test]
    fn mirrored_seed_negates_average_of_x() {
        let m = ModelParams::classical();
        let id = Observable::new("x", Regularity::Lipschitz, |x: f64| x);
        let a = birkhoff_map(&m, 0.1234, &id, 100_000, 0).unwrap().average;
        let b = birkhoff_map(&m, -0.1234, &id, 100_000, 0).unwrap().average;
        assert_eq!(a, -b);
    }

    #[test]
    fn birkhoff_is_linear() {
        let m = ModelParams::classical();
        let o1 = Observable::new("x", Regularity::Lipschitz, |x: f64| x);
        let o2 = Observable::new("x2", Regularity::Lipschitz, |x: f64| x * x);
        let mix = Observable::new("mix", Regularity::Lipschitz, |x: f64| 2.0 * x - 3.0 * (x * x));
        let a = birkhoff_map(&m, 0.3, &o1, 50_000, 0).unwrap().average;
        let b = birkhoff_map(&m, 0.3, &o2, 50_000, 0).unwrap().average;
        let c = birkhoff_map(&m, 0.3, &mix, 50_000, 0).unwrap().average;
        assert!((c - (2.0 * a - 3.0 * b)).abs() < 1e-13);
    }

    #[test]
    fn singular_orbit_is_partial() {
        let m = ModelParams::classical();
        let o = Observable::new("x", Regularity::Lipschitz, |x: f64| x);
        let r = birkhoff_map(&m, 0.0, &o, 100, 0).unwrap();
        assert!(r.partial);
        assert_eq!(r.horizon, 1.0);
    }

    #[test]
    fn flow_average_of_constant() {
        let o = Observable::new("one", Regularity::Lipschitz, |_s: &State3| 1.0);
        let r =
            birkhoff_flow(State3::new(1.0, 1.0, 1.0), &Params3::CLASSICAL, Solver::Rk4 { dt: 1e-2 }, 1.0, 10.0, &o, 5)
                .unwrap();
        assert!((r.average - 1.0).abs() < 1e-12);
        assert_eq!(r.trace.len(), 5);
    }
}
