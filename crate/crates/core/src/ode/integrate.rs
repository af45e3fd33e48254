use alloc::vec::Vec;

use super::{field, Params3, State3};
use crate::{math, Error, Result};

/// Default spacing of trajectory output samples.
pub const DEFAULT_SAMPLE_DT: f64 = 1e-2;

/// Choice of integration scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum Solver {
    /// Classical fixed-step RK4. Steps are laid on the grid `k * dt`.
    Rk4 { dt: f64 },
    /// Dormand-Prince 5(4) with FSAL and the 4th-order dense output.
    Dopri45 { rtol: f64, atol: f64, h_max: f64 },
}

impl Solver {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Solver::Rk4 { dt } => {
                if !(dt > 0.0 && dt.is_finite()) {
                    return Err(Error::InvalidArgument(alloc::format!("rk4 dt must be > 0, got {dt}")));
                }
            }
            Solver::Dopri45 { rtol, atol, h_max } => {
                if !(rtol > 0.0 && atol > 0.0 && h_max > 0.0) {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "dopri45 tolerances and h_max must be > 0, got rtol={rtol}, atol={atol}, h_max={h_max}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Dense {
    /// Cubic Hermite from endpoint values and slopes.
    Hermite,
    /// Dormand-Prince continuous extension, coefficients `c1..c4`.
    Dopri([State3; 4]),
}

/// One accepted step with its continuous extension on `[t0, t1]`.
#[derive(Debug, Clone, Copy)]
pub struct Step {
    pub t0: f64,
    pub t1: f64,
    pub y0: State3,
    pub y1: State3,
    pub f0: State3,
    pub f1: State3,
    dense: Dense,
    p: Params3,
}

impl Step {
    pub fn h(&self) -> f64 {
        self.t1 - self.t0
    }

    /// Vector field at the dense-output state.
    pub fn velocity(&self, t: f64) -> State3 {
        field(&self.eval(t), &self.p)
    }

    /// Dense-output state at `t` (clamped to the step).
    pub fn eval(&self, t: f64) -> State3 {
        let h = self.h();
        if t <= self.t0 || h <= 0.0 {
            return self.y0;
        }
        if t >= self.t1 {
            return self.y1;
        }
        let th = (t - self.t0) / h;
        let th1 = 1.0 - th;
        match self.dense {
            Dense::Hermite => {
                let d = self.y1 - self.y0;
                let bump = d * (1.0 - 2.0 * th) + self.f0 * ((th - 1.0) * h) + self.f1 * (th * h);
                self.y0 + d * th + bump * (th * (th - 1.0))
            }
            Dense::Dopri([c1, c2, c3, c4]) => self.y0 + (c1 + (c2 + (c3 + c4 * th1) * th) * th1) * th,
        }
    }
}

// Dormand-Prince tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Stateful integrator producing one [`Step`] at a time.
#[derive(Debug, Clone)]
pub struct Stepper {
    p: Params3,
    solver: Solver,
    t: f64,
    y: State3,
    f: State3,
    h: f64,
    /// Fixed-step grid index, so that RK4 times are `k * dt` exactly.
    k: u64,
    pub accepted: u64,
    pub rejected: u64,
}

impl Stepper {
    pub fn new(s0: State3, p: Params3, solver: Solver) -> Result<Self> {
        if !s0.is_finite() {
            return Err(Error::NonFinite("initial state"));
        }
        solver.validate()?;
        let f = field(&s0, &p);
        let h = match solver {
            Solver::Rk4 { dt } => dt,
            Solver::Dopri45 { rtol, atol, h_max } => initial_step(&s0, &f, &p, rtol, atol).min(h_max),
        };
        Ok(Self { p, solver, t: 0.0, y: s0, f, h, k: 0, accepted: 0, rejected: 0 })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> State3 {
        self.y
    }

    pub fn params(&self) -> &Params3 {
        &self.p
    }

    /// Take one step, never passing `t_limit` (use `f64::INFINITY` for none).
    pub fn advance(&mut self, t_limit: f64) -> Result<Step> {
        match self.solver {
            Solver::Rk4 { dt } => self.advance_rk4(dt, t_limit),
            Solver::Dopri45 { rtol, atol, h_max } => self.advance_dopri(rtol, atol, h_max, t_limit),
        }
    }

    /// Step until `t_end`, handing each step to `visit`. Stops early if
    /// `visit` returns `false`.
    pub fn run_until<F: FnMut(&Step) -> bool>(&mut self, t_end: f64, mut visit: F) -> Result<()> {
        while self.t < t_end {
            let st = self.advance(t_end)?;
            if !visit(&st) {
                break;
            }
        }
        Ok(())
    }

    fn advance_rk4(&mut self, dt: f64, t_limit: f64) -> Result<Step> {
        let next_grid = (self.k + 1) as f64 * dt;
        let (t1, on_grid) = if next_grid <= t_limit { (next_grid, true) } else { (t_limit, false) };
        let h = t1 - self.t;
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(alloc::format!("no room to step: t={}, limit={t_limit}", self.t)));
        }
        let p = &self.p;
        let y = self.y;
        let k1 = self.f;
        let k2 = field(&(y + k1 * (0.5 * h)), p);
        let k3 = field(&(y + k2 * (0.5 * h)), p);
        let k4 = field(&(y + k3 * h), p);
        let y1 = y + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        if !y1.is_finite() {
            return Err(Error::IntegrationFailure { time: self.t, last_good: y });
        }
        let f1 = field(&y1, p);
        let st = Step { t0: self.t, t1, y0: y, y1, f0: k1, f1, dense: Dense::Hermite, p: *p };
        if on_grid {
            self.k += 1;
            self.t = next_grid;
            self.y = y1;
            self.f = f1;
        } else {
            // Off-grid stop; the following step closes the gap to (k+1)*dt.
            self.t = t1;
            self.y = y1;
            self.f = f1;
        }
        self.accepted += 1;
        Ok(st)
    }

    fn advance_dopri(&mut self, rtol: f64, atol: f64, h_max: f64, t_limit: f64) -> Result<Step> {
        let p = self.p;
        let y = self.y;
        let k1 = self.f;
        loop {
            let remaining = t_limit - self.t;
            if !(remaining > 0.0) {
                return Err(Error::InvalidArgument(alloc::format!("no room to step: t={}, limit={t_limit}", self.t)));
            }
            let mut h = self.h.min(h_max);
            let mut last = false;
            if h >= remaining {
                h = remaining;
                last = true;
            }
            let h_min = 1e-14 * self.t.abs().max(1.0);
            if h < h_min && !last {
                return Err(Error::IntegrationFailure { time: self.t, last_good: y });
            }
            let k2 = field(&(y + k1 * (A21 * h)), &p);
            let k3 = field(&(y + (k1 * A31 + k2 * A32) * h), &p);
            let k4 = field(&(y + (k1 * A41 + k2 * A42 + k3 * A43) * h), &p);
            let k5 = field(&(y + (k1 * A51 + k2 * A52 + k3 * A53 + k4 * A54) * h), &p);
            let k6 = field(&(y + (k1 * A61 + k2 * A62 + k3 * A63 + k4 * A64 + k5 * A65) * h), &p);
            let y1 = y + (k1 * A71 + k3 * A73 + k4 * A74 + k5 * A75 + k6 * A76) * h;
            let k7 = field(&y1, &p);
            let e = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + k7 * E7) * h;
            let sc = |a: f64, b: f64| atol + rtol * a.abs().max(b.abs());
            let (ex, ey, ez) = (e.x / sc(y.x, y1.x), e.y / sc(y.y, y1.y), e.z / sc(y.z, y1.z));
            let err = math::sqrt((ex * ex + ey * ey + ez * ez) / 3.0);
            if !err.is_finite() {
                self.rejected += 1;
                self.h = h * 0.1;
                if self.h < h_min {
                    return Err(Error::IntegrationFailure { time: self.t, last_good: y });
                }
                continue;
            }
            let fac = if err == 0.0 { 10.0 } else { (0.9 * math::powf(err, -0.2)).clamp(0.2, 10.0) };
            if err <= 1.0 {
                let t1 = if last { t_limit } else { self.t + h };
                let c1 = y1 - y;
                let c2 = k1 * h - c1;
                let c3 = c1 - k7 * h - c2;
                let c4 = (k1 * D1 + k3 * D3 + k4 * D4 + k5 * D5 + k6 * D6 + k7 * D7) * h;
                let st = Step { t0: self.t, t1, y0: y, y1, f0: k1, f1: k7, dense: Dense::Dopri([c1, c2, c3, c4]), p };
                self.t = t1;
                self.y = y1;
                self.f = k7;
                // A step clipped by the limit should not shrink the next one.
                if !last || fac < 1.0 {
                    self.h = h * fac;
                }
                self.accepted += 1;
                return Ok(st);
            }
            self.rejected += 1;
            self.h = h * fac.min(1.0);
            if self.h < h_min {
                return Err(Error::IntegrationFailure { time: self.t, last_good: y });
            }
        }
    }
}

/// Starting step from the Hairer-Norsett-Wanner heuristic.
fn initial_step(y: &State3, f: &State3, p: &Params3, rtol: f64, atol: f64) -> f64 {
    let sc = |v: f64| atol + rtol * v.abs();
    let rms = |a: &State3, b: &State3| {
        let (u, v, w) = (a.x / sc(b.x), a.y / sc(b.y), a.z / sc(b.z));
        math::sqrt((u * u + v * v + w * w) / 3.0)
    };
    let d0 = rms(y, y);
    let d1 = rms(f, y);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1 = *y + *f * h0;
    let f1 = field(&y1, p);
    let d2 = rms(&(f1 - *f), y) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { math::powf(0.01 / d1.max(d2), 0.2) };
    (100.0 * h0).min(h1)
}

/// Time-stamped samples of an orbit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State3>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(f64, State3)> {
        Some((*self.times.last()?, *self.states.last()?))
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, State3)> + '_ {
        self.times.iter().copied().zip(self.states.iter().copied())
    }
}

/// Integrate from `s0` over `[0, t_final]`, sampling every `sample_dt` and at
/// `t_final`. Internal steps do not depend on `sample_dt`; samples between
/// steps come from the dense output.
pub fn integrate(s0: State3, p: &Params3, t_final: f64, solver: Solver, sample_dt: f64) -> Result<Trajectory> {
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidArgument(alloc::format!("t_final must be finite and >= 0, got {t_final}")));
    }
    if !(sample_dt > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("sample_dt must be > 0, got {sample_dt}")));
    }
    let mut st = Stepper::new(s0, *p, solver)?;
    let n_samples = math::floor(t_final / sample_dt) as u64;
    let mut out = Trajectory::default();
    out.times.push(0.0);
    out.states.push(s0);
    let mut next = 1u64;
    let push = |out: &mut Trajectory, step: &Step, next: &mut u64| {
        while *next <= n_samples {
            let ts = *next as f64 * sample_dt;
            if ts > step.t1 || ts >= t_final {
                break;
            }
            out.times.push(ts);
            out.states.push(step.eval(ts));
            *next += 1;
        }
    };
    while st.time() < t_final {
        let step = st.advance(t_final)?;
        push(&mut out, &step, &mut next);
    }
    if t_final > 0.0 {
        out.times.push(t_final);
        out.states.push(st.state());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CL: Params3 = Params3::CLASSICAL;
    const DOPRI: Solver = Solver::Dopri45 { rtol: 1e-10, atol: 1e-12, h_max: 0.05 };

    #[test]
    fn zero_time_is_identity() {
        let s0 = State3::new(1.0, 2.0, 3.0);
        for solver in [Solver::Rk4 { dt: 1e-3 }, DOPRI] {
            let tr = integrate(s0, &CL, 0.0, solver, 0.01).unwrap();
            assert_eq!(tr.times, [0.0]);
            assert_eq!(tr.states, [s0]);
        }
    }

    #[test]
    fn origin_is_fixed() {
        for solver in [Solver::Rk4 { dt: 1e-3 }, DOPRI] {
            let tr = integrate(State3::ORIGIN, &CL, 5.0, solver, 0.1).unwrap();
            assert!(tr.states.iter().all(|s| *s == State3::ORIGIN));
        }
    }

    #[test]
    fn samples_strictly_increase_and_end_at_t_final() {
        for solver in [Solver::Rk4 { dt: 3e-3 }, DOPRI] {
            let tr = integrate(State3::new(1.0, 1.0, 1.0), &CL, 2.345, solver, 0.01).unwrap();
            assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
            assert_eq!(*tr.times.last().unwrap(), 2.345);
            assert_eq!(tr.len(), 236);
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let s0 = State3::new(1.0, 1.0, 1.0);
        let end = |dt: f64| integrate(s0, &CL, 0.5, Solver::Rk4 { dt }, 1.0).unwrap().last().unwrap().1;
        let (a, b, c) = (end(1e-2), end(5e-3), end(2.5e-3));
        let order = (a.max_abs_diff(&b) / b.max_abs_diff(&c)).log2();
        assert!((order - 4.0).abs() < 0.3, "observed order {order}");
    }

    #[test]
    fn dopri_dense_output_matches_restarted_integration() {
        let s0 = State3::new(-3.0, 2.0, 20.0);
        let mut st = Stepper::new(s0, CL, DOPRI).unwrap();
        let step = st.advance(f64::INFINITY).unwrap();
        let tm = step.t0 + 0.37 * step.h();
        let direct = integrate(s0, &CL, tm, Solver::Dopri45 { rtol: 1e-13, atol: 1e-14, h_max: 1e-3 }, 1.0)
            .unwrap()
            .last()
            .unwrap()
            .1;
        assert!(step.eval(tm).max_abs_diff(&direct) < 1e-8);
        assert_eq!(step.eval(step.t1), step.y1);
    }

    #[test]
    fn sample_interval_does_not_change_internal_steps() {
        let s0 = State3::new(1.0, 1.0, 1.0);
        for solver in [Solver::Rk4 { dt: 1e-3 }, DOPRI] {
            let a = integrate(s0, &CL, 3.0, solver, 0.01).unwrap();
            let b = integrate(s0, &CL, 3.0, solver, 0.005).unwrap();
            for (i, s) in a.states.iter().enumerate() {
                let j = 2 * i;
                if a.times[i] == b.times[j] {
                    assert!(s.max_abs_diff(&b.states[j]) < 1e-12);
                }
            }
            assert_eq!(a.last(), b.last());
        }
    }

    #[test]
    fn blow_up_is_reported_with_last_good_state() {
        // Large dt makes RK4 diverge on the Lorenz field.
        let r = integrate(State3::new(1.0, 1.0, 1.0), &CL, 100.0, Solver::Rk4 { dt: 0.5 }, 0.5);
        match r {
            Err(Error::IntegrationFailure { last_good, .. }) => assert!(last_good.is_finite()),
            other => panic!("expected failure, got {other:?}"),
        }
    }
}
