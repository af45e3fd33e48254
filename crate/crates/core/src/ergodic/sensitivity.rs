use alloc::vec::Vec;

use super::IntervalMap;
use crate::math;
use crate::ode::{Params3, Solver, State3, Stepper};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SensitivityReport {
    pub d0: f64,
    pub delta_star: f64,
    /// First time the separation exceeds `delta_star`; `None` when censored.
    pub exceed_time: Option<f64>,
    pub horizon: f64,
    /// `(time, separation)`.
    pub curve: Vec<(f64, f64)>,
}

impl SensitivityReport {
    pub fn censored(&self) -> bool {
        self.exceed_time.is_none()
    }
}

fn check(d0: f64, delta_star: f64) -> Result<()> {
    if !(d0 >= 0.0 && d0 < delta_star) {
        return Err(Error::InvalidArgument(alloc::format!("need 0 <= d0 < delta*, got d0={d0}, delta*={delta_star}")));
    }
    Ok(())
}

/// Two Lorenz orbits from `s0` and `s0 + d0 e_x` on the same step grid.
/// The curve is sampled every `sample_dt` until the exceedance.
pub fn sensitivity_flow(
    s0: State3,
    p: &Params3,
    solver: Solver,
    d0: f64,
    delta_star: f64,
    horizon: f64,
    sample_dt: f64,
) -> Result<SensitivityReport> {
    check(d0, delta_star)?;
    let mut a = Stepper::new(s0, *p, solver)?;
    let mut b = Stepper::new(s0 + State3::new(d0, 0.0, 0.0), *p, solver)?;
    let mut curve = alloc::vec![(0.0, d0)];
    let mut next_sample = sample_dt;
    let mut exceed = None;
    let mut prev = (0.0, d0);
    while a.time() < horizon {
        let sa = a.advance(horizon)?;
        let sb = b.advance(horizon)?;
        let t = sa.t1;
        let sep = (sa.y1 - sb.y1).norm();
        if t >= next_sample {
            curve.push((t, sep));
            next_sample += sample_dt;
        }
        if sep > delta_star {
            // Log-linear interpolation inside the step.
            let (t0, d_prev) = prev;
            let te = if d_prev > 0.0 && sep > d_prev {
                t0 + (t - t0) * (math::ln(delta_star) - math::ln(d_prev)) / (math::ln(sep) - math::ln(d_prev))
            } else {
                t
            };
            exceed = Some(te);
            curve.push((t, sep));
            break;
        }
        prev = (t, sep);
    }
    Ok(SensitivityReport { d0, delta_star, exceed_time: exceed, horizon, curve })
}

/// Iterate `x0` and `x0 + d0`; time is counted in iterates.
pub fn sensitivity_map<M: IntervalMap>(
    map: &M,
    x0: f64,
    d0: f64,
    delta_star: f64,
    n: u64,
) -> Result<SensitivityReport> {
    check(d0, delta_star)?;
    let (mut a, mut b) = (x0, x0 + d0);
    let mut curve = alloc::vec![(0.0, d0)];
    let mut exceed = None;
    for k in 1..=n {
        match (map.apply(a), map.apply(b)) {
            (Some(x), Some(y)) => {
                a = x;
                b = y;
            }
            _ => return Err(Error::OrbitTerminated { laps: k - 1 }),
        }
        let sep = (a - b).abs();
        curve.push((k as f64, sep));
        if sep > delta_star {
            exceed = Some(k as f64);
            break;
        }
    }
    Ok(SensitivityReport { d0, delta_star, exceed_time: exceed, horizon: n as f64, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ergodic::Doubling;

    #[test]
    fn identical_seeds_never_separate() {
        let r = sensitivity_flow(
            State3::new(1.0, 1.0, 1.0),
            &Params3::CLASSICAL,
            Solver::Rk4 { dt: 1e-2 },
            0.0,
            1.0,
            20.0,
            0.1,
        )
        .unwrap();
        assert!(r.censored());
        assert!(r.curve.iter().all(|c| c.1 == 0.0));
    }

    #[test]
    fn doubling_separates_in_log2_steps() {
        let r = sensitivity_map(&Doubling, 0.1, 1.0 / 1024.0, 0.3, 100).unwrap();
        // 2^-10 * 2^k > 0.3 first at k = 9 (0.5)
        assert_eq!(r.exceed_time, Some(9.0));
    }
}
