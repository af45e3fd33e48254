use alloc::vec;
use alloc::vec::Vec;

use super::{fit_ols, FitResult};
use crate::ergodic::IntervalMap;
use crate::math;
use crate::model::{Suspension, SuspensionBase, SuspensionPoint};
use crate::ode::{Params3, Solver, State3, Stepper};
use crate::{Error, Result};

/// One hitting (or recurrence) observation.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct HitRecord {
    pub probe: usize,
    pub seed: u64,
    pub r: f64,
    /// Entrance time; meaningless when censored.
    pub tau: f64,
    pub censored: bool,
}

/// Indices of `radii` from largest to smallest.
fn descending(radii: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..radii.len()).collect();
    idx.sort_by(|&a, &b| radii[b].total_cmp(&radii[a]));
    idx
}

/// First `k >= 0` with `|f^k x - x0| <= r`, for every radius in one pass.
/// `None` means censored at `max_iter` (or the orbit stopped).
pub fn hitting_times_map<M: IntervalMap>(map: &M, x: f64, x0: f64, radii: &[f64], max_iter: u64) -> Vec<Option<f64>> {
    let order = descending(radii);
    let mut out = vec![None; radii.len()];
    let mut next = 0;
    let mut y = x;
    let mut k = 0u64;
    loop {
        let d = (y - x0).abs();
        while next < order.len() && d <= radii[order[next]] {
            out[order[next]] = Some(k as f64);
            next += 1;
        }
        if next == order.len() || k >= max_iter {
            break;
        }
        match map.apply(y) {
            Some(z) => y = z,
            None => break,
        }
        k += 1;
    }
    out
}

/// First return to `B_r(x0)` after leaving it, orbit started at `x0`.
pub fn recurrence_times_map<M: IntervalMap>(map: &M, x0: f64, radii: &[f64], max_iter: u64) -> Vec<Option<f64>> {
    let mut out = vec![None; radii.len()];
    let mut left = vec![false; radii.len()];
    let mut open = radii.len();
    let mut y = x0;
    for k in 1..=max_iter {
        match map.apply(y) {
            Some(z) => y = z,
            None => break,
        }
        let d = (y - x0).abs();
        for i in 0..radii.len() {
            if out[i].is_some() {
                continue;
            }
            if !left[i] {
                left[i] = d > radii[i];
            } else if d <= radii[i] {
                out[i] = Some(k as f64);
                open -= 1;
            }
        }
        if open == 0 {
            break;
        }
    }
    out
}

/// First entrance of the semiflow orbit of `start` into the max-metric ball
/// of radius `r` around `(x0, s0)`. Lap start times are relative to `start`
/// (the first lap begins at `-start.s`), so entry times are elapsed times.
/// Heights are compared without the roof identification, so targets should
/// sit well inside `(0, r0)`.
pub fn hitting_times_suspension<B: SuspensionBase<Point = f64>>(
    susp: &Suspension<B>,
    start: &SuspensionPoint<f64>,
    target: (f64, f64),
    radii: &[f64],
    max_time: f64,
) -> Result<Vec<Option<f64>>> {
    let (x0, s0) = target;
    let order = descending(radii);
    let mut out = vec![None; radii.len()];
    let mut next = 0;
    for lap in susp.laps(start) {
        let lap = match lap {
            Ok(l) => l,
            Err(_) => break,
        };
        if lap.start > max_time {
            break;
        }
        let lo = if lap.index == 0 { start.s } else { 0.0 };
        let dx = (lap.base - x0).abs();
        while next < order.len() {
            let r = radii[order[next]];
            if dx > r {
                break;
            }
            let h = lo.max(s0 - r);
            if h <= s0 + r && h < lap.roof {
                let t = lap.start + h;
                if t > max_time {
                    break;
                }
                out[order[next]] = Some(t);
                next += 1;
            } else {
                break;
            }
        }
        if next == order.len() {
            break;
        }
    }
    Ok(out)
}

/// First time the Lorenz orbit of `s` comes within Euclidean distance `r`
/// of `x0`, checked every `check_dt` on the dense output and refined by
/// bisection.
pub fn hitting_times_flow(
    s: State3,
    x0: State3,
    p: &Params3,
    solver: Solver,
    radii: &[f64],
    max_time: f64,
    check_dt: f64,
) -> Result<Vec<Option<f64>>> {
    if !(check_dt > 0.0) {
        return Err(Error::InvalidArgument("check_dt must be > 0".into()));
    }
    let order = descending(radii);
    let mut out = vec![None; radii.len()];
    let mut next = 0;
    if (s - x0).norm() <= radii[order[0]] {
        while next < order.len() && (s - x0).norm() <= radii[order[next]] {
            out[order[next]] = Some(0.0);
            next += 1;
        }
    }
    let mut st = Stepper::new(s, *p, solver)?;
    while next < order.len() && st.time() < max_time {
        let step = st.advance(max_time)?;
        let n = math::ceil(step.h() / check_dt - 1e-9).max(1.0) as usize;
        let mut ta = step.t0;
        for i in 1..=n {
            let tb = if i == n { step.t1 } else { step.t0 + step.h() * (i as f64 / n as f64) };
            let db = (step.eval(tb) - x0).norm();
            while next < order.len() && db <= radii[order[next]] {
                let r = radii[order[next]];
                let (mut a, mut b) = (ta, tb);
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if (step.eval(m) - x0).norm() <= r {
                        b = m;
                    } else {
                        a = m;
                    }
                    if b - a < 1e-12 {
                        break;
                    }
                }
                out[order[next]] = Some(b);
                next += 1;
            }
            ta = tb;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RadiusSummary {
    pub r: f64,
    pub total: u64,
    pub censored: u64,
    /// Uncensored records with `tau = 0` (log undefined).
    pub zero: u64,
    pub used: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct LogLawReport {
    /// `ln tau` against `-ln r`, pooled over records.
    pub fit: FitResult,
    pub slope: f64,
    pub stderr: f64,
    pub reference: f64,
    pub discrepancy_sigmas: f64,
    pub radii_used: Vec<f64>,
    pub per_radius: Vec<RadiusSummary>,
    /// Some radius was excluded for censoring or too few records.
    pub flagged: bool,
}

/// Pooled regression of `ln tau` on `-ln r`; `reference` is `d - 1` for a
/// flow or `d` for a map.
pub fn loglaw_regression(records: &[HitRecord], reference: f64, min_uncensored: u64) -> Result<LogLawReport> {
    let mut rs: Vec<f64> = records.iter().map(|r| r.r).collect();
    rs.sort_by(|a, b| a.total_cmp(b));
    rs.dedup();
    let mut per = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut flagged = false;
    let mut used = Vec::new();
    for &r in &rs {
        let recs = records.iter().filter(|x| x.r == r);
        let (mut total, mut cens, mut zero) = (0u64, 0u64, 0u64);
        for x in recs.clone() {
            total += 1;
            if x.censored {
                cens += 1;
            } else if !(x.tau > 0.0) {
                zero += 1;
            }
        }
        let ok = 2 * cens <= total && total - cens >= min_uncensored;
        flagged |= !ok;
        per.push(RadiusSummary { r, total, censored: cens, zero, used: ok });
        if ok {
            used.push(r);
            for x in recs.filter(|x| !x.censored && x.tau > 0.0) {
                xs.push(-math::ln(r));
                ys.push(math::ln(x.tau));
            }
        }
    }
    if used.len() < 5 {
        return Err(Error::TooFewPoints { got: used.len(), need: 5 });
    }
    let fit = fit_ols(&xs, &ys)?;
    let disc = if fit.slope_stderr > 0.0 {
        (fit.slope - reference) / fit.slope_stderr
    } else if fit.slope == reference {
        0.0
    } else {
        f64::INFINITY.copysign(fit.slope - reference)
    };
    Ok(LogLawReport {
        slope: fit.slope,
        stderr: fit.slope_stderr,
        fit,
        reference,
        discrepancy_sigmas: disc,
        radii_used: used,
        per_radius: per,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ergodic::Doubling;
    use crate::model::{FixtureBase, ModelParams, QuotientBase};

    #[test]
    fn start_inside_ball_hits_at_zero() {
        let m = ModelParams::classical();
        let h = hitting_times_map(&m, 0.1, 0.1005, &[1e-3, 1e-2], 100);
        assert_eq!(h, [Some(0.0), Some(0.0)]);
    }

    #[test]
    fn hitting_time_is_monotone_in_r() {
        let m = ModelParams::classical();
        let radii: Vec<f64> = (0..8).map(|i| 10f64.powf(-1.0 - 0.3 * i as f64)).collect();
        let h = hitting_times_map(&m, 0.3217, -0.1, &radii, 10_000_000);
        for w in h.windows(2) {
            assert!(w[1].unwrap() >= w[0].unwrap());
        }
    }

    #[test]
    fn fixed_point_recurrence_is_censored() {
        assert_eq!(recurrence_times_map(&Doubling, 0.0, &[0.1], 1000), [None]);
    }

    #[test]
    fn period_two_returns_in_two() {
        assert_eq!(recurrence_times_map(&Doubling, 1.0 / 3.0, &[0.05], 1000), [Some(2.0)]);
    }

    #[test]
    fn suspension_hit_inside_and_nested() {
        let s = Suspension::new(QuotientBase(ModelParams::classical()));
        let q = s.point(0.2, 0.5).unwrap();
        let h = hitting_times_suspension(&s, &q, (0.2, 0.5), &[1e-3], 10.0).unwrap();
        assert_eq!(h, [Some(0.0)]);
        let radii = [1e-3, 1e-2, 1e-1];
        let q = s.point(-0.37, 0.1).unwrap();
        let h = hitting_times_suspension(&s, &q, (0.2, 0.5), &radii, 1e6).unwrap();
        assert!(h[0].unwrap() >= h[1].unwrap() && h[1].unwrap() >= h[2].unwrap());
    }

    #[test]
    fn suspension_hit_on_constant_roof() {
        // Identity base under roof 1: height climbs from 0.2, ball around
        // height 0.7 with r = 0.1 is entered at height 0.6.
        let s = Suspension::new(FixtureBase { map: |x: f64| x, roof: 1.0 });
        let q = SuspensionPoint { base: 0.3, s: 0.2 };
        let h = hitting_times_suspension(&s, &q, (0.3, 0.7), &[0.1], 10.0).unwrap();
        assert!((h[0].unwrap() - 0.4).abs() < 1e-15);
        // Ball below the current height is reached on the next lap.
        let h = hitting_times_suspension(&s, &SuspensionPoint { base: 0.3, s: 0.9 }, (0.3, 0.3), &[0.1], 10.0).unwrap();
        assert!((h[0].unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn planted_slope_is_recovered() {
        let mut recs = Vec::new();
        for (i, &r) in [1e-3, 3e-3, 1e-2, 3e-2, 1e-1].iter().enumerate() {
            for k in 0..60 {
                recs.push(HitRecord { probe: 0, seed: k, r, tau: r.powf(-1.3), censored: false });
            }
            recs.push(HitRecord { probe: 0, seed: 99, r, tau: 0.0, censored: i == 0 });
        }
        let rep = loglaw_regression(&recs, 1.3, 50).unwrap();
        assert!((rep.slope - 1.3).abs() < 1e-12);
        assert!(!rep.flagged);
        assert_eq!(rep.per_radius[0].censored, 1);
        let total: u64 = rep.per_radius.iter().map(|p| p.total).sum();
        assert_eq!(total as usize, recs.len());
    }

    #[test]
    fn heavy_censoring_excludes_radius() {
        let mut recs = Vec::new();
        for &r in &[1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 0.2] {
            for k in 0..60 {
                let cens = r == 1e-3 && k < 40;
                recs.push(HitRecord { probe: 0, seed: k, r, tau: 1.0 / r, censored: cens });
            }
        }
        let rep = loglaw_regression(&recs, 1.0, 50).unwrap();
        assert!(rep.flagged);
        assert_eq!(rep.radii_used.len(), 5);
    }

    #[test]
    fn flow_hit_starts_at_zero_inside() {
        let p = Params3::CLASSICAL;
        let s = State3::new(1.0, 1.0, 1.0);
        let h = hitting_times_flow(s, s, &p, Solver::Rk4 { dt: 1e-3 }, &[0.5], 1.0, 1e-2).unwrap();
        assert_eq!(h, [Some(0.0)]);
    }
}
