use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::deviation::{fit_log_fractions, DeviationFit, PrefactorCorrection};
use crate::ode::{Params3, Solver, State3, Stepper};
use crate::{Error, Result};

/// A compact region of phase space.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum CompactSet {
    Box { lo: [f64; 3], hi: [f64; 3] },
    BoxMinusBall { lo: [f64; 3], hi: [f64; 3], center: [f64; 3], radius: f64 },
}

impl CompactSet {
    pub fn contains(&self, p: &State3) -> bool {
        let a = p.to_array();
        match self {
            CompactSet::Box { lo, hi } => in_box(&a, lo, hi),
            CompactSet::BoxMinusBall { lo, hi, center, radius } => {
                in_box(&a, lo, hi) && {
                    let d = State3::from_array(a) - State3::from_array(*center);
                    d.dot(&d) >= radius * radius
                }
            }
        }
    }

    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        match *self {
            CompactSet::Box { lo, hi } | CompactSet::BoxMinusBall { lo, hi, .. } => (lo, hi),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            CompactSet::Box { lo, hi } => alloc::format!("box {lo:?}..{hi:?}"),
            CompactSet::BoxMinusBall { lo, hi, center, radius } => {
                alloc::format!("box {lo:?}..{hi:?} minus ball({center:?}, {radius})")
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bounds();
        if (0..3).any(|i| !(lo[i] < hi[i]) || !lo[i].is_finite() || !hi[i].is_finite()) {
            return Err(Error::InvalidArgument("box needs finite lo < hi".into()));
        }
        if let CompactSet::BoxMinusBall { radius, center, .. } = self {
            if !(*radius > 0.0) || center.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidArgument("ball needs a finite center and radius > 0".into()));
            }
        }
        Ok(())
    }
}

fn in_box(a: &[f64; 3], lo: &[f64; 3], hi: &[f64; 3]) -> bool {
    (0..3).all(|i| a[i] >= lo[i] && a[i] <= hi[i])
}

/// Center of the most visited cell of a `bins^3` histogram of `samples`
/// over the box `[lo, hi]`.
pub fn heaviest_cell(samples: &[State3], lo: [f64; 3], hi: [f64; 3], bins: usize) -> Result<[f64; 3]> {
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be > 0".into()));
    }
    let mut counts = vec![0u64; bins * bins * bins];
    let idx = |v: f64, i: usize| -> Option<usize> {
        let u = (v - lo[i]) / (hi[i] - lo[i]);
        if (0.0..1.0).contains(&u) {
            Some((u * bins as f64) as usize)
        } else {
            None
        }
    };
    for p in samples {
        let a = p.to_array();
        if let (Some(i), Some(j), Some(k)) = (idx(a[0], 0), idx(a[1], 1), idx(a[2], 2)) {
            counts[(i * bins + j) * bins + k] += 1;
        }
    }
    let (best, &c) = counts.iter().enumerate().max_by_key(|(i, c)| (**c, core::cmp::Reverse(*i))).unwrap();
    if c == 0 {
        return Err(Error::EmptySamples);
    }
    let (i, j, k) = (best / (bins * bins), (best / bins) % bins, best % bins);
    let center = |n: usize, d: usize| lo[d] + (hi[d] - lo[d]) * (n as f64 + 0.5) / bins as f64;
    Ok([center(i, 0), center(j, 1), center(k, 2)])
}

/// Fraction of reference samples outside `k`; zero makes escape vacuous.
pub fn mass_outside(k: &CompactSet, reference: &[State3]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::EmptySamples);
    }
    let out = reference.iter().filter(|p| !k.contains(p)).count();
    Ok(out as f64 / reference.len() as f64)
}

/// First time the orbit of `s0` is seen outside `k`, checking every
/// integrator step and dense-output points spaced at most `check_dt`.
/// `None` when it stays in `k` up to `t_max`.
pub fn first_exit_time(
    s0: State3,
    p: &Params3,
    solver: Solver,
    k: &CompactSet,
    t_max: f64,
    check_dt: f64,
) -> Result<Option<f64>> {
    if !k.contains(&s0) {
        return Ok(Some(0.0));
    }
    if !(check_dt > 0.0) {
        return Err(Error::InvalidArgument("check_dt must be > 0".into()));
    }
    let mut st = Stepper::new(s0, *p, solver)?;
    while st.time() < t_max {
        let step = st.advance(t_max)?;
        let sub = crate::math::ceil(step.h() / check_dt).max(1.0) as usize;
        for j in 1..=sub {
            let t = if j == sub { step.t1 } else { step.t0 + step.h() * j as f64 / sub as f64 };
            let y = if j == sub { step.y1 } else { step.eval(t) };
            if !k.contains(&y) {
                return Ok(Some(t));
            }
        }
    }
    Ok(None)
}

/// Staying counts over nested horizons for one seed set.
#[derive(Debug, Clone, PartialEq)]
pub struct EscapeTally {
    pub horizons: Vec<f64>,
    pub staying: Vec<u64>,
    pub samples: u64,
}

impl EscapeTally {
    pub fn new(horizons: Vec<f64>) -> Result<Self> {
        if horizons.is_empty() || horizons.windows(2).any(|w| w[0] >= w[1]) || !(horizons[0] > 0.0) {
            return Err(Error::InvalidArgument("horizons must be positive and increasing".into()));
        }
        let n = horizons.len();
        Ok(Self { horizons, staying: vec![0; n], samples: 0 })
    }

    /// Record a seed by its first exit time (`None`: never left).
    pub fn record(&mut self, exit: Option<f64>) {
        for (s, &t) in self.staying.iter_mut().zip(&self.horizons) {
            if exit.is_none_or(|e| e > t) {
                *s += 1;
            }
        }
        self.samples += 1;
    }

    pub fn merge(&mut self, o: &EscapeTally) {
        for (a, b) in self.staying.iter_mut().zip(&o.staying) {
            *a += b;
        }
        self.samples += o.samples;
    }

    pub fn curve(&self, k: &CompactSet, mass_outside: f64) -> Result<EscapeCurve> {
        if self.samples == 0 {
            return Err(Error::EmptySamples);
        }
        let m = self.samples as f64;
        let fractions: Vec<f64> = self.staying.iter().map(|&s| s as f64 / m).collect();
        Ok(EscapeCurve {
            horizons: self.horizons.clone(),
            stderr: fractions.iter().map(|p| crate::math::sqrt(p * (1.0 - p) / m)).collect(),
            staying_fractions: fractions,
            staying: self.staying.clone(),
            samples: self.samples,
            set: *k,
            set_description: k.describe(),
            mass_outside,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EscapeCurve {
    pub horizons: Vec<f64>,
    pub staying_fractions: Vec<f64>,
    pub staying: Vec<u64>,
    pub stderr: Vec<f64>,
    pub samples: u64,
    pub set: CompactSet,
    pub set_description: String,
    /// Reference-orbit mass outside the set.
    pub mass_outside: f64,
}

impl EscapeCurve {
    pub fn fit(&self) -> DeviationFit {
        fit_log_fractions(&self.horizons, &self.staying_fractions, self.samples, PrefactorCorrection::None)
    }
}

/// Check the set against a reference orbit, refusing a vacuous experiment.
pub fn escape_precheck(k: &CompactSet, reference: &[State3]) -> Result<f64> {
    k.validate()?;
    let out = mass_outside(k, reference)?;
    if out == 0.0 {
        return Err(Error::Vacuous("reference orbit never leaves the set".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::integrate;

    fn reference() -> Vec<State3> {
        let tr =
            integrate(State3::new(1.0, 1.0, 20.0), &Params3::CLASSICAL, 60.0, Solver::Rk4 { dt: 0.01 }, 0.05).unwrap();
        tr.states[200..].to_vec()
    }

    #[test]
    fn whole_trapping_box_is_vacuous() {
        let k = CompactSet::Box { lo: [-30.0, -30.0, -5.0], hi: [30.0, 30.0, 55.0] };
        assert!(matches!(escape_precheck(&k, &reference()), Err(Error::Vacuous(_))));
    }

    #[test]
    fn set_away_from_attractor_empties_at_once() {
        let k = CompactSet::Box { lo: [25.0, 25.0, -5.0], hi: [30.0, 30.0, 0.0] };
        let r = reference();
        assert!(escape_precheck(&k, &r).unwrap() > 0.99);
        let mut t = EscapeTally::new(vec![5.0, 10.0]).unwrap();
        let mut rng = crate::rng::StreamRng::new(2, 0);
        for _ in 0..200 {
            let s0 = super::super::deviation::sample_box(&mut rng, [25.0, 25.0, -5.0], [30.0, 30.0, 0.0]);
            t.record(first_exit_time(s0, &Params3::CLASSICAL, Solver::Rk4 { dt: 0.01 }, &k, 10.0, 0.01).unwrap());
        }
        assert_eq!(t.staying, vec![0, 0]);
    }

    #[test]
    fn staying_counts_never_increase() {
        let mut t = EscapeTally::new(vec![1.0, 2.0, 3.0]).unwrap();
        for e in [Some(0.5), Some(1.5), None, Some(2.0), Some(3.5)] {
            t.record(e);
        }
        assert_eq!(t.staying, vec![4, 2, 2]);
    }

    #[test]
    fn heaviest_cell_finds_cluster() {
        let pts: Vec<State3> = (0..100).map(|i| State3::new(1.0 + 1e-3 * i as f64, 2.0, 3.0)).collect();
        let c = heaviest_cell(&pts, [0.0; 3], [10.0; 3], 10).unwrap();
        assert_eq!(c, [1.5, 2.5, 3.5]);
    }

    #[test]
    fn ball_excluded() {
        let k = CompactSet::BoxMinusBall { lo: [-1.0; 3], hi: [1.0; 3], center: [0.0; 3], radius: 0.5 };
        assert!(!k.contains(&State3::new(0.1, 0.0, 0.0)));
        assert!(k.contains(&State3::new(0.9, 0.0, 0.0)));
        assert!(!k.contains(&State3::new(1.1, 0.0, 0.0)));
    }
}
