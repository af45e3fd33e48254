use alloc::vec::Vec;

use super::{Params3, Solver, State3, Step, Stepper};
use crate::{math, Error, Result};

/// A piece of orbit with a continuous interpolant.
pub trait Segment {
    fn t0(&self) -> f64;
    fn t1(&self) -> f64;
    fn eval(&self, t: f64) -> State3;
    fn velocity(&self, t: f64) -> State3;
}

impl Segment for Step {
    fn t0(&self) -> f64 {
        self.t0
    }
    fn t1(&self) -> f64 {
        self.t1
    }
    fn eval(&self, t: f64) -> State3 {
        Step::eval(self, t)
    }
    fn velocity(&self, t: f64) -> State3 {
        Step::velocity(self, t)
    }
}

/// Straight line between two samples.
#[derive(Debug, Clone, Copy)]
pub struct LinearSegment {
    pub t0: f64,
    pub t1: f64,
    pub y0: State3,
    pub y1: State3,
}

impl Segment for LinearSegment {
    fn t0(&self) -> f64 {
        self.t0
    }
    fn t1(&self) -> f64 {
        self.t1
    }
    fn eval(&self, t: f64) -> State3 {
        let th = (t - self.t0) / (self.t1 - self.t0);
        self.y0 + (self.y1 - self.y0) * th
    }
    fn velocity(&self, _t: f64) -> State3 {
        (self.y1 - self.y0) * (1.0 / (self.t1 - self.t0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CrossingFilter {
    /// `z` decreasing through the plane.
    Down,
    Up,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SectionEvent {
    pub time: f64,
    pub point: State3,
    /// Sign of `z'` at the event.
    pub direction: i8,
    /// `|z'|` was below the tangency threshold or the root did not converge.
    pub tangent: bool,
}

/// Crossings of the plane `z = c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionDetector {
    pub c: f64,
    pub filter: CrossingFilter,
    /// Sign changes are looked for on sub-intervals of this length.
    pub sample_dt: f64,
    pub tol: f64,
    pub tangency: f64,
}

impl SectionDetector {
    pub fn new(c: f64, filter: CrossingFilter) -> Self {
        Self { c, filter, sample_dt: super::DEFAULT_SAMPLE_DT, tol: 1e-10, tangency: 1e-6 }
    }

    /// The conventional section `z = r - 1`, downward.
    pub fn classical(p: &Params3) -> Self {
        Self::new(p.r - 1.0, CrossingFilter::Down)
    }

    pub fn with_sample_dt(mut self, dt: f64) -> Self {
        self.sample_dt = dt;
        self
    }

    fn accepts(&self, ga: f64, gb: f64) -> bool {
        let down = ga > 0.0 && gb <= 0.0;
        let up = ga < 0.0 && gb >= 0.0;
        match self.filter {
            CrossingFilter::Down => down,
            CrossingFilter::Up => up,
            CrossingFilter::Both => down || up,
        }
    }

    /// Append the crossings inside `seg` to `out`, keeping times strictly
    /// increasing.
    pub fn scan<S: Segment + ?Sized>(&self, seg: &S, out: &mut Vec<SectionEvent>) {
        let (t0, t1) = (seg.t0(), seg.t1());
        if !(t1 > t0) {
            return;
        }
        let n = math::ceil((t1 - t0) / self.sample_dt - 1e-9).max(1.0) as usize;
        let g = |t: f64| seg.eval(t).z - self.c;
        let mut ta = t0;
        let mut ga = g(t0);
        for i in 1..=n {
            let tb = if i == n { t1 } else { t0 + (t1 - t0) * (i as f64 / n as f64) };
            let gb = g(tb);
            if self.accepts(ga, gb) {
                let (tc, gc) = illinois(&g, ta, ga, tb, gb, self.tol);
                let point = seg.eval(tc);
                let vz = seg.velocity(tc).z;
                let ev = SectionEvent {
                    time: tc,
                    point,
                    direction: if vz < 0.0 { -1 } else { 1 },
                    tangent: vz.abs() < self.tangency || gc.abs() > self.tol,
                };
                if out.last().is_none_or(|l| ev.time > l.time) {
                    out.push(ev);
                }
            }
            ta = tb;
            ga = gb;
        }
    }
}

fn illinois<G: Fn(f64) -> f64>(g: &G, mut a: f64, mut ga: f64, mut b: f64, mut gb: f64, tol: f64) -> (f64, f64) {
    if gb == 0.0 {
        return (b, gb);
    }
    for _ in 0..200 {
        let c = b - gb * (b - a) / (gb - ga);
        let gc = g(c);
        if gc.abs() <= tol || c == a || c == b {
            return (c, gc);
        }
        if (gc < 0.0) != (gb < 0.0) {
            a = b;
            ga = gb;
        } else {
            ga *= 0.5;
        }
        b = c;
        gb = gc;
    }
    (b, gb)
}

/// Scan a sequence of segments.
pub fn detect_section_crossings<'a, S, I>(segments: I, det: &SectionDetector) -> Vec<SectionEvent>
where
    S: Segment + 'a,
    I: IntoIterator<Item = &'a S>,
{
    let mut out = Vec::new();
    for s in segments {
        det.scan(s, &mut out);
    }
    out
}

/// Integrate from `s0` and return the crossings with time in `[t_start, t_end]`.
pub fn collect_section_events(
    s0: State3,
    p: &Params3,
    solver: Solver,
    t_start: f64,
    t_end: f64,
    det: &SectionDetector,
) -> Result<Vec<SectionEvent>> {
    if !(t_end >= t_start && t_start >= 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("need 0 <= t_start <= t_end, got {t_start}, {t_end}")));
    }
    let mut st = Stepper::new(s0, *p, solver)?;
    let mut out = Vec::new();
    st.run_until(t_end, |step| {
        if step.t1 >= t_start {
            det.scan(step, &mut out);
        }
        true
    })?;
    out.retain(|e| e.time >= t_start);
    Ok(out)
}
