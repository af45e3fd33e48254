use super::{ModelParams, SectionPoint, SINGULAR_EPS};
use crate::{Error, Result};

/// Base dynamics of a suspension semiflow: a map and a roof over it.
pub trait SuspensionBase {
    type Point: Copy + core::fmt::Debug;
    fn step(&self, p: &Self::Point) -> Result<Self::Point>;
    fn roof(&self, p: &Self::Point) -> Result<f64>;
}

/// The quotient map `f` on `[-1/2, 1/2]` with roof `r(x)`.
#[derive(Debug, Clone, Copy)]
pub struct QuotientBase(pub ModelParams);

impl SuspensionBase for QuotientBase {
    type Point = f64;
    #[inline]
    fn step(&self, x: &f64) -> Result<f64> {
        if x.abs() <= SINGULAR_EPS {
            return Err(Error::SingularLine("base map"));
        }
        Ok(self.0.f(*x))
    }
    #[inline]
    fn roof(&self, x: &f64) -> Result<f64> {
        if x.abs() <= SINGULAR_EPS {
            return Err(Error::SingularLine("roof"));
        }
        Ok(self.0.r(*x))
    }
}

/// The return map `F` on the square section, roof depending on `x` only.
#[derive(Debug, Clone, Copy)]
pub struct SectionBase(pub ModelParams);

impl SuspensionBase for SectionBase {
    type Point = SectionPoint;
    fn step(&self, p: &SectionPoint) -> Result<SectionPoint> {
        if p.x.abs() <= SINGULAR_EPS {
            return Err(Error::SingularLine("base map"));
        }
        Ok(SectionPoint { x: self.0.f(p.x), y: self.0.g(p.x, p.y) })
    }
    fn roof(&self, p: &SectionPoint) -> Result<f64> {
        QuotientBase(self.0).roof(&p.x)
    }
}

/// Test fixture: arbitrary interval map under a constant roof.
#[derive(Debug, Clone, Copy)]
pub struct FixtureBase<F> {
    pub map: F,
    pub roof: f64,
}

impl<F: Fn(f64) -> f64> SuspensionBase for FixtureBase<F> {
    type Point = f64;
    fn step(&self, x: &f64) -> Result<f64> {
        Ok((self.map)(*x))
    }
    fn roof(&self, _x: &f64) -> Result<f64> {
        Ok(self.roof)
    }
}

/// Base point plus height `0 <= s < r(base)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SuspensionPoint<P> {
    pub base: P,
    pub s: f64,
}

/// One passage under the roof: the orbit sits over `base` for times in
/// `[start, start + roof)`, measured from the initial point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lap<P> {
    pub index: u64,
    pub base: P,
    pub start: f64,
    pub roof: f64,
}

impl<P> Lap<P> {
    pub fn end(&self) -> f64 {
        self.start + self.roof
    }
}

#[derive(Debug, Clone)]
pub struct Suspension<B> {
    pub base: B,
}

impl<B: SuspensionBase> Suspension<B> {
    pub fn new(base: B) -> Self {
        Self { base }
    }

    pub fn point(&self, base: B::Point, s: f64) -> Result<SuspensionPoint<B::Point>> {
        let r = self.base.roof(&base)?;
        if !(s >= 0.0 && s < r) {
            return Err(Error::InvalidArgument(alloc::format!("height {s} outside [0, {r})")));
        }
        Ok(SuspensionPoint { base, s })
    }

    /// Flow for time `t`; returns the new point and the lap count `n`, the
    /// number of roof crossings on the way.
    pub fn evolve(&self, q: &SuspensionPoint<B::Point>, t: f64) -> Result<(SuspensionPoint<B::Point>, u64)> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!("t must be finite and >= 0, got {t}")));
        }
        let mut x = q.base;
        let mut h = q.s + t;
        let mut n = 0u64;
        loop {
            let r = self.base.roof(&x).map_err(|_| Error::OrbitTerminated { laps: n })?;
            if h < r {
                return Ok((SuspensionPoint { base: x, s: h }, n));
            }
            h -= r;
            x = self.base.step(&x).map_err(|_| Error::OrbitTerminated { laps: n })?;
            n += 1;
        }
    }

    /// Laps of the forward orbit of `q`, starting with the current one
    /// (whose start is `-q.s`).
    pub fn laps(&self, q: &SuspensionPoint<B::Point>) -> Laps<'_, B> {
        Laps { susp: self, next: Some(q.base), start: -q.s, index: 0 }
    }
}

pub struct Laps<'a, B: SuspensionBase> {
    susp: &'a Suspension<B>,
    next: Option<B::Point>,
    start: f64,
    index: u64,
}

impl<B: SuspensionBase> Iterator for Laps<'_, B> {
    type Item = Result<Lap<B::Point>>;

    fn next(&mut self) -> Option<Self::Item> {
        let x = self.next.take()?;
        let roof = match self.susp.base.roof(&x) {
            Ok(r) => r,
            Err(_) => return Some(Err(Error::OrbitTerminated { laps: self.index })),
        };
        let lap = Lap { index: self.index, base: x, start: self.start, roof };
        self.next = self.susp.base.step(&x).ok();
        self.start += roof;
        self.index += 1;
        Some(Ok(lap))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quotient() -> Suspension<QuotientBase> {
        Suspension::new(QuotientBase(ModelParams::classical()))
    }

    #[test]
    fn below_roof_stays_on_base() {
        let s = quotient();
        let q = s.point(0.3, 0.2).unwrap();
        let (p, n) = s.evolve(&q, 0.5).unwrap();
        assert_eq!((p.base, n), (0.3, 0));
        assert!((p.s - 0.7).abs() < 1e-15);
    }

    #[test]
    fn lap_count_matches_brute_force() {
        let s = quotient();
        let m = ModelParams::classical();
        let q = s.point(0.123, 0.4).unwrap();
        let (p, n) = s.evolve(&q, 10.0).unwrap();
        // Brute force: accumulate Birkhoff sums of r until they pass s + t.
        let mut x = 0.123f64;
        let mut sum = 0.0;
        let mut k = 0;
        while sum + m.r(x) <= 0.4 + 10.0 {
            sum += m.r(x);
            x = m.f(x);
            k += 1;
        }
        assert_eq!(n, k);
        assert_eq!(p.base, x);
        assert!((p.s - (10.4 - sum)).abs() < 1e-12);
    }

    #[test]
    fn constant_roof_lap_count_is_floor() {
        let s = Suspension::new(FixtureBase { map: |x: f64| (2.0 * x) % 1.0, roof: 1.0 });
        let q = s.point(0.3, 0.25).unwrap();
        let (_, n) = s.evolve(&q, 7.5).unwrap();
        assert_eq!(n, 7);
    }

    #[test]
    fn singular_hit_terminates() {
        let qs = quotient();
        let err = qs.evolve(&SuspensionPoint { base: 0.0, s: 0.0 }, 1.0);
        assert!(matches!(err, Err(Error::OrbitTerminated { laps: 0 })));
    }

    #[test]
    fn laps_tile_time() {
        let s = quotient();
        let q = s.point(-0.2, 0.1).unwrap();
        let laps: alloc::vec::Vec<_> = s.laps(&q).take(50).map(|l| l.unwrap()).collect();
        assert_eq!(laps[0].start, -0.1);
        for w in laps.windows(2) {
            assert_eq!(w[1].start, w[0].end());
        }
    }
}
