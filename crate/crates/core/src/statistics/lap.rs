use crate::math::KahanSum;
use crate::model::{Suspension, SuspensionBase, SuspensionPoint};
use crate::quad::GaussLegendre;
use crate::{Error, Result};

/// Residual tolerance of the identity on the `1/T` scale.
pub const LAP_TOLERANCE: f64 = 1e-8;

/// Outcome of comparing the time integral of `psi` with its lap
/// decomposition `S_n phi + I`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct LapCheck {
    pub horizon: f64,
    /// Lap number `n(x, s, T)`.
    pub laps: u64,
    /// `(1/T) int_0^T psi(X^t q) dt`.
    pub time_average: f64,
    /// `(1/T) S_n phi`.
    pub lap_average: f64,
    /// `I(x, s, T) / T`.
    pub boundary: f64,
    pub residual: f64,
    pub lap_ratio: f64,
    /// `1 / mean roof` of the reference, when supplied.
    pub expected_ratio: Option<f64>,
    pub ratio_discrepancy: Option<f64>,
    /// Orbit hit the singular line before `T`; figures cover the laps done.
    pub partial: bool,
}

impl LapCheck {
    pub fn identity_holds(&self) -> bool {
        !self.partial && self.residual <= LAP_TOLERANCE
    }
}

/// Check the lap identity along the orbit of `q` up to `horizon`.
///
/// The time integral is split at lap boundaries and integrated in `t`; the
/// right side integrates `psi` over full fibers `[0, r)` and the two partial
/// fibers at the ends. Pass `mean_roof` from an independent reference orbit
/// to compare `n / T` against `1 / mean_roof`.
pub fn lap_decomposition_check<B, P>(
    susp: &Suspension<B>,
    q: &SuspensionPoint<B::Point>,
    psi: P,
    horizon: f64,
    mean_roof: Option<f64>,
) -> Result<LapCheck>
where
    B: SuspensionBase,
    P: Fn(&B::Point, f64) -> f64,
{
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(alloc::format!("horizon must be positive, got {horizon}")));
    }
    let gl = GaussLegendre::new(8);
    let panel = 0.5;
    let mut lhs = KahanSum::new();
    let mut sum_phi = KahanSum::new();
    let mut boundary = -gl.integrate_composite(|h| psi(&q.base, h), 0.0, q.s, panel);
    let mut laps = 0u64;
    let mut partial = false;
    let mut covered = 0.0;
    for lap in susp.laps(q) {
        let lap = match lap {
            Ok(l) => l,
            Err(_) => {
                partial = true;
                break;
            }
        };
        let (a, b) = (lap.start.max(0.0), lap.end().min(horizon));
        let base = lap.base;
        let start = lap.start;
        lhs.add(gl.integrate_composite(|t| psi(&base, t - start), a, b, panel));
        covered = b;
        if lap.end() <= horizon {
            sum_phi.add(gl.integrate_composite(|h| psi(&base, h), 0.0, lap.roof, panel));
            laps += 1;
        } else {
            boundary += gl.integrate_composite(|h| psi(&base, h), 0.0, horizon - start, panel);
            break;
        }
    }
    let t = if partial { covered.max(f64::MIN_POSITIVE) } else { horizon };
    let time_average = lhs.value() / t;
    let lap_average = sum_phi.value() / t;
    let boundary = boundary / t;
    let lap_ratio = laps as f64 / t;
    let expected_ratio = mean_roof.map(|m| 1.0 / m);
    Ok(LapCheck {
        horizon: t,
        laps,
        time_average,
        lap_average,
        boundary,
        residual: if partial { f64::NAN } else { (time_average - lap_average - boundary).abs() },
        lap_ratio,
        ratio_discrepancy: expected_ratio.map(|e| (lap_ratio - e).abs() / e),
        expected_ratio,
        partial,
    })
}

/// Mean roof over independent base segments, `n` steps each after `burn_in`.
pub fn mean_roof<B: SuspensionBase>(base: &B, starts: &[B::Point], burn_in: u64, n: u64) -> Result<f64> {
    let mut acc = KahanSum::new();
    for x0 in starts {
        let mut x = *x0;
        for _ in 0..burn_in {
            x = base.step(&x)?;
        }
        for _ in 0..n {
            acc.add(base.roof(&x)?);
            x = base.step(&x)?;
        }
    }
    Ok(acc.value() / (n * starts.len() as u64) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::model::{FixtureBase, QuotientBase};
    use crate::rng::StreamRng;

    #[test]
    fn constant_psi_is_roof_sum() {
        let s = Suspension::new(QuotientBase(ModelParams::classical()));
        let q = s.point(0.37, 0.4).unwrap();
        let c = lap_decomposition_check(&s, &q, |_x, _h| 1.0, 50.0, None).unwrap();
        assert!(c.residual <= 1e-10, "{}", c.residual);
        assert!((c.time_average - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_roof_counts_floor() {
        let s = Suspension::new(FixtureBase { map: |x: f64| (2.0 * x) % 1.0, roof: 1.0 });
        for &(h, t) in &[(0.25, 10.0), (0.0, 3.5), (0.9, 7.05)] {
            let q = s.point(0.3, h).unwrap();
            let c = lap_decomposition_check(&s, &q, |x, _| *x, t, None).unwrap();
            assert_eq!(c.laps, (h + t).floor() as u64);
            assert!(c.residual < 1e-12);
        }
    }

    #[test]
    fn random_polynomial_psi() {
        let s = Suspension::new(QuotientBase(ModelParams::classical()));
        let mut rng = StreamRng::new(3, 0);
        for _ in 0..50 {
            let x = rng.uniform_in(-0.5, 0.5);
            let r = s.base.roof(&x).unwrap();
            let q = s.point(x, rng.uniform() * r).unwrap();
            let c: [f64; 4] = core::array::from_fn(|_| rng.uniform_in(-1.0, 1.0));
            let psi = move |x: &f64, h: f64| c[0] + c[1] * x + c[2] * h * h + c[3] * (3.0 * x).sin() * h;
            let chk = lap_decomposition_check(&s, &q, psi, 200.0, None).unwrap();
            assert!(chk.identity_holds(), "{chk:?}");
        }
    }

    struct Collapse(ModelParams);

    impl SuspensionBase for Collapse {
        type Point = f64;
        fn step(&self, _x: &f64) -> Result<f64> {
            Ok(0.0)
        }
        fn roof(&self, x: &f64) -> Result<f64> {
            QuotientBase(self.0).roof(x)
        }
    }

    #[test]
    fn singular_orbit_is_partial() {
        let h = Suspension::new(Collapse(ModelParams::classical()));
        let q = h.point(0.2, 0.0).unwrap();
        let c = lap_decomposition_check(&h, &q, |_, _| 1.0, 100.0, None).unwrap();
        assert!(c.partial && !c.identity_holds());
        assert_eq!(c.laps, 1);
    }
}
