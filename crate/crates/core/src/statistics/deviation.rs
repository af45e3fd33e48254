use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dimension::{fit_wls_known_variance, FitResult};
use crate::math::{self, KahanSum};
use crate::model::ModelParams;
use crate::model::{Suspension, SuspensionBase, SuspensionPoint};
use crate::ode::{Params3, Solver, State3, Stepper};
use crate::rng::StreamRng;
use crate::special::clopper_pearson;
use crate::{Error, Result};

/// Minimum samples per horizon.
pub const MIN_DEVIATION_SAMPLES: u64 = 10_000;

/// Default trapping box of the classical flow.
pub const TRAPPING_BOX: ([f64; 3], [f64; 3]) = ([-30.0, -30.0, -5.0], [30.0, 30.0, 55.0]);

fn check_horizons(h: &[f64]) -> Result<()> {
    if h.is_empty() || h.iter().any(|t| !(*t > 0.0 && t.is_finite())) || h.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("horizons must be positive and strictly increasing".into()));
    }
    Ok(())
}

/// Counts of samples whose time average at each horizon deviates from the
/// reference by more than `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationTally {
    pub horizons: Vec<f64>,
    pub reference: f64,
    pub epsilon: f64,
    pub deviating: Vec<u64>,
    pub samples: u64,
    pub discarded: u64,
}

impl DeviationTally {
    pub fn new(horizons: Vec<f64>, reference: f64, epsilon: f64) -> Result<Self> {
        check_horizons(&horizons)?;
        if !(epsilon > 0.0 && reference.is_finite()) {
            return Err(Error::InvalidArgument("epsilon must be > 0 and the reference finite".into()));
        }
        let n = horizons.len();
        Ok(Self { horizons, reference, epsilon, deviating: vec![0; n], samples: 0, discarded: 0 })
    }

    /// Record one sample's averages, one per horizon.
    pub fn record(&mut self, averages: &[f64]) {
        debug_assert_eq!(averages.len(), self.horizons.len());
        for (d, a) in self.deviating.iter_mut().zip(averages) {
            if (a - self.reference).abs() > self.epsilon {
                *d += 1;
            }
        }
        self.samples += 1;
    }

    pub fn discard(&mut self) {
        self.discarded += 1;
    }

    pub fn merge(&mut self, o: &DeviationTally) {
        for (a, b) in self.deviating.iter_mut().zip(&o.deviating) {
            *a += b;
        }
        self.samples += o.samples;
        self.discarded += o.discarded;
    }

    pub fn curve(&self, confidence: f64) -> Result<DeviationCurve> {
        if self.samples == 0 {
            return Err(Error::EmptySamples);
        }
        let m = self.samples as f64;
        let fractions: Vec<f64> = self.deviating.iter().map(|&k| k as f64 / m).collect();
        let (lo, hi): (Vec<f64>, Vec<f64>) =
            self.deviating.iter().map(|&k| clopper_pearson(k, self.samples, confidence)).unzip();
        Ok(DeviationCurve {
            epsilon: self.epsilon,
            reference: self.reference,
            horizons: self.horizons.clone(),
            stderr: fractions.iter().map(|p| math::sqrt(p * (1.0 - p) / m)).collect(),
            fractions,
            deviating: self.deviating.clone(),
            samples: self.samples,
            discarded: self.discarded,
            ci_lower: lo,
            ci_upper: hi,
            confidence,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DeviationCurve {
    pub epsilon: f64,
    pub reference: f64,
    pub horizons: Vec<f64>,
    pub fractions: Vec<f64>,
    pub deviating: Vec<u64>,
    pub samples: u64,
    pub discarded: u64,
    /// Exact binomial interval at `confidence`.
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub stderr: Vec<f64>,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PrefactorCorrection {
    /// Fit `ln p` against `T`.
    None,
    /// Fit `ln p + (1/2) ln T`, removing the `T^(-1/2)` prefactor of lattice sums.
    BahadurRao,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DeviationFit {
    pub fit: Option<FitResult>,
    pub correction: PrefactorCorrection,
    /// `-slope`, the estimated exponential rate.
    pub rate: Option<f64>,
    pub significance: Option<f64>,
    /// Horizons with no deviating sample, left out of the fit.
    pub excluded_horizons: Vec<f64>,
    pub note: Option<String>,
}

impl DeviationFit {
    /// Negative slope at least two standard errors from zero.
    pub fn significant_decay(&self) -> bool {
        matches!(self.fit, Some(f) if f.slope < 0.0 && f.slope.abs() >= 2.0 * f.slope_stderr)
    }
}

/// Known-variance weighted fit of `ln p` against `T`: by the delta method
/// `var ln p = (1 - p) / (M p)`.
pub fn fit_deviation_curve(c: &DeviationCurve, correction: PrefactorCorrection) -> DeviationFit {
    fit_log_fractions(&c.horizons, &c.fractions, c.samples, correction)
}

/// Fit shared by deviation and escape curves; fractions of 0 or 1 are
/// excluded and listed.
pub fn fit_log_fractions(
    horizons: &[f64],
    fractions: &[f64],
    samples: u64,
    correction: PrefactorCorrection,
) -> DeviationFit {
    let (mut xs, mut ys, mut ws, mut excluded) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let m = samples as f64;
    for (&t, &p) in horizons.iter().zip(fractions) {
        if p <= 0.0 || p >= 1.0 {
            excluded.push(t);
            continue;
        }
        let mut y = math::ln(p);
        if correction == PrefactorCorrection::BahadurRao {
            y += 0.5 * math::ln(t);
        }
        xs.push(t);
        ys.push(y);
        ws.push(m * p / (1.0 - p));
    }
    match fit_wls_known_variance(&xs, &ys, &ws) {
        Ok(f) => DeviationFit {
            rate: Some(-f.slope),
            significance: Some(f.slope.abs() / f.slope_stderr),
            fit: Some(f),
            correction,
            excluded_horizons: excluded,
            note: None,
        },
        Err(e) => DeviationFit {
            fit: None,
            correction,
            rate: None,
            significance: None,
            excluded_horizons: excluded,
            note: Some(alloc::format!("{e}")),
        },
    }
}

/// Cramér rate `I(p + eps)` of the mean of Bernoulli(`p`) variables.
pub fn bernoulli_cramer_rate(p: f64, eps: f64) -> f64 {
    let a = p + eps;
    if !(a > 0.0 && a < 1.0) {
        return f64::INFINITY;
    }
    a * math::ln(a / p) + (1.0 - a) * math::ln((1.0 - a) / (1.0 - p))
}

/// Running means of fair coin flips observed at integer horizons.
pub fn coin_averages(rng: &mut StreamRng, horizons: &[u64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(horizons.len());
    let mut heads = 0u64;
    let mut done = 0u64;
    for &t in horizons {
        while done < t {
            let take = (t - done).min(64);
            let w = rng.next_u64();
            let w = if take == 64 { w } else { w & ((1u64 << take) - 1) };
            heads += w.count_ones() as u64;
            done += take;
        }
        out.push(heads as f64 / t as f64);
    }
    out
}

/// A point drawn from normalized Lebesgue measure on the region under the
/// graph of the roof over `[-1/2, 1/2]`.
///
/// Below `r1 = r(1/2)` the region is a rectangle; above it the width
/// `2 exp(-lambda1 (s - r0))` decays exponentially, so the height there is
/// `r1` plus an exponential variable.
pub fn sample_under_roof(rng: &mut StreamRng, m: &ModelParams) -> (f64, f64) {
    let r1 = m.r(0.5);
    let tail = 1.0 / m.lambda1;
    if rng.uniform() * (r1 + tail) < r1 {
        (rng.uniform_in(-0.5, 0.5), rng.uniform() * r1)
    } else {
        let s = r1 - math::ln(1.0 - rng.uniform()) / m.lambda1;
        let w = math::exp(-m.lambda1 * (s - m.r0));
        let x = rng.uniform_in(-w, w);
        (x, s)
    }
}

/// Uniform point in a box.
pub fn sample_box(rng: &mut StreamRng, lo: [f64; 3], hi: [f64; 3]) -> State3 {
    State3::new(rng.uniform_in(lo[0], hi[0]), rng.uniform_in(lo[1], hi[1]), rng.uniform_in(lo[2], hi[2]))
}

/// Time averages of a suspension observable at nested horizons.
/// `fiber_integral(x, a, b)` is `int_a^b psi(x, h) dh`.
pub fn suspension_time_averages<B, I>(
    susp: &Suspension<B>,
    q: &SuspensionPoint<B::Point>,
    horizons: &[f64],
    fiber_integral: &I,
) -> Result<Vec<f64>>
where
    B: SuspensionBase,
    I: Fn(&B::Point, f64, f64) -> f64,
{
    check_horizons(horizons)?;
    let mut out = Vec::with_capacity(horizons.len());
    let mut acc = KahanSum::new();
    let mut k = 0;
    for lap in susp.laps(q) {
        let lap = lap?;
        let h0 = if lap.start < 0.0 { -lap.start } else { 0.0 };
        let mut from = h0;
        while k < horizons.len() && horizons[k] < lap.end() {
            let to = horizons[k] - lap.start;
            acc.add(fiber_integral(&lap.base, from, to));
            from = to;
            out.push(acc.value() / horizons[k]);
            k += 1;
        }
        if k == horizons.len() {
            return Ok(out);
        }
        acc.add(fiber_integral(&lap.base, from, lap.roof));
    }
    Err(Error::OrbitTerminated { laps: 0 })
}

/// Time averages of `psi` along an ODE orbit at nested horizons, Simpson's
/// rule on integrator steps that end exactly at each horizon.
pub fn ode_time_averages<F: Fn(&State3) -> f64>(
    s0: State3,
    p: &Params3,
    solver: Solver,
    horizons: &[f64],
    psi: &F,
) -> Result<Vec<f64>> {
    check_horizons(horizons)?;
    let mut st = Stepper::new(s0, *p, solver)?;
    let mut acc = KahanSum::new();
    let mut out = Vec::with_capacity(horizons.len());
    let mut f0 = psi(&s0);
    for &t in horizons {
        while st.time() < t {
            let step = st.advance(t)?;
            let f1 = psi(&step.y1);
            let mid = psi(&step.eval(0.5 * (step.t0 + step.t1)));
            acc.add(step.h() / 6.0 * (f0 + 4.0 * mid + f1));
            f0 = f1;
        }
        out.push(acc.value() / t);
    }
    Ok(out)
}

/// Long-run mean with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ReferenceMean {
    pub mean: f64,
    pub stderr: f64,
    pub batches: usize,
    pub horizon: f64,
}

impl ReferenceMean {
    /// The reference is precise enough for deviations at `epsilon`.
    pub fn admits(&self, epsilon: f64) -> bool {
        self.stderr <= epsilon / 10.0
    }

    fn from_batches(num: &[f64], den: &[f64], horizon: f64) -> Result<Self> {
        let b = num.len();
        if b < 2 {
            return Err(Error::TooFewPoints { got: b, need: 2 });
        }
        let total: f64 = den.iter().sum();
        let mean = num.iter().sum::<f64>() / total;
        let ratios: Vec<f64> = num.iter().zip(den).map(|(n, d)| n / d).collect();
        let stderr = math::sqrt(math::variance(&ratios) / b as f64);
        if !(mean.is_finite() && stderr.is_finite()) {
            return Err(Error::NonFinite("reference mean"));
        }
        Ok(Self { mean, stderr, batches: b, horizon })
    }
}

/// Reference `int psi dmu` on a suspension as `sum phi / sum r` over laps.
/// Each start seeds one independent segment (one batch) of `laps` laps after
/// `burn_in`; `fiber_integral` as in [`suspension_time_averages`].
pub fn reference_suspension_mean<B, I>(
    base: &B,
    starts: &[B::Point],
    burn_in: u64,
    laps: u64,
    fiber_integral: &I,
) -> Result<ReferenceMean>
where
    B: SuspensionBase,
    I: Fn(&B::Point, f64, f64) -> f64,
{
    if starts.len() < 2 || laps == 0 {
        return Err(Error::InvalidArgument("need at least two segments of one lap".into()));
    }
    let (mut num, mut den) = (Vec::with_capacity(starts.len()), Vec::with_capacity(starts.len()));
    let mut time = 0.0;
    for x0 in starts {
        let mut x = *x0;
        for _ in 0..burn_in {
            x = base.step(&x)?;
        }
        let (mut a, mut b) = (KahanSum::new(), KahanSum::new());
        for _ in 0..laps {
            let r = base.roof(&x)?;
            a.add(fiber_integral(&x, 0.0, r));
            b.add(r);
            x = base.step(&x)?;
        }
        time += b.value();
        num.push(a.value());
        den.push(b.value());
    }
    ReferenceMean::from_batches(&num, &den, time)
}

/// Reference time average of `psi` along one ODE orbit after a transient.
pub fn reference_ode_mean<F: Fn(&State3) -> f64>(
    s0: State3,
    p: &Params3,
    solver: Solver,
    transient: f64,
    horizon: f64,
    batches: usize,
    psi: &F,
) -> Result<ReferenceMean> {
    if batches < 2 || !(horizon > 0.0) {
        return Err(Error::InvalidArgument("need at least two batches and a positive horizon".into()));
    }
    let mut st = Stepper::new(s0, *p, solver)?;
    if transient > 0.0 {
        st.run_until(transient, |_| true)?;
    }
    let len = horizon / batches as f64;
    let mut f0 = psi(&st.state());
    let (mut num, mut den) = (Vec::new(), Vec::new());
    for k in 0..batches {
        let end = transient + len * (k + 1) as f64;
        let start = st.time();
        let mut acc = KahanSum::new();
        while st.time() < end {
            let step = st.advance(end)?;
            let f1 = psi(&step.y1);
            acc.add(step.h() / 6.0 * (f0 + 4.0 * psi(&step.eval(0.5 * (step.t0 + step.t1))) + f1));
            f0 = f1;
        }
        num.push(acc.value());
        den.push(st.time() - start);
    }
    ReferenceMean::from_batches(&num, &den, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::QuotientBase;

    #[test]
    fn huge_epsilon_never_deviates() {
        let m = ModelParams::classical();
        let s = Suspension::new(QuotientBase(m));
        let fi = |x: &f64, a: f64, b: f64| x * (b - a);
        let hs = [20.0, 40.0, 60.0];
        let mut t = DeviationTally::new(hs.to_vec(), 0.0, 1.5).unwrap();
        let mut rng = StreamRng::new(1, 0);
        for _ in 0..2000 {
            let (x, h) = sample_under_roof(&mut rng, &m);
            let q = s.point(x, h).unwrap();
            t.record(&suspension_time_averages(&s, &q, &hs, &fi).unwrap());
        }
        assert_eq!(t.deviating, vec![0, 0, 0]);
        let c = t.curve(0.95).unwrap();
        assert!(fit_deviation_curve(&c, PrefactorCorrection::None).fit.is_none());
        assert_eq!(fit_deviation_curve(&c, PrefactorCorrection::None).excluded_horizons.len(), 3);
    }

    #[test]
    fn roof_sampler_matches_area() {
        // the height exceeds r(1/2) with probability (1/lambda1) / (r1 + 1/lambda1)
        let m = ModelParams::classical();
        let mut rng = StreamRng::new(5, 0);
        let r1 = m.r(0.5);
        let n = 400_000;
        let mut above = 0;
        for _ in 0..n {
            let (x, s) = sample_under_roof(&mut rng, &m);
            assert!(s < m.r(x) && x.abs() <= 0.5);
            if s > r1 {
                above += 1;
            }
        }
        let p = (1.0 / m.lambda1) / (r1 + 1.0 / m.lambda1);
        let ph = above as f64 / n as f64;
        assert!((ph - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt(), "{ph} vs {p}");
    }

    #[test]
    fn coin_averages_count_bits() {
        let mut a = StreamRng::new(9, 1);
        let mut b = StreamRng::new(9, 1);
        let v = coin_averages(&mut a, &[3, 64, 100]);
        let w0 = b.next_u64();
        assert_eq!(v[0], (w0 & 7).count_ones() as f64 / 3.0);
        assert!(v.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn cramer_rate_closed_form() {
        let i = bernoulli_cramer_rate(0.5, 0.2);
        let expect = 0.7 * (1.4f64).ln() + 0.3 * (0.6f64).ln();
        assert!((i - expect).abs() < 1e-15);
        assert_eq!(bernoulli_cramer_rate(0.5, 0.6), f64::INFINITY);
    }

    #[test]
    fn exact_binomial_tails_fit_to_cramer_rate() {
        let hs: Vec<f64> = (2..=14).map(|k| 10.0 * k as f64).collect();
        let ps: Vec<f64> = hs.iter().map(|&t| exact_two_sided_tail(t as u64, 0.2)).collect();
        let c = DeviationCurve {
            epsilon: 0.2,
            reference: 0.5,
            horizons: hs.clone(),
            fractions: ps.clone(),
            deviating: vec![0; hs.len()],
            samples: 1_000_000,
            discarded: 0,
            ci_lower: ps.clone(),
            ci_upper: ps.clone(),
            stderr: vec![0.0; hs.len()],
            confidence: 0.95,
        };
        let f = fit_deviation_curve(&c, PrefactorCorrection::BahadurRao);
        let ratio = f.rate.unwrap() / bernoulli_cramer_rate(0.5, 0.2);
        assert!((ratio - 1.0).abs() < 0.1, "{ratio}");
    }

    fn exact_two_sided_tail(t: u64, eps: f64) -> f64 {
        // sum of C(t,k) 2^-t over |k/t - 1/2| > eps, in log space
        let mut total = 0.0;
        for k in 0..=t {
            if ((k as f64) / (t as f64) - 0.5).abs() > eps + 1e-12 {
                let lc = crate::special::ln_gamma(t as f64 + 1.0)
                    - crate::special::ln_gamma(k as f64 + 1.0)
                    - crate::special::ln_gamma((t - k) as f64 + 1.0);
                total += (lc - t as f64 * core::f64::consts::LN_2).exp();
            }
        }
        total
    }

    #[test]
    fn ode_averages_of_constant() {
        let p = Params3::CLASSICAL;
        let v = ode_time_averages(State3::new(1.0, 1.0, 20.0), &p, Solver::Rk4 { dt: 0.01 }, &[0.5, 1.25], &|_| 2.0)
            .unwrap();
        assert!(v.iter().all(|a| (a - 2.0).abs() < 1e-12));
    }

    #[test]
    fn reference_of_constant_is_exact() {
        let m = ModelParams::classical();
        let starts = [0.3, -0.2, 0.11];
        let r = reference_suspension_mean(&QuotientBase(m), &starts, 10, 1000, &|_x, a, b| 3.0 * (b - a)).unwrap();
        assert!((r.mean - 3.0).abs() < 1e-12 && r.stderr < 1e-12);
    }
}
