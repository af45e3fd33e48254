use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::math::{self, KahanSum};
use crate::model::{ModelParams, SINGULAR_EPS};
use crate::quad::GaussLegendre;
use crate::rng::StreamRng;
use crate::{Error, Result};

/// Flow observables on the model of the form
/// `psi(x, y, h) = a sin(k x) + c1 x + (b + c x) y exp(-h)`.
///
/// The fiber part decays with height, so `phi = int_0^r psi` stays
/// Lipschitz in `y` with constant at most `|b| + |c| / 2` although the roof
/// is unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct FiberPsi {
    pub a: f64,
    pub k: f64,
    pub c1: f64,
    pub b: f64,
    pub c: f64,
}

impl FiberPsi {
    pub fn eval(&self, x: f64, y: f64, h: f64) -> f64 {
        self.a * math::sin(self.k * x) + self.c1 * x + (self.b + self.c * x) * y * math::exp(-h)
    }

    pub fn fiber_lipschitz(&self) -> f64 {
        self.b.abs() + 0.5 * self.c.abs()
    }

    /// Member of the family with coefficients drawn in `[-1, 1]`, `k` in `[1, 6]`.
    pub fn random(rng: &mut StreamRng) -> Self {
        Self {
            a: rng.uniform_in(-1.0, 1.0),
            k: rng.uniform_in(1.0, 6.0),
            c1: rng.uniform_in(-1.0, 1.0),
            b: rng.uniform_in(-1.0, 1.0),
            c: rng.uniform_in(-1.0, 1.0),
        }
    }
}

/// Fixed parameters of a containment experiment, with the references
/// computed along one long orbit.
#[derive(Debug, Clone)]
pub struct ProjectionSetup {
    pub model: ModelParams,
    pub psi: FiberPsi,
    pub epsilon: f64,
    /// Truncation distance of the slow-recurrence average.
    pub delta: f64,
    pub n_grid: Vec<usize>,
    pub reference_phi: f64,
    pub reference_zeta: f64,
    /// Bound on the transfer function `u` with `phi = zeta o P + u - u o F`.
    pub u_bound: f64,
    /// Smallest `n` from which `2 |u| / n` plus the reference gap is below `epsilon`.
    pub burn_in: usize,
    gl: GaussLegendre,
}

impl ProjectionSetup {
    pub fn new(
        model: ModelParams,
        psi: FiberPsi,
        epsilon: f64,
        delta: f64,
        n_grid: Vec<usize>,
        reference_len: u64,
        x0: (f64, f64),
    ) -> Result<Self> {
        if !(epsilon > 0.0 && delta > 0.0 && delta < 0.5) {
            return Err(Error::InvalidArgument("need epsilon > 0 and 0 < delta < 1/2".into()));
        }
        if n_grid.is_empty() || n_grid.contains(&0) {
            return Err(Error::InvalidArgument("n grid must be non-empty and positive".into()));
        }
        let mut s = Self {
            model,
            psi,
            epsilon,
            delta,
            n_grid,
            reference_phi: 0.0,
            reference_zeta: 0.0,
            u_bound: psi.fiber_lipschitz() * 0.5 / (1.0 - model.contraction_factor()),
            burn_in: 0,
            gl: GaussLegendre::new(8),
        };
        let (mut sp, mut sz) = (KahanSum::new(), KahanSum::new());
        let (mut x, mut y) = x0;
        for _ in 0..1000 {
            (x, y) = s.step(x, y)?;
        }
        for _ in 0..reference_len {
            sp.add(s.phi(x, y)?);
            sz.add(s.zeta(x)?);
            (x, y) = s.step(x, y)?;
        }
        s.reference_phi = sp.value() / reference_len as f64;
        s.reference_zeta = sz.value() / reference_len as f64;
        let gap = (s.reference_phi - s.reference_zeta).abs();
        if gap >= epsilon {
            return Err(Error::InvalidArgument(alloc::format!("reference gap {gap} is not below epsilon")));
        }
        s.burn_in = if s.u_bound == 0.0 { 0 } else { math::ceil(2.0 * s.u_bound / (epsilon - gap)) as usize };
        Ok(s)
    }

    fn step(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        if x.abs() <= SINGULAR_EPS {
            return Err(Error::SingularLine("return map"));
        }
        Ok((self.model.f(x), self.model.g(x, y)))
    }

    /// `phi(x, y) = int_0^{r(x)} psi(x, y, h) dh`.
    pub fn phi(&self, x: f64, y: f64) -> Result<f64> {
        if x.abs() <= SINGULAR_EPS {
            return Err(Error::SingularLine("roof"));
        }
        let v = self.gl.integrate_composite(|h| self.psi.eval(x, y, h), 0.0, self.model.r(x), 1.0);
        if !v.is_finite() {
            return Err(Error::NonFinite("phi quadrature"));
        }
        Ok(v)
    }

    /// `zeta(x) = phi(x, 0) + sum_j [phi(F^j(f x, g(x, 0))) - phi(F^j(f x, 0))]`,
    /// summed until the two fiber tracks coincide.
    pub fn zeta(&self, x: f64) -> Result<f64> {
        let mut acc = self.phi(x, 0.0)?;
        let (mut xa, mut ya) = self.step(x, 0.0)?;
        let mut yb = 0.0;
        for _ in 0..200 {
            if ya == yb {
                break;
            }
            acc += self.phi(xa, ya)? - self.phi(xa, yb)?;
            let xn = self.model.f(xa);
            ya = self.model.g(xa, ya);
            yb = self.model.g(xa, yb);
            if xa.abs() <= SINGULAR_EPS {
                return Err(Error::SingularLine("return map"));
            }
            xa = xn;
        }
        Ok(acc)
    }

    fn slow_term(&self, x: f64) -> f64 {
        let d = x.abs();
        if d < self.delta {
            -math::ln(d)
        } else {
            0.0
        }
    }

    /// Run samples `range` of the stream family `seed`; sample `i` draws a
    /// Lebesgue point of the square from stream `i`.
    pub fn run(&self, seed: u64, range: Range<u64>) -> ProjectionTally {
        let mut t = ProjectionTally::new(self.n_grid.len());
        let n_max = *self.n_grid.iter().max().unwrap();
        for i in range {
            let mut rng = StreamRng::new(seed, i);
            let p = (rng.uniform_in(-0.5, 0.5), rng.uniform_in(-0.5, 0.5));
            match self.sample(p, n_max) {
                Ok(rows) => t.record(&rows),
                Err(_) => t.discarded += 1,
            }
        }
        t
    }

    fn sample(&self, p: (f64, f64), n_max: usize) -> Result<Vec<[bool; 3]>> {
        let (mut x, mut y) = p;
        let (mut sp, mut sz, mut sr) = (KahanSum::new(), KahanSum::new(), KahanSum::new());
        let mut out = Vec::with_capacity(self.n_grid.len());
        for n in 1..=n_max {
            sp.add(self.phi(x, y)?);
            sz.add(self.zeta(x)?);
            sr.add(self.slow_term(x));
            if self.n_grid.contains(&n) {
                let nf = n as f64;
                let f_dev = (sp.value() / nf - self.reference_phi).abs() > 2.0 * self.epsilon;
                let z_dev = (sz.value() / nf - self.reference_zeta).abs() > self.epsilon;
                let slow = sr.value() / nf > self.epsilon;
                out.push((n, [f_dev, z_dev, slow]));
            }
            if n < n_max {
                (x, y) = self.step(x, y)?;
            }
        }
        Ok(self.n_grid.iter().map(|n| out.iter().find(|(m, _)| m == n).unwrap().1).collect())
    }

    pub fn report(&self, t: &ProjectionTally) -> ProjectionReport {
        let rows = self
            .n_grid
            .iter()
            .enumerate()
            .map(|(i, &n)| ProjectionRow {
                n,
                f_deviating: t.f_deviating[i],
                zeta_deviating: t.zeta_deviating[i],
                slow_recurrence: t.slow[i],
                violations: t.violations[i],
                beyond_burn_in: n >= self.burn_in,
            })
            .collect();
        ProjectionReport {
            psi: self.psi,
            epsilon: self.epsilon,
            delta: self.delta,
            contraction: self.model.contraction_factor(),
            u_bound: self.u_bound,
            burn_in: self.burn_in,
            reference_phi: self.reference_phi,
            reference_zeta: self.reference_zeta,
            samples: t.samples,
            discarded: t.discarded,
            rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionTally {
    pub f_deviating: Vec<u64>,
    pub zeta_deviating: Vec<u64>,
    pub slow: Vec<u64>,
    pub violations: Vec<u64>,
    pub samples: u64,
    pub discarded: u64,
}

impl ProjectionTally {
    pub fn new(n: usize) -> Self {
        Self {
            f_deviating: vec![0; n],
            zeta_deviating: vec![0; n],
            slow: vec![0; n],
            violations: vec![0; n],
            samples: 0,
            discarded: 0,
        }
    }

    fn record(&mut self, rows: &[[bool; 3]]) {
        for (i, &[f, z, s]) in rows.iter().enumerate() {
            self.f_deviating[i] += f as u64;
            self.zeta_deviating[i] += z as u64;
            self.slow[i] += s as u64;
            self.violations[i] += (f && !z && !s) as u64;
        }
        self.samples += 1;
    }

    pub fn merge(&mut self, o: &ProjectionTally) {
        let add = |a: &mut Vec<u64>, b: &Vec<u64>| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.f_deviating, &o.f_deviating);
        add(&mut self.zeta_deviating, &o.zeta_deviating);
        add(&mut self.slow, &o.slow);
        add(&mut self.violations, &o.violations);
        self.samples += o.samples;
        self.discarded += o.discarded;
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ProjectionRow {
    pub n: usize,
    pub f_deviating: u64,
    pub zeta_deviating: u64,
    pub slow_recurrence: u64,
    /// Deviating at `2 epsilon` for `F` but in neither quotient event.
    pub violations: u64,
    pub beyond_burn_in: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ProjectionReport {
    pub psi: FiberPsi,
    pub epsilon: f64,
    pub delta: f64,
    pub contraction: f64,
    pub u_bound: f64,
    pub burn_in: usize,
    pub reference_phi: f64,
    pub reference_zeta: f64,
    pub samples: u64,
    pub discarded: u64,
    pub rows: Vec<ProjectionRow>,
}

impl ProjectionReport {
    pub fn violations_beyond_burn_in(&self) -> u64 {
        self.rows.iter().filter(|r| r.beyond_burn_in).map(|r| r.violations).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fiber_constant_psi_has_no_burn_in() {
        let psi = FiberPsi { a: 0.8, k: 3.0, c1: 0.5, b: 0.0, c: 0.0 };
        let s = ProjectionSetup::new(ModelParams::classical(), psi, 0.05, 0.03, vec![1, 2, 5, 10], 20_000, (0.1, 0.2))
            .unwrap();
        assert_eq!(s.burn_in, 0);
        assert_eq!(s.reference_phi, s.reference_zeta);
        let r = s.report(&s.run(1, 0..500));
        assert_eq!(r.violations_beyond_burn_in(), 0);
        assert!(r.rows[0].f_deviating > 0);
    }

    #[test]
    fn zeta_is_cohomologous() {
        // phi(p) - zeta(x) = u(p) - u(F p) with |u| bounded by u_bound
        let psi = FiberPsi { a: 0.3, k: 2.0, c1: -0.4, b: 0.9, c: -0.7 };
        let s = ProjectionSetup::new(ModelParams::classical(), psi, 0.1, 0.03, vec![1], 1000, (0.1, 0.2)).unwrap();
        let (mut x, mut y) = (0.31, -0.27);
        let mut diff = 0.0;
        for n in 1..=200 {
            diff += s.phi(x, y).unwrap() - s.zeta(x).unwrap();
            assert!(diff.abs() <= 2.0 * s.u_bound + 1e-12, "n={n}: {diff}");
            (x, y) = s.step(x, y).unwrap();
        }
    }

    #[test]
    fn fiber_lipschitz_psi_clean_after_burn_in() {
        let psi = FiberPsi { a: 0.2, k: 4.0, c1: 0.3, b: 1.0, c: 1.0 };
        let s = ProjectionSetup::new(
            ModelParams::classical(),
            psi,
            0.1,
            0.03,
            vec![1, 2, 4, 8, 16, 24, 32],
            20_000,
            (0.1, 0.2),
        )
        .unwrap();
        assert!(s.burn_in > 0);
        let r = s.report(&s.run(2, 0..1000));
        assert_eq!(r.violations_beyond_burn_in(), 0, "{r:?}");
    }
}
