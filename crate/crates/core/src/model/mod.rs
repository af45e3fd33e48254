//! Geometric Lorenz model: passage near the saddle, the return map on the
//! square section, its one-dimensional quotient and the roof function.
//!
//! The return map is realized directly in normal form,
//! `F(x, y) = (f(x), sgn(x) (B y |x|^beta + D))`, with
//! `f(x) = sgn(x) (a_cusp |x|^alpha + sqrt(2) |x| - 1/2)` and the roof
//! `r(x) = r0 - ln|x| / lambda1`.

mod suspension;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

pub use suspension::{FixtureBase, Lap, Laps, QuotientBase, SectionBase, Suspension, SuspensionBase, SuspensionPoint};

use crate::ode::{equilibrium_spectrum, Params3, State3};
use crate::{math, Error, Result};

/// Points with `|x|` at or below this are treated as on the singular line.
pub const SINGULAR_EPS: f64 = 1e-300;

/// Raw model constants as read from configuration; `alpha`/`beta` are
/// derived, never supplied.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct ModelConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub a_cusp: f64,
    #[cfg_attr(feature = "serde", serde(rename = "B"))]
    pub b_contract: f64,
    #[cfg_attr(feature = "serde", serde(rename = "D"))]
    pub d_offset: f64,
    pub r0: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let s = equilibrium_spectrum(&Params3::CLASSICAL).expect("classical spectrum");
        Self {
            lambda1: s.lambda1,
            lambda2: s.lambda2,
            lambda3: s.lambda3,
            a_cusp: 0.3,
            b_contract: 0.5,
            d_offset: 0.25,
            r0: 1.0,
        }
    }
}

/// One named invariant and whether it holds.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct InvariantCheck {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl ModelConfig {
    /// Evaluate every invariant without stopping at the first failure.
    pub fn check(&self) -> Vec<InvariantCheck> {
        let (l1, l2, l3) = (self.lambda1, self.lambda2, self.lambda3);
        let alpha = -l3 / l1;
        let beta = -l2 / l1;
        let half_a = math::powf(0.5, alpha);
        let half_b = math::powf(0.5, beta);
        let img1 = self.a_cusp * half_a + math::SQRT_2 / 2.0;
        let img2 = self.b_contract / 2.0 * half_b + self.d_offset;
        let sep = 2.0 * (self.d_offset - self.b_contract * half_b / 2.0);
        let mut v = Vec::new();
        let mut push = |name, pass: bool, detail: String| v.push(InvariantCheck { name, pass, detail });
        push(
            "eigenvalue_ordering",
            l2 < l3 && l3 < 0.0 && 0.0 < -l3 && -l3 < l1,
            format!("lambda2 < lambda3 < 0 < -lambda3 < lambda1 with ({l1}, {l2}, {l3})"),
        );
        push("alpha_in_unit_interval", alpha > 0.0 && alpha < 1.0, format!("alpha = {alpha}"));
        push("beta_above_one", beta > 1.0, format!("beta = {beta}"));
        push("a_cusp_positive", self.a_cusp > 0.0, format!("a_cusp = {}", self.a_cusp));
        push("image_bound_1d", img1 <= 1.0, format!("a_cusp (1/2)^alpha + sqrt(2)/2 = {img1} <= 1"));
        push(
            "contraction_amplitude",
            self.b_contract > 0.0 && self.b_contract <= 0.5,
            format!("0 < B = {} <= 1/2", self.b_contract),
        );
        push("image_bound_2d", img2 < 0.5, format!("B/2 (1/2)^beta + D = {img2} < 1/2"));
        push("r0_positive", self.r0 > 0.0, format!("r0 = {}", self.r0));
        push("branch_separation", sep > 0.0, format!("2 (D - B (1/2)^(beta+1)) = {sep} > 0"));
        push(
            "fiber_contraction",
            self.b_contract * half_b < 1.0,
            format!("B (1/2)^beta = {} < 1", self.b_contract * half_b),
        );
        v
    }
}

/// Validated model constants with the derived exponents.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ModelParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub alpha: f64,
    pub beta: f64,
    pub a_cusp: f64,
    pub b_contract: f64,
    pub d_offset: f64,
    pub r0: f64,
}

/// `(alpha, beta) = (-lambda3/lambda1, -lambda2/lambda1)`.
pub fn derive_exponents(lambda1: f64, lambda2: f64, lambda3: f64) -> Result<(f64, f64)> {
    if !(lambda1.is_finite() && lambda2.is_finite() && lambda3.is_finite()) {
        return Err(Error::NonFinite("derive_exponents"));
    }
    if !(lambda2 < lambda3 && lambda3 < 0.0 && -lambda3 < lambda1) {
        return Err(Error::NotLorenzLike(format!(
            "need lambda2 < lambda3 < 0 < -lambda3 < lambda1, got ({lambda1}, {lambda2}, {lambda3})"
        )));
    }
    Ok((-lambda3 / lambda1, -lambda2 / lambda1))
}

impl ModelParams {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        let (alpha, beta) = derive_exponents(cfg.lambda1, cfg.lambda2, cfg.lambda3)?;
        if let Some(bad) = cfg.check().into_iter().find(|c| !c.pass && c.name != "branch_separation") {
            return Err(Error::InvalidArgument(format!("model invariant {} fails: {}", bad.name, bad.detail)));
        }
        Ok(Self {
            lambda1: cfg.lambda1,
            lambda2: cfg.lambda2,
            lambda3: cfg.lambda3,
            alpha,
            beta,
            a_cusp: cfg.a_cusp,
            b_contract: cfg.b_contract,
            d_offset: cfg.d_offset,
            r0: cfg.r0,
        })
    }

    /// Defaults with the eigenvalues of the classical Lorenz equilibrium.
    pub fn classical() -> Self {
        Self::new(&ModelConfig::default()).expect("default model constants are valid")
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            a_cusp: self.a_cusp,
            b_contract: self.b_contract,
            d_offset: self.d_offset,
            r0: self.r0,
        }
    }

    /// The quotient map, no domain checks.
    #[inline]
    pub fn f(&self, x: f64) -> f64 {
        let ax = x.abs();
        let v = self.a_cusp * math::powf(ax, self.alpha) + math::SQRT_2 * ax - 0.5;
        if x < 0.0 {
            -v
        } else {
            v
        }
    }

    #[inline]
    pub fn df(&self, x: f64) -> f64 {
        let ax = x.abs();
        self.a_cusp * self.alpha * math::powf(ax, self.alpha - 1.0) + math::SQRT_2
    }

    /// Fiber coordinate of the return map, no domain checks.
    #[inline]
    pub fn g(&self, x: f64, y: f64) -> f64 {
        let v = self.b_contract * y * math::powf(x.abs(), self.beta) + self.d_offset;
        if x < 0.0 {
            -v
        } else {
            v
        }
    }

    #[inline]
    pub fn r(&self, x: f64) -> f64 {
        self.r0 - math::ln(x.abs()) / self.lambda1
    }

    /// Upper bound `B (1/2)^beta` on `|dg/dy|`.
    pub fn contraction_factor(&self) -> f64 {
        self.b_contract * math::powf(0.5, self.beta)
    }

    /// `sup |g|` over the section, attained at the corners.
    pub fn sup_abs_g(&self) -> f64 {
        self.b_contract * math::powf(0.5, self.beta + 1.0) + self.d_offset
    }

    /// Time spent outside the linear box: constant by construction.
    pub fn outer_time(&self) -> f64 {
        self.r0
    }
}

fn check_x(x: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::NonFinite("x"));
    }
    if x.abs() <= SINGULAR_EPS {
        return Err(Error::SingularLine("x = 0"));
    }
    if x.abs() > 0.5 {
        return Err(Error::InvalidArgument(format!("|x| = {} exceeds 1/2", x.abs())));
    }
    Ok(())
}

/// A point of the cross-section off the singular line.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SectionPoint {
    pub x: f64,
    pub y: f64,
}

impl SectionPoint {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        check_x(x)?;
        if !y.is_finite() {
            return Err(Error::NonFinite("y"));
        }
        if y.abs() > 0.5 {
            return Err(Error::InvalidArgument(format!("|y| = {} exceeds 1/2", y.abs())));
        }
        Ok(Self { x, y })
    }
}

/// Result of the linear passage near the saddle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Passage {
    /// `(sgn x, y |x|^beta, |x|^alpha)` on the plane `x = +-1`.
    pub exit: State3,
    pub tau: f64,
}

pub fn linear_passage(p: &SectionPoint, m: &ModelParams) -> Result<Passage> {
    check_x(p.x)?;
    let ax = p.x.abs();
    let exit = State3::new(if p.x < 0.0 { -1.0 } else { 1.0 }, p.y * math::powf(ax, m.beta), math::powf(ax, m.alpha));
    Ok(Passage { exit, tau: -math::ln(ax) / m.lambda1 })
}

pub fn one_d_map(x: f64, m: &ModelParams) -> Result<f64> {
    check_x(x)?;
    Ok(m.f(x))
}

pub fn one_d_derivative(x: f64, m: &ModelParams) -> Result<f64> {
    check_x(x)?;
    Ok(m.df(x))
}

pub fn return_map(p: &SectionPoint, m: &ModelParams) -> Result<SectionPoint> {
    check_x(p.x)?;
    Ok(SectionPoint { x: m.f(p.x), y: m.g(p.x, p.y) })
}

pub fn roof(x: f64, m: &ModelParams) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("x"));
    }
    if x.abs() <= SINGULAR_EPS {
        return Err(Error::SingularLine("roof is infinite at x = 0"));
    }
    Ok(m.r(x))
}
