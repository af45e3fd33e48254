//! The classical Lorenz system `x' = a(y - x)`, `y' = rx - y - xz`,
//! `z' = xy - bz`, its linearization, integrators and section crossings.

mod integrate;
mod jet;
mod section;

use alloc::format;
use core::ops::{Add, AddAssign, Mul, Neg, Sub};

pub use integrate::{integrate, Solver, Step, Stepper, Trajectory, DEFAULT_SAMPLE_DT};
pub use jet::{propagate_jet, Jet, JetLedger, JetStepper, Mat3};
pub use section::{
    collect_section_events, detect_section_crossings, CrossingFilter, LinearSegment, SectionDetector, SectionEvent,
    Segment,
};

use crate::{math, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct State3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl State3 {
    pub const ORIGIN: State3 = State3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dot(&self, o: &State3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.dot(self))
    }

    /// Image under the symmetry `(x, y, z) -> (-x, -y, z)`.
    pub fn mirror(&self) -> Self {
        Self::new(-self.x, -self.y, self.z)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn max_abs_diff(&self, o: &State3) -> f64 {
        (self.x - o.x).abs().max((self.y - o.y).abs()).max((self.z - o.z).abs())
    }
}

impl Add for State3 {
    type Output = State3;
    #[inline]
    fn add(self, o: State3) -> State3 {
        State3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for State3 {
    #[inline]
    fn add_assign(&mut self, o: State3) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for State3 {
    type Output = State3;
    #[inline]
    fn sub(self, o: State3) -> State3 {
        State3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for State3 {
    type Output = State3;
    #[inline]
    fn mul(self, k: f64) -> State3 {
        State3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Neg for State3 {
    type Output = State3;
    fn neg(self) -> State3 {
        State3::new(-self.x, -self.y, -self.z)
    }
}

/// Coefficients `(a, r, b)` of the Lorenz system.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Params3 {
    pub a: f64,
    pub r: f64,
    pub b: f64,
}

impl Params3 {
    /// `(10, 28, 8/3)`.
    pub const CLASSICAL: Params3 = Params3 { a: 10.0, r: 28.0, b: 8.0 / 3.0 };

    /// Requires finite `a > 0`, `b > 0`, `r > 0`. `r <= 1` is accepted (the
    /// origin is then a sink); [`Params3::is_classical_regime`] reports it.
    pub fn new(a: f64, r: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && r.is_finite() && b.is_finite()) {
            return Err(Error::NonFinite("Params3"));
        }
        if a <= 0.0 || b <= 0.0 || r <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "Lorenz coefficients must be positive, got a={a}, r={r}, b={b}"
            )));
        }
        Ok(Self { a, r, b })
    }

    /// `a > 0, r > 1, b > 0`: the origin is a saddle with one unstable direction.
    pub fn is_classical_regime(&self) -> bool {
        self.a > 0.0 && self.r > 1.0 && self.b > 0.0
    }

    /// Trace of the Jacobian, the same at every point.
    pub fn divergence(&self) -> f64 {
        -(self.a + 1.0 + self.b)
    }
}

impl Default for Params3 {
    fn default() -> Self {
        Self::CLASSICAL
    }
}

/// Unchecked field evaluation for inner loops.
#[inline(always)]
pub fn field(s: &State3, p: &Params3) -> State3 {
    State3::new(p.a * (s.y - s.x), p.r * s.x - s.y - s.x * s.z, s.x * s.y - p.b * s.z)
}

/// The Lorenz vector field, rejecting non-finite input.
pub fn vector_field(s: &State3, p: &Params3) -> Result<State3> {
    if !s.is_finite() {
        return Err(Error::NonFinite("vector_field"));
    }
    Ok(field(s, p))
}

/// Jacobian matrix, row-major: `j[i][k] = d f_i / d s_k`.
#[inline]
pub fn jacobian(s: &State3, p: &Params3) -> [[f64; 3]; 3] {
    [[-p.a, p.a, 0.0], [p.r - s.z, -1.0, -s.x], [s.y, s.x, -p.b]]
}

/// Eigenvalues of the linearization at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EquilibriumSpectrum {
    /// Largest root of `t^2 + (a+1) t - a(r-1)`.
    pub lambda1: f64,
    /// Smallest root of the same quadratic.
    pub lambda2: f64,
    /// `-b`.
    pub lambda3: f64,
    /// `lambda2 < lambda3 < 0 < -lambda3 < lambda1`.
    pub lorenz_like: bool,
}

impl EquilibriumSpectrum {
    pub fn sorted_descending(&self) -> [f64; 3] {
        let mut v = [self.lambda1, self.lambda2, self.lambda3];
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }
}

pub fn equilibrium_spectrum(p: &Params3) -> Result<EquilibriumSpectrum> {
    let bq = p.a + 1.0;
    let cq = -p.a * (p.r - 1.0);
    let disc = bq * bq - 4.0 * cq;
    if !disc.is_finite() || disc <= 0.0 {
        return Err(Error::DegenerateSpectrum(format!("discriminant {disc} of the (x, y) block is not positive")));
    }
    // Cancellation-free roots.
    let q = -0.5 * (bq + math::sqrt(disc));
    let (r1, r2) = (q, cq / q);
    let (lambda1, lambda2) = if r1 > r2 { (r1, r2) } else { (r2, r1) };
    let lambda3 = -p.b;
    if lambda1 == 0.0 || lambda2 == 0.0 {
        return Err(Error::DegenerateSpectrum("zero eigenvalue (r = 1)".into()));
    }
    if lambda3 == lambda1 || lambda3 == lambda2 {
        return Err(Error::DegenerateSpectrum("repeated eigenvalue".into()));
    }
    let lorenz_like = lambda2 < lambda3 && lambda3 < 0.0 && 0.0 < -lambda3 && -lambda3 < lambda1;
    Ok(EquilibriumSpectrum { lambda1, lambda2, lambda3, lorenz_like })
}
