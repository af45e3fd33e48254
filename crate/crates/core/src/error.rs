use alloc::string::String;

use crate::ode::State3;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("non-finite input in {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate equilibrium spectrum: {0}")]
    DegenerateSpectrum(String),
    #[error("eigenvalues are not Lorenz-like: {0}")]
    NotLorenzLike(String),
    #[error("integration failed at t = {time}: step size underflow")]
    IntegrationFailure { time: f64, last_good: State3 },
    #[error("tangent frame collapsed at t = {time}; use a smaller renormalization period")]
    FrameCollapse { time: f64 },
    #[error("point on the singular line x = 0 ({0})")]
    SingularLine(&'static str),
    #[error("orbit terminated on the singular line after {laps} returns")]
    OrbitTerminated { laps: u64 },
    #[error("empty sample set")]
    EmptySamples,
    #[error("center is not on the attractor: zero mass at the largest radius")]
    CenterNotOnAttractor,
    #[error("too few usable points: {got} < {need}")]
    TooFewPoints { got: usize, need: usize },
    #[error("vacuous experiment: {0}")]
    Vacuous(String),
}

impl Error {
    /// True for failures of the numerics themselves, as opposed to bad
    /// inputs or unmet preconditions.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IntegrationFailure { .. }
                | Error::FrameCollapse { .. }
                | Error::OrbitTerminated { .. }
                | Error::NonFinite(_)
        )
    }
}
