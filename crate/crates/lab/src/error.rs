use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("config: {0}")]
    Config(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] lorenzlab_core::Error),
}

impl LabError {
    /// 2 for configuration and precondition failures, 3 for numerical ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Numerical(_) => 3,
            LabError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

pub type LabResult<T> = Result<T, LabError>;
