use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is rank deficient (smallest/largest singular value ratio {ratio:.3e})")]
    RankDeficient { ratio: f64 },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("evaluation inside the singular set of design `{design}`")]
    SingularEvaluation { design: String },

    #[error("adaptive step fell below 1e-14 at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("non-finite state encountered at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("state is off the orbit (|Phi| = {phi:.3e}, |x_l - x_l*| = {ell:.3e})")]
    OffOrbit { phi: f64, ell: f64 },

    #[error("fit window too short: {samples} samples (need at least 20)")]
    WindowTooShort { samples: usize },

    #[error("insufficient cycles for period estimation: {cycles} complete")]
    InsufficientCycles { cycles: usize },

    #[error("no valid radius: Hessian check already fails at radius 1e-3")]
    NoValidRadius,

    #[error("Hamiltonian decomposition unavailable: {0}")]
    DecompositionUnavailable(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("invalid integrator settings: {0}")]
    InvalidSettings(String),

    #[error("orbit tracing failed: {0}")]
    OrbitTrace(String),

    #[error("controller error: {0}")]
    Controller(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on `{path}`: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }

    /// Process exit status: 2 for bad input, 1 for failures during a run.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io { .. } | Error::InvalidParameter { .. } | Error::InvalidSettings(_) => 2,
            _ => 1,
        }
    }
}
