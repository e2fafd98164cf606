use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("frame mismatch: state is in the {state} frame, operator in the {operator} frame")]
    FrameMismatch {
        state: crate::dynamics::Frame,
        operator: crate::dynamics::Frame,
    },

    #[error("hermitian eigendecomposition failed ({diagnostics})")]
    Decomposition { diagnostics: MatrixDiagnostics },

    #[error("decay matrix violates `{invariant}`: {detail}")]
    InvariantViolation { invariant: &'static str, detail: String },

    #[error("cannot normalize: {0}")]
    Normalization(String),

    #[error("rate fit failed: {0}")]
    Fit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::InvalidParameter { .. }
            | Error::DimensionMismatch { .. }
            | Error::FrameMismatch { .. } => 3,
            Error::Decomposition { .. }
            | Error::InvariantViolation { .. }
            | Error::Normalization(_)
            | Error::Fit(_) => 4,
            Error::Io(_) => 5,
        }
    }
}

/// Summary of a matrix that failed to decompose.
#[derive(Debug, Clone, Copy)]
pub struct MatrixDiagnostics {
    pub dim: usize,
    pub trace_re: f64,
    pub frobenius: f64,
    pub hermiticity_error: f64,
    pub non_finite: usize,
}

impl std::fmt::Display for MatrixDiagnostics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "dim={} trace={:.6e} |M|_F={:.6e} max|M-M^H|={:.3e} non-finite={}",
            self.dim, self.trace_re, self.frobenius, self.hermiticity_error, self.non_finite
        )
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
