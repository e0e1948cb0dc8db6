use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Neumann problems need a zero-mean right-hand side.
    #[error("right-hand side is not mean-free (mean {mean:e}, norm {norm:e})")]
    Compatibility { mean: f64, norm: f64 },

    #[error("conjugate gradient stalled after {iterations} iterations (relative residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("assumption {name} violated: {detail}")]
    Assumption { name: String, detail: String },

    #[error("not applicable: {0}")]
    Inapplicable(String),

    #[error("Newton iteration diverged at t = {t}: residual history {history:?}")]
    Newton { t: f64, history: Vec<f64> },

    #[error(
        "integrator step size underflow at t = {t:e} (h = {step:e}); \
         the system is too stiff, try larger eps/tau or fewer modes"
    )]
    Stiffness { t: f64, step: f64 },

    #[error("rate fit failed: {0}")]
    Fit(String),

    #[error("trajectories cannot be compared: {0}")]
    Comparison(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed snapshot: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn assumption(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Assumption {
            name: name.into(),
            detail: detail.into(),
        }
    }

    /// True for errors caused by user input rather than a numerical failure.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Assumption { .. }
                | Error::Inapplicable(_)
                | Error::Parse { .. }
                | Error::Dimension(_)
        )
    }
}
