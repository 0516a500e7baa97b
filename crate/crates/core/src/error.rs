use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A point, ball or cutoff support does not fit inside the truncated grid.
    #[error("truncation error: {0}")]
    Truncation(String),

    /// A time step produced non-finite values.
    #[error("overflow at t = {t}: {detail}")]
    Overflow { t: f64, detail: String },

    #[error("fit window error: {0}")]
    FitWindow(String),

    #[error("window error: {0}")]
    Window(String),

    #[error("trajectory is not uniformly sampled: {0}")]
    Resampling(String),

    /// An exponent schedule violates one of its defining conditions.
    #[error("infeasible schedule: condition `{condition}` fails ({detail})")]
    Infeasible { condition: &'static str, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
