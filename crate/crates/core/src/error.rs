use thiserror::Error;

/// Errors raised by the numerical routines and the experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("kernel family {0} has no finite random-feature representation")]
    UnsupportedFamily(&'static str),

    #[error("derivative of total order {order} exceeds the capability of the {family} kernel")]
    DerivativeOrder { family: &'static str, order: usize },

    #[error("grid axis with {points} points is too small for a stencil of {required} points")]
    GridTooSmall { points: usize, required: usize },

    #[error("matrix is ill-conditioned (condition estimate {condition:.3e}) after jitter {jitter:.3e}")]
    IllConditioned { condition: f64, jitter: f64 },

    #[error("linear system is singular: {0}")]
    Singular(String),

    #[error("quadrature did not converge: relative change {rel_change:.3e} after {nodes} nodes")]
    QuadratureNonConvergence { rel_change: f64, nodes: usize },

    #[error("assembly produced a non-symmetric matrix (asymmetry {0:.3e})")]
    Asymmetric(f64),

    #[error("spectrum has a negative eigenvalue {value:.3e} (leading eigenvalue {leading:.3e})")]
    NegativeEigenvalue { value: f64, leading: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::UnsupportedFamily(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
