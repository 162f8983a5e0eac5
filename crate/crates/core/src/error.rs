use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("incompatible representations: {0}")]
    Incompatible(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("semi-detailed balance violated: max gap {gap:.3e} exceeds tolerance {tol:.3e}")]
    SemiDetailedBalance { gap: f64, tol: f64 },

    #[error("absorption rate infimum {0:.3e} is not strictly positive")]
    NonPositiveAbsorption(f64),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("principal eigenvalue {lambda} deviates from 1 by more than {tol:.1e}")]
    EigenvalueMismatch { lambda: f64, tol: f64 },

    #[error("equilibrium has a nonpositive entry {0:.3e}")]
    NonPositiveEquilibrium(f64),

    #[error("compatibility condition violated: {which} = {value:.3e} (tolerance {tol:.1e})")]
    Compatibility {
        which: &'static str,
        value: f64,
        tol: f64,
    },

    #[error("diffusion tensor is not positive semi-definite at x = {x:?}: smallest eigenvalue {min_eig:.3e}")]
    NotElliptic { x: Vec<f64>, min_eig: f64 },

    #[error("stability violation: {0}")]
    Stability(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
