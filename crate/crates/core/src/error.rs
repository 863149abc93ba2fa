use thiserror::Error;

pub type Result<T> = std::result::Result<T, CbrwError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CbrwError {
    #[error("invalid walk: {0}")]
    InvalidWalk(String),

    #[error("invalid offspring law: {0}")]
    InvalidOffspring(String),

    #[error("invalid catalyst set: {0}")]
    InvalidCatalysts(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A numerical routine failed to produce an answer it is supposed to
    /// guarantee (no sign change, iterate left the unit box, singular pivot).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// The requested asymptotic law does not apply to the instance.
    #[error("hypothesis mismatch: {0}")]
    Hypothesis(String),

    #[error("all {trials} trials were censored; raise max_population or the step cap")]
    AllCensored { trials: u64 },

    #[error("level x={x}: {source}")]
    AtLevel {
        x: i64,
        #[source]
        source: Box<CbrwError>,
    },
}

impl CbrwError {
    pub(crate) fn at_level(self, x: i64) -> Self {
        CbrwError::AtLevel {
            x,
            source: Box::new(self),
        }
    }
}
