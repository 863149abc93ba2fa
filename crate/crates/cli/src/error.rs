use cbrw_core::CbrwError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Numerical(String),

    /// The report was produced but the check failed; it carries the report.
    #[error("verification failed")]
    VerificationFailed(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::VerificationFailed(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

fn innermost(e: &CbrwError) -> &CbrwError {
    match e {
        CbrwError::AtLevel { source, .. } => innermost(source),
        other => other,
    }
}

impl From<CbrwError> for CliError {
    fn from(e: CbrwError) -> Self {
        match innermost(&e) {
            CbrwError::Numerical(_)
            | CbrwError::NonConvergence { .. }
            | CbrwError::AllCensored { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}
