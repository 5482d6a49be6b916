use ewkit_core::EwError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("bound violated: {0}")]
    Violation(String),
    #[error("declared constant violated: {0}")]
    Constant(String),
    #[error("sampler diagnostic failed: {0}")]
    Diagnostic(String),
    #[error("missing constant `{0}` for bound")]
    MissingConstant(&'static str),
    #[error(transparent)]
    Numeric(#[from] EwError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit status: 1 bound violation, 2 config error,
    /// 3 numeric or diagnostic failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Violation(_) => 1,
            HarnessError::Config(_) | HarnessError::MissingConstant(_) | HarnessError::Io(_) => 2,
            HarnessError::Constant(_) | HarnessError::Diagnostic(_) | HarnessError::Numeric(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}
