pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] udc_core::Error),
    #[error(transparent)]
    Triage(#[from] udc_triage::TriageError),
}

impl CliError {
    /// 1 for bad invocations or configs, 2 for data and model failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(udc_core::Error::Config(_)) => 1,
            _ => 2,
        }
    }
}
