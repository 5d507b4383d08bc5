use thiserror::Error;

/// Process exit statuses.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    /// Solver and oracle disagree, a model fails validation, the verdict is
    /// not the expected one, or the solver gave no usable answer.
    pub const VERIFICATION: u8 = 2;
    /// Bad configuration or command line, unusable output directory, or a
    /// solver that cannot be launched.
    pub const CONFIG: u8 = 64;
    /// Unreadable or malformed trajectory data.
    pub const DATA: u8 = 65;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Data(_) => exit::DATA,
            CliError::Verification(_) => exit::VERIFICATION,
        }
    }
}
