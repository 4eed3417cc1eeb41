use std::fmt;

/// Failure of one invocation, mapped to a process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unknown subcommand, flag, or malformed flag value.
    Usage(String),
    /// Unreadable config file, unknown or mistyped config key.
    Config(String),
    Core(night2day::Error),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Core(e) => e.category(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "usage" => 2,
            "config" => 3,
            "artifact" => 4,
            "input" => 5,
            "numeric" => 6,
            "checkpoint" => 7,
            "io" => 8,
            _ => 9,
        }
    }

    /// Single-line JSON object for the diagnostic stream.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "error": {
                "category": self.category(),
                "code": self.exit_code(),
                "message": self.to_string(),
            }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Config(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<night2day::Error> for CliError {
    fn from(e: night2day::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;
