use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Usage(_) | CliError::Config(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "UsageError",
            CliError::Config(_) => "ConfigError",
            CliError::Runtime(_) => "RuntimeError",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }

    /// One-line JSON record for standard error.
    pub fn record(&self) -> String {
        serde_json::json!({
            "error": {
                "kind": self.kind(),
                "message": self.message(),
                "exit_code": self.exit_code(),
            }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind(), self.message())
    }
}

pub fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}
