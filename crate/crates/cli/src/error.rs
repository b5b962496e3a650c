use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("scenario not found: {0}")]
    ScenarioNotFound(String),
    #[error("{0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    /// The planner ran but found no valid plan.
    #[error("{0}")]
    Planner(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Planner(_) => 1,
            _ => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::ScenarioNotFound(_) => "scenario not found",
            CliError::Usage(_) => "usage error",
            CliError::Config(_) => "config error",
            CliError::Io(_) => "io error",
            CliError::Planner(_) => "planner failure",
        }
    }

    /// One-line JSON error record.
    pub fn record(&self) -> String {
        json!({ "error": self.kind(), "detail": self.to_string(), "exit_code": self.exit_code() }).to_string()
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

impl From<rtp_core::plp::PlpError> for CliError {
    fn from(e: rtp_core::plp::PlpError) -> Self {
        use rtp_core::plp::PlpError;
        match e {
            PlpError::NothingSolved(_) => CliError::Planner(e.to_string()),
            PlpError::Io(io) => CliError::Io(io),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_stable() {
        assert_eq!(CliError::ScenarioNotFound("x".into()).exit_code(), 2);
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Planner("x".into()).exit_code(), 1);
    }

    #[test]
    fn record_is_json() {
        let v: serde_json::Value = serde_json::from_str(&CliError::ScenarioNotFound("moon".into()).record()).unwrap();
        assert_eq!(v["error"], "scenario not found");
        assert_eq!(v["exit_code"], 2);
    }
}
