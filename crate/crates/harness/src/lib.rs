//! Scenario runner, logs, and offline tools for the husky simulator.

use std::fmt;
use std::path::{Path, PathBuf};

pub mod design;
pub mod log;
pub mod plotdata;
pub mod runner;
pub mod scenario;
pub mod summary;

pub use runner::{run_scenario, RunOptions, RunOutcome, RunStatus};
pub use scenario::{Scenario, ScenarioConfig, Step};
pub use summary::{summarize, RunSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_FAULT: i32 = 3;
pub const EXIT_FALL: i32 = 4;

/// Violations, one per line.
pub struct Violations<'a>(pub &'a [String]);

impl fmt::Display for Violations<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in self.0 {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{}: invalid configuration:{}", path.display(), Violations(violations))]
    Config { path: PathBuf, violations: Vec<String> },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: u64, message: String },
}

impl HarnessError {
    pub fn config(path: &Path, violations: Vec<String>) -> Self {
        HarnessError::Config {
            path: path.to_path_buf(),
            violations,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, line: u64, message: String) -> Self {
        HarnessError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        }
    }

    /// Input problems are configuration errors; I/O failures count as faults.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } | HarnessError::Parse { .. } => EXIT_CONFIG,
            HarnessError::Io { .. } => EXIT_FAULT,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_error_lists_every_violation() {
        let e = HarnessError::config(Path::new("s.toml"), vec!["a bad".into(), "b bad".into()]);
        let text = e.to_string();
        assert!(text.contains("s.toml") && text.contains("- a bad") && text.contains("- b bad"), "{text}");
        assert_eq!(e.exit_code(), EXIT_CONFIG);
    }
}
