//! Error classes and their process exit codes.

use bugsmith::ckg::CkgError;
use bugsmith::config::ConfigError;
use bugsmith::index::IndexError;
use bugsmith::navigator::NavError;
use bugsmith::orchestrator::{OrchestratorError, ProviderError, ToolError, TraceError};
use bugsmith::patch::{DiffError, PatchError};
use bugsmith::sandbox::SandboxError;
use std::fmt::Display;

pub const OK: i32 = 0;
pub const FAILURE: i32 = 1;
pub const USAGE: i32 = 2;
pub const IO: i32 = 3;
pub const FORMAT: i32 = 4;
pub const NO_MATCH: i32 = 5;
pub const GATE_REJECTED: i32 = 6;
pub const UNRESOLVED: i32 = 7;
pub const SANDBOX: i32 = 8;
pub const PROVIDER: i32 = 9;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Display) -> Self {
        CliError {
            code,
            message: message.to_string(),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        let code = match e {
            ConfigError::Io { .. } => IO,
            ConfigError::Parse(_) => FORMAT,
            ConfigError::Env { .. } | ConfigError::Invalid { .. } => USAGE,
        };
        CliError::new(code, e)
    }
}

impl From<CkgError> for CliError {
    fn from(e: CkgError) -> Self {
        let code = match e {
            CkgError::Io(_) | CkgError::Index(_) => IO,
            CkgError::GraphFormat { .. } | CkgError::Json(_) | CkgError::Integrity(_) => FORMAT,
            CkgError::EmptyQuery => USAGE,
            _ => FAILURE,
        };
        CliError::new(code, e)
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        let code = match e {
            IndexError::InvalidPattern { .. } => USAGE,
            _ => IO,
        };
        CliError::new(code, e)
    }
}

impl From<PatchError> for CliError {
    fn from(e: PatchError) -> Self {
        let code = match e {
            PatchError::NoBlocksFound | PatchError::Diff(_) => FORMAT,
            _ => NO_MATCH,
        };
        CliError::new(code, e)
    }
}

impl From<DiffError> for CliError {
    fn from(e: DiffError) -> Self {
        CliError::new(FORMAT, e)
    }
}

impl From<NavError> for CliError {
    fn from(e: NavError) -> Self {
        CliError::new(FAILURE, e)
    }
}

impl From<SandboxError> for CliError {
    fn from(e: SandboxError) -> Self {
        let code = match e {
            SandboxError::Io { .. } => IO,
            _ => SANDBOX,
        };
        CliError::new(code, e)
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        let code = match e {
            ProviderError::Script { .. } => FORMAT,
            ProviderError::Io(_) => IO,
            _ => PROVIDER,
        };
        CliError::new(code, e)
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        let code = match e {
            TraceError::Io(_) => IO,
            TraceError::Format { .. } => FORMAT,
        };
        CliError::new(code, e)
    }
}

impl From<OrchestratorError> for CliError {
    fn from(e: OrchestratorError) -> Self {
        match e {
            OrchestratorError::Provider(p) => p.into(),
            OrchestratorError::Sandbox(s) | OrchestratorError::Tool(ToolError::Sandbox(s)) => s.into(),
            OrchestratorError::EmptyIssue | OrchestratorError::InvalidBudget => CliError::new(USAGE, e),
            OrchestratorError::AllCandidatesRejected { .. } => CliError::new(GATE_REJECTED, e),
            OrchestratorError::BudgetExhausted(_) => CliError::new(UNRESOLVED, e),
            other => CliError::new(FAILURE, other),
        }
    }
}

pub fn io(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::new(IO, format!("{}: {e}", path.display()))
}
