//! Definition/reference navigation and static diagnostics behind a
//! pluggable backend, plus fuzzy resolution of agent-supplied positions.

pub mod lsp;
pub mod position;
pub mod stub;

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

pub use lsp::{LspBackend, LspConfig};
pub use position::{resolve_position, resolve_position_observed, DEFAULT_RADIUS};
pub use stub::StubBackend;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionHint {
    pub path: String,
    pub line: usize,
    #[serde(default)]
    pub identifier: Option<String>,
    #[serde(default)]
    pub opened_files: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    ExactLine,
    NearbyLine,
    OpenedFiles,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedPosition {
    pub path: String,
    pub line: usize,
    /// 1-based character column of the identifier's first character.
    pub column: usize,
    pub identifier: String,
    pub tier: Tier,
}

/// Ordered so that `Fatal` is the greatest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Hint,
    Info,
    Warning,
    Error,
    Fatal,
}

impl Severity {
    pub fn is_blocking(self) -> bool {
        self >= Severity::Error
    }
}

impl std::fmt::Display for Severity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Severity::Hint => "hint",
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Error => "error",
            Severity::Fatal => "fatal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Diagnostic {
    pub path: String,
    pub line: usize,
    pub severity: Severity,
    #[serde(default)]
    pub code: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NavLocation {
    pub path: String,
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NavKind {
    Definition,
    References,
}

#[derive(Debug, thiserror::Error)]
pub enum NavError {
    #[error("no identifier found near the hinted position")]
    NoIdentifierFound,
    #[error("ambiguous identifier in {tier:?}: {candidates:?}")]
    AmbiguousIdentifier { tier: Tier, candidates: Vec<String> },
    #[error("invalid position hint: {0}")]
    InvalidHint(String),
    #[error("position {path}:{line}:{column} is out of range")]
    PositionOutOfRange { path: String, line: usize, column: usize },
    #[error("navigation backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("no diagnostics backend for `{0}`")]
    UnsupportedLanguage(String),
    #[error("backend did not answer within {0:?}")]
    Timeout(Duration),
    #[error("protocol error: {0}")]
    Protocol(String),
}

/// Read access to file contents by repository-relative path.
pub trait Snapshot {
    fn read(&self, path: &str) -> Option<String>;
}

impl Snapshot for BTreeMap<String, String> {
    fn read(&self, path: &str) -> Option<String> {
        self.get(path).cloned()
    }
}

/// Files read from a directory on demand.
#[derive(Debug, Clone)]
pub struct DirSnapshot {
    pub root: PathBuf,
}

impl DirSnapshot {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirSnapshot { root: root.into() }
    }
}

impl Snapshot for DirSnapshot {
    fn read(&self, path: &str) -> Option<String> {
        crate::index::read_text(&self.root.join(path)).ok().flatten()
    }
}

pub trait NavigationBackend: Send {
    fn name(&self) -> &str;
    fn definition(&mut self, pos: &ResolvedPosition) -> Result<Vec<NavLocation>, NavError>;
    fn references(&mut self, pos: &ResolvedPosition) -> Result<Vec<NavLocation>, NavError>;
    /// Diagnostics for `content` as if it were the file at `path`; nothing is saved.
    fn diagnostics(&mut self, path: &str, content: &str) -> Result<Vec<Diagnostic>, NavError>;
    /// The file at `path` changed on disk (`None`: deleted).
    fn file_changed(&mut self, _path: &str, _content: Option<&str>) -> Result<(), NavError> {
        Ok(())
    }
}

/// Source of diagnostics for the patch gate.
pub trait DiagnosticsProvider: Sync {
    fn collect_diagnostics(&self, path: &str, content: &str) -> Result<Vec<Diagnostic>, NavError>;
}

/// One serialized backend session for a workspace.
pub struct Navigator {
    backend: Mutex<Box<dyn NavigationBackend>>,
    radius: usize,
}

impl Navigator {
    pub fn new(backend: Box<dyn NavigationBackend>) -> Self {
        Navigator {
            backend: Mutex::new(backend),
            radius: DEFAULT_RADIUS,
        }
    }

    pub fn with_radius(mut self, radius: usize) -> Self {
        self.radius = radius;
        self
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn backend_name(&self) -> String {
        self.lock().name().to_string()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Box<dyn NavigationBackend>> {
        self.backend.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn resolve(&self, hint: &PositionHint, snapshot: &dyn Snapshot) -> Result<ResolvedPosition, NavError> {
        resolve_position(hint, snapshot, self.radius)
    }

    /// Locations sorted by (path, line, column) without duplicates.
    pub fn navigate(&self, kind: NavKind, pos: &ResolvedPosition) -> Result<Vec<NavLocation>, NavError> {
        let mut backend = self.lock();
        let mut out = match kind {
            NavKind::Definition => backend.definition(pos)?,
            NavKind::References => backend.references(pos)?,
        };
        out.sort();
        out.dedup();
        Ok(out)
    }

    pub fn file_changed(&self, path: &str, content: Option<&str>) -> Result<(), NavError> {
        self.lock().file_changed(path, content)
    }
}

impl DiagnosticsProvider for Navigator {
    fn collect_diagnostics(&self, path: &str, content: &str) -> Result<Vec<Diagnostic>, NavError> {
        let mut out = self.lock().diagnostics(path, content)?;
        out.sort();
        Ok(out)
    }
}

pub(crate) fn relative_to(root: &Path, path: &Path) -> Option<String> {
    let rel = path.strip_prefix(root).ok()?;
    Some(
        rel.components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/"),
    )
}
