//! Completion providers: the interface every role talks through, and a
//! scripted replay implementation for hermetic runs.

use super::roles::AgentRole;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use std::sync::Mutex;

/// Section header in replay scripts: `%%% <role>`.
pub const SCRIPT_HEADER: &str = "%%%";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    /// Earlier replies of the role itself.
    Agent,
    /// Tool output and feedback sent to the role.
    Environment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub content: String,
}

impl Turn {
    pub fn agent(content: impl Into<String>) -> Self {
        Turn {
            speaker: Speaker::Agent,
            content: content.into(),
        }
    }

    pub fn environment(content: impl Into<String>) -> Self {
        Turn {
            speaker: Speaker::Environment,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub role: AgentRole,
    pub system: String,
    pub context: String,
    pub history: Vec<Turn>,
}

/// Rough token count: four characters per token.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

impl CompletionRequest {
    pub fn estimated_tokens(&self) -> usize {
        estimate_tokens(&self.system)
            + estimate_tokens(&self.context)
            + self.history.iter().map(|t| estimate_tokens(&t.content)).sum::<usize>()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("replay script has no more responses for role `{0}`")]
    Exhausted(AgentRole),
    #[error("replay script line {line}: {message}")]
    Script { line: usize, message: String },
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("provider transport error: {0}")]
    Transport(String),
    #[error("provider response is malformed: {0}")]
    InvalidResponse(String),
    #[error("environment variable `{0}` holding the API key is not set")]
    MissingKey(String),
    #[error("no completion provider is configured; set a replay script or an endpoint")]
    NotConfigured,
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub trait CompletionProvider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError>;
}

/// Replays canned responses, first in first out per role.
///
/// Script format: a line `%%% <role>` opens a response for that role; the
/// following lines up to the next header are the response text. Lines before
/// the first header must be blank or start with `#`.
#[derive(Debug, Default)]
pub struct ScriptedProvider {
    queues: Mutex<BTreeMap<AgentRole, VecDeque<String>>>,
    received: Mutex<Vec<CompletionRequest>>,
}

impl ScriptedProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(script: &str) -> Result<Self, ProviderError> {
        let provider = ScriptedProvider::new();
        let mut current: Option<(AgentRole, Vec<&str>)> = None;
        for (i, line) in script.lines().enumerate() {
            if let Some(rest) = line.strip_prefix(SCRIPT_HEADER) {
                let role = rest.trim().parse::<AgentRole>().map_err(|e| ProviderError::Script {
                    line: i + 1,
                    message: e.to_string(),
                })?;
                if let Some((r, lines)) = current.take() {
                    provider.push(r, join(&lines));
                }
                current = Some((role, Vec::new()));
            } else if let Some((_, lines)) = current.as_mut() {
                lines.push(line);
            } else if !(line.trim().is_empty() || line.starts_with('#')) {
                return Err(ProviderError::Script {
                    line: i + 1,
                    message: format!("text before the first `{SCRIPT_HEADER} <role>` header"),
                });
            }
        }
        if let Some((r, lines)) = current {
            provider.push(r, join(&lines));
        }
        Ok(provider)
    }

    /// Queues a response for `role`.
    pub fn push(&self, role: AgentRole, response: impl Into<String>) {
        self.queues
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .entry(role)
            .or_default()
            .push_back(response.into());
    }

    pub fn with(self, role: AgentRole, response: impl Into<String>) -> Self {
        self.push(role, response);
        self
    }

    pub fn remaining(&self, role: AgentRole) -> usize {
        self.queues
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .get(&role)
            .map_or(0, VecDeque::len)
    }

    /// Requests served so far, in order.
    pub fn received(&self) -> Vec<CompletionRequest> {
        self.received.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }
}

/// Joins section lines, dropping trailing blank lines.
fn join(lines: &[&str]) -> String {
    let end = lines.iter().rposition(|l| !l.trim().is_empty()).map_or(0, |i| i + 1);
    let mut s = lines[..end].join("\n");
    if end > 0 {
        s.push('\n');
    }
    s
}

impl CompletionProvider for ScriptedProvider {
    fn name(&self) -> &str {
        "replay"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        self.received
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .push(request.clone());
        self.queues
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .get_mut(&request.role)
            .and_then(VecDeque::pop_front)
            .ok_or(ProviderError::Exhausted(request.role))
    }
}
