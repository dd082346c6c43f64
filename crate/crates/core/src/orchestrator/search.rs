//! Searcher: collects snippets for an issue from tracebacks, the knowledge
//! graph, navigation and grep, then lets the Searcher agent ask for more.

use super::actions::{parse_actions, Action};
use super::provider::ProviderError;
use super::roles::AgentRole;
use super::tools::{Snippet, ToolOutput};
use super::trace::Outcome;
use super::{IssueTask, OrchestratorError, Session};
use crate::index;
use regex::Regex;
use serde::Serialize;
use std::sync::LazyLock;

pub const MAX_SNIPPETS: usize = 16;
pub const MAX_CONTEXT_CHARS: usize = 24_000;
const MAX_FRAMES: usize = 5;
const MAX_IDENTIFIERS: usize = 5;

/// Candidate files and line-spanned snippets, each tagged with the tool
/// that surfaced it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ContextBundle {
    pub files: Vec<String>,
    pub snippets: Vec<Snippet>,
}

impl ContextBundle {
    pub fn is_empty(&self) -> bool {
        self.files.is_empty() && self.snippets.is_empty()
    }

    fn chars(&self) -> usize {
        self.snippets.iter().map(|s| s.text.len()).sum()
    }

    pub fn add_file(&mut self, path: &str) {
        if !self.files.iter().any(|p| p == path) {
            self.files.push(path.to_string());
        }
    }

    /// Adds `s` unless an existing snippet covers it or the bundle is full.
    pub fn add(&mut self, s: Snippet) -> bool {
        if self.snippets.len() >= MAX_SNIPPETS
            || self.chars() + s.text.len() > MAX_CONTEXT_CHARS
            || self.snippets.iter().any(|e| e.covers(&s))
        {
            return false;
        }
        self.add_file(&s.path);
        self.snippets.push(s);
        true
    }

    pub fn render(&self) -> String {
        if self.is_empty() {
            return "No code context was found.\n".into();
        }
        let mut s = String::from("Relevant files:\n");
        for f in &self.files {
            s.push_str(&format!("- {f}\n"));
        }
        for snip in &self.snippets {
            s.push('\n');
            s.push_str(&snip.render());
        }
        s
    }
}

static PY_FRAME: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"File "([^"]+)", line (\d+)"#).unwrap());
static PATH_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"([\w./-]+\.(?:py|go)):(\d+)").unwrap());
static BACKTICK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"`([A-Za-z_][A-Za-z0-9_.]*)(?:\([^`]*\))?`").unwrap());
static CALL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b([A-Za-z_][A-Za-z0-9_]*)\(").unwrap());

/// (path, line) pairs named by tracebacks in `text`, innermost frame first.
pub fn traceback_frames(text: &str) -> Vec<(String, usize)> {
    let mut frames: Vec<(usize, String, usize)> = Vec::new();
    for re in [&*PY_FRAME, &*PATH_LINE] {
        for c in re.captures_iter(text) {
            let at = c.get(0).map_or(0, |m| m.start());
            if let Ok(line) = c[2].parse() {
                frames.push((at, c[1].to_string(), line));
            }
        }
    }
    frames.sort();
    let mut out: Vec<(String, usize)> = Vec::new();
    for (_, p, l) in frames.into_iter().rev() {
        if !out.iter().any(|(q, m)| *q == p && *m == l) {
            out.push((p, l));
        }
    }
    out
}

/// Maps a path from a traceback onto a repository file.
pub fn repo_path(raw: &str, files: &[String]) -> Option<String> {
    let raw = raw.trim_start_matches("./");
    if files.iter().any(|f| f == raw) {
        return Some(raw.to_string());
    }
    files
        .iter()
        .filter(|f| raw.ends_with(&format!("/{f}")))
        .max_by_key(|f| f.len())
        .cloned()
}

/// Identifiers quoted in backticks, then called names that the graph knows.
pub fn mentioned_identifiers(text: &str, known: &dyn Fn(&str) -> bool) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut push = |s: &str| {
        if !s.is_empty() && !out.iter().any(|o| o == s) {
            out.push(s.to_string());
        }
    };
    for c in BACKTICK.captures_iter(text) {
        push(c[1].rsplit('.').next().unwrap_or(""));
    }
    for c in CALL.captures_iter(text) {
        if known(&c[1]) {
            push(&c[1]);
        }
    }
    out
}

fn absorb(bundle: &mut ContextBundle, out: ToolOutput) {
    for f in &out.files {
        bundle.add_file(f);
    }
    for s in out.snippets {
        bundle.add(s);
    }
}

fn perform(session: &mut Session<'_>, bundle: &mut ContextBundle, action: &Action) {
    if let Ok(out) = session.tools.perform(&mut session.trace, AgentRole::Searcher, action) {
        absorb(bundle, out);
    }
}

pub fn search_context(task: &IssueTask, session: &mut Session<'_>) -> Result<ContextBundle, OrchestratorError> {
    let text = task.text();
    let mut bundle = ContextBundle::default();
    let root = session.tools.workspace.root().to_path_buf();
    let files = index::walk_files(&root, &session.tools.search.exclusions).unwrap_or_default();

    // Traceback frames inside the repository.
    let frames: Vec<(String, usize)> = traceback_frames(&text)
        .into_iter()
        .filter_map(|(p, l)| repo_path(&p, &files).map(|p| (p, l)))
        .take(MAX_FRAMES)
        .collect();
    for (path, line) in frames {
        perform(session, &mut bundle, &Action::Open { path, line: Some(line) });
    }

    if !session.tools.graph.is_empty() {
        perform(session, &mut bundle, &Action::Ckg { query: text.clone() });
    }

    let graph = session.tools.graph;
    let idents = mentioned_identifiers(&text, &|n| !graph.by_name(n).is_empty());
    for ident in idents.iter().take(MAX_IDENTIFIERS) {
        let pattern = format!(r"\b{}\b", regex::escape(ident));
        perform(session, &mut bundle, &Action::Grep { pattern, scope: None });
        let callable = graph
            .by_name(ident)
            .iter()
            .filter_map(|id| graph.entity(*id))
            .find(|e| e.kind.is_callable());
        if let Some(e) = callable {
            let action = Action::References {
                path: e.location.path.clone(),
                line: e.name_position.line,
                identifier: Some(e.name.clone()),
            };
            perform(session, &mut bundle, &action);
        }
    }

    // The Searcher agent may ask for more with tool actions.
    let context = format!("{text}\n{}", bundle.render());
    let mut history = Vec::new();
    let is_final = |reply: &str| parse_actions(reply).0.is_empty();
    match session.converse(AgentRole::Searcher, &context, &mut history, &is_final) {
        Ok((_, outputs)) => {
            for out in outputs {
                absorb(&mut bundle, out);
            }
        }
        // A replay script without Searcher turns means the agent adds nothing.
        Err(OrchestratorError::Provider(ProviderError::Exhausted(_))) => {}
        Err(e @ OrchestratorError::BudgetExhausted(_)) => return Err(e),
        Err(e) => {
            session.trace.note(AgentRole::Searcher, "search", Outcome::Failed, &context, "", &e.to_string());
        }
    }

    if bundle.is_empty() {
        return Err(OrchestratorError::EmptyContext);
    }
    Ok(bundle)
}
