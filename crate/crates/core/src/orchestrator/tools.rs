//! Permission-checked, traced tool execution shared by every role.

use super::actions::Action;
use super::roles::{AgentRole, PermissionDenied, Tool, ToolPermissionMatrix};
use super::trace::{Outcome, Trace};
use crate::ckg::{query_entities, CkgError, EntityKind, KnowledgeGraph, QueryScorers};
use crate::gate::{Gate, GateVerdict};
use crate::index::{self, IndexError, Scope, SearchOptions};
use crate::navigator::{DirSnapshot, NavError, NavKind, Navigator, PositionHint};
use crate::patch::{apply_edits, EditBlock, FileEdit, PatchError, PatchOptions};
use crate::sandbox::{self, ExecutionResult, Limits, Runner, SandboxError, Workspace};
use serde::Serialize;
use std::sync::Mutex;

/// Lines shown on each side of a position of interest.
pub const SNIPPET_RADIUS: usize = 5;
/// Longest entity body quoted in full.
pub const MAX_ENTITY_LINES: usize = 60;
/// Longest file shown by `@open` without a line.
pub const MAX_OPEN_LINES: usize = 200;
const MAX_LISTED: usize = 10;

/// A line range of one file, quoted with the tool that surfaced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Snippet {
    pub path: String,
    pub start_line: usize,
    pub end_line: usize,
    pub text: String,
    pub tool: Tool,
    pub reason: String,
}

impl Snippet {
    /// Header line followed by numbered lines.
    pub fn render(&self) -> String {
        let mut s = format!(
            "--- {}:{}-{} ({}: {})\n",
            self.path, self.start_line, self.end_line, self.tool, self.reason
        );
        for (i, line) in self.text.lines().enumerate() {
            s.push_str(&format!("{:>5} | {}\n", self.start_line + i, line));
        }
        s
    }

    pub fn covers(&self, other: &Snippet) -> bool {
        self.path == other.path && self.start_line <= other.start_line && other.end_line <= self.end_line
    }
}

/// What a tool call produced: text for the agent plus structured results.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ToolOutput {
    pub text: String,
    pub snippets: Vec<Snippet>,
    pub files: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ToolError {
    #[error(transparent)]
    Denied(#[from] PermissionDenied),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error(transparent)]
    Ckg(#[from] CkgError),
    #[error(transparent)]
    Navigation(#[from] NavError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Result of an attempted edit. Nothing is written unless every touched
/// file passes the gate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EditReport {
    pub applied: bool,
    pub verdicts: Vec<GateVerdict>,
    /// Set when the blocks could not be applied at all.
    pub error: Option<String>,
}

impl EditReport {
    pub fn feedback(&self) -> String {
        if let Some(e) = &self.error {
            return format!("Edit could not be applied: {e}\n");
        }
        let mut s = String::new();
        for v in &self.verdicts {
            s.push_str(&v.feedback());
        }
        if !self.applied && self.verdicts.iter().all(|v| v.accepted) {
            s.push_str("No files were changed.\n");
        }
        s
    }
}

/// A candidate edit evaluated in memory.
#[derive(Debug, Clone)]
pub struct PlannedEdit {
    pub edits: Vec<FileEdit>,
    pub verdicts: Vec<GateVerdict>,
}

impl PlannedEdit {
    pub fn accepted(&self) -> bool {
        self.verdicts.iter().all(|v| v.accepted)
    }
}

pub struct Toolbox<'a> {
    pub matrix: ToolPermissionMatrix,
    pub workspace: &'a Workspace,
    pub graph: &'a KnowledgeGraph,
    pub scorers: QueryScorers<'a>,
    pub navigator: &'a Navigator,
    pub gate: Gate<'a>,
    pub runner: &'a dyn Runner,
    pub limits: Limits,
    pub interpreter: Vec<String>,
    pub patch: PatchOptions,
    pub search: SearchOptions,
    pub ckg_top_k: usize,
    opened: Mutex<Vec<String>>,
}

fn quote(lines: &[&str], start: usize, end: usize) -> String {
    let mut s = lines[start - 1..end].join("\n");
    s.push('\n');
    s
}

impl<'a> Toolbox<'a> {
    pub fn new(workspace: &'a Workspace, graph: &'a KnowledgeGraph, navigator: &'a Navigator, runner: &'a dyn Runner) -> Self {
        Toolbox {
            matrix: ToolPermissionMatrix::default(),
            workspace,
            graph,
            scorers: QueryScorers::default(),
            navigator,
            gate: Gate::new(navigator),
            runner,
            limits: Limits::default(),
            interpreter: vec!["python3".into()],
            patch: PatchOptions::default(),
            search: SearchOptions::default(),
            ckg_top_k: 5,
            opened: Mutex::new(Vec::new()),
        }
    }

    /// Files surfaced to agents so far, in first-seen order.
    pub fn opened_files(&self) -> Vec<String> {
        self.opened.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    fn note_opened(&self, path: &str) {
        let mut o = self.opened.lock().unwrap_or_else(|p| p.into_inner());
        if !o.iter().any(|p| p == path) {
            o.push(path.to_string());
        }
    }

    /// Checks the matrix, recording a denial in the trace.
    pub fn authorize(&self, trace: &mut Trace, role: AgentRole, tool: Tool, action: &str, input: &str) -> Result<(), ToolError> {
        self.matrix.enforce(role, tool).map_err(|e| {
            trace.denied(role, tool, action, input);
            ToolError::Denied(e)
        })
    }

    /// Quotes `path` around `line` (or from the top) as a snippet.
    pub fn snippet(&self, path: &str, line: Option<usize>, radius: usize, tool: Tool, reason: &str) -> Result<Option<Snippet>, ToolError> {
        let Some(content) = self.workspace.read_file(path)? else {
            return Ok(None);
        };
        let lines: Vec<&str> = content.lines().collect();
        if lines.is_empty() {
            return Ok(None);
        }
        let (start, end) = match line {
            Some(l) => {
                let l = l.clamp(1, lines.len());
                (l.saturating_sub(radius).max(1), (l + radius).min(lines.len()))
            }
            None => (1, lines.len().min(MAX_OPEN_LINES)),
        };
        self.note_opened(path);
        Ok(Some(Snippet {
            path: path.to_string(),
            start_line: start,
            end_line: end,
            text: quote(&lines, start, end),
            tool,
            reason: reason.to_string(),
        }))
    }

    fn entity_snippet(&self, path: &str, start: usize, end: usize, reason: &str) -> Result<Option<Snippet>, ToolError> {
        let Some(content) = self.workspace.read_file(path)? else {
            return Ok(None);
        };
        let lines: Vec<&str> = content.lines().collect();
        if lines.is_empty() || start > lines.len() {
            return Ok(None);
        }
        let end = end.min(lines.len()).min(start + MAX_ENTITY_LINES - 1);
        self.note_opened(path);
        Ok(Some(Snippet {
            path: path.to_string(),
            start_line: start,
            end_line: end,
            text: quote(&lines, start, end),
            tool: Tool::Ckg,
            reason: reason.to_string(),
        }))
    }

    /// Runs one action for `role`, enforcing the matrix and tracing the use.
    pub fn perform(&self, trace: &mut Trace, role: AgentRole, action: &Action) -> Result<ToolOutput, ToolError> {
        let tool = action.tool();
        let input = action.render();
        self.authorize(trace, role, tool, action.name(), &input)?;
        let result = self.dispatch(action);
        match &result {
            Ok(out) => trace.tool(role, tool, action.name(), Outcome::Ok, &input, &out.text, &input),
            Err(e) => trace.tool(role, tool, action.name(), Outcome::Failed, &input, "", &e.to_string()),
        }
        result
    }

    fn dispatch(&self, action: &Action) -> Result<ToolOutput, ToolError> {
        let root = self.workspace.root();
        let mut out = ToolOutput::default();
        match action {
            Action::Ckg { query } => {
                let ranked = query_entities(self.graph, query, &self.scorers)?;
                for item in ranked.items.iter().filter(|i| i.score > 0.0) {
                    let Some(e) = self.graph.entity(item.id) else { continue };
                    if e.kind == EntityKind::File {
                        continue;
                    }
                    out.text.push_str(&format!(
                        "{:?} {} {}:{}-{} score {:.3}\n",
                        e.kind, e.name, e.location.path, e.location.start_line, e.location.end_line, item.score
                    ));
                    let reason = format!("{:?} {} matches query", e.kind, e.name);
                    if let Some(s) = self.entity_snippet(&e.location.path, e.location.start_line, e.location.end_line, &reason)? {
                        out.snippets.push(s);
                    }
                    if out.snippets.len() == self.ckg_top_k {
                        break;
                    }
                }
                if out.text.is_empty() {
                    out.text = "no matching entities\n".into();
                }
            }
            Action::Definition { path, line, identifier } | Action::References { path, line, identifier } => {
                let kind = if matches!(action, Action::Definition { .. }) {
                    NavKind::Definition
                } else {
                    NavKind::References
                };
                let hint = PositionHint {
                    path: path.clone(),
                    line: *line,
                    identifier: identifier.clone(),
                    opened_files: self.opened_files(),
                };
                let pos = self.navigator.resolve(&hint, &DirSnapshot::new(root))?;
                let locations = self.navigator.navigate(kind, &pos)?;
                out.text.push_str(&format!(
                    "{} of `{}` at {}:{}:{} ({:?})\n",
                    action.name(),
                    pos.identifier,
                    pos.path,
                    pos.line,
                    pos.column,
                    pos.tier
                ));
                for loc in locations.iter().take(MAX_LISTED) {
                    out.text.push_str(&format!("{}:{}:{}\n", loc.path, loc.line, loc.column));
                    let reason = format!("{} of {}", action.name(), pos.identifier);
                    if let Some(s) = self.snippet(&loc.path, Some(loc.line), 2, Tool::Lsp, &reason)? {
                        out.snippets.push(s);
                    }
                }
                if locations.is_empty() {
                    out.text.push_str("no locations\n");
                }
            }
            Action::Open { path, line } => {
                let reason = match line {
                    Some(l) => format!("opened at line {l}"),
                    None => "opened".to_string(),
                };
                match self.snippet(path, *line, SNIPPET_RADIUS, Tool::GeneralFileIndexing, &reason)? {
                    Some(s) => {
                        out.text = s.render();
                        out.files.push(path.clone());
                        out.snippets.push(s);
                    }
                    None => out.text = format!("`{path}` does not exist or is empty\n"),
                }
            }
            Action::Find { pattern } => {
                let found = index::find_file(root, pattern, &self.search)?;
                for p in &found.items {
                    out.text.push_str(p);
                    out.text.push('\n');
                }
                if found.truncated {
                    out.text.push_str("(more matches omitted)\n");
                }
                if found.items.is_empty() {
                    out.text.push_str("no files matched\n");
                }
                out.files = found.items;
            }
            Action::Grep { pattern, scope } => {
                let scope = scope.as_deref().map(Scope::parse).transpose()?;
                let found = index::grep(root, pattern, scope.as_ref(), &self.search)?;
                for m in &found.items {
                    out.text.push_str(&format!("{}:{}:{}: {}\n", m.path, m.line, m.column, m.line_text));
                }
                if found.truncated {
                    out.text.push_str("(more matches omitted)\n");
                }
                if found.items.is_empty() {
                    out.text.push_str("no matches\n");
                }
                for m in found.items.iter().take(MAX_LISTED) {
                    let reason = format!("matches /{pattern}/");
                    if let Some(s) = self.snippet(&m.path, Some(m.line), 2, Tool::GeneralFileIndexing, &reason)? {
                        out.snippets.push(s);
                    }
                    if !out.files.contains(&m.path) {
                        out.files.push(m.path.clone());
                    }
                }
            }
            Action::Bash { command } => {
                let argv = vec!["sh".to_string(), "-c".to_string(), command.clone()];
                let r = self.runner.execute(self.workspace, &argv, &self.limits)?;
                out.text = r.summary();
            }
            Action::Reset => {
                let changed = self.workspace.capture_solution_diff()?;
                self.workspace.reset()?;
                for f in &changed.patch.files {
                    for p in [&f.old_path, &f.new_path] {
                        if p != crate::patch::diff::DEV_NULL {
                            let content = self.workspace.read_file(p)?;
                            let _ = self.navigator.file_changed(p, content.as_deref());
                        }
                    }
                }
                out.text = format!("repository reset; {} file(s) restored\n", changed.patch.files.len());
            }
        }
        Ok(out)
    }

    /// Applies `blocks` in memory and gates every touched file.
    pub fn plan_edit(&self, blocks: &[EditBlock]) -> Result<PlannedEdit, PatchError> {
        let edits = apply_edits(blocks, |p| self.workspace.read_file(p).ok().flatten(), &self.patch)?;
        let verdicts = edits
            .iter()
            .map(|e| {
                let original = e.original.as_deref().unwrap_or("");
                self.gate.evaluate_content(&e.path, original, &e.new_content, Some(&e.diff))
            })
            .collect();
        Ok(PlannedEdit { edits, verdicts })
    }

    /// Writes an accepted plan to the workspace.
    pub fn commit(&self, plan: &PlannedEdit) -> Result<(), ToolError> {
        debug_assert!(plan.accepted());
        for e in &plan.edits {
            self.workspace.write_file(&e.path, &e.new_content)?;
            let _ = self.navigator.file_changed(&e.path, Some(&e.new_content));
        }
        Ok(())
    }

    /// Gate-checked edit: the tree changes only if every file is accepted.
    pub fn edit(&self, trace: &mut Trace, role: AgentRole, blocks: &[EditBlock]) -> Result<EditReport, ToolError> {
        let input: String = blocks.iter().map(EditBlock::render).collect();
        self.authorize(trace, role, Tool::CodeEditing, "edit", &input)?;
        let plan = match self.plan_edit(blocks) {
            Ok(p) => p,
            Err(e) => {
                trace.tool(role, Tool::CodeEditing, "edit", Outcome::Failed, &input, "", &e.to_string());
                return Ok(EditReport {
                    applied: false,
                    verdicts: Vec::new(),
                    error: Some(e.to_string()),
                });
            }
        };
        let accepted = plan.accepted();
        let report = EditReport {
            applied: accepted,
            verdicts: plan.verdicts.clone(),
            error: None,
        };
        let paths: Vec<&str> = plan.edits.iter().map(|e| e.path.as_str()).collect();
        if accepted {
            self.commit(&plan)?;
            let diff: String = plan.edits.iter().map(|e| e.diff.render()).collect();
            trace.tool(role, Tool::CodeEditing, "edit", Outcome::Ok, &input, &diff, &format!("applied to {}", paths.join(", ")));
        } else {
            let why: Vec<String> = plan
                .verdicts
                .iter()
                .filter(|v| !v.accepted)
                .flat_map(|v| v.blocking().map(|d| format!("{}:{} {}", d.path, d.line, d.message)).collect::<Vec<_>>())
                .collect();
            trace.tool(role, Tool::CodeEditing, "edit", Outcome::Rejected, &input, "", &format!("gate rejected: {}", why.join("; ")));
        }
        Ok(report)
    }

    /// Writes and runs the reproduction script.
    pub fn reproduce(&self, trace: &mut Trace, role: AgentRole, script: &str) -> Result<ExecutionResult, ToolError> {
        let tool = Tool::ReproductionScriptExecution;
        self.authorize(trace, role, tool, "reproduce", script)?;
        match sandbox::run_reproduction(self.runner, self.workspace, script, &self.interpreter, &self.limits) {
            Ok(r) => {
                let outcome = if r.success() { Outcome::Ok } else { Outcome::Rejected };
                let detail = format!("exit {}{}", r.exit_code, if r.timed_out { " (timed out)" } else { "" });
                trace.tool(role, tool, "reproduce", outcome, script, &r.summary(), &detail);
                Ok(r)
            }
            Err(e) => {
                trace.tool(role, tool, "reproduce", Outcome::Failed, script, "", &e.to_string());
                Err(e.into())
            }
        }
    }
}
