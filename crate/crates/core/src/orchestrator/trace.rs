//! Append-only event log of a repair run, stored as JSON Lines.
//!
//! The first line is a [`TraceHeader`]; every following line is one
//! [`TraceEvent`]. Events name the granted tool they used; a refused tool
//! request is logged with `tool: null` and the refused tool in `denied_tool`.

use super::roles::{AgentRole, Tool, ToolPermissionMatrix};
use crate::digest;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub const TRACE_SCHEMA: &str = "bugsmith-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: String,
    pub version: u32,
    /// Digest of the issue text.
    pub task: String,
    pub started_unix_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    /// The gate or the Tester turned the action down.
    Rejected,
    Failed,
    Denied,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: usize,
    pub elapsed_ms: u64,
    pub role: AgentRole,
    pub tool: Option<Tool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub denied_tool: Option<Tool>,
    pub action: String,
    pub outcome: Outcome,
    pub input_digest: String,
    pub output_digest: String,
    /// Short human-readable summary.
    #[serde(default)]
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct Trace {
    header: TraceHeader,
    events: Vec<TraceEvent>,
    started: Instant,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

const DETAIL_LIMIT: usize = 160;

fn clip(text: &str) -> String {
    let one_line = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if one_line.chars().count() <= DETAIL_LIMIT {
        one_line
    } else {
        let mut s: String = one_line.chars().take(DETAIL_LIMIT - 3).collect();
        s.push_str("...");
        s
    }
}

impl Trace {
    pub fn new(task_text: &str) -> Self {
        let started_unix_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64);
        Trace {
            header: TraceHeader {
                schema: TRACE_SCHEMA.into(),
                version: TRACE_VERSION,
                task: digest::short(task_text.as_bytes()),
                started_unix_ms,
            },
            events: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn header(&self) -> &TraceHeader {
        &self.header
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, role: AgentRole, tool: Option<Tool>, denied: Option<Tool>, action: &str, outcome: Outcome, input: &str, output: &str, detail: &str) {
        self.events.push(TraceEvent {
            seq: self.events.len(),
            elapsed_ms: self.started.elapsed().as_millis() as u64,
            role,
            tool,
            denied_tool: denied,
            action: action.to_string(),
            outcome,
            input_digest: digest::short(input.as_bytes()),
            output_digest: digest::short(output.as_bytes()),
            detail: clip(detail),
        });
    }

    /// Records a tool use that the matrix granted.
    #[allow(clippy::too_many_arguments)]
    pub fn tool(&mut self, role: AgentRole, tool: Tool, action: &str, outcome: Outcome, input: &str, output: &str, detail: &str) {
        self.push(role, Some(tool), None, action, outcome, input, output, detail);
    }

    /// Records an event that uses no tool, such as a provider turn.
    pub fn note(&mut self, role: AgentRole, action: &str, outcome: Outcome, input: &str, output: &str, detail: &str) {
        self.push(role, None, None, action, outcome, input, output, detail);
    }

    pub fn denied(&mut self, role: AgentRole, tool: Tool, action: &str, input: &str) {
        let detail = format!("{role} may not use {tool}");
        self.push(role, None, Some(tool), action, Outcome::Denied, input, "", &detail);
    }

    /// Events whose tool the matrix does not grant to their role.
    pub fn violations<'t>(&'t self, matrix: &ToolPermissionMatrix) -> Vec<&'t TraceEvent> {
        self.events
            .iter()
            .filter(|e| e.tool.is_some_and(|t| !matrix.allows(e.role, t)))
            .collect()
    }

    pub fn count(&self, role: AgentRole, action: &str, outcome: Outcome) -> usize {
        self.events
            .iter()
            .filter(|e| e.role == role && e.action == action && e.outcome == outcome)
            .count()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut out, &self.header)?;
        out.write_all(b"\n")?;
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, TraceError> {
        let mut header: Option<TraceHeader> = None;
        let mut events = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |e: serde_json::Error| TraceError::Format {
                line: i + 1,
                message: e.to_string(),
            };
            match &header {
                None => {
                    let h: TraceHeader = serde_json::from_str(&line).map_err(bad)?;
                    if h.schema != TRACE_SCHEMA || h.version != TRACE_VERSION {
                        return Err(TraceError::Format {
                            line: i + 1,
                            message: format!("unsupported trace schema {} v{}", h.schema, h.version),
                        });
                    }
                    header = Some(h);
                }
                Some(_) => events.push(serde_json::from_str::<TraceEvent>(&line).map_err(bad)?),
            }
        }
        let header = header.ok_or(TraceError::Format {
            line: 0,
            message: "trace has no header".into(),
        })?;
        Ok(Trace {
            header,
            events,
            started: Instant::now(),
        })
    }

    /// One line per event, for terminals.
    pub fn render_text(&self) -> String {
        let mut s = format!(
            "trace {} v{} task {}\n",
            self.header.schema, self.header.version, self.header.task
        );
        for e in &self.events {
            let tool = match (e.tool, e.denied_tool) {
                (Some(t), _) => t.to_string(),
                (None, Some(t)) => format!("!{t}"),
                (None, None) => "-".into(),
            };
            s.push_str(&format!(
                "{:>4} {:>8}ms {:<10} {:<30} {:<18} {:<8} {}\n",
                e.seq,
                e.elapsed_ms,
                e.role.as_str(),
                tool,
                e.action,
                format!("{:?}", e.outcome).to_lowercase(),
                e.detail
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let mut t = Trace::new("issue");
        t.note(AgentRole::Planner, "complete", Outcome::Ok, "prompt", "dynamic", "route dynamic");
        t.tool(AgentRole::Programmer, Tool::CodeEditing, "edit", Outcome::Rejected, "blocks", "", "new error");
        t.denied(AgentRole::Editor, Tool::Ckg, "ckg", "query");
        let mut buf = Vec::new();
        t.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().next().unwrap().contains("\"schema\":\"bugsmith-trace\""));
        let back = Trace::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back.header(), t.header());
        assert_eq!(back.events(), t.events());
        assert!(back.violations(&ToolPermissionMatrix::default()).is_empty());
        assert!(t.render_text().contains("!ckg"));
    }

    #[test]
    fn violations_are_found() {
        let mut t = Trace::new("x");
        t.tool(AgentRole::Editor, Tool::Lsp, "definition", Outcome::Ok, "", "", "");
        assert_eq!(t.violations(&ToolPermissionMatrix::default()).len(), 1);
    }

    #[test]
    fn rejects_foreign_schema_and_missing_header() {
        let bad = "{\"schema\":\"other\",\"version\":1,\"task\":\"x\",\"started_unix_ms\":0}\n";
        assert!(matches!(Trace::read_jsonl(bad.as_bytes()), Err(TraceError::Format { line: 1, .. })));
        assert!(Trace::read_jsonl("".as_bytes()).is_err());
    }

    #[test]
    fn details_are_clipped_to_one_line() {
        let mut t = Trace::new("x");
        t.note(AgentRole::Tester, "run", Outcome::Failed, "", "", &"word\n".repeat(100));
        let d = &t.events()[0].detail;
        assert!(d.chars().count() <= DETAIL_LIMIT && !d.contains('\n') && d.ends_with("..."));
    }
}
