//! Six-role repair workflow over a pluggable completion provider.
//!
//! The Searcher gathers context, the Planner picks a route, and then either
//! the dynamic loop (Reproducer, Programmer, Tester) or the static vote
//! (Editor) produces the patch. Every tool use goes through [`Toolbox`],
//! which enforces the [`ToolPermissionMatrix`] and records the [`Trace`].

pub mod actions;
pub mod dynamic;
pub mod http;
pub mod planner;
pub mod prompts;
pub mod provider;
pub mod roles;
pub mod search;
pub mod static_route;
pub mod tools;
pub mod trace;

pub use actions::{parse_actions, Action};
pub use dynamic::run_dynamic;
pub use http::{HttpConfig, HttpProvider};
pub use planner::{parse_route_label, plan_route};
pub use prompts::Prompts;
pub use provider::{CompletionProvider, CompletionRequest, ProviderError, ScriptedProvider, Speaker, Turn};
pub use roles::{enforce, AgentRole, PermissionDenied, Tool, ToolPermissionMatrix};
pub use search::{search_context, ContextBundle};
pub use static_route::{run_static, split_candidates, VoteSummary};
pub use tools::{EditReport, Snippet, ToolError, ToolOutput, Toolbox};
pub use trace::{Outcome, Trace, TraceError, TraceEvent, TraceHeader};

use crate::patch::PatchSet;
use crate::sandbox::SandboxError;
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    /// Programmer/Tester rounds in the dynamic loop.
    pub max_iterations: usize,
    pub max_resets: usize,
    /// Estimated prompt plus reply tokens across the run.
    pub max_tokens: usize,
    #[serde(with = "secs")]
    pub wall_clock: Duration,
    /// Tool calls a role may chain before it must answer.
    pub max_tool_rounds: usize,
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Duration::try_from_secs_f64(f64::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_iterations: 10,
            max_resets: 1,
            max_tokens: 1_000_000,
            wall_clock: Duration::from_secs(30 * 60),
            max_tool_rounds: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueTask {
    pub title: String,
    pub body: String,
    pub budget: Budget,
}

impl IssueTask {
    pub fn new(title: impl Into<String>, body: impl Into<String>) -> Result<Self, OrchestratorError> {
        let task = IssueTask {
            title: title.into(),
            body: body.into(),
            budget: Budget::default(),
        };
        task.validate()?;
        Ok(task)
    }

    /// Reads an issue file: the first non-blank line is the title (a leading
    /// `#` is dropped) and the rest is the body. A one-line issue uses the
    /// title as its body.
    pub fn parse(text: &str) -> Result<Self, OrchestratorError> {
        let mut lines = text.lines().skip_while(|l| l.trim().is_empty());
        let title = lines.next().unwrap_or("").trim().trim_start_matches('#').trim().to_string();
        let rest: Vec<&str> = lines.collect();
        let body = rest.join("\n").trim().to_string();
        let body = if body.is_empty() { title.clone() } else { body };
        IssueTask::new(title, body)
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        if self.body.trim().is_empty() {
            return Err(OrchestratorError::EmptyIssue);
        }
        let b = &self.budget;
        if b.max_iterations == 0 || b.max_tokens == 0 || b.wall_clock.is_zero() {
            return Err(OrchestratorError::InvalidBudget);
        }
        Ok(())
    }

    /// Title and body as shown to every role.
    pub fn text(&self) -> String {
        format!("# {}\n\n{}\n", self.title, self.body)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteKind {
    Dynamic,
    Static,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub kind: RouteKind,
    pub rationale: String,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub diff: PatchSet,
    pub route: Route,
    pub resolved: bool,
    /// Programmer rounds used, or candidates considered on the static route.
    pub attempts: usize,
    pub votes: Option<VoteSummary>,
    pub notes: Vec<String>,
    pub trace: Trace,
}

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error("issue body is empty")]
    EmptyIssue,
    #[error("budget limits must be positive")]
    InvalidBudget,
    #[error("search found no context for the issue")]
    EmptyContext,
    #[error("reproduction script passed on the unpatched code")]
    ReproductionNotConfirmed,
    #[error("no reproduction script in the Reproducer's reply")]
    NoReproductionScript,
    #[error("budget exhausted: {0}")]
    BudgetExhausted(String),
    #[error("every candidate was rejected: {}", reasons.join("; "))]
    AllCandidatesRejected { reasons: Vec<String> },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
}

/// One task in progress: tools, provider, trace and resource accounting.
pub struct Session<'a> {
    pub tools: Toolbox<'a>,
    pub provider: &'a dyn CompletionProvider,
    pub prompts: Prompts,
    pub trace: Trace,
    pub budget: Budget,
    tokens_used: usize,
    started: Instant,
}

impl<'a> Session<'a> {
    pub fn new(task: &IssueTask, tools: Toolbox<'a>, provider: &'a dyn CompletionProvider) -> Self {
        Session {
            tools,
            provider,
            prompts: Prompts::default(),
            trace: Trace::new(&task.text()),
            budget: task.budget,
            tokens_used: 0,
            started: Instant::now(),
        }
    }

    pub fn tokens_used(&self) -> usize {
        self.tokens_used
    }

    fn check_budget(&self) -> Result<(), OrchestratorError> {
        if self.tokens_used >= self.budget.max_tokens {
            return Err(OrchestratorError::BudgetExhausted(format!(
                "{} of {} estimated tokens used",
                self.tokens_used, self.budget.max_tokens
            )));
        }
        if self.started.elapsed() >= self.budget.wall_clock {
            return Err(OrchestratorError::BudgetExhausted(format!(
                "wall clock {:?} exceeded",
                self.budget.wall_clock
            )));
        }
        Ok(())
    }

    /// One provider turn for `role`.
    pub fn ask(&mut self, role: AgentRole, context: &str, history: &[Turn]) -> Result<String, OrchestratorError> {
        self.check_budget()?;
        let request = CompletionRequest {
            role,
            system: self.prompts.system(role, &self.tools.matrix),
            context: context.to_string(),
            history: history.to_vec(),
        };
        let prompt_tokens = request.estimated_tokens();
        let input = serde_json::to_string(&request).unwrap_or_default();
        match self.provider.complete(&request) {
            Ok(reply) => {
                self.tokens_used += prompt_tokens + provider::estimate_tokens(&reply);
                let first = reply.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
                self.trace.note(role, "complete", Outcome::Ok, &input, &reply, first);
                Ok(reply)
            }
            Err(e) => {
                self.trace.note(role, "complete", Outcome::Failed, &input, "", &e.to_string());
                Err(e.into())
            }
        }
    }

    /// Runs the tool actions in `reply` for `role` and returns the combined
    /// feedback text plus the raw outputs. `Reset` is left to the caller.
    pub fn run_actions(&mut self, role: AgentRole, reply: &str) -> (String, Vec<ToolOutput>) {
        let (actions, errors) = parse_actions(reply);
        let mut text = String::new();
        let mut outputs = Vec::new();
        for e in errors {
            text.push_str(&format!("line {}: {}\n", e.line, e.message));
        }
        for a in actions.iter().filter(|a| !matches!(a, Action::Reset)) {
            text.push_str(&format!("{}\n", a.render()));
            match self.tools.perform(&mut self.trace, role, a) {
                Ok(out) => {
                    text.push_str(&out.text);
                    outputs.push(out);
                }
                Err(e) => text.push_str(&format!("error: {e}\n")),
            }
        }
        (text, outputs)
    }

    /// Asks `role` until `is_final` accepts a reply, feeding tool results
    /// back in between, within the per-turn tool budget.
    pub fn converse(
        &mut self,
        role: AgentRole,
        context: &str,
        history: &mut Vec<Turn>,
        is_final: &dyn Fn(&str) -> bool,
    ) -> Result<(String, Vec<ToolOutput>), OrchestratorError> {
        let mut gathered = Vec::new();
        let mut rounds = 0;
        loop {
            let reply = self.ask(role, context, history)?;
            history.push(Turn::agent(reply.clone()));
            let has_tools = parse_actions(&reply).0.iter().any(|a| !matches!(a, Action::Reset));
            if is_final(&reply) || !has_tools || rounds == self.budget.max_tool_rounds {
                return Ok((reply, gathered));
            }
            let (text, outputs) = self.run_actions(role, &reply);
            gathered.extend(outputs);
            history.push(Turn::environment(text));
            rounds += 1;
        }
    }
}

/// Full pipeline: search, plan, then the chosen route. A dynamic route that
/// cannot confirm the reproduction falls back to the static route.
pub fn solve(task: &IssueTask, session: &mut Session<'_>, n_candidates: usize) -> Result<Solution, OrchestratorError> {
    task.validate()?;
    let mut notes = Vec::new();
    let context = match search_context(task, session) {
        Ok(c) => c,
        Err(OrchestratorError::EmptyContext) => {
            notes.push("searcher found no context".to_string());
            session.trace.note(AgentRole::Searcher, "empty_context", Outcome::Failed, &task.text(), "", "no snippets retrieved");
            ContextBundle::default()
        }
        Err(e) => return Err(e),
    };
    let route = plan_route(task, &context, session)?;
    let mut solution = match route.kind {
        RouteKind::Dynamic => match run_dynamic(task, &context, session) {
            Ok(s) => s,
            Err(
                e @ (OrchestratorError::ReproductionNotConfirmed
                | OrchestratorError::NoReproductionScript
                | OrchestratorError::Sandbox(_)
                | OrchestratorError::Tool(ToolError::Sandbox(_))),
            ) => {
                let why = format!("dynamic route abandoned: {e}; rerouted to static");
                session.trace.note(AgentRole::Planner, "reroute", Outcome::Rejected, "", "", &why);
                notes.push(why);
                let mut s = run_static(task, &context, session, n_candidates)?;
                s.route.rationale = format!("{} (rerouted from dynamic: {e})", route.rationale);
                s
            }
            Err(e) => return Err(e),
        },
        RouteKind::Static => run_static(task, &context, session, n_candidates)?,
    };
    if solution.route.kind == route.kind {
        solution.route.rationale = route.rationale.clone();
    }
    notes.append(&mut solution.notes);
    solution.notes = notes;
    solution.trace = session.trace.clone();
    Ok(solution)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn issue_file_parsing() {
        let t = IssueTask::parse("\n# mean is wrong\n\nmean([1,2,3]) returns 3\n").unwrap();
        assert_eq!(t.title, "mean is wrong");
        assert_eq!(t.body, "mean([1,2,3]) returns 3");
        let one = IssueTask::parse("crash on start").unwrap();
        assert_eq!(one.body, "crash on start");
        assert!(matches!(IssueTask::parse("  \n\n"), Err(OrchestratorError::EmptyIssue)));
    }

    #[test]
    fn budget_must_be_positive() {
        let mut t = IssueTask::new("t", "b").unwrap();
        t.budget.max_iterations = 0;
        assert!(matches!(t.validate(), Err(OrchestratorError::InvalidBudget)));
    }
}
