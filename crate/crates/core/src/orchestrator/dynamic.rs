//! Dynamic debugging route: reproduce, then iterate Programmer edits and
//! Tester runs until the reproduction script passes.

use super::actions::{parse_actions, Action};
use super::provider::{ProviderError, Turn};
use super::roles::AgentRole;
use super::search::ContextBundle;
use super::trace::Outcome;
use super::{IssueTask, OrchestratorError, Route, RouteKind, Session, Solution};
use crate::patch::parse_edit_blocks;
use crate::sandbox::{ExecutionResult, REPRODUCTION_SCRIPT};

/// Body of the first fenced code block in `reply`.
pub fn extract_script(reply: &str) -> Option<String> {
    let mut body: Option<Vec<&str>> = None;
    for line in reply.lines() {
        if line.trim_start().starts_with("```") {
            match body {
                None => body = Some(Vec::new()),
                Some(lines) => {
                    let mut s = lines.join("\n");
                    s.push('\n');
                    return (!s.trim().is_empty()).then_some(s);
                }
            }
        } else if let Some(lines) = body.as_mut() {
            lines.push(line);
        }
    }
    None
}

fn has_reset(reply: &str) -> bool {
    parse_actions(reply).0.contains(&Action::Reset)
}

fn has_edits(reply: &str) -> bool {
    parse_edit_blocks(reply).is_ok_and(|p| !p.blocks.is_empty() || !p.malformed.is_empty())
}

fn tester_report(r: &ExecutionResult, attempt: usize) -> String {
    format!(
        "Tester ran {REPRODUCTION_SCRIPT} after attempt {attempt}: {}\n{}",
        if r.success() { "passed" } else { "the issue is not resolved" },
        r.summary()
    )
}

/// Ends an unresolved run, keeping whatever the tree currently holds.
fn unresolved(session: &mut Session<'_>, attempts: usize, why: String) -> Result<Solution, OrchestratorError> {
    session.trace.note(AgentRole::Tester, "unresolved", Outcome::Rejected, "", "", &why);
    let diff = session.tools.workspace.capture_solution_diff()?;
    Ok(Solution {
        diff: diff.patch,
        route: Route {
            kind: RouteKind::Dynamic,
            rationale: String::new(),
        },
        resolved: false,
        attempts,
        votes: None,
        notes: vec![why],
        trace: session.trace.clone(),
    })
}

/// Reproducer writes the script; it gets one revision if the script passes
/// on the unpatched code.
fn reproduce(task: &IssueTask, context: &ContextBundle, session: &mut Session<'_>) -> Result<(String, ExecutionResult), OrchestratorError> {
    let prompt = format!("{}\n{}", task.text(), context.render());
    let mut history = Vec::new();
    let is_final = |r: &str| extract_script(r).is_some();
    let mut script = None;
    for round in 0..2 {
        let reply = match session.converse(AgentRole::Reproducer, &prompt, &mut history, &is_final) {
            Ok((reply, _)) => reply,
            Err(OrchestratorError::Provider(ProviderError::Exhausted(_))) if round > 0 => break,
            Err(OrchestratorError::Provider(ProviderError::Exhausted(_))) => return Err(OrchestratorError::NoReproductionScript),
            Err(e) => return Err(e),
        };
        let Some(candidate) = extract_script(&reply) else {
            if round > 0 {
                break;
            }
            return Err(OrchestratorError::NoReproductionScript);
        };
        let run = session.tools.reproduce(&mut session.trace, AgentRole::Reproducer, &candidate)?;
        let reproduced = !run.success();
        script = Some(candidate);
        if reproduced {
            break;
        }
        history.push(Turn::environment(format!(
            "The script passed on the unpatched code, so it does not reproduce the issue. Revise it.\n{}",
            run.summary()
        )));
    }
    let script = script.ok_or(OrchestratorError::NoReproductionScript)?;
    let confirmed = session.tools.reproduce(&mut session.trace, AgentRole::Tester, &script)?;
    if confirmed.success() {
        return Err(OrchestratorError::ReproductionNotConfirmed);
    }
    Ok((script, confirmed))
}

pub fn run_dynamic(task: &IssueTask, context: &ContextBundle, session: &mut Session<'_>) -> Result<Solution, OrchestratorError> {
    let (script, baseline) = reproduce(task, context, session)?;
    let prompt = format!(
        "{}\n{}\nReproduction script ({REPRODUCTION_SCRIPT}):\n```\n{}```\n",
        task.text(),
        context.render(),
        script
    );
    let mut latest = tester_report(&baseline, 0);
    let mut feedback = String::new();
    let mut resets = 0;
    let is_final = |r: &str| has_edits(r) || has_reset(r);
    for attempt in 1..=session.budget.max_iterations {
        let mut history = vec![Turn::environment(format!("{latest}{feedback}"))];
        feedback.clear();
        let reply = match session.converse(AgentRole::Programmer, &prompt, &mut history, &is_final) {
            Ok((reply, _)) => reply,
            Err(e @ (OrchestratorError::BudgetExhausted(_) | OrchestratorError::Provider(ProviderError::Exhausted(_)))) => {
                return unresolved(session, attempt - 1, e.to_string());
            }
            Err(e) => return Err(e),
        };

        if has_reset(&reply) {
            if resets < session.budget.max_resets {
                resets += 1;
                match session.tools.perform(&mut session.trace, AgentRole::Programmer, &Action::Reset) {
                    Ok(out) => {
                        feedback.push_str(&out.text);
                        latest = tester_report(&baseline, 0);
                    }
                    Err(e) => feedback.push_str(&format!("reset failed: {e}\n")),
                }
            } else {
                let why = format!("reset refused: {} of {} resets used", resets, session.budget.max_resets);
                session.trace.note(AgentRole::Programmer, "reset", Outcome::Rejected, "", "", &why);
                feedback.push_str(&why);
                feedback.push('\n');
            }
        }

        let parsed = match parse_edit_blocks(&reply) {
            Ok(p) => p,
            Err(_) => {
                if !has_reset(&reply) {
                    feedback.push_str("Your reply contained no edit blocks.\n");
                }
                continue;
            }
        };
        for m in &parsed.malformed {
            feedback.push_str(&format!("Malformed edit block at line {}: {}\n", m.line, m.reason));
        }
        if parsed.blocks.is_empty() {
            continue;
        }
        let report = session.tools.edit(&mut session.trace, AgentRole::Programmer, &parsed.blocks)?;
        if !report.applied {
            feedback.push_str(&report.feedback());
            continue;
        }
        feedback.push_str(&report.feedback());
        let run = session.tools.reproduce(&mut session.trace, AgentRole::Tester, &script)?;
        if run.success() {
            let diff = session.tools.workspace.capture_solution_diff()?;
            if !diff.patch.is_empty() {
                return Ok(Solution {
                    diff: diff.patch,
                    route: Route {
                        kind: RouteKind::Dynamic,
                        rationale: String::new(),
                    },
                    resolved: true,
                    attempts: attempt,
                    votes: None,
                    notes: Vec::new(),
                    trace: session.trace.clone(),
                });
            }
        }
        latest = tester_report(&run, attempt);
    }
    let n = session.budget.max_iterations;
    unresolved(session, n, format!("iteration budget of {n} exhausted"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_is_the_first_fence() {
        let reply = "Here:\n```python\nimport sys\nassert 1 == 2\n```\nand\n```\nother\n```\n";
        assert_eq!(extract_script(reply).unwrap(), "import sys\nassert 1 == 2\n");
        assert_eq!(extract_script("no fence"), None);
        assert_eq!(extract_script("```\n\n```"), None);
        assert_eq!(extract_script("```\nunterminated"), None);
    }

    #[test]
    fn reply_classification() {
        assert!(has_reset("I will start over.\n@reset\n"));
        assert!(!has_reset("```\n@reset\n```"));
        assert!(has_edits("a.py\n<<<<<<< SEARCH\nx\n=======\ny\n>>>>>>> REPLACE\n"));
        assert!(!has_edits("thinking"));
    }
}
