//! Static route: the Editor proposes several candidates in one reply; each
//! is applied in memory and gated, survivors are normalized structurally,
//! and the largest pool of equivalent candidates wins.

use super::roles::{AgentRole, Tool};
use super::search::ContextBundle;
use super::tools::{PlannedEdit, Toolbox};
use super::trace::Outcome;
use super::{IssueTask, OrchestratorError, Route, RouteKind, Session, Solution};
use crate::digest;
use crate::lang;
use crate::patch::{parse_edit_blocks, FileEdit};
use rayon::prelude::*;
use regex::Regex;
use serde::Serialize;
use std::collections::BTreeMap;
use std::sync::LazyLock;

pub const DEFAULT_CANDIDATES: usize = 4;

static HEADING: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^[^\w\n]*candidate[ \t]*#?[ \t]*(\d+)\b.*$").unwrap());

/// Splits an Editor reply on `Candidate N` heading lines. A reply without
/// headings is a single candidate.
pub fn split_candidates(reply: &str) -> Vec<(usize, String)> {
    let heads: Vec<(usize, usize, usize)> = HEADING
        .captures_iter(reply)
        .filter_map(|c| {
            let m = c.get(0)?;
            Some((m.start(), m.end(), c[1].parse().ok()?))
        })
        .collect();
    if heads.is_empty() {
        return vec![(1, reply.to_string())];
    }
    heads
        .iter()
        .enumerate()
        .map(|(i, &(_, end, label))| {
            let stop = heads.get(i + 1).map_or(reply.len(), |h| h.0);
            (label, reply[end..stop].trim_start_matches(['\r', '\n']).to_string())
        })
        .collect()
}

/// Key under which structurally equivalent results pool: each touched
/// file's path and its parse tree with comments and whitespace elided.
/// Files without a shipped grammar fall back to whitespace-collapsed text.
pub fn structural_key(edits: &[FileEdit]) -> String {
    let mut parts: Vec<(String, String)> = edits
        .iter()
        .map(|e| {
            let key = lang::support_for_path(&e.path)
                .and_then(|s| s.structural_key(&e.new_content))
                .unwrap_or_else(|| e.new_content.split_whitespace().collect::<Vec<_>>().join(" "));
            (e.path.clone(), key)
        })
        .collect();
    parts.sort();
    parts.into_iter().map(|(p, k)| format!("{p}\u{0}{k}\n")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CandidateVerdict {
    /// Position in the Editor's reply, from 0.
    pub index: usize,
    pub label: usize,
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub key_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VoteSummary {
    pub candidates: Vec<CandidateVerdict>,
    /// Candidate indices per pool, largest pool first.
    pub pools: Vec<Vec<usize>>,
    pub winner: usize,
    pub votes: usize,
}

/// Pools candidates by key. The winner is the representative (lowest index)
/// of the largest pool; equal pools go to the one with the earliest member.
pub fn tally(keys: &[Option<String>]) -> Option<(usize, Vec<Vec<usize>>)> {
    let mut pools: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        if let Some(k) = k {
            pools.entry(k).or_default().push(i);
        }
    }
    let mut pools: Vec<Vec<usize>> = pools.into_values().collect();
    pools.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    let winner = *pools.first()?.first()?;
    Some((winner, pools))
}

fn evaluate(tools: &Toolbox<'_>, text: &str) -> Result<(PlannedEdit, String), String> {
    let parsed = parse_edit_blocks(text).map_err(|e| e.to_string())?;
    if let Some(m) = parsed.malformed.first() {
        return Err(format!("malformed edit block at line {}: {}", m.line, m.reason));
    }
    if parsed.blocks.is_empty() {
        return Err("no edit blocks".into());
    }
    let plan = tools.plan_edit(&parsed.blocks).map_err(|e| e.to_string())?;
    if !plan.accepted() {
        let why: Vec<String> = plan
            .verdicts
            .iter()
            .filter(|v| !v.accepted)
            .map(|v| {
                let first = v.blocking().next().map(|d| format!(" ({}:{} {})", d.path, d.line, d.message));
                format!("gate rejected {}{}", v.path, first.unwrap_or_default())
            })
            .collect();
        return Err(why.join("; "));
    }
    let key = structural_key(&plan.edits);
    Ok((plan, key))
}

pub fn run_static(
    task: &IssueTask,
    context: &ContextBundle,
    session: &mut Session<'_>,
    n_candidates: usize,
) -> Result<Solution, OrchestratorError> {
    let role = AgentRole::Editor;
    let n = n_candidates.max(1);
    let prompt = format!(
        "{}\n{}\nPropose {n} candidate fixes, each introduced by a line `Candidate <number>`.\n",
        task.text(),
        context.render()
    );
    session.tools.authorize(&mut session.trace, role, Tool::CodeEditing, "candidates", &prompt)?;
    let reply = session.ask(role, &prompt, &[])?;
    // Tool requests from the Editor are refused and logged, never run.
    let _ = session.run_actions(role, &reply);

    let mut sections = split_candidates(&reply);
    sections.truncate(n);
    let tools = &session.tools;
    let results: Vec<Result<(PlannedEdit, String), String>> =
        sections.par_iter().map(|(_, text)| evaluate(tools, text)).collect();

    let mut verdicts = Vec::new();
    let mut keys = Vec::new();
    for (i, ((label, text), r)) in sections.iter().zip(&results).enumerate() {
        let (outcome, reason, key) = match r {
            Ok((_, k)) => (Outcome::Ok, None, Some(k.clone())),
            Err(e) => (Outcome::Rejected, Some(e.clone()), None),
        };
        let key_digest = key.as_ref().map(|k| digest::short(k.as_bytes()));
        let detail = match (&reason, &key_digest) {
            (Some(r), _) => format!("candidate {label} rejected: {r}"),
            (None, Some(d)) => format!("candidate {label} accepted, structure {d}"),
            (None, None) => String::new(),
        };
        session.trace.tool(role, Tool::CodeEditing, "candidate", outcome, text, key_digest.as_deref().unwrap_or(""), &detail);
        verdicts.push(CandidateVerdict {
            index: i,
            label: *label,
            accepted: reason.is_none(),
            reason,
            key_digest,
        });
        keys.push(key);
    }

    let Some((winner, pools)) = tally(&keys) else {
        let reasons = verdicts
            .iter()
            .map(|v| format!("candidate {}: {}", v.label, v.reason.as_deref().unwrap_or("rejected")))
            .collect();
        return Err(OrchestratorError::AllCandidatesRejected { reasons });
    };
    let votes = pools[0].len();
    let Ok((plan, _)) = &results[winner] else {
        unreachable!("winner was accepted")
    };
    session.tools.commit(plan)?;
    let rendered: String = plan.edits.iter().map(|e| e.diff.render()).collect();
    let label = verdicts[winner].label;
    session.trace.tool(role, Tool::CodeEditing, "apply", Outcome::Ok, &reply, &rendered, &format!("candidate {label} wins with {votes} vote(s)"));
    let diff = session.tools.workspace.capture_solution_diff()?;
    let resolved = !diff.patch.is_empty();
    Ok(Solution {
        diff: diff.patch,
        route: Route {
            kind: RouteKind::Static,
            rationale: String::new(),
        },
        resolved,
        attempts: sections.len(),
        votes: Some(VoteSummary {
            candidates: verdicts,
            pools,
            winner,
            votes,
        }),
        notes: Vec::new(),
        trace: session.trace.clone(),
    })
}
