//! Before/after static diagnostics check for candidate patches.
//!
//! A patch is accepted iff it introduces no new `Error` or `Fatal`
//! diagnostic. Findings are matched across versions on
//! (path, severity, code, normalized message), never on line numbers.

use crate::digest::sha256_hex;
use crate::navigator::{Diagnostic, DiagnosticsProvider, NavError, Severity};
use crate::patch::{apply_diff, DiffError, UnifiedDiff};
use serde::Serialize;
use std::collections::HashMap;
use std::sync::Mutex;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateVerdict {
    pub path: String,
    pub accepted: bool,
    /// Patched findings without a baseline counterpart, any severity.
    pub new_diagnostics: Vec<Diagnostic>,
    pub baseline_count: usize,
    pub patched_count: usize,
    /// Why diagnostics could not be compared, when they could not.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Rendered diff, present on acceptance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diff: Option<String>,
}

impl GateVerdict {
    pub fn blocking(&self) -> impl Iterator<Item = &Diagnostic> {
        self.new_diagnostics.iter().filter(|d| d.severity.is_blocking())
    }

    /// Text forwarded to the agent: a success note with the diff, or the
    /// diagnostics that caused rejection.
    pub fn feedback(&self) -> String {
        if self.accepted {
            let mut s = format!("Edit to `{}` applied successfully.\n", self.path);
            if let Some(d) = &self.diff {
                s.push_str(d);
            }
            return s;
        }
        let mut s = format!("Edit to `{}` was rejected", self.path);
        match &self.reason {
            Some(r) => s.push_str(&format!(": {r}\n")),
            None => s.push_str(": it introduces new static errors.\n"),
        }
        for d in self.blocking() {
            s.push_str(&format!(
                "{}:{}: {} [{}] {}\n",
                d.path,
                d.line,
                d.severity,
                d.code.as_deref().unwrap_or("-"),
                d.message
            ));
        }
        s
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GateError {
    #[error("diff does not apply to the original: {0}")]
    DiffApplyFailure(#[from] DiffError),
}

fn normalize(message: &str) -> String {
    message.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

type MatchKey = (String, Severity, Option<String>, String);

fn key(d: &Diagnostic) -> MatchKey {
    (d.path.clone(), d.severity, d.code.clone(), normalize(&d.message))
}

/// Patched findings that have no counterpart in `baseline` (multiset difference).
pub fn diagnostic_delta(baseline: &[Diagnostic], patched: &[Diagnostic]) -> Vec<Diagnostic> {
    let mut remaining: HashMap<MatchKey, usize> = HashMap::new();
    for d in baseline {
        *remaining.entry(key(d)).or_default() += 1;
    }
    let mut out = Vec::new();
    for d in patched {
        match remaining.get_mut(&key(d)) {
            Some(n) if *n > 0 => *n -= 1,
            _ => out.push(d.clone()),
        }
    }
    out.sort();
    out
}

/// Diagnostics gate with a baseline cache keyed by content digest.
pub struct Gate<'p> {
    provider: &'p dyn DiagnosticsProvider,
    baselines: Mutex<HashMap<(String, String), Vec<Diagnostic>>>,
}

enum Collected {
    Findings(Vec<Diagnostic>),
    Unsupported(String),
}

impl<'p> Gate<'p> {
    pub fn new(provider: &'p dyn DiagnosticsProvider) -> Self {
        Gate {
            provider,
            baselines: Mutex::new(HashMap::new()),
        }
    }

    fn baseline(&self, path: &str, content: &str) -> Result<Collected, NavError> {
        let k = (path.to_string(), sha256_hex(content.as_bytes()));
        if let Some(hit) = self.baselines.lock().unwrap_or_else(|p| p.into_inner()).get(&k) {
            return Ok(Collected::Findings(hit.clone()));
        }
        let found = collect(self.provider, path, content)?;
        if let Collected::Findings(f) = &found {
            self.baselines.lock().unwrap_or_else(|p| p.into_inner()).insert(k, f.clone());
        }
        Ok(found)
    }

    /// Applies `diff` in memory and compares diagnostics before and after.
    pub fn evaluate_patch(&self, original: &str, diff: &UnifiedDiff) -> Result<GateVerdict, GateError> {
        let patched = apply_diff(original, diff)?;
        Ok(self.evaluate_content(diff.path(), original, &patched, Some(diff)))
    }

    /// Compares diagnostics of `original` and `patched` for one file.
    pub fn evaluate_content(&self, path: &str, original: &str, patched: &str, diff: Option<&UnifiedDiff>) -> GateVerdict {
        let rendered = diff.map(UnifiedDiff::render);
        let mut verdict = GateVerdict {
            path: path.to_string(),
            accepted: true,
            new_diagnostics: Vec::new(),
            baseline_count: 0,
            patched_count: 0,
            reason: None,
            diff: rendered,
        };
        if original == patched {
            return verdict;
        }
        let reject = |mut v: GateVerdict, e: NavError| {
            v.accepted = false;
            v.reason = Some(e.to_string());
            v.diff = None;
            v
        };
        let before = match self.baseline(path, original) {
            Ok(Collected::Findings(f)) => f,
            Ok(Collected::Unsupported(why)) => {
                verdict.reason = Some(why);
                return verdict;
            }
            Err(e) => return reject(verdict, e),
        };
        let after = match collect(self.provider, path, patched) {
            Ok(Collected::Findings(f)) => f,
            Ok(Collected::Unsupported(why)) => {
                verdict.reason = Some(why);
                return verdict;
            }
            Err(e) => return reject(verdict, e),
        };
        verdict.baseline_count = before.len();
        verdict.patched_count = after.len();
        verdict.new_diagnostics = diagnostic_delta(&before, &after);
        let blocked = verdict.blocking().next().is_some();
        verdict.accepted = !blocked;
        if !verdict.accepted {
            verdict.diff = None;
        }
        verdict
    }
}

fn collect(provider: &dyn DiagnosticsProvider, path: &str, content: &str) -> Result<Collected, NavError> {
    match provider.collect_diagnostics(path, content) {
        Ok(f) => Ok(Collected::Findings(f)),
        Err(NavError::UnsupportedLanguage(_)) => Ok(Collected::Unsupported(format!(
            "no diagnostics backend for `{path}`; edit not checked"
        ))),
        Err(e) => Err(e),
    }
}

/// One-shot evaluation without a baseline cache.
pub fn evaluate_patch(
    original: &str,
    diff: &UnifiedDiff,
    provider: &dyn DiagnosticsProvider,
) -> Result<GateVerdict, GateError> {
    Gate::new(provider).evaluate_patch(original, diff)
}
