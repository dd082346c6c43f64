//! Locating the search lines of an edit block inside a file.

use super::PatchError;
use serde::{Deserialize, Serialize};

pub const DEFAULT_FUZZY_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStrategy {
    Exact,
    WhitespaceNormalized,
    Fuzzy,
}

impl std::fmt::Display for MatchStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MatchStrategy::Exact => "exact",
            MatchStrategy::WhitespaceNormalized => "whitespace-normalized",
            MatchStrategy::Fuzzy => "fuzzy",
        })
    }
}

/// Inclusive 1-based line window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub start_line: usize,
    pub end_line: usize,
    pub score: f64,
    pub strategy: MatchStrategy,
}

/// `1 - distance / max_len` over trimmed lines; two blank lines are identical.
pub fn line_similarity(a: &str, b: &str) -> f64 {
    let (a, b) = (a.trim(), b.trim());
    let max = a.chars().count().max(b.chars().count());
    if max == 0 {
        return 1.0;
    }
    1.0 - strsim::levenshtein(a, b) as f64 / max as f64
}

/// Mean per-line similarity of `search` against `window`.
pub fn window_score<S: AsRef<str>, T: AsRef<str>>(window: &[S], search: &[T]) -> f64 {
    debug_assert_eq!(window.len(), search.len());
    let total: f64 = window
        .iter()
        .zip(search)
        .map(|(w, s)| line_similarity(w.as_ref(), s.as_ref()))
        .sum();
    total / search.len() as f64
}

fn unique_window<F>(
    lines: &[&str],
    search: &[String],
    strategy: MatchStrategy,
    eq: F,
) -> Result<Option<MatchResult>, PatchError>
where
    F: Fn(&str, &str) -> bool,
{
    let m = search.len();
    if m > lines.len() {
        return Ok(None);
    }
    let starts: Vec<usize> = (0..=lines.len() - m)
        .filter(|&s| lines[s..s + m].iter().zip(search).all(|(l, q)| eq(l, q)))
        .map(|s| s + 1)
        .collect();
    match starts.len() {
        0 => Ok(None),
        1 => Ok(Some(MatchResult {
            start_line: starts[0],
            end_line: starts[0] + m - 1,
            score: 1.0,
            strategy,
        })),
        _ => Err(PatchError::AmbiguousExactMatch { strategy, starts }),
    }
}

/// Tries exact, then whitespace-normalized, then fuzzy window matching.
pub fn locate_match(content: &str, search: &[String], threshold: f64) -> Result<MatchResult, PatchError> {
    if search.is_empty() {
        return Err(PatchError::EmptySearch);
    }
    let lines: Vec<&str> = super::content_lines(content);
    if let Some(m) = unique_window(&lines, search, MatchStrategy::Exact, |a, b| a == b)? {
        return Ok(m);
    }
    if let Some(m) = unique_window(&lines, search, MatchStrategy::WhitespaceNormalized, |a, b| {
        a.trim() == b.trim()
    })? {
        return Ok(m);
    }
    let m = search.len();
    let mut best: Option<(usize, f64)> = None;
    if m <= lines.len() {
        for s in 0..=lines.len() - m {
            let score = window_score(&lines[s..s + m], search);
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((s, score));
            }
        }
    }
    match best {
        Some((s, score)) if score >= threshold => Ok(MatchResult {
            start_line: s + 1,
            end_line: s + m,
            score,
            strategy: MatchStrategy::Fuzzy,
        }),
        _ => Err(PatchError::NoAcceptableMatch {
            best_score: best.map_or(0.0, |b| b.1),
            best_start: best.map(|b| b.0 + 1),
            threshold,
        }),
    }
}
