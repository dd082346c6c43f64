//! Conflict-marker edit blocks.
//!
//! ```text
//! path/to/file.py
//! <<<<<<< SEARCH
//! original lines
//! =======
//! replacement lines
//! >>>>>>> REPLACE
//! ```

use super::PatchError;
use serde::{Deserialize, Serialize};

pub const SEARCH_MARKER: &str = "<<<<<<< SEARCH";
pub const DIVIDER_MARKER: &str = "=======";
pub const REPLACE_MARKER: &str = ">>>>>>> REPLACE";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditBlock {
    pub path: String,
    /// Empty only when the block creates a new file.
    pub search: Vec<String>,
    pub replace: Vec<String>,
}

impl EditBlock {
    pub fn new(path: impl Into<String>, search: &[&str], replace: &[&str]) -> Self {
        EditBlock {
            path: path.into(),
            search: search.iter().map(|s| s.to_string()).collect(),
            replace: replace.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn is_creation(&self) -> bool {
        self.search.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.path);
        out.push('\n');
        out.push_str(SEARCH_MARKER);
        out.push('\n');
        for l in &self.search {
            out.push_str(l);
            out.push('\n');
        }
        out.push_str(DIVIDER_MARKER);
        out.push('\n');
        for l in &self.replace {
            out.push_str(l);
            out.push('\n');
        }
        out.push_str(REPLACE_MARKER);
        out.push('\n');
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MalformedBlock {
    /// 1-based line of the opening marker.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParsedEdits {
    pub blocks: Vec<EditBlock>,
    pub malformed: Vec<MalformedBlock>,
}

fn is_marker(line: &str, marker: &str) -> bool {
    line.trim_end() == marker
}

fn is_fence(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with("```") || t.starts_with("~~~")
}

fn clean_path(line: &str) -> Option<String> {
    let p = line
        .trim()
        .trim_matches('`')
        .trim_end_matches(':')
        .trim_start_matches("./")
        .trim();
    if p.is_empty() || p.chars().any(char::is_whitespace) {
        None
    } else {
        Some(p.to_string())
    }
}

/// Extracts every edit block in source order. Prose around blocks is ignored.
pub fn parse_edit_blocks(text: &str) -> Result<ParsedEdits, PatchError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut out = ParsedEdits::default();
    let mut saw_marker = false;
    let mut i = 0;
    while i < lines.len() {
        if !is_marker(lines[i], SEARCH_MARKER) {
            if is_marker(lines[i], DIVIDER_MARKER) || is_marker(lines[i], REPLACE_MARKER) {
                saw_marker = true;
                out.malformed.push(MalformedBlock {
                    line: i + 1,
                    reason: "marker outside a block".into(),
                });
            }
            i += 1;
            continue;
        }
        saw_marker = true;
        let open = i;
        let path = lines[..open]
            .iter()
            .rev()
            .find(|l| !l.trim().is_empty() && !is_fence(l))
            .filter(|l| !is_marker(l, REPLACE_MARKER))
            .and_then(|l| clean_path(l));

        let mut j = open + 1;
        let mut divider = None;
        let mut close = None;
        while j < lines.len() {
            let l = lines[j];
            if is_marker(l, SEARCH_MARKER) {
                break;
            }
            if divider.is_none() && is_marker(l, DIVIDER_MARKER) {
                divider = Some(j);
            } else if is_marker(l, REPLACE_MARKER) {
                close = Some(j);
                break;
            }
            j += 1;
        }
        let (Some(div), Some(end)) = (divider, close) else {
            out.malformed.push(MalformedBlock {
                line: open + 1,
                reason: if divider.is_none() {
                    format!("unterminated block: missing `{DIVIDER_MARKER}`")
                } else {
                    format!("unterminated block: missing `{REPLACE_MARKER}`")
                },
            });
            i = j.max(open + 1);
            continue;
        };
        i = end + 1;
        let Some(path) = path else {
            out.malformed.push(MalformedBlock {
                line: open + 1,
                reason: "missing file path before the block".into(),
            });
            continue;
        };
        let own = |r: &[&str]| r.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        out.blocks.push(EditBlock {
            path,
            search: own(&lines[open + 1..div]),
            replace: own(&lines[div + 1..end]),
        });
    }
    if !saw_marker {
        return Err(PatchError::NoBlocksFound);
    }
    Ok(out)
}
