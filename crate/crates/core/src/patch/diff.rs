//! Unified diff model, rendering, parsing and strict application.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub const NO_NEWLINE_MARKER: &str = "\\ No newline at end of file";
pub const DEV_NULL: &str = "/dev/null";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineOp {
    Context,
    Remove,
    Add,
}

impl LineOp {
    fn prefix(self) -> char {
        match self {
            LineOp::Context => ' ',
            LineOp::Remove => '-',
            LineOp::Add => '+',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffLine {
    pub op: LineOp,
    pub text: String,
    /// The line is the last of its file and has no terminating newline.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub no_newline: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    pub old_start: usize,
    pub old_len: usize,
    pub new_start: usize,
    pub new_len: usize,
    pub lines: Vec<DiffLine>,
}

impl Hunk {
    /// Header counts agree with the line prefixes.
    pub fn is_consistent(&self) -> bool {
        let count = |ops: &[LineOp]| self.lines.iter().filter(|l| ops.contains(&l.op)).count();
        self.old_len == count(&[LineOp::Context, LineOp::Remove])
            && self.new_len == count(&[LineOp::Context, LineOp::Add])
    }
}

/// Single-file unified diff.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnifiedDiff {
    pub old_path: String,
    pub new_path: String,
    pub hunks: Vec<Hunk>,
}

impl UnifiedDiff {
    pub fn is_empty(&self) -> bool {
        self.hunks.is_empty()
    }

    /// Path the diff applies to (the new path unless the file is deleted).
    pub fn path(&self) -> &str {
        if self.new_path == DEV_NULL {
            &self.old_path
        } else {
            &self.new_path
        }
    }

    /// Textual form; an empty diff renders as the empty string.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if self.hunks.is_empty() {
            return out;
        }
        let _ = writeln!(out, "--- {}", self.old_path);
        let _ = writeln!(out, "+++ {}", self.new_path);
        for h in &self.hunks {
            let _ = writeln!(
                out,
                "@@ -{},{} +{},{} @@",
                h.old_start, h.old_len, h.new_start, h.new_len
            );
            for l in &h.lines {
                out.push(l.op.prefix());
                out.push_str(&l.text);
                out.push('\n');
                if l.no_newline {
                    out.push_str(NO_NEWLINE_MARKER);
                    out.push('\n');
                }
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<UnifiedDiff, DiffError> {
        let mut set = PatchSet::parse(text)?;
        match set.files.len() {
            0 => Err(DiffError::Parse {
                line: 1,
                message: "no file header found".into(),
            }),
            1 => Ok(set.files.remove(0)),
            n => Err(DiffError::Parse {
                line: 1,
                message: format!("expected one file, found {n}"),
            }),
        }
    }
}

/// Multi-file patch, one [`UnifiedDiff`] per file in path order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSet {
    pub files: Vec<UnifiedDiff>,
}

impl PatchSet {
    pub fn is_empty(&self) -> bool {
        self.files.iter().all(UnifiedDiff::is_empty)
    }

    pub fn render(&self) -> String {
        self.files.iter().map(UnifiedDiff::render).collect()
    }

    pub fn parse(text: &str) -> Result<PatchSet, DiffError> {
        Parser::new(text).parse()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DiffError {
    #[error("diff line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("hunk {hunk} does not match the original at line {line}")]
    ContextMismatch { hunk: usize, line: usize },
    #[error("hunk {hunk} overlaps or precedes the previous hunk")]
    HunkOrder { hunk: usize },
    #[error("hunk {hunk} header counts disagree with its lines")]
    InconsistentHunk { hunk: usize },
}

/// A line of text with whether it was newline-terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Line<'a> {
    pub text: &'a str,
    pub newline: bool,
}

pub(crate) fn split_lines(text: &str) -> Vec<Line<'_>> {
    let mut out = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        match rest.find('\n') {
            Some(i) => {
                out.push(Line {
                    text: &rest[..i],
                    newline: true,
                });
                rest = &rest[i + 1..];
            }
            None => {
                out.push(Line {
                    text: rest,
                    newline: false,
                });
                rest = "";
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Edit {
    Equal(usize, usize),
    Delete(usize),
    Insert(usize),
}

/// Myers' O(ND) shortest edit script.
fn myers<T: PartialEq>(a: &[T], b: &[T]) -> Vec<Edit> {
    let prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    let suffix = a[prefix..]
        .iter()
        .rev()
        .zip(b[prefix..].iter().rev())
        .take_while(|(x, y)| x == y)
        .count();
    let a_mid = &a[prefix..a.len() - suffix];
    let b_mid = &b[prefix..b.len() - suffix];

    let mut edits: Vec<Edit> = (0..prefix).map(|i| Edit::Equal(i, i)).collect();
    let n = a_mid.len() as isize;
    let m = b_mid.len() as isize;
    let max = (n + m) as usize;
    let offset = max as isize + 1;
    let mut v = vec![0isize; 2 * max + 3];
    let mut trace: Vec<Vec<isize>> = Vec::new();
    'outer: for d in 0..=max as isize {
        trace.push(v.clone());
        let mut k = -d;
        while k <= d {
            let idx = (k + offset) as usize;
            let mut x = if k == -d || (k != d && v[idx - 1] < v[idx + 1]) {
                v[idx + 1]
            } else {
                v[idx - 1] + 1
            };
            let mut y = x - k;
            while x < n && y < m && a_mid[x as usize] == b_mid[y as usize] {
                x += 1;
                y += 1;
            }
            v[idx] = x;
            if x >= n && y >= m {
                break 'outer;
            }
            k += 2;
        }
    }

    let mut mid = Vec::new();
    let (mut x, mut y) = (n, m);
    for d in (0..trace.len() as isize).rev() {
        let v = &trace[d as usize];
        let k = x - y;
        let idx = (k + offset) as usize;
        let prev_k = if k == -d || (k != d && v[idx - 1] < v[idx + 1]) {
            k + 1
        } else {
            k - 1
        };
        let prev_x = if d == 0 { 0 } else { v[(prev_k + offset) as usize] };
        let prev_y = prev_x - prev_k;
        while x > prev_x && y > prev_y {
            x -= 1;
            y -= 1;
            mid.push(Edit::Equal(x as usize, y as usize));
        }
        if d > 0 {
            if x == prev_x {
                mid.push(Edit::Insert(prev_y as usize));
            } else {
                mid.push(Edit::Delete(prev_x as usize));
            }
        }
        x = prev_x;
        y = prev_y;
    }
    mid.reverse();

    // Within each run of changes, emit removals before additions.
    let mut i = 0;
    while i < mid.len() {
        if matches!(mid[i], Edit::Equal(..)) {
            edits.push(match mid[i] {
                Edit::Equal(x, y) => Edit::Equal(x + prefix, y + prefix),
                e => e,
            });
            i += 1;
            continue;
        }
        let start = i;
        while i < mid.len() && !matches!(mid[i], Edit::Equal(..)) {
            i += 1;
        }
        let run = &mid[start..i];
        edits.extend(run.iter().filter_map(|e| match e {
            Edit::Delete(x) => Some(Edit::Delete(x + prefix)),
            _ => None,
        }));
        edits.extend(run.iter().filter_map(|e| match e {
            Edit::Insert(y) => Some(Edit::Insert(y + prefix)),
            _ => None,
        }));
    }
    let (a0, b0) = (a.len() - suffix, b.len() - suffix);
    edits.extend((0..suffix).map(|i| Edit::Equal(a0 + i, b0 + i)));
    edits
}

/// Diff between two texts with `context` lines around each change.
pub fn render_unified_diff(old: &str, new: &str, path: &str, context: usize) -> UnifiedDiff {
    diff_with_paths(old, new, path, path, context)
}

pub fn diff_with_paths(
    old: &str,
    new: &str,
    old_path: &str,
    new_path: &str,
    context: usize,
) -> UnifiedDiff {
    let a = split_lines(old);
    let b = split_lines(new);
    let edits = myers(&a, &b);
    let changes: Vec<usize> = edits
        .iter()
        .enumerate()
        .filter(|(_, e)| !matches!(e, Edit::Equal(..)))
        .map(|(i, _)| i)
        .collect();

    let mut hunks = Vec::new();
    let mut ci = 0;
    while ci < changes.len() {
        let first = changes[ci];
        let mut last = first;
        while ci + 1 < changes.len() && changes[ci + 1] - last <= 2 * context + 1 {
            ci += 1;
            last = changes[ci];
        }
        ci += 1;
        let lo = first.saturating_sub(context);
        let hi = (last + context + 1).min(edits.len());
        let span = &edits[lo..hi];

        // Positions of the old/new cursor at the start of the span.
        let (old_pos, new_pos) = cursor_at(&edits, lo);
        let mut lines = Vec::new();
        let (mut old_len, mut new_len) = (0, 0);
        for e in span {
            match *e {
                Edit::Equal(x, _) => {
                    old_len += 1;
                    new_len += 1;
                    lines.push(DiffLine {
                        op: LineOp::Context,
                        text: a[x].text.to_string(),
                        no_newline: !a[x].newline,
                    });
                }
                Edit::Delete(x) => {
                    old_len += 1;
                    lines.push(DiffLine {
                        op: LineOp::Remove,
                        text: a[x].text.to_string(),
                        no_newline: !a[x].newline,
                    });
                }
                Edit::Insert(y) => {
                    new_len += 1;
                    lines.push(DiffLine {
                        op: LineOp::Add,
                        text: b[y].text.to_string(),
                        no_newline: !b[y].newline,
                    });
                }
            }
        }
        hunks.push(Hunk {
            old_start: if old_len == 0 { old_pos } else { old_pos + 1 },
            old_len,
            new_start: if new_len == 0 { new_pos } else { new_pos + 1 },
            new_len,
            lines,
        });
    }
    UnifiedDiff {
        old_path: old_path.to_string(),
        new_path: new_path.to_string(),
        hunks,
    }
}

fn cursor_at(edits: &[Edit], upto: usize) -> (usize, usize) {
    let mut old = 0;
    let mut new = 0;
    for e in &edits[..upto] {
        match e {
            Edit::Equal(..) => {
                old += 1;
                new += 1;
            }
            Edit::Delete(_) => old += 1,
            Edit::Insert(_) => new += 1,
        }
    }
    (old, new)
}

/// Applies a diff at its stated positions; every context and removed line
/// must match exactly.
pub fn apply_diff(old: &str, diff: &UnifiedDiff) -> Result<String, DiffError> {
    let src = split_lines(old);
    let mut out: Vec<(String, bool)> = Vec::with_capacity(src.len());
    let mut pos = 0usize;
    for (hi, h) in diff.hunks.iter().enumerate() {
        let hunk = hi + 1;
        if !h.is_consistent() {
            return Err(DiffError::InconsistentHunk { hunk });
        }
        let start = if h.old_len == 0 {
            h.old_start
        } else {
            h.old_start.checked_sub(1).ok_or(DiffError::ContextMismatch { hunk, line: 0 })?
        };
        if start < pos || start > src.len() {
            return Err(DiffError::HunkOrder { hunk });
        }
        out.extend(src[pos..start].iter().map(|l| (l.text.to_string(), l.newline)));
        pos = start;
        for l in &h.lines {
            match l.op {
                LineOp::Context | LineOp::Remove => {
                    let cur = src.get(pos).ok_or(DiffError::ContextMismatch {
                        hunk,
                        line: pos + 1,
                    })?;
                    if cur.text != l.text || cur.newline == l.no_newline {
                        return Err(DiffError::ContextMismatch {
                            hunk,
                            line: pos + 1,
                        });
                    }
                    if l.op == LineOp::Context {
                        out.push((l.text.clone(), !l.no_newline));
                    }
                    pos += 1;
                }
                LineOp::Add => out.push((l.text.clone(), !l.no_newline)),
            }
        }
    }
    out.extend(src[pos..].iter().map(|l| (l.text.to_string(), l.newline)));
    let mut text = String::with_capacity(old.len());
    for (t, nl) in out {
        text.push_str(&t);
        if nl {
            text.push('\n');
        }
    }
    Ok(text)
}

/// Applies each file diff of a set to the matching entry of `files`.
pub fn apply_patch_set(
    files: &mut std::collections::BTreeMap<String, String>,
    set: &PatchSet,
) -> Result<(), DiffError> {
    for d in &set.files {
        let old = if d.old_path == DEV_NULL {
            String::new()
        } else {
            files.get(&d.old_path).cloned().unwrap_or_default()
        };
        let new = apply_diff(&old, d)?;
        if d.new_path == DEV_NULL {
            files.remove(&d.old_path);
        } else {
            files.insert(d.new_path.clone(), new);
        }
    }
    Ok(())
}

struct Parser<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

fn strip_header_path(raw: &str) -> &str {
    let p = raw.split('\t').next().unwrap_or(raw).trim_end();
    p
}

fn parse_range(s: &str) -> Option<(usize, usize)> {
    match s.split_once(',') {
        Some((a, b)) => Some((a.parse().ok()?, b.parse().ok()?)),
        None => Some((s.parse().ok()?, 1)),
    }
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            lines: text.split('\n').collect(),
            pos: 0,
        }
    }

    fn err(&self, message: impl Into<String>) -> DiffError {
        DiffError::Parse {
            line: self.pos + 1,
            message: message.into(),
        }
    }

    fn parse(mut self) -> Result<PatchSet, DiffError> {
        let mut files = Vec::new();
        while self.pos < self.lines.len() {
            let line = self.lines[self.pos];
            if let Some(old) = line.strip_prefix("--- ") {
                let next = self.lines.get(self.pos + 1).copied().unwrap_or("");
                let Some(new) = next.strip_prefix("+++ ") else {
                    return Err(DiffError::Parse {
                        line: self.pos + 2,
                        message: "expected `+++` header".into(),
                    });
                };
                let (mut old, mut new) = (strip_header_path(old), strip_header_path(new));
                if let (Some(o), Some(n)) = (old.strip_prefix("a/"), new.strip_prefix("b/")) {
                    (old, new) = (o, n);
                } else if let (true, Some(n)) = (old == DEV_NULL, new.strip_prefix("b/")) {
                    new = n;
                } else if let (Some(o), true) = (old.strip_prefix("a/"), new == DEV_NULL) {
                    old = o;
                }
                self.pos += 2;
                let hunks = self.hunks()?;
                files.push(UnifiedDiff {
                    old_path: old.to_string(),
                    new_path: new.to_string(),
                    hunks,
                });
            } else {
                self.pos += 1;
            }
        }
        Ok(PatchSet { files })
    }

    fn hunks(&mut self) -> Result<Vec<Hunk>, DiffError> {
        let mut hunks = Vec::new();
        while let Some(line) = self.lines.get(self.pos) {
            let Some(rest) = line.strip_prefix("@@ -") else {
                break;
            };
            let Some((ranges, _)) = rest.split_once(" @@") else {
                return Err(self.err("malformed hunk header"));
            };
            let (old, new) = ranges
                .split_once(" +")
                .ok_or_else(|| self.err("malformed hunk header"))?;
            let (old_start, old_len) = parse_range(old).ok_or_else(|| self.err("bad old range"))?;
            let (new_start, new_len) = parse_range(new).ok_or_else(|| self.err("bad new range"))?;
            self.pos += 1;
            let (mut seen_old, mut seen_new) = (0, 0);
            let mut lines: Vec<DiffLine> = Vec::new();
            while seen_old < old_len || seen_new < new_len {
                let Some(&raw) = self.lines.get(self.pos) else {
                    return Err(self.err("hunk ends early"));
                };
                let (op, text) = match raw.chars().next() {
                    Some(' ') => (LineOp::Context, &raw[1..]),
                    Some('-') => (LineOp::Remove, &raw[1..]),
                    Some('+') => (LineOp::Add, &raw[1..]),
                    // Some tools strip the space from empty context lines.
                    None => (LineOp::Context, ""),
                    Some('\\') => {
                        if let Some(last) = lines.last_mut() {
                            last.no_newline = true;
                        }
                        self.pos += 1;
                        continue;
                    }
                    _ => return Err(self.err("unexpected line inside hunk")),
                };
                match op {
                    LineOp::Context => {
                        seen_old += 1;
                        seen_new += 1;
                    }
                    LineOp::Remove => seen_old += 1,
                    LineOp::Add => seen_new += 1,
                }
                if seen_old > old_len || seen_new > new_len {
                    return Err(self.err("hunk longer than its header"));
                }
                lines.push(DiffLine {
                    op,
                    text: text.to_string(),
                    no_newline: false,
                });
                self.pos += 1;
            }
            if self
                .lines
                .get(self.pos)
                .is_some_and(|l| l.starts_with('\\'))
            {
                if let Some(last) = lines.last_mut() {
                    last.no_newline = true;
                }
                self.pos += 1;
            }
            hunks.push(Hunk {
                old_start,
                old_len,
                new_start,
                new_len,
                lines,
            });
        }
        Ok(hunks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const OLD: &str = "This is a sample file.\nIt contains multiple lines of text.\nHere is another line.\nGoodbye!\n";
    const NEW: &str = "This is a sample file.\nIt contains a few lines of text.\nHere is yet another line.\nSee you later!\n";
    const EXPECTED: &str = "--- example.txt\n+++ example.txt\n@@ -1,4 +1,4 @@\n This is a sample file.\n-It contains multiple lines of text.\n-Here is another line.\n-Goodbye!\n+It contains a few lines of text.\n+Here is yet another line.\n+See you later!\n";

    #[test]
    fn renders_sample_replacement_hunk() {
        let d = render_unified_diff(OLD, NEW, "example.txt", 3);
        assert_eq!(d.render(), EXPECTED);
        assert_eq!(apply_diff(OLD, &d).unwrap(), NEW);
        assert_eq!(UnifiedDiff::parse(EXPECTED).unwrap(), d);
    }

    #[test]
    fn identical_inputs_give_empty_diff() {
        let d = render_unified_diff(OLD, OLD, "example.txt", 3);
        assert!(d.is_empty());
        assert_eq!(d.render(), "");
        assert_eq!(apply_diff(OLD, &d).unwrap(), OLD);
    }

    #[test]
    fn distant_changes_split_into_two_hunks() {
        let old: String = (1..=30).map(|i| format!("line {i}\n")).collect();
        let new = old.replace("line 3\n", "line three\n").replace("line 27\n", "line 27b\n");
        let d = render_unified_diff(&old, &new, "f.txt", 3);
        assert_eq!(d.hunks.len(), 2);
        assert_eq!((d.hunks[0].old_start, d.hunks[0].old_len), (1, 6));
        assert_eq!((d.hunks[1].old_start, d.hunks[1].old_len), (24, 7));
        assert!(d.hunks.iter().all(Hunk::is_consistent));
        assert_eq!(apply_diff(&old, &d).unwrap(), new);
    }

    #[test]
    fn zero_context_and_pure_insertion_headers() {
        let d = render_unified_diff("a\nb\n", "a\nx\nb\n", "f", 0);
        assert_eq!(d.render(), "--- f\n+++ f\n@@ -1,0 +2,1 @@\n+x\n");
        let d = render_unified_diff("", "new\n", "f", 3);
        assert_eq!(d.render(), "--- f\n+++ f\n@@ -0,0 +1,1 @@\n+new\n");
        let d = render_unified_diff("gone\n", "", "f", 3);
        assert_eq!(d.render(), "--- f\n+++ f\n@@ -1,1 +0,0 @@\n-gone\n");
    }

    #[test]
    fn missing_final_newline_is_marked() {
        let d = render_unified_diff("a\nb", "a\nb\n", "f", 3);
        let text = d.render();
        assert_eq!(text, "--- f\n+++ f\n@@ -1,2 +1,2 @@\n a\n-b\n\\ No newline at end of file\n+b\n");
        let parsed = UnifiedDiff::parse(&text).unwrap();
        assert_eq!(apply_diff("a\nb", &parsed).unwrap(), "a\nb\n");
    }

    #[test]
    fn mismatched_context_is_rejected() {
        let d = render_unified_diff(OLD, NEW, "example.txt", 3);
        let other = OLD.replace("Goodbye!", "Bye");
        assert!(matches!(apply_diff(&other, &d), Err(DiffError::ContextMismatch { hunk: 1, .. })));
    }

    #[test]
    fn parses_git_prefixes_and_short_ranges() {
        let text = "diff --git a/x.py b/x.py\n--- a/x.py\n+++ b/x.py\n@@ -2 +2 @@\n-b\n+c\n";
        let d = UnifiedDiff::parse(text).unwrap();
        assert_eq!(d.old_path, "x.py");
        assert_eq!(apply_diff("a\nb\n", &d).unwrap(), "a\nc\n");
    }

    #[test]
    fn patch_set_round_trip() {
        let a = render_unified_diff("1\n", "2\n", "a.txt", 3);
        let b = diff_with_paths("", "new\n", DEV_NULL, "b.txt", 3);
        let set = PatchSet { files: vec![a, b] };
        let parsed = PatchSet::parse(&set.render()).unwrap();
        assert_eq!(parsed, set);
        let mut files = std::collections::BTreeMap::from([("a.txt".to_string(), "1\n".to_string())]);
        apply_patch_set(&mut files, &parsed).unwrap();
        assert_eq!(files["a.txt"], "2\n");
        assert_eq!(files["b.txt"], "new\n");
    }

    fn text_strategy() -> impl Strategy<Value = String> {
        (proptest::collection::vec("[abc ]{0,3}", 0..25), any::<bool>()).prop_map(|(lines, nl)| {
            let mut s = lines.join("\n");
            if nl && !s.is_empty() {
                s.push('\n');
            }
            s
        })
    }

    proptest! {
        #[test]
        fn hunk_arithmetic_and_round_trip(old in text_strategy(), new in text_strategy(), ctx in 0usize..4) {
            let d = render_unified_diff(&old, &new, "p", ctx);
            prop_assert!(d.hunks.iter().all(Hunk::is_consistent));
            prop_assert_eq!(apply_diff(&old, &d).unwrap(), new.clone());
            let reparsed = UnifiedDiff::parse(&d.render());
            if d.is_empty() {
                prop_assert!(reparsed.is_err());
            } else {
                prop_assert_eq!(apply_diff(&old, &reparsed.unwrap()).unwrap(), new);
            }
        }
    }
}
