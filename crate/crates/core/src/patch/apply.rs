//! Simulated application of edit blocks. Nothing here touches the filesystem.

use super::diff::{diff_with_paths, UnifiedDiff, DEV_NULL};
use super::edit_block::EditBlock;
use super::matcher::{locate_match, MatchResult, DEFAULT_FUZZY_THRESHOLD};
use super::{content_lines, PatchError};
use serde::Serialize;
use std::collections::BTreeMap;

pub const DEFAULT_CONTEXT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchOptions {
    pub fuzzy_threshold: f64,
    pub context: usize,
}

impl Default for PatchOptions {
    fn default() -> Self {
        PatchOptions {
            fuzzy_threshold: DEFAULT_FUZZY_THRESHOLD,
            context: DEFAULT_CONTEXT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EditOutcome {
    pub new_content: String,
    pub diff: UnifiedDiff,
    /// `None` for file creation.
    pub matched: Option<MatchResult>,
    /// Both first lines were blank, so the replacement kept its own indentation.
    pub indentation_undecidable: bool,
}

fn leading_ws(line: &str) -> &str {
    &line[..line.len() - line.trim_start().len()]
}

/// Shifts `lines` by the difference between `from` and `to` leading whitespace.
pub fn reindent(lines: &[String], from: &str, to: &str) -> Vec<String> {
    if from == to {
        return lines.to_vec();
    }
    lines
        .iter()
        .map(|line| {
            if line.trim().is_empty() {
                return line.clone();
            }
            let ws = leading_ws(line);
            let body = &line[ws.len()..];
            if let Some(rest) = ws.strip_prefix(from) {
                format!("{to}{rest}{body}")
            } else if from.starts_with(ws) {
                // Dedented relative to the search anchor.
                let k = from.chars().count() - ws.chars().count();
                let keep = to.chars().count().saturating_sub(k);
                let prefix: String = to.chars().take(keep).collect();
                format!("{prefix}{body}")
            } else {
                line.clone()
            }
        })
        .collect()
}

fn join(lines: &[String], trailing_newline: bool) -> String {
    if lines.is_empty() {
        return String::new();
    }
    let mut s = lines.join("\n");
    if trailing_newline {
        s.push('\n');
    }
    s
}

/// Replaces the located segment of `content` with the block's replacement.
///
/// A creation block (empty search) requires `content` to be empty.
pub fn apply_edit(content: &str, block: &EditBlock, opts: &PatchOptions) -> Result<EditOutcome, PatchError> {
    if block.is_creation() {
        if !content.is_empty() {
            return Err(PatchError::FileExists {
                path: block.path.clone(),
            });
        }
        let new_content = join(&block.replace, true);
        return Ok(EditOutcome {
            diff: diff_with_paths("", &new_content, DEV_NULL, &block.path, opts.context),
            new_content,
            matched: None,
            indentation_undecidable: false,
        });
    }
    let m = locate_match(content, &block.search, opts.fuzzy_threshold)?;
    let lines = content_lines(content);
    let matched_first = lines[m.start_line - 1];
    let search_first = block.search[0].as_str();
    let undecidable = matched_first.trim().is_empty() && search_first.trim().is_empty();
    let replacement = if undecidable {
        block.replace.clone()
    } else {
        reindent(&block.replace, leading_ws(search_first), leading_ws(matched_first))
    };
    let mut out: Vec<String> = Vec::with_capacity(lines.len() + replacement.len());
    out.extend(lines[..m.start_line - 1].iter().map(|s| s.to_string()));
    out.extend(replacement);
    out.extend(lines[m.end_line..].iter().map(|s| s.to_string()));
    let new_content = join(&out, content.ends_with('\n'));
    Ok(EditOutcome {
        diff: diff_with_paths(content, &new_content, &block.path, &block.path, opts.context),
        new_content,
        matched: Some(m),
        indentation_undecidable: undecidable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEdit {
    pub path: String,
    /// `None` when the batch creates the file.
    pub original: Option<String>,
    pub new_content: String,
    pub diff: UnifiedDiff,
    pub indentation_undecidable: bool,
}

/// Applies blocks in order against running per-file content. Any failure
/// aborts the whole batch.
pub fn apply_edits<F>(blocks: &[EditBlock], mut read: F, opts: &PatchOptions) -> Result<Vec<FileEdit>, PatchError>
where
    F: FnMut(&str) -> Option<String>,
{
    let mut state: BTreeMap<String, (Option<String>, String, bool)> = BTreeMap::new();
    for (index, block) in blocks.iter().enumerate() {
        let wrap = |e: PatchError| PatchError::Block {
            index,
            path: block.path.clone(),
            source: Box::new(e),
        };
        if !state.contains_key(&block.path) {
            let original = read(&block.path);
            if original.is_none() && !block.is_creation() {
                return Err(wrap(PatchError::MissingFile {
                    path: block.path.clone(),
                }));
            }
            let current = original.clone().unwrap_or_default();
            state.insert(block.path.clone(), (original, current, false));
        }
        let entry = state.get_mut(&block.path).expect("inserted above");
        if block.is_creation() && entry.0.is_some() {
            return Err(wrap(PatchError::FileExists {
                path: block.path.clone(),
            }));
        }
        let outcome = apply_edit(&entry.1, block, opts).map_err(wrap)?;
        entry.1 = outcome.new_content;
        entry.2 |= outcome.indentation_undecidable;
    }
    Ok(state
        .into_iter()
        .map(|(path, (original, new_content, undecidable))| {
            let old_path = if original.is_some() { path.as_str() } else { DEV_NULL };
            FileEdit {
                diff: diff_with_paths(original.as_deref().unwrap_or(""), &new_content, old_path, &path, opts.context),
                path,
                original,
                new_content,
                indentation_undecidable: undecidable,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::super::diff::apply_diff;
    use super::*;
    use proptest::prelude::*;

    const SAMPLE_OLD: &str = "This is a sample file.\nIt contains multiple lines of text.\nHere is another line.\nGoodbye!\n";

    fn sample_block() -> EditBlock {
        EditBlock::new(
            "example.txt",
            &["It contains multiple lines of text.", "Here is another line.", "Goodbye!"],
            &["It contains a few lines of text.", "Here is yet another line.", "See you later!"],
        )
    }

    #[test]
    fn sample_edit_gives_single_hunk() {
        let out = apply_edit(SAMPLE_OLD, &sample_block(), &PatchOptions::default()).unwrap();
        assert_eq!(out.diff.hunks.len(), 1);
        let h = &out.diff.hunks[0];
        assert_eq!((h.old_start, h.old_len, h.new_start, h.new_len), (1, 4, 1, 4));
        assert_eq!(apply_diff(SAMPLE_OLD, &out.diff).unwrap(), out.new_content);
    }

    #[test]
    fn identical_search_and_replace_is_noop() {
        let b = EditBlock::new("example.txt", &["Goodbye!"], &["Goodbye!"]);
        let out = apply_edit(SAMPLE_OLD, &b, &PatchOptions::default()).unwrap();
        assert_eq!(out.new_content, SAMPLE_OLD);
        assert!(out.diff.is_empty());
    }

    #[test]
    fn replacement_shifts_to_matched_indentation() {
        let content = "class A:\n    def f(self):\n        return 1\n";
        let b = EditBlock::new("a.py", &["def f(self):", "    return 1"], &["def f(self):", "    x = 2", "    return x"]);
        let out = apply_edit(content, &b, &PatchOptions::default()).unwrap();
        assert_eq!(out.new_content, "class A:\n    def f(self):\n        x = 2\n        return x\n");
        assert!(!out.indentation_undecidable);
    }

    #[test]
    fn tab_indentation_is_copied_from_the_match() {
        let content = "func f() {\n\treturn 1\n}\n";
        let b = EditBlock::new("f.go", &["return 1"], &["x := 2", "return x"]);
        let out = apply_edit(content, &b, &PatchOptions::default()).unwrap();
        assert_eq!(out.new_content, "func f() {\n\tx := 2\n\treturn x\n}\n");
    }

    #[test]
    fn blank_first_lines_flag_undecidable() {
        let content = "a\n\n    b\n";
        let b = EditBlock::new("f", &["", "b"], &["", "c"]);
        let out = apply_edit(content, &b, &PatchOptions::default()).unwrap();
        assert!(out.indentation_undecidable);
        assert_eq!(out.new_content, "a\n\nc\n");
    }

    #[test]
    fn trailing_newline_follows_input() {
        let b = EditBlock::new("f", &["b"], &["c"]);
        let out = apply_edit("a\nb", &b, &PatchOptions::default()).unwrap();
        assert_eq!(out.new_content, "a\nc");
        let out = apply_edit("a\nb\n", &b, &PatchOptions::default()).unwrap();
        assert_eq!(out.new_content, "a\nc\n");
    }

    #[test]
    fn creation_requires_absent_file() {
        let b = EditBlock::new("new.py", &[], &["x = 1"]);
        let out = apply_edit("", &b, &PatchOptions::default()).unwrap();
        assert_eq!(out.new_content, "x = 1\n");
        assert_eq!(out.diff.old_path, DEV_NULL);
        assert!(matches!(apply_edit("y\n", &b, &PatchOptions::default()), Err(PatchError::FileExists { .. })));
    }

    #[test]
    fn batch_applies_sequentially_against_running_content() {
        let files = BTreeMap::from([("a.py".to_string(), "x = 1\ny = 2\n".to_string())]);
        let blocks = vec![
            EditBlock::new("a.py", &["x = 1"], &["x = 10"]),
            EditBlock::new("a.py", &["x = 10", "y = 2"], &["x = 10", "y = 20"]),
            EditBlock::new("b.py", &[], &["z = 3"]),
        ];
        let out = apply_edits(&blocks, |p| files.get(p).cloned(), &PatchOptions::default()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].new_content, "x = 10\ny = 20\n");
        assert_eq!(apply_diff(&files["a.py"], &out[0].diff).unwrap(), out[0].new_content);
        assert_eq!(out[1].original, None);
    }

    #[test]
    fn batch_is_all_or_nothing() {
        let files = BTreeMap::from([("a.py".to_string(), "x = 1\n".to_string())]);
        let blocks = vec![
            EditBlock::new("a.py", &["x = 1"], &["x = 2"]),
            EditBlock::new("a.py", &["nothing like this at all"], &["q"]),
        ];
        let err = apply_edits(&blocks, |p| files.get(p).cloned(), &PatchOptions::default()).unwrap_err();
        assert!(matches!(err, PatchError::Block { index: 1, .. }));
        let missing = vec![EditBlock::new("zzz.py", &["a"], &["b"])];
        let err = apply_edits(&missing, |p| files.get(p).cloned(), &PatchOptions::default()).unwrap_err();
        assert!(matches!(err, PatchError::Block { index: 0, ref source, .. } if matches!(**source, PatchError::MissingFile { .. })));
    }

    proptest! {
        #[test]
        fn emitted_diff_reproduces_new_content(
            lines in proptest::collection::vec("( {0,4})[a-c]{1,4}", 1..30),
            start in 0usize..30,
            len in 1usize..4,
            replace in proptest::collection::vec("( {0,2})[a-d]{0,4}", 0..4),
            trailing in any::<bool>(),
        ) {
            let start = start % lines.len();
            let end = (start + len).min(lines.len());
            let mut content = lines.join("\n");
            if trailing {
                content.push('\n');
            }
            let block = EditBlock {
                path: "p".into(),
                search: lines[start..end].to_vec(),
                replace,
            };
            if let Ok(out) = apply_edit(&content, &block, &PatchOptions::default()) {
                prop_assert_eq!(apply_diff(&content, &out.diff).unwrap(), out.new_content.clone());
                prop_assert!(out.diff.hunks.iter().all(|h| h.is_consistent()));
            }
            let noop = EditBlock { replace: block.search.clone(), ..block };
            if let Ok(out) = apply_edit(&content, &noop, &PatchOptions::default()) {
                prop_assert_eq!(out.new_content, content);
                prop_assert!(out.diff.is_empty());
            }
        }
    }
}
