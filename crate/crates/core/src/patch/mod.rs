//! Edit blocks, fuzzy location, re-indentation and unified diffs.

pub mod apply;
pub mod diff;
pub mod edit_block;
pub mod matcher;

pub use apply::{apply_edit, apply_edits, reindent, EditOutcome, FileEdit, PatchOptions, DEFAULT_CONTEXT};
pub use diff::{
    apply_diff, apply_patch_set, diff_with_paths, render_unified_diff, DiffError, DiffLine, Hunk, LineOp, PatchSet,
    UnifiedDiff, DEV_NULL,
};
pub use edit_block::{parse_edit_blocks, EditBlock, MalformedBlock, ParsedEdits};
pub use matcher::{line_similarity, locate_match, window_score, MatchResult, MatchStrategy, DEFAULT_FUZZY_THRESHOLD};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PatchError {
    #[error("no edit blocks found")]
    NoBlocksFound,
    #[error("search block is empty")]
    EmptySearch,
    #[error("no segment scored at least {threshold} (best {best_score:.3} at line {})", best_start.map_or("-".to_string(), |l| l.to_string()))]
    NoAcceptableMatch {
        best_score: f64,
        best_start: Option<usize>,
        threshold: f64,
    },
    #[error("search block matches {} places ({strategy}) at lines {starts:?}", starts.len())]
    AmbiguousExactMatch { strategy: MatchStrategy, starts: Vec<usize> },
    #[error("`{path}` already exists; a creation block needs an absent file")]
    FileExists { path: String },
    #[error("`{path}` does not exist")]
    MissingFile { path: String },
    #[error("edit block {} for `{path}`: {source}", index + 1)]
    Block {
        index: usize,
        path: String,
        source: Box<PatchError>,
    },
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// Lines of `content` without their terminators; carriage returns are kept.
pub(crate) fn content_lines(content: &str) -> Vec<&str> {
    diff::split_lines(content).into_iter().map(|l| l.text).collect()
}
