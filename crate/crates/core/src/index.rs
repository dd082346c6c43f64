//! Filename and content search over a repository snapshot.

use globset::{GlobBuilder, GlobMatcher};
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use walkdir::WalkDir;

/// Directory names skipped by default: version-control metadata and common
/// build outputs.
pub const DEFAULT_EXCLUSIONS: &[&str] = &[
    ".git",
    ".hg",
    ".svn",
    "target",
    "node_modules",
    "__pycache__",
    ".bugsmith",
];

pub const DEFAULT_MATCH_CAP: usize = 200;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("cannot read {path}: {source}")]
    UnreadablePath {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid glob `{pattern}`: {message}")]
    InvalidGlob { pattern: String, message: String },
    #[error("invalid pattern `{pattern}`: {message}")]
    InvalidPattern { pattern: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub exclusions: Vec<String>,
    pub match_cap: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            exclusions: DEFAULT_EXCLUSIONS.iter().map(|s| s.to_string()).collect(),
            match_cap: DEFAULT_MATCH_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capped<T> {
    pub items: Vec<T>,
    pub truncated: bool,
}

/// One matching line. `column` is the 1-based character column of the first
/// match on the line.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GrepMatch {
    pub path: String,
    pub line: usize,
    pub column: usize,
    pub line_text: String,
}

/// All regular files under `root` outside excluded directories, as sorted
/// `/`-separated relative paths.
pub fn walk_files(root: &Path, exclusions: &[String]) -> Result<Vec<String>, IndexError> {
    let meta = fs::metadata(root).map_err(|source| IndexError::UnreadablePath {
        path: root.to_path_buf(),
        source,
    })?;
    if !meta.is_dir() {
        return Err(IndexError::UnreadablePath {
            path: root.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotADirectory, "not a directory"),
        });
    }
    let mut out = Vec::new();
    let walker = WalkDir::new(root)
        .follow_links(false)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| {
            e.depth() == 0
                || !(e.file_type().is_dir()
                    && exclusions.iter().any(|x| e.file_name().to_str() == Some(x)))
        });
    for entry in walker {
        let entry = entry.map_err(|e| IndexError::UnreadablePath {
            path: e.path().map(Path::to_path_buf).unwrap_or_else(|| root.to_path_buf()),
            source: e.into_io_error().unwrap_or_else(|| std::io::Error::other("walk failed")),
        })?;
        if entry.file_type().is_file() {
            out.push(relative(root, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

pub(crate) fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// A glob that matches the whole relative path when it contains `/`, and
/// the final path segment otherwise (so `*.go` finds Go files anywhere).
#[derive(Debug, Clone)]
pub struct PathGlob {
    matcher: GlobMatcher,
    basename_only: bool,
}

impl PathGlob {
    pub fn new(pattern: &str) -> Result<Self, IndexError> {
        let glob = GlobBuilder::new(pattern)
            .literal_separator(true)
            .build()
            .map_err(|e| IndexError::InvalidGlob {
                pattern: pattern.to_string(),
                message: e.kind().to_string(),
            })?;
        Ok(PathGlob {
            matcher: glob.compile_matcher(),
            basename_only: !pattern.contains('/'),
        })
    }

    pub fn is_match(&self, rel_path: &str) -> bool {
        if self.basename_only {
            let name = rel_path.rsplit('/').next().unwrap_or(rel_path);
            self.matcher.is_match(name)
        } else {
            self.matcher.is_match(rel_path)
        }
    }
}

pub fn find_file(
    root: &Path,
    pattern: &str,
    opts: &SearchOptions,
) -> Result<Capped<String>, IndexError> {
    let glob = PathGlob::new(pattern)?;
    let mut items: Vec<String> = walk_files(root, &opts.exclusions)?
        .into_iter()
        .filter(|p| glob.is_match(p))
        .collect();
    let truncated = items.len() > opts.match_cap;
    items.truncate(opts.match_cap);
    Ok(Capped { items, truncated })
}

/// Restricts a grep to matching paths: an exact relative path, a directory
/// prefix, or a glob.
#[derive(Debug, Clone)]
pub enum Scope {
    Path(String),
    Glob(PathGlob),
}

impl Scope {
    pub fn parse(spec: &str) -> Result<Self, IndexError> {
        if spec.contains(['*', '?', '[', '{']) {
            Ok(Scope::Glob(PathGlob::new(spec)?))
        } else {
            Ok(Scope::Path(spec.trim_end_matches('/').to_string()))
        }
    }

    fn includes(&self, rel_path: &str) -> bool {
        match self {
            Scope::Path(p) => {
                rel_path == p
                    || (rel_path.starts_with(p.as_str())
                        && rel_path.as_bytes().get(p.len()) == Some(&b'/'))
            }
            Scope::Glob(g) => g.is_match(rel_path),
        }
    }
}

const BINARY_SNIFF: usize = 8192;

/// Reads a file as text; `None` for binary (NUL byte in the first 8 KiB)
/// or non-UTF-8 content.
pub(crate) fn read_text(path: &Path) -> std::io::Result<Option<String>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes[..bytes.len().min(BINARY_SNIFF)].contains(&0) {
        return Ok(None);
    }
    Ok(String::from_utf8(bytes).ok())
}

pub fn grep(
    root: &Path,
    pattern: &str,
    scope: Option<&Scope>,
    opts: &SearchOptions,
) -> Result<Capped<GrepMatch>, IndexError> {
    let re = Regex::new(pattern).map_err(|e| IndexError::InvalidPattern {
        pattern: pattern.to_string(),
        message: e.to_string(),
    })?;
    let mut items = Vec::new();
    let mut truncated = false;
    'files: for rel in walk_files(root, &opts.exclusions)? {
        if scope.is_some_and(|s| !s.includes(&rel)) {
            continue;
        }
        let full = root.join(&rel);
        let Some(text) = read_text(&full).map_err(|source| IndexError::UnreadablePath {
            path: full.clone(),
            source,
        })?
        else {
            continue;
        };
        for (i, line) in text.lines().enumerate() {
            if let Some(m) = re.find(line) {
                if items.len() == opts.match_cap {
                    truncated = true;
                    break 'files;
                }
                items.push(GrepMatch {
                    path: rel.clone(),
                    line: i + 1,
                    column: line[..m.start()].chars().count() + 1,
                    line_text: line.to_string(),
                });
            }
        }
    }
    Ok(Capped { items, truncated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tree(files: &[(&str, &[u8])]) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for (p, body) in files {
            let full = dir.path().join(p);
            fs::create_dir_all(full.parent().unwrap()).unwrap();
            fs::write(full, body).unwrap();
        }
        dir
    }

    #[test]
    fn find_matches_nested_test_files() {
        let dir = tree(&[
            ("pkg/test_core.py", b"x = 1\n"),
            ("pkg/core.py", b"x = 2\n"),
            ("setup.py", b"\n"),
        ]);
        let got = find_file(dir.path(), "**/test_*.py", &SearchOptions::default()).unwrap();
        assert_eq!(got.items, vec!["pkg/test_core.py"]);
        let none = find_file(dir.path(), "*.rs", &SearchOptions::default()).unwrap();
        assert!(none.items.is_empty() && !none.truncated);
    }

    #[test]
    fn find_skips_excluded_directories() {
        let dir = tree(&[(".git/config", b"x"), ("target/a.py", b"x"), ("a.py", b"x")]);
        let got = find_file(dir.path(), "*", &SearchOptions::default()).unwrap();
        assert_eq!(got.items, vec!["a.py"]);
    }

    #[test]
    fn invalid_inputs_are_reported() {
        let dir = tree(&[("a.py", b"x")]);
        assert!(matches!(
            find_file(dir.path(), "a[", &SearchOptions::default()),
            Err(IndexError::InvalidGlob { .. })
        ));
        assert!(matches!(
            grep(dir.path(), "(", None, &SearchOptions::default()),
            Err(IndexError::InvalidPattern { .. })
        ));
        assert!(matches!(
            find_file(&dir.path().join("missing"), "*", &SearchOptions::default()),
            Err(IndexError::UnreadablePath { .. })
        ));
    }

    #[test]
    fn grep_scoped_import_lines() {
        let dir = tree(&[
            ("a.py", b"import os\nx = 1\nimport sys\n"),
            ("b.py", b"import re\n"),
            ("blob.bin", b"import\0binary"),
        ]);
        let scope = Scope::parse("a.py").unwrap();
        let got = grep(dir.path(), "^import", Some(&scope), &SearchOptions::default()).unwrap();
        let lines: Vec<(String, usize)> = got.items.iter().map(|m| (m.path.clone(), m.line)).collect();
        assert_eq!(lines, vec![("a.py".into(), 1), ("a.py".into(), 3)]);
        let all = grep(dir.path(), "^import", None, &SearchOptions::default()).unwrap();
        assert_eq!(all.items.len(), 3);
        assert!(grep(dir.path(), "nothing_here", None, &SearchOptions::default())
            .unwrap()
            .items
            .is_empty());
    }

    #[test]
    fn grep_cap_sets_truncation_flag() {
        let body = "hit\n".repeat(10);
        let dir = tree(&[("a.txt", body.as_bytes())]);
        let opts = SearchOptions { match_cap: 4, ..SearchOptions::default() };
        let got = grep(dir.path(), "hit", None, &opts).unwrap();
        assert_eq!(got.items.len(), 4);
        assert!(got.truncated);
    }

    #[test]
    fn grep_column_is_character_based() {
        let dir = tree(&[("u.txt", "\u{e9}\u{e9} target\n".as_bytes())]);
        let got = grep(dir.path(), "target", None, &SearchOptions::default()).unwrap();
        assert_eq!(got.items[0].column, 4);
    }

    fn naive_scan(files: &[(String, String)], re: &Regex) -> Vec<GrepMatch> {
        let mut sorted = files.to_vec();
        sorted.sort();
        let mut out = Vec::new();
        for (path, body) in &sorted {
            for (i, line) in body.split('\n').enumerate() {
                if i == body.split('\n').count() - 1 && line.is_empty() {
                    continue;
                }
                if let Some(m) = re.find(line) {
                    out.push(GrepMatch {
                        path: path.clone(),
                        line: i + 1,
                        column: line[..m.start()].chars().count() + 1,
                        line_text: line.to_string(),
                    });
                }
            }
        }
        out
    }

    proptest! {
        #[test]
        fn grep_equals_naive_line_scan(
            bodies in proptest::collection::vec("(foo|bar|baz| |x|\n){0,40}", 1..5),
            pat in "(foo|ba[rz]|x+|o b)",
        ) {
            let files: Vec<(String, String)> = bodies
                .into_iter()
                .enumerate()
                .map(|(i, b)| (format!("d{}/f{}.txt", i % 2, i), b))
                .collect();
            let dir = tempfile::tempdir().unwrap();
            for (p, b) in &files {
                let full = dir.path().join(p);
                fs::create_dir_all(full.parent().unwrap()).unwrap();
                fs::write(full, b).unwrap();
            }
            let re = Regex::new(&pat).unwrap();
            let opts = SearchOptions { match_cap: usize::MAX, ..SearchOptions::default() };
            let got = grep(dir.path(), &pat, None, &opts).unwrap();
            prop_assert_eq!(got.items, naive_scan(&files, &re));
        }

        #[test]
        fn find_plus_exclusions_is_full_listing(
            names in proptest::collection::btree_set("(src|target|\\.git|lib)/[a-c]{1,2}\\.(py|go|txt)", 1..12),
        ) {
            let dir = tempfile::tempdir().unwrap();
            for n in &names {
                let full = dir.path().join(n);
                fs::create_dir_all(full.parent().unwrap()).unwrap();
                fs::write(full, "x").unwrap();
            }
            let opts = SearchOptions::default();
            let found = find_file(dir.path(), "**", &opts).unwrap().items;
            let excluded = names.iter().filter(|n| {
                n.split('/').next().is_some_and(|d| opts.exclusions.iter().any(|x| x == d))
            });
            let mut union: Vec<String> = found.into_iter().chain(excluded.cloned()).collect();
            union.sort();
            let all: Vec<String> = names.iter().cloned().collect();
            prop_assert_eq!(union, all);
        }
    }
}
