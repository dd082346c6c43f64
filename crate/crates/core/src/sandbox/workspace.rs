//! Isolated working copy with a pristine content snapshot.

use super::{SandboxError, RESERVED_DIR};
use crate::digest::sha256_hex;
use crate::patch::{diff_with_paths, PatchSet, DEFAULT_CONTEXT, DEV_NULL};
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Component, Path, PathBuf};
use walkdir::WalkDir;

/// Paths that never take part in snapshots, resets or diffs.
const IGNORED_DIRS: &[&str] = &[".git", ".hg", ".svn", RESERVED_DIR, "__pycache__", ".pytest_cache"];
const IGNORED_SUFFIXES: &[&str] = &[".pyc", ".pyo"];

pub fn is_ignored(rel: &str) -> bool {
    rel.split('/').any(|seg| IGNORED_DIRS.contains(&seg)) || IGNORED_SUFFIXES.iter().any(|s| rel.ends_with(s))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SandboxError + '_ {
    move |source| SandboxError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn rel_string(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Content digest per relative path (files and symlinks) and the set of directories.
fn scan(root: &Path) -> Result<(BTreeMap<String, String>, BTreeSet<String>), SandboxError> {
    let mut files = BTreeMap::new();
    let mut dirs = BTreeSet::new();
    let walker = WalkDir::new(root)
        .follow_links(false)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !is_ignored(&rel_string(root, e.path())));
    for entry in walker {
        let entry = entry.map_err(|e| SandboxError::Io {
            path: root.to_path_buf(),
            source: e.into(),
        })?;
        if entry.depth() == 0 {
            continue;
        }
        let rel = rel_string(root, entry.path());
        let ft = entry.file_type();
        if ft.is_dir() {
            dirs.insert(rel);
        } else if ft.is_symlink() {
            let target = fs::read_link(entry.path()).map_err(io_err(entry.path()))?;
            files.insert(rel, format!("link:{}", sha256_hex(target.to_string_lossy().as_bytes())));
        } else if ft.is_file() {
            let bytes = fs::read(entry.path()).map_err(io_err(entry.path()))?;
            files.insert(rel, sha256_hex(&bytes));
        }
    }
    Ok((files, dirs))
}

fn copy_entry(from: &Path, to: &Path) -> Result<(), SandboxError> {
    if let Some(parent) = to.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let meta = fs::symlink_metadata(from).map_err(io_err(from))?;
    if meta.file_type().is_symlink() {
        let target = fs::read_link(from).map_err(io_err(from))?;
        let _ = fs::remove_file(to);
        #[cfg(unix)]
        std::os::unix::fs::symlink(&target, to).map_err(io_err(to))?;
        #[cfg(not(unix))]
        fs::copy(from, to).map_err(io_err(to))?;
    } else {
        fs::copy(from, to).map_err(io_err(to))?;
    }
    Ok(())
}

fn copy_tree(from: &Path, to: &Path) -> Result<(), SandboxError> {
    fs::create_dir_all(to).map_err(io_err(to))?;
    let walker = WalkDir::new(from)
        .follow_links(false)
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || rel_string(from, e.path()).split('/').next() != Some(RESERVED_DIR));
    for entry in walker {
        let entry = entry.map_err(|e| SandboxError::Io {
            path: from.to_path_buf(),
            source: e.into(),
        })?;
        if entry.depth() == 0 {
            continue;
        }
        let dest = to.join(entry.path().strip_prefix(from).expect("walk stays under root"));
        if entry.file_type().is_dir() {
            fs::create_dir_all(&dest).map_err(io_err(&dest))?;
        } else {
            copy_entry(entry.path(), &dest)?;
        }
    }
    Ok(())
}

/// Rejects absolute paths and parent components.
pub fn checked_relative(rel: &str) -> Result<PathBuf, SandboxError> {
    let p = Path::new(rel);
    if rel.is_empty() || p.components().any(|c| !matches!(c, Component::Normal(_))) {
        return Err(SandboxError::PathEscape(rel.to_string()));
    }
    Ok(p.to_path_buf())
}

/// A temporary working copy of a repository.
///
/// Layout under one temp directory: `work/` (the root commands run in),
/// `pristine/` (the untouched copy) and `scratch/` (HOME and TMPDIR).
pub struct Workspace {
    root: PathBuf,
    pristine: PathBuf,
    scratch: PathBuf,
    pristine_ref: String,
    manifest: BTreeMap<String, String>,
    pristine_dirs: BTreeSet<String>,
    _holder: tempfile::TempDir,
}

impl std::fmt::Debug for Workspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workspace")
            .field("root", &self.root)
            .field("pristine_ref", &self.pristine_ref)
            .finish()
    }
}

fn manifest_digest(manifest: &BTreeMap<String, String>) -> String {
    let mut buf = Vec::new();
    for (p, h) in manifest {
        buf.extend_from_slice(p.as_bytes());
        buf.push(0);
        buf.extend_from_slice(h.as_bytes());
        buf.push(b'\n');
    }
    sha256_hex(&buf)
}

impl Workspace {
    /// Copies `source` into a fresh temporary workspace and snapshots it.
    pub fn create(source: &Path) -> Result<Self, SandboxError> {
        if !source.is_dir() {
            return Err(SandboxError::Io {
                path: source.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
            });
        }
        let holder = tempfile::Builder::new()
            .prefix("bugsmith-ws-")
            .tempdir()
            .map_err(io_err(&std::env::temp_dir()))?;
        let base = holder.path().canonicalize().map_err(io_err(holder.path()))?;
        let root = base.join("work");
        let pristine = base.join("pristine");
        let scratch = base.join("scratch");
        copy_tree(source, &root)?;
        copy_tree(source, &pristine)?;
        fs::create_dir_all(&scratch).map_err(io_err(&scratch))?;
        fs::create_dir_all(root.join(RESERVED_DIR)).map_err(io_err(&root))?;
        let (manifest, pristine_dirs) = scan(&pristine)?;
        Ok(Workspace {
            pristine_ref: manifest_digest(&manifest),
            root,
            pristine,
            scratch,
            manifest,
            pristine_dirs,
            _holder: holder,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn scratch(&self) -> &Path {
        &self.scratch
    }

    /// Digest of the pristine snapshot's manifest.
    pub fn pristine_ref(&self) -> &str {
        &self.pristine_ref
    }

    /// Digest of the current working tree under the same rules as the snapshot.
    pub fn current_ref(&self) -> Result<String, SandboxError> {
        Ok(manifest_digest(&scan(&self.root)?.0))
    }

    pub fn is_pristine(&self) -> Result<bool, SandboxError> {
        Ok(self.current_ref()? == self.pristine_ref)
    }

    pub fn read_file(&self, rel: &str) -> Result<Option<String>, SandboxError> {
        let path = self.root.join(checked_relative(rel)?);
        match crate::index::read_text(&path) {
            Ok(t) => Ok(t),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(SandboxError::Io { path, source: e }),
        }
    }

    pub fn write_file(&self, rel: &str, content: &str) -> Result<(), SandboxError> {
        let path = self.root.join(checked_relative(rel)?);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&path, content).map_err(io_err(&path))
    }

    /// Restores the working tree to byte equality with the snapshot.
    /// Ignored paths, including the reserved directory, are left alone.
    pub fn reset(&self) -> Result<(), SandboxError> {
        if !self.pristine.is_dir() {
            return Err(SandboxError::SnapshotMissing(self.pristine.clone()));
        }
        let (current, dirs) = scan(&self.root)?;
        for (rel, digest) in &current {
            if self.manifest.get(rel) != Some(digest) {
                let p = self.root.join(rel);
                fs::remove_file(&p).map_err(io_err(&p))?;
            }
        }
        // Deepest first so parents empty out before they are considered.
        for rel in dirs.iter().rev() {
            if !self.pristine_dirs.contains(rel) {
                let p = self.root.join(rel);
                if fs::symlink_metadata(&p).is_ok() {
                    fs::remove_dir_all(&p).map_err(io_err(&p))?;
                }
            }
        }
        for rel in &self.pristine_dirs {
            let p = self.root.join(rel);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        for (rel, digest) in &self.manifest {
            if current.get(rel) != Some(digest) {
                let from = self.pristine.join(rel);
                if !from.exists() && fs::symlink_metadata(&from).is_err() {
                    return Err(SandboxError::SnapshotMissing(from));
                }
                copy_entry(&from, &self.root.join(rel))?;
            }
        }
        Ok(())
    }

    /// Unified diff of the working tree against the snapshot. Binary or
    /// non-UTF-8 files are reported in `skipped`.
    pub fn capture_solution_diff(&self) -> Result<SolutionDiff, SandboxError> {
        let (current, _) = scan(&self.root)?;
        let paths: BTreeSet<&String> = current.keys().chain(self.manifest.keys()).collect();
        let mut files = Vec::new();
        let mut skipped = Vec::new();
        for rel in paths {
            if current.get(rel) == self.manifest.get(rel) {
                continue;
            }
            let read = |base: &Path| -> Result<Option<Option<String>>, SandboxError> {
                let p = base.join(rel);
                if fs::symlink_metadata(&p).is_err() {
                    return Ok(None);
                }
                crate::index::read_text(&p).map(Some).map_err(io_err(&p))
            };
            let (old, new) = (read(&self.pristine)?, read(&self.root)?);
            let (Some(old_text), Some(new_text)) = (
                old.as_ref().map_or(Some(""), |o| o.as_deref()),
                new.as_ref().map_or(Some(""), |n| n.as_deref()),
            ) else {
                skipped.push(rel.clone());
                continue;
            };
            let old_path = if old.is_some() { rel.as_str() } else { DEV_NULL };
            let new_path = if new.is_some() { rel.as_str() } else { DEV_NULL };
            let diff = diff_with_paths(old_text, new_text, old_path, new_path, DEFAULT_CONTEXT);
            if !diff.is_empty() {
                files.push(diff);
            }
        }
        Ok(SolutionDiff {
            patch: PatchSet { files },
            skipped,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolutionDiff {
    pub patch: PatchSet,
    pub skipped: Vec<String>,
}

impl SolutionDiff {
    pub fn is_empty(&self) -> bool {
        self.patch.is_empty() && self.skipped.is_empty()
    }
}
