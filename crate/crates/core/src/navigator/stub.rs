//! In-process backend over the code knowledge graph and parse-tree findings.

use super::position::{is_keyword, token_at};
use super::{Diagnostic, NavError, NavLocation, NavigationBackend, ResolvedPosition, Severity};
use crate::ckg::{build_graph, EntityKind, KnowledgeGraph};
use crate::index::{read_text, walk_files, DEFAULT_EXCLUSIONS};
use crate::lang::{support_for_path, FindingLevel, LanguageTag};
use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

pub struct StubBackend {
    root: Option<PathBuf>,
    languages: Vec<LanguageTag>,
    graph: KnowledgeGraph,
    files: BTreeMap<String, String>,
}

impl StubBackend {
    /// Indexes `root` and keeps the source files of the given languages in memory.
    pub fn open(root: impl Into<PathBuf>, languages: &[LanguageTag]) -> Result<Self, NavError> {
        let root = root.into();
        let mut backend = StubBackend {
            root: Some(root),
            languages: languages.to_vec(),
            graph: KnowledgeGraph::default(),
            files: BTreeMap::new(),
        };
        backend.reload()?;
        Ok(backend)
    }

    /// A backend over an already built graph and the files it was built from.
    pub fn from_parts(graph: KnowledgeGraph, files: BTreeMap<String, String>) -> Self {
        StubBackend {
            root: None,
            languages: LanguageTag::SHIPPED.to_vec(),
            graph,
            files,
        }
    }

    pub fn graph(&self) -> &KnowledgeGraph {
        &self.graph
    }

    fn reload(&mut self) -> Result<(), NavError> {
        let Some(root) = &self.root else {
            return Ok(());
        };
        let unavailable = |e: &dyn std::fmt::Display| NavError::BackendUnavailable(e.to_string());
        let exclusions: Vec<String> = DEFAULT_EXCLUSIONS.iter().map(|s| s.to_string()).collect();
        let mut files = BTreeMap::new();
        for rel in walk_files(root, &exclusions).map_err(|e| unavailable(&e))? {
            if support_for_path(&rel).is_some_and(|s| self.languages.contains(&s.tag())) {
                if let Ok(Some(text)) = read_text(&root.join(&rel)) {
                    files.insert(rel, text);
                }
            }
        }
        self.graph = match build_graph(root, &self.languages) {
            Ok(out) => out.graph,
            Err(crate::ckg::CkgError::NoExtractorAvailable { .. }) => KnowledgeGraph::default(),
            Err(e) => return Err(unavailable(&e)),
        };
        self.files = files;
        Ok(())
    }

    fn identifier_at(&self, pos: &ResolvedPosition) -> Result<Option<String>, NavError> {
        let out_of_range = || NavError::PositionOutOfRange {
            path: pos.path.clone(),
            line: pos.line,
            column: pos.column,
        };
        let text = self.files.get(&pos.path).ok_or_else(out_of_range)?;
        let line = pos
            .line
            .checked_sub(1)
            .and_then(|i| text.lines().nth(i))
            .ok_or_else(out_of_range)?;
        if pos.column == 0 || pos.column > line.chars().count() {
            return Err(out_of_range());
        }
        Ok(token_at(&pos.path, line, pos.column)
            .map(|t| t.text)
            .filter(|t| !is_keyword(t)))
    }

    fn declaration_sites(&self, name: &str) -> BTreeSet<NavLocation> {
        self.graph
            .by_name(name)
            .iter()
            .filter_map(|&id| self.graph.entity(id))
            .filter(|e| e.kind != EntityKind::File)
            .map(|e| NavLocation {
                path: e.location.path.clone(),
                line: e.name_position.line,
                column: e.name_position.column,
            })
            .collect()
    }
}

impl NavigationBackend for StubBackend {
    fn name(&self) -> &str {
        "stub"
    }

    fn definition(&mut self, pos: &ResolvedPosition) -> Result<Vec<NavLocation>, NavError> {
        Ok(match self.identifier_at(pos)? {
            Some(name) => self.declaration_sites(&name).into_iter().collect(),
            None => Vec::new(),
        })
    }

    fn references(&mut self, pos: &ResolvedPosition) -> Result<Vec<NavLocation>, NavError> {
        let Some(name) = self.identifier_at(pos)? else {
            return Ok(Vec::new());
        };
        let decls = self.declaration_sites(&name);
        let mut out = Vec::new();
        for (path, text) in &self.files {
            let Some(lang) = support_for_path(path) else {
                continue;
            };
            for occ in lang.identifier_occurrences(text) {
                if occ.name != name {
                    continue;
                }
                let loc = NavLocation {
                    path: path.clone(),
                    line: occ.line,
                    column: occ.column,
                };
                if !decls.contains(&loc) {
                    out.push(loc);
                }
            }
        }
        Ok(out)
    }

    fn diagnostics(&mut self, path: &str, content: &str) -> Result<Vec<Diagnostic>, NavError> {
        let lang = support_for_path(path)
            .filter(|s| self.languages.contains(&s.tag()))
            .ok_or_else(|| NavError::UnsupportedLanguage(path.to_string()))?;
        Ok(lang
            .findings(content)
            .into_iter()
            .map(|f| Diagnostic {
                path: path.to_string(),
                line: f.line,
                severity: match f.level {
                    FindingLevel::Error => Severity::Error,
                    FindingLevel::Warning => Severity::Warning,
                },
                code: Some(f.code.to_string()),
                message: f.message,
            })
            .collect())
    }

    fn file_changed(&mut self, path: &str, content: Option<&str>) -> Result<(), NavError> {
        if self.root.is_some() {
            return self.reload();
        }
        match content {
            Some(c) => self.files.insert(path.to_string(), c.to_string()),
            None => self.files.remove(path),
        };
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::navigator::{NavKind, Navigator, Tier};
    use std::fs;

    const PY: &str = "LIMIT = 3\n\n\ndef grow(x):\n    return x + LIMIT\n\n\nprint(grow(2), \"grow\", 42)\n";

    fn repo() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("m.py"), PY).unwrap();
        dir
    }

    fn at(path: &str, line: usize, column: usize) -> ResolvedPosition {
        ResolvedPosition {
            path: path.into(),
            line,
            column,
            identifier: String::new(),
            tier: Tier::ExactLine,
        }
    }

    #[test]
    fn definition_and_references_of_a_function() {
        let dir = repo();
        let nav = Navigator::new(Box::new(StubBackend::open(dir.path(), &[LanguageTag::Python]).unwrap()));
        let defs = nav.navigate(NavKind::Definition, &at("m.py", 8, 7)).unwrap();
        assert_eq!(defs, vec![NavLocation { path: "m.py".into(), line: 4, column: 5 }]);
        let refs = nav.navigate(NavKind::References, &at("m.py", 4, 5)).unwrap();
        assert_eq!(refs, vec![NavLocation { path: "m.py".into(), line: 8, column: 7 }]);
    }

    #[test]
    fn literals_have_no_definition() {
        let dir = repo();
        let nav = Navigator::new(Box::new(StubBackend::open(dir.path(), &[LanguageTag::Python]).unwrap()));
        assert!(nav.navigate(NavKind::Definition, &at("m.py", 8, 24)).unwrap().is_empty());
        assert!(nav.navigate(NavKind::Definition, &at("m.py", 8, 17)).unwrap().is_empty());
        assert!(matches!(
            nav.navigate(NavKind::Definition, &at("m.py", 99, 1)),
            Err(NavError::PositionOutOfRange { .. })
        ));
    }

    #[test]
    fn diagnostics_use_supplied_content() {
        let dir = repo();
        let mut b = StubBackend::open(dir.path(), &[LanguageTag::Python]).unwrap();
        assert!(b.diagnostics("m.py", PY).unwrap().iter().all(|d| !d.severity.is_blocking()));
        let broken = b.diagnostics("m.py", "def f(:\n    return (1\n").unwrap();
        assert!(broken.iter().any(|d| d.severity >= Severity::Error));
        assert!(matches!(b.diagnostics("notes.txt", "x"), Err(NavError::UnsupportedLanguage(_))));
        // Nothing was written.
        assert_eq!(fs::read_to_string(dir.path().join("m.py")).unwrap(), PY);
    }

    #[test]
    fn changes_are_picked_up() {
        let dir = repo();
        let mut b = StubBackend::open(dir.path(), &[LanguageTag::Python]).unwrap();
        let renamed = PY.replace("grow", "expand");
        fs::write(dir.path().join("m.py"), &renamed).unwrap();
        b.file_changed("m.py", Some(&renamed)).unwrap();
        assert!(b.graph().find("expand", EntityKind::Function).is_some());
    }
}
