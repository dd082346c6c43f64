//! Grammar-backed language support shared by the graph builder, the in-process
//! navigation backend and structural normalization for candidate voting.

mod go;
mod python;

use crate::ckg::EntityKind;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use tree_sitter::{Node, Parser, Tree};

pub use go::GoSupport;
pub use python::PythonSupport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LanguageTag {
    Go,
    Python,
}

impl LanguageTag {
    pub const SHIPPED: [LanguageTag; 2] = [LanguageTag::Go, LanguageTag::Python];
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LanguageTag::Go => f.write_str("go"),
            LanguageTag::Python => f.write_str("python"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unsupported language tag `{0}`")]
pub struct UnknownLanguage(pub String);

impl FromStr for LanguageTag {
    type Err = UnknownLanguage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "go" | "golang" => Ok(LanguageTag::Go),
            "python" | "py" => Ok(LanguageTag::Python),
            _ => Err(UnknownLanguage(s.to_string())),
        }
    }
}

/// A declaration found by an extractor. `parent` indexes into the same
/// [`FileSyntax::decls`] vector; `None` means top-level in the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Declaration {
    pub kind: EntityKind,
    pub name: String,
    pub start_line: usize,
    pub end_line: usize,
    pub name_line: usize,
    pub name_column: usize,
    pub signature: Option<String>,
    pub doc: Option<String>,
    pub parent: Option<usize>,
    pub(crate) start_byte: usize,
    pub(crate) end_byte: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallSite {
    pub callee: String,
    /// Receiver or package text for `a.b()` style calls.
    pub qualifier: Option<String>,
    pub line: usize,
    pub column: usize,
    pub enclosing: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportRef {
    pub module: String,
    pub alias: Option<String>,
    pub names: Vec<String>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseRef {
    pub decl: usize,
    pub base: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameUse {
    pub name: String,
    pub line: usize,
    pub column: usize,
    pub enclosing: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FileSyntax {
    pub decls: Vec<Declaration>,
    pub calls: Vec<CallSite>,
    pub imports: Vec<ImportRef>,
    pub bases: Vec<BaseRef>,
    pub uses: Vec<NameUse>,
    pub line_count: usize,
    pub has_syntax_errors: bool,
}

/// Identifier token occurrence (1-based line and character column).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Occurrence {
    pub name: String,
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FindingLevel {
    Error,
    Warning,
}

/// A static finding produced directly from the parse tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxFinding {
    pub line: usize,
    pub column: usize,
    pub level: FindingLevel,
    pub code: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SyntaxError {
    #[error("parser produced no tree")]
    NoTree,
}

/// Per-language extractor surface.
pub trait LanguageSupport: Send + Sync {
    fn tag(&self) -> LanguageTag;
    fn extensions(&self) -> &'static [&'static str];
    fn grammar(&self) -> tree_sitter::Language;
    fn extract(&self, source: &str) -> Result<FileSyntax, SyntaxError>;
    /// Node kinds that carry navigable identifier text.
    fn identifier_kinds(&self) -> &'static [&'static str];

    /// Language-specific semantic findings beyond syntax errors.
    fn semantic_findings(&self, _tree: &Tree, _source: &str) -> Vec<SyntaxFinding> {
        Vec::new()
    }

    fn parse(&self, source: &str) -> Option<Tree> {
        let mut parser = Parser::new();
        parser.set_language(&self.grammar()).ok()?;
        parser.parse(source, None)
    }

    fn identifier_occurrences(&self, source: &str) -> Vec<Occurrence> {
        let Some(tree) = self.parse(source) else {
            return Vec::new();
        };
        let lines = LineIndex::new(source);
        let kinds = self.identifier_kinds();
        let mut out = Vec::new();
        walk(tree.root_node(), &mut |node| {
            if kinds.contains(&node.kind()) {
                let (line, column) = lines.position(node.start_byte());
                out.push(Occurrence {
                    name: text(node, source).to_string(),
                    line,
                    column,
                });
            }
            true
        });
        out.sort();
        out
    }

    /// Syntax errors (error and missing nodes) followed by semantic findings.
    fn findings(&self, source: &str) -> Vec<SyntaxFinding> {
        let Some(tree) = self.parse(source) else {
            return vec![SyntaxFinding {
                line: 1,
                column: 1,
                level: FindingLevel::Error,
                code: "parse-failure",
                message: "file could not be parsed".into(),
            }];
        };
        let mut out = syntax_findings(&tree, source);
        out.extend(self.semantic_findings(&tree, source));
        out.sort_by(|a, b| (a.line, a.column, a.code).cmp(&(b.line, b.column, b.code)));
        out
    }

    /// Whitespace- and comment-insensitive rendering of the parse tree.
    fn structural_key(&self, source: &str) -> Option<String> {
        let tree = self.parse(source)?;
        let mut out = String::new();
        normalized_sexp(tree.root_node(), source, &mut out);
        Some(out)
    }
}

static GO: GoSupport = GoSupport;
static PYTHON: PythonSupport = PythonSupport;

pub fn support(tag: LanguageTag) -> &'static dyn LanguageSupport {
    match tag {
        LanguageTag::Go => &GO,
        LanguageTag::Python => &PYTHON,
    }
}

/// Picks the shipped extractor for a path by extension.
pub fn support_for_path(path: &str) -> Option<&'static dyn LanguageSupport> {
    let ext = path.rsplit_once('.').map(|(_, e)| e)?;
    LanguageTag::SHIPPED
        .into_iter()
        .map(support)
        .find(|s| s.extensions().contains(&ext))
}

/// Byte offset to (1-based line, 1-based character column) conversion.
pub(crate) struct LineIndex<'a> {
    source: &'a str,
    starts: Vec<usize>,
}

impl<'a> LineIndex<'a> {
    pub fn new(source: &'a str) -> Self {
        let mut starts = vec![0];
        starts.extend(source.match_indices('\n').map(|(i, _)| i + 1));
        LineIndex { source, starts }
    }

    pub fn position(&self, byte: usize) -> (usize, usize) {
        let line = match self.starts.binary_search(&byte) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let start = self.starts[line];
        let column = self.source[start..byte.min(self.source.len())].chars().count() + 1;
        (line + 1, column)
    }

    pub fn line_of(&self, byte: usize) -> usize {
        self.position(byte).0
    }

    /// Number of lines, counting a final unterminated line.
    pub fn line_count(&self) -> usize {
        if self.source.is_empty() {
            0
        } else if self.source.ends_with('\n') {
            self.starts.len() - 1
        } else {
            self.starts.len()
        }
    }
}

pub(crate) fn text<'s>(node: Node<'_>, source: &'s str) -> &'s str {
    &source[node.start_byte()..node.end_byte()]
}

/// Pre-order traversal; the visitor returns whether to descend.
pub(crate) fn walk<'t>(node: Node<'t>, visit: &mut dyn FnMut(Node<'t>) -> bool) {
    if !visit(node) {
        return;
    }
    let mut cursor = node.walk();
    let children: Vec<Node<'t>> = node.children(&mut cursor).collect();
    for child in children {
        walk(child, visit);
    }
}

pub(crate) fn named_children<'t>(node: Node<'t>) -> Vec<Node<'t>> {
    let mut cursor = node.walk();
    node.named_children(&mut cursor).collect()
}

/// Last line of a node, not counting a trailing newline the node swallowed.
pub(crate) fn end_line(node: Node<'_>, lines: &LineIndex<'_>, source: &str) -> usize {
    let mut end = node.end_byte();
    let bytes = source.as_bytes();
    while end > node.start_byte() && matches!(bytes[end - 1], b'\n' | b'\r') {
        end -= 1;
    }
    lines.line_of(end.saturating_sub(1).max(node.start_byte()))
}

fn syntax_findings(tree: &Tree, source: &str) -> Vec<SyntaxFinding> {
    let lines = LineIndex::new(source);
    let mut out = Vec::new();
    walk(tree.root_node(), &mut |node| {
        if node.is_missing() {
            let (line, column) = lines.position(node.start_byte());
            out.push(SyntaxFinding {
                line,
                column,
                level: FindingLevel::Error,
                code: "missing-token",
                message: format!("missing `{}`", node.kind()),
            });
            return false;
        }
        if node.is_error() {
            let (line, column) = lines.position(node.start_byte());
            let snippet: String = text(node, source)
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ")
                .chars()
                .take(40)
                .collect();
            out.push(SyntaxFinding {
                line,
                column,
                level: FindingLevel::Error,
                code: "syntax-error",
                message: format!("syntax error near `{snippet}`"),
            });
            return false;
        }
        node.has_error()
    });
    out
}

fn normalized_sexp(node: Node<'_>, source: &str, out: &mut String) {
    if node.kind() == "comment" {
        return;
    }
    let mut cursor = node.walk();
    let children: Vec<Node<'_>> = node
        .children(&mut cursor)
        .filter(|c| c.kind() != "comment")
        .collect();
    if children.is_empty() {
        out.push('(');
        out.push_str(node.kind());
        out.push(' ');
        out.push_str(&text(node, source).split_whitespace().collect::<Vec<_>>().join(" "));
        out.push(')');
        return;
    }
    out.push('(');
    out.push_str(node.kind());
    for child in children {
        out.push(' ');
        normalized_sexp(child, source, out);
    }
    out.push(')');
}

/// Contiguous line comments directly above `node`, with markers stripped.
pub(crate) fn leading_comments(node: Node<'_>, source: &str, marker: &str) -> Option<String> {
    let mut lines_rev = Vec::new();
    let mut expected_row = node.start_position().row;
    let mut prev = node.prev_sibling();
    while let Some(p) = prev {
        if p.kind() != "comment" || p.end_position().row + 1 != expected_row {
            break;
        }
        let body = text(p, source).trim_start_matches(marker).trim();
        lines_rev.push(body.to_string());
        expected_row = p.start_position().row;
        prev = p.prev_sibling();
    }
    if lines_rev.is_empty() {
        return None;
    }
    lines_rev.reverse();
    Some(lines_rev.join("\n"))
}

/// Index of the innermost declaration whose byte range contains `byte`.
pub(crate) fn innermost(decls: &[Declaration], byte: usize) -> Option<usize> {
    decls
        .iter()
        .enumerate()
        .filter(|(_, d)| d.start_byte <= byte && byte < d.end_byte)
        .min_by_key(|(_, d)| d.end_byte - d.start_byte)
        .map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn language_tags_parse_case_insensitively() {
        assert_eq!("Go".parse::<LanguageTag>().unwrap(), LanguageTag::Go);
        assert_eq!("py".parse::<LanguageTag>().unwrap(), LanguageTag::Python);
        assert!("cobol".parse::<LanguageTag>().is_err());
    }

    #[test]
    fn line_index_counts_characters_not_bytes() {
        let src = "ab\n\u{e9}x = 1\n";
        let idx = LineIndex::new(src);
        let x = src.find('x').unwrap();
        assert_eq!(idx.position(x), (2, 2));
        assert_eq!(idx.line_count(), 2);
        assert_eq!(LineIndex::new("a\nb").line_count(), 2);
        assert_eq!(LineIndex::new("").line_count(), 0);
    }

    #[test]
    fn structural_key_ignores_comments_and_spacing() {
        let py = support(LanguageTag::Python);
        let a = py.structural_key("def f(x):\n    return x + 1  # add\n").unwrap();
        let b = py.structural_key("def f( x ):\n    # note\n    return x+1\n").unwrap();
        let c = py.structural_key("def f(x):\n    return x + 2\n").unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn unclosed_bracket_is_an_error_finding() {
        let py = support(LanguageTag::Python);
        let findings = py.findings("def f(x):\n    return g(x, 1\n\nprint(f(2))\n");
        assert!(findings.iter().any(|f| f.level == FindingLevel::Error));
        let go = support(LanguageTag::Go);
        let findings = go.findings("package main\n\nfunc main() {\n\tx := f(1\n}\n");
        assert!(findings.iter().any(|f| f.level == FindingLevel::Error));
    }

    #[test]
    fn path_dispatch_uses_extension() {
        assert_eq!(support_for_path("a/b.go").unwrap().tag(), LanguageTag::Go);
        assert_eq!(support_for_path("x.py").unwrap().tag(), LanguageTag::Python);
        assert!(support_for_path("README").is_none());
        assert!(support_for_path("main.rs").is_none());
    }
}
