use super::{
    end_line, innermost, named_children, text, walk, BaseRef, CallSite, Declaration, FileSyntax,
    FindingLevel, ImportRef, LanguageSupport, LanguageTag, LineIndex, NameUse, SyntaxError,
    SyntaxFinding,
};
use crate::ckg::EntityKind;
use std::collections::HashSet;
use tree_sitter::{Node, Tree};

/// Indentation-structured extractor.
#[derive(Debug, Default, Clone, Copy)]
pub struct PythonSupport;

const BUILTINS: &[&str] = &[
    "abs", "aiter", "all", "anext", "any", "ascii", "bin", "bool", "breakpoint", "bytearray",
    "bytes", "callable", "chr", "classmethod", "compile", "complex", "copyright", "credits",
    "delattr", "dict", "dir", "divmod", "enumerate", "eval", "exec", "exit", "filter", "float",
    "format", "frozenset", "getattr", "globals", "hasattr", "hash", "help", "hex", "id", "input",
    "int", "isinstance", "issubclass", "iter", "len", "license", "list", "locals", "map", "max",
    "memoryview", "min", "next", "object", "oct", "open", "ord", "pow", "print", "property",
    "quit", "range", "repr", "reversed", "round", "set", "setattr", "slice", "sorted",
    "staticmethod", "str", "sum", "super", "tuple", "type", "vars", "zip", "__import__",
    "__name__", "__file__", "__doc__", "__package__", "__spec__", "__loader__", "__builtins__",
    "__debug__", "__class__", "__dict__", "__all__", "NotImplemented", "Ellipsis", "self", "cls",
    "BaseException", "BaseExceptionGroup", "Exception", "ExceptionGroup", "ArithmeticError",
    "AssertionError", "AttributeError", "BlockingIOError", "BrokenPipeError", "BufferError",
    "ChildProcessError", "ConnectionAbortedError", "ConnectionError", "ConnectionRefusedError",
    "ConnectionResetError", "EOFError", "EnvironmentError", "FileExistsError",
    "FileNotFoundError", "FloatingPointError", "GeneratorExit", "IOError", "ImportError",
    "IndentationError", "IndexError", "InterruptedError", "IsADirectoryError", "KeyError",
    "KeyboardInterrupt", "LookupError", "MemoryError", "ModuleNotFoundError", "NameError",
    "NotADirectoryError", "NotImplementedError", "OSError", "OverflowError", "PermissionError",
    "ProcessLookupError", "RecursionError", "ReferenceError", "RuntimeError", "StopAsyncIteration",
    "StopIteration", "SyntaxError", "SystemError", "SystemExit", "TabError", "TimeoutError",
    "TypeError", "UnboundLocalError", "UnicodeDecodeError", "UnicodeEncodeError", "UnicodeError",
    "UnicodeTranslateError", "ValueError", "ZeroDivisionError", "Warning", "UserWarning",
    "DeprecationWarning", "PendingDeprecationWarning", "RuntimeWarning", "SyntaxWarning",
    "FutureWarning", "ImportWarning", "UnicodeWarning", "BytesWarning", "ResourceWarning",
    "EncodingWarning",
];

impl LanguageSupport for PythonSupport {
    fn tag(&self) -> LanguageTag {
        LanguageTag::Python
    }

    fn extensions(&self) -> &'static [&'static str] {
        &["py", "pyi"]
    }

    fn grammar(&self) -> tree_sitter::Language {
        tree_sitter_python::LANGUAGE.into()
    }

    fn identifier_kinds(&self) -> &'static [&'static str] {
        &["identifier"]
    }

    fn extract(&self, source: &str) -> Result<FileSyntax, SyntaxError> {
        let tree = self.parse(source).ok_or(SyntaxError::NoTree)?;
        let root = tree.root_node();
        let lines = LineIndex::new(source);
        let mut out = FileSyntax {
            line_count: lines.line_count(),
            has_syntax_errors: root.has_error(),
            ..FileSyntax::default()
        };
        let mut name_bytes = HashSet::new();
        let mut cx = Extract {
            source,
            lines: &lines,
            out: &mut out,
            name_bytes: &mut name_bytes,
        };
        cx.block(root, None, Scope::Module);

        let mut call_targets = HashSet::new();
        walk(root, &mut |n| {
            match n.kind() {
                "import_statement" | "import_from_statement" => {
                    import(n, source, &lines, &mut out.imports);
                    return false;
                }
                "call" => {
                    if let Some(f) = n.child_by_field_name("function") {
                        let (target, qualifier) = match f.kind() {
                            "identifier" => (Some(f), None),
                            "attribute" => (
                                f.child_by_field_name("attribute"),
                                f.child_by_field_name("object")
                                    .map(|o| text(o, source).to_string()),
                            ),
                            _ => (None, None),
                        };
                        if let Some(target) = target {
                            call_targets.insert(target.start_byte());
                            let (line, column) = lines.position(target.start_byte());
                            out.calls.push(CallSite {
                                callee: text(target, source).to_string(),
                                qualifier,
                                line,
                                column,
                                enclosing: innermost(&out.decls, n.start_byte()),
                            });
                        }
                    }
                }
                _ => {}
            }
            true
        });

        walk(root, &mut |n| {
            if matches!(n.kind(), "comment" | "import_statement" | "import_from_statement") {
                return false;
            }
            if n.kind() == "attribute" {
                // Only the object side of `a.b` is a name use.
                if let Some(obj) = n.child_by_field_name("object") {
                    visit_uses(obj, source, &lines, &name_bytes, &call_targets, &mut out);
                }
                return false;
            }
            if n.kind() == "identifier" {
                push_use(n, source, &lines, &name_bytes, &call_targets, &mut out);
            }
            true
        });
        Ok(out)
    }

    fn semantic_findings(&self, tree: &Tree, source: &str) -> Vec<SyntaxFinding> {
        undefined_names(tree, source)
    }
}

fn visit_uses(
    node: Node<'_>,
    source: &str,
    lines: &LineIndex<'_>,
    name_bytes: &HashSet<usize>,
    call_targets: &HashSet<usize>,
    out: &mut FileSyntax,
) {
    walk(node, &mut |n| {
        if n.kind() == "attribute" {
            if let Some(obj) = n.child_by_field_name("object") {
                visit_uses(obj, source, lines, name_bytes, call_targets, out);
            }
            return false;
        }
        if n.kind() == "identifier" {
            push_use(n, source, lines, name_bytes, call_targets, out);
        }
        true
    });
}

fn push_use(
    n: Node<'_>,
    source: &str,
    lines: &LineIndex<'_>,
    name_bytes: &HashSet<usize>,
    call_targets: &HashSet<usize>,
    out: &mut FileSyntax,
) {
    if name_bytes.contains(&n.start_byte()) || call_targets.contains(&n.start_byte()) {
        return;
    }
    let (line, column) = lines.position(n.start_byte());
    out.uses.push(NameUse {
        name: text(n, source).to_string(),
        line,
        column,
        enclosing: innermost(&out.decls, n.start_byte()),
    });
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Scope {
    Module,
    Class,
    Function,
}

struct Extract<'a, 's> {
    source: &'s str,
    lines: &'a LineIndex<'s>,
    out: &'a mut FileSyntax,
    name_bytes: &'a mut HashSet<usize>,
}

impl Extract<'_, '_> {
    fn block(&mut self, block: Node<'_>, parent: Option<usize>, scope: Scope) {
        for stmt in named_children(block) {
            self.statement(stmt, stmt, parent, scope);
        }
    }

    /// `span` differs from `stmt` for decorated definitions.
    fn statement(&mut self, stmt: Node<'_>, span: Node<'_>, parent: Option<usize>, scope: Scope) {
        match stmt.kind() {
            "decorated_definition" => {
                if let Some(def) = stmt.child_by_field_name("definition") {
                    self.statement(def, stmt, parent, scope);
                }
            }
            "function_definition" => {
                let kind = if scope == Scope::Class {
                    EntityKind::Method
                } else {
                    EntityKind::Function
                };
                let body = stmt.child_by_field_name("body");
                let idx = self.push(kind, stmt, span, parent, body);
                if let (Some(idx), Some(body)) = (idx, body) {
                    self.block(body, Some(idx), Scope::Function);
                }
            }
            "class_definition" => {
                let body = stmt.child_by_field_name("body");
                let idx = self.push(EntityKind::Class, stmt, span, parent, body);
                if let Some(idx) = idx {
                    if let Some(bases) = stmt.child_by_field_name("superclasses") {
                        for base in named_children(bases) {
                            let name = match base.kind() {
                                "identifier" => Some(text(base, self.source)),
                                "attribute" => base
                                    .child_by_field_name("attribute")
                                    .map(|a| text(a, self.source)),
                                _ => None,
                            };
                            if let Some(name) = name {
                                self.out.bases.push(BaseRef {
                                    decl: idx,
                                    base: name.to_string(),
                                    line: self.lines.line_of(base.start_byte()),
                                });
                            }
                        }
                    }
                    if let Some(body) = body {
                        self.block(body, Some(idx), Scope::Class);
                    }
                }
            }
            "expression_statement" if scope != Scope::Function => {
                for child in named_children(stmt) {
                    if child.kind() == "assignment" {
                        self.assignment(child, parent);
                    }
                }
            }
            // Declarations nested in control flow still belong to the scope.
            "if_statement" | "try_statement" | "with_statement" | "for_statement"
            | "while_statement" | "else_clause" | "elif_clause" | "except_clause"
            | "finally_clause" | "block" => {
                for child in named_children(stmt) {
                    if matches!(
                        child.kind(),
                        "block" | "else_clause" | "elif_clause" | "except_clause"
                            | "finally_clause"
                    ) {
                        if child.kind() == "block" {
                            self.block(child, parent, scope);
                        } else {
                            self.statement(child, child, parent, scope);
                        }
                    }
                }
            }
            _ => {}
        }
    }

    fn assignment(&mut self, node: Node<'_>, parent: Option<usize>) {
        let Some(left) = node.child_by_field_name("left") else {
            return;
        };
        let mut targets = Vec::new();
        walk(left, &mut |n| {
            if n.kind() == "identifier" {
                targets.push(n);
            }
            // Skip `a.b = ...` and `a[i] = ...`.
            !matches!(n.kind(), "attribute" | "subscript")
        });
        if let Some(right) = node.child_by_field_name("right") {
            if right.kind() == "assignment" {
                self.assignment(right, parent);
            }
        }
        for name in targets {
            self.name_bytes.insert(name.start_byte());
            let (name_line, name_column) = self.lines.position(name.start_byte());
            self.out.decls.push(Declaration {
                kind: EntityKind::Variable,
                name: text(name, self.source).to_string(),
                start_line: self.lines.line_of(node.start_byte()),
                end_line: end_line(node, self.lines, self.source),
                name_line,
                name_column,
                signature: None,
                doc: None,
                parent,
                start_byte: node.start_byte(),
                end_byte: node.end_byte(),
            });
        }
    }

    fn push(
        &mut self,
        kind: EntityKind,
        def: Node<'_>,
        span: Node<'_>,
        parent: Option<usize>,
        body: Option<Node<'_>>,
    ) -> Option<usize> {
        let name = def.child_by_field_name("name")?;
        self.name_bytes.insert(name.start_byte());
        let (name_line, name_column) = self.lines.position(name.start_byte());
        let sig_end = body.map(|b| b.start_byte()).unwrap_or(def.end_byte());
        let signature = self.source[def.start_byte()..sig_end]
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        let signature = signature.trim_end_matches(':').trim_end().to_string();
        let idx = self.out.decls.len();
        self.out.decls.push(Declaration {
            kind,
            name: text(name, self.source).to_string(),
            start_line: self.lines.line_of(span.start_byte()),
            end_line: end_line(span, self.lines, self.source),
            name_line,
            name_column,
            signature: (!signature.is_empty()).then_some(signature),
            doc: body.and_then(|b| docstring(b, self.source)),
            parent,
            start_byte: span.start_byte(),
            end_byte: span.end_byte(),
        });
        Some(idx)
    }
}

fn docstring(body: Node<'_>, source: &str) -> Option<String> {
    let first = named_children(body).into_iter().next()?;
    if first.kind() != "expression_statement" {
        return None;
    }
    let s = named_children(first).into_iter().next()?;
    if s.kind() != "string" {
        return None;
    }
    let raw = text(s, source);
    let stripped = raw
        .trim_start_matches(|c: char| "rRbBuUfF".contains(c))
        .trim_matches('"')
        .trim_matches('\'')
        .trim();
    Some(stripped.to_string())
}

fn import(node: Node<'_>, source: &str, lines: &LineIndex<'_>, out: &mut Vec<ImportRef>) {
    let line = lines.line_of(node.start_byte());
    let mut cursor = node.walk();
    let names: Vec<Node> = node.children_by_field_name("name", &mut cursor).collect();
    if node.kind() == "import_statement" {
        for n in names {
            let (module, alias) = match n.kind() {
                "aliased_import" => (
                    n.child_by_field_name("name").map(|m| text(m, source)),
                    n.child_by_field_name("alias").map(|a| text(a, source).to_string()),
                ),
                _ => (Some(text(n, source)), None),
            };
            if let Some(module) = module {
                out.push(ImportRef {
                    module: module.to_string(),
                    alias,
                    names: Vec::new(),
                    line,
                });
            }
        }
    } else if let Some(module) = node.child_by_field_name("module_name") {
        let imported = names
            .iter()
            .filter_map(|n| match n.kind() {
                "aliased_import" => n.child_by_field_name("name"),
                _ => Some(*n),
            })
            .map(|n| text(n, source).to_string())
            .collect();
        out.push(ImportRef {
            module: text(module, source).to_string(),
            alias: None,
            names: imported,
            line,
        });
    }
}

/// Scope-insensitive undefined-name check: any identifier in a load position
/// that is bound nowhere in the file and is not a builtin.
fn undefined_names(tree: &Tree, source: &str) -> Vec<SyntaxFinding> {
    let root = tree.root_node();
    let mut bound: HashSet<&str> = BUILTINS.iter().copied().collect();
    let mut wildcard = false;
    walk(root, &mut |n| {
        match n.kind() {
            "function_definition" | "class_definition" => {
                if let Some(name) = n.child_by_field_name("name") {
                    bound.insert(text(name, source));
                }
            }
            "parameters" | "lambda_parameters" => {
                walk(n, &mut |p| {
                    match p.kind() {
                        "identifier" => {
                            let parent = p.parent().map(|x| x.kind());
                            let is_default_value = parent
                                == Some("default_parameter")
                                && p.parent()
                                    .and_then(|x| x.child_by_field_name("value"))
                                    .map(|v| v.id() == p.id())
                                    .unwrap_or(false);
                            if !is_default_value && !matches!(parent, Some("type")) {
                                bound.insert(text(p, source));
                            }
                        }
                        "type" | "attribute" => return false,
                        _ => {}
                    }
                    true
                });
            }
            "assignment" | "augmented_assignment" | "for_statement" | "for_in_clause" => {
                if let Some(left) = n.child_by_field_name("left") {
                    bind_targets(left, source, &mut bound);
                }
            }
            "named_expression" => {
                if let Some(name) = n.child_by_field_name("name") {
                    bound.insert(text(name, source));
                }
            }
            "as_pattern" => {
                if let Some(alias) = n.child_by_field_name("alias") {
                    bind_targets(alias, source, &mut bound);
                }
            }
            "global_statement" | "nonlocal_statement" => {
                for c in named_children(n) {
                    bound.insert(text(c, source));
                }
            }
            "import_statement" | "import_from_statement" => {
                walk(n, &mut |c| {
                    match c.kind() {
                        "wildcard_import" => wildcard = true,
                        "aliased_import" => {
                            if let Some(a) = c.child_by_field_name("alias") {
                                bound.insert(text(a, source));
                            }
                            return false;
                        }
                        _ => {}
                    }
                    true
                });
                let mut cursor = n.walk();
                let names: Vec<Node> = n.children_by_field_name("name", &mut cursor).collect();
                for name in names.into_iter().filter(|x| x.kind() == "dotted_name") {
                    let first = text(name, source).split('.');
                    let chosen = if n.kind() == "import_statement" {
                        first.clone().next()
                    } else {
                        first.clone().next_back()
                    };
                    if let Some(b) = chosen {
                        bound.insert(b);
                    }
                }
                return false;
            }
            _ => {}
        }
        true
    });
    if wildcard {
        return Vec::new();
    }

    let lines = LineIndex::new(source);
    let mut out = Vec::new();
    walk(root, &mut |n| {
        match n.kind() {
            "import_statement" | "import_from_statement" | "comment" | "ERROR" => return false,
            "attribute" => {
                if let Some(obj) = n.child_by_field_name("object") {
                    collect_unbound(obj, source, &bound, &lines, &mut out);
                }
                return false;
            }
            "keyword_argument" => {
                if let Some(v) = n.child_by_field_name("value") {
                    collect_unbound(v, source, &bound, &lines, &mut out);
                }
                return false;
            }
            "identifier" => push_unbound(n, source, &bound, &lines, &mut out),
            _ => {}
        }
        true
    });
    out
}

fn collect_unbound(
    node: Node<'_>,
    source: &str,
    bound: &HashSet<&str>,
    lines: &LineIndex<'_>,
    out: &mut Vec<SyntaxFinding>,
) {
    walk(node, &mut |n| match n.kind() {
        "attribute" => {
            if let Some(obj) = n.child_by_field_name("object") {
                collect_unbound(obj, source, bound, lines, out);
            }
            false
        }
        "keyword_argument" => {
            if let Some(v) = n.child_by_field_name("value") {
                collect_unbound(v, source, bound, lines, out);
            }
            false
        }
        "identifier" => {
            push_unbound(n, source, bound, lines, out);
            true
        }
        _ => true,
    });
}

fn push_unbound(
    n: Node<'_>,
    source: &str,
    bound: &HashSet<&str>,
    lines: &LineIndex<'_>,
    out: &mut Vec<SyntaxFinding>,
) {
    let name = text(n, source);
    if bound.contains(name) {
        return;
    }
    let (line, column) = lines.position(n.start_byte());
    out.push(SyntaxFinding {
        line,
        column,
        level: FindingLevel::Error,
        code: "undefined-name",
        message: format!("undefined name `{name}`"),
    });
}

fn bind_targets<'s>(node: Node<'_>, source: &'s str, bound: &mut HashSet<&'s str>) {
    walk(node, &mut |n| {
        if n.kind() == "identifier" {
            bound.insert(text(n, source));
        }
        !matches!(n.kind(), "attribute" | "subscript")
    });
}
