use super::{
    end_line, innermost, leading_comments, named_children, text, walk, BaseRef, CallSite,
    Declaration, FileSyntax, ImportRef, LanguageSupport, LanguageTag, LineIndex, NameUse,
    SyntaxError,
};
use crate::ckg::EntityKind;
use std::collections::HashSet;
use tree_sitter::Node;

/// Brace-structured extractor.
#[derive(Debug, Default, Clone, Copy)]
pub struct GoSupport;

impl LanguageSupport for GoSupport {
    fn tag(&self) -> LanguageTag {
        LanguageTag::Go
    }

    fn extensions(&self) -> &'static [&'static str] {
        &["go"]
    }

    fn grammar(&self) -> tree_sitter::Language {
        tree_sitter_go::LANGUAGE.into()
    }

    fn identifier_kinds(&self) -> &'static [&'static str] {
        &["identifier", "type_identifier", "field_identifier", "package_identifier"]
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

        for item in named_children(root) {
            match item.kind() {
                "function_declaration" | "method_declaration" => {
                    let kind = if item.kind() == "method_declaration" {
                        EntityKind::Method
                    } else {
                        EntityKind::Function
                    };
                    if let Some(name) = item.child_by_field_name("name") {
                        name_bytes.insert(name.start_byte());
                        out.decls.push(declaration(
                            kind,
                            item,
                            name,
                            signature(item, source),
                            leading_comments(item, source, "//"),
                            None,
                            &lines,
                            source,
                        ));
                    }
                }
                "type_declaration" => {
                    let specs: Vec<Node> = named_children(item)
                        .into_iter()
                        .filter(|n| matches!(n.kind(), "type_spec" | "type_alias"))
                        .collect();
                    let single = specs.len() == 1;
                    for spec in specs {
                        let Some(name) = spec.child_by_field_name("name") else {
                            continue;
                        };
                        let ty = spec.child_by_field_name("type");
                        let kind = match ty.map(|t| t.kind()) {
                            Some("struct_type") => EntityKind::Struct,
                            _ => EntityKind::Class,
                        };
                        name_bytes.insert(name.start_byte());
                        let span = if single { item } else { spec };
                        let idx = out.decls.len();
                        out.decls.push(declaration(
                            kind,
                            span,
                            name,
                            None,
                            leading_comments(item, source, "//"),
                            None,
                            &lines,
                            source,
                        ));
                        if let Some(t) = ty.filter(|t| t.kind() == "struct_type") {
                            embedded_fields(t, idx, source, &lines, &mut out.bases);
                        }
                    }
                }
                "var_declaration" | "const_declaration" => {
                    let doc = leading_comments(item, source, "//");
                    walk(item, &mut |n| {
                        if matches!(n.kind(), "var_spec" | "const_spec") {
                            let mut cursor = n.walk();
                            let names: Vec<Node> =
                                n.children_by_field_name("name", &mut cursor).collect();
                            for name in names {
                                name_bytes.insert(name.start_byte());
                                out.decls.push(declaration(
                                    EntityKind::Variable,
                                    n,
                                    name,
                                    None,
                                    doc.clone(),
                                    None,
                                    &lines,
                                    source,
                                ));
                            }
                            return false;
                        }
                        true
                    });
                }
                "import_declaration" => {
                    walk(item, &mut |n| {
                        if n.kind() == "import_spec" {
                            if let Some(path) = n.child_by_field_name("path") {
                                let module = text(path, source).trim_matches('"').to_string();
                                let alias = n
                                    .child_by_field_name("name")
                                    .map(|a| text(a, source).to_string());
                                out.imports.push(ImportRef {
                                    module,
                                    alias,
                                    names: Vec::new(),
                                    line: lines.line_of(n.start_byte()),
                                });
                            }
                            return false;
                        }
                        true
                    });
                }
                _ => {}
            }
        }

        let mut call_targets = HashSet::new();
        walk(root, &mut |n| {
            if n.kind() == "call_expression" {
                if let Some(f) = n.child_by_field_name("function") {
                    let (callee, qualifier, target) = match f.kind() {
                        "identifier" => (Some(text(f, source)), None, Some(f)),
                        "selector_expression" => {
                            let field = f.child_by_field_name("field");
                            let operand = f.child_by_field_name("operand");
                            (
                                field.map(|x| text(x, source)),
                                operand.map(|o| text(o, source).to_string()),
                                field,
                            )
                        }
                        _ => (None, None, None),
                    };
                    if let (Some(callee), Some(target)) = (callee, target) {
                        call_targets.insert(target.start_byte());
                        let (line, column) = lines.position(target.start_byte());
                        out.calls.push(CallSite {
                            callee: callee.to_string(),
                            qualifier,
                            line,
                            column,
                            enclosing: innermost(&out.decls, n.start_byte()),
                        });
                    }
                }
            }
            true
        });

        walk(root, &mut |n| {
            if matches!(n.kind(), "comment" | "import_declaration") {
                return false;
            }
            if matches!(n.kind(), "identifier" | "type_identifier")
                && !name_bytes.contains(&n.start_byte())
                && !call_targets.contains(&n.start_byte())
            {
                let (line, column) = lines.position(n.start_byte());
                out.uses.push(NameUse {
                    name: text(n, source).to_string(),
                    line,
                    column,
                    enclosing: innermost(&out.decls, n.start_byte()),
                });
            }
            true
        });
        Ok(out)
    }
}

#[allow(clippy::too_many_arguments)]
fn declaration(
    kind: EntityKind,
    span: Node<'_>,
    name: Node<'_>,
    signature: Option<String>,
    doc: Option<String>,
    parent: Option<usize>,
    lines: &LineIndex<'_>,
    source: &str,
) -> Declaration {
    let (name_line, name_column) = lines.position(name.start_byte());
    Declaration {
        kind,
        name: text(name, source).to_string(),
        start_line: lines.line_of(span.start_byte()),
        end_line: end_line(span, lines, source),
        name_line,
        name_column,
        signature,
        doc,
        parent,
        start_byte: span.start_byte(),
        end_byte: span.end_byte(),
    }
}

fn signature(item: Node<'_>, source: &str) -> Option<String> {
    let end = item
        .child_by_field_name("body")
        .map(|b| b.start_byte())
        .unwrap_or(item.end_byte());
    let sig = source[item.start_byte()..end]
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    (!sig.is_empty()).then_some(sig)
}

fn embedded_fields(
    struct_type: Node<'_>,
    decl: usize,
    source: &str,
    lines: &LineIndex<'_>,
    bases: &mut Vec<BaseRef>,
) {
    walk(struct_type, &mut |n| {
        if n.kind() == "field_declaration" {
            if n.child_by_field_name("name").is_none() {
                if let Some(ty) = n.child_by_field_name("type") {
                    let mut base = None;
                    walk(ty, &mut |t| {
                        if t.kind() == "type_identifier" {
                            base = Some(text(t, source).to_string());
                        }
                        true
                    });
                    if let Some(base) = base {
                        bases.push(BaseRef {
                            decl,
                            base,
                            line: lines.line_of(n.start_byte()),
                        });
                    }
                }
            }
            return false;
        }
        true
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = "package main\n\nimport (\n\t\"fmt\"\n\tb \"example.com/pkg_b\"\n)\n\n// Answer is the answer.\nvar Answer = 42\n\ntype Base struct{}\n\ntype Thing struct {\n\tBase\n\tn int\n}\n\n// Run does it.\nfunc (t *Thing) Run() int {\n\tfmt.Println(Answer)\n\treturn helper(t.n)\n}\n\nfunc helper(x int) int { return b.Twice(x) }\n";

    #[test]
    fn extracts_declarations_with_spans_and_docs() {
        let syn = GoSupport.extract(SRC).unwrap();
        let names: Vec<(&str, EntityKind, usize, usize)> = syn
            .decls
            .iter()
            .map(|d| (d.name.as_str(), d.kind, d.start_line, d.end_line))
            .collect();
        assert_eq!(
            names,
            vec![
                ("Answer", EntityKind::Variable, 9, 9),
                ("Base", EntityKind::Struct, 11, 11),
                ("Thing", EntityKind::Struct, 13, 16),
                ("Run", EntityKind::Method, 19, 22),
                ("helper", EntityKind::Function, 24, 24),
            ]
        );
        assert_eq!(syn.decls[3].doc.as_deref(), Some("Run does it."));
        assert_eq!(syn.decls[3].signature.as_deref(), Some("func (t *Thing) Run() int"));
        assert_eq!(syn.decls[0].doc.as_deref(), Some("Answer is the answer."));
        assert_eq!((syn.decls[3].name_line, syn.decls[3].name_column), (19, 17));
        assert_eq!(syn.line_count, 24);
        assert!(!syn.has_syntax_errors);
    }

    #[test]
    fn extracts_calls_imports_and_embeddings() {
        let syn = GoSupport.extract(SRC).unwrap();
        let calls: Vec<(&str, Option<&str>, usize, Option<usize>)> = syn
            .calls
            .iter()
            .map(|c| (c.callee.as_str(), c.qualifier.as_deref(), c.line, c.enclosing))
            .collect();
        assert_eq!(
            calls,
            vec![
                ("Println", Some("fmt"), 20, Some(3)),
                ("helper", None, 21, Some(3)),
                ("Twice", Some("b"), 24, Some(4)),
            ]
        );
        assert_eq!(syn.imports.len(), 2);
        assert_eq!(syn.imports[1].module, "example.com/pkg_b");
        assert_eq!(syn.imports[1].alias.as_deref(), Some("b"));
        assert_eq!(syn.bases, vec![BaseRef { decl: 2, base: "Base".into(), line: 14 }]);
        assert!(syn.uses.iter().any(|u| u.name == "Answer" && u.line == 20));
    }
}
