use super::model::*;
use super::CkgError;
use crate::index::{self, DEFAULT_EXCLUSIONS};
use crate::lang::{self, FileSyntax, LanguageSupport, LanguageTag};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub files_indexed: usize,
    pub skipped: Vec<SkippedFile>,
    pub files_with_syntax_errors: Vec<String>,
    pub unresolved_calls: usize,
    pub ambiguous_calls: usize,
    pub unresolved_imports: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct BuildOutput {
    pub graph: KnowledgeGraph,
    pub report: BuildReport,
}

struct Parsed {
    path: String,
    source: String,
    syntax: FileSyntax,
    tag: LanguageTag,
}

/// Indexes every file under `root` that one of the requested extractors
/// handles. Per-file parse failures are skipped and reported.
pub fn build_graph(root: &Path, languages: &[LanguageTag]) -> Result<BuildOutput, CkgError> {
    let exclusions: Vec<String> = DEFAULT_EXCLUSIONS.iter().map(|s| s.to_string()).collect();
    let files = index::walk_files(root, &exclusions).map_err(CkgError::Index)?;
    let requested: BTreeSet<LanguageTag> = languages.iter().copied().collect();
    let candidates: Vec<(String, &'static dyn LanguageSupport)> = files
        .iter()
        .filter_map(|p| {
            lang::support_for_path(p)
                .filter(|s| requested.contains(&s.tag()))
                .map(|s| (p.clone(), s))
        })
        .collect();
    if candidates.is_empty() && !files.is_empty() {
        return Err(CkgError::NoExtractorAvailable {
            languages: requested.into_iter().collect(),
        });
    }

    let results: Vec<Result<Parsed, SkippedFile>> = candidates
        .par_iter()
        .map(|(path, support)| {
            let skip = |reason: String| SkippedFile {
                path: path.clone(),
                reason,
            };
            let source = match index::read_text(&root.join(path)) {
                Ok(Some(s)) => s,
                Ok(None) => return Err(skip("not valid UTF-8 text".into())),
                Err(e) => return Err(skip(e.to_string())),
            };
            let syntax = support.extract(&source).map_err(|e| skip(e.to_string()))?;
            Ok(Parsed {
                path: path.clone(),
                source,
                syntax,
                tag: support.tag(),
            })
        })
        .collect();

    let mut report = BuildReport::default();
    let mut parsed = Vec::new();
    for r in results {
        match r {
            Ok(p) => parsed.push(p),
            Err(s) => report.skipped.push(s),
        }
    }
    report.files_indexed = parsed.len();
    report.files_with_syntax_errors = parsed
        .iter()
        .filter(|p| p.syntax.has_syntax_errors)
        .map(|p| p.path.clone())
        .collect();

    let mut hasher = Sha256::new();
    for p in &parsed {
        hasher.update(p.path.as_bytes());
        hasher.update([0]);
        hasher.update((p.source.len() as u64).to_le_bytes());
        hasher.update(p.source.as_bytes());
    }
    let snapshot_id = hex::encode(hasher.finalize());

    let mut b = Assembler::default();
    for p in &parsed {
        b.add_file(p);
    }
    for (fi, p) in parsed.iter().enumerate() {
        b.link_file(fi, p, &parsed, &mut report);
    }
    let graph = KnowledgeGraph::from_parts(b.entities, b.relations, snapshot_id)?;
    Ok(BuildOutput { graph, report })
}

#[derive(Default)]
struct Assembler {
    entities: Vec<CodeEntity>,
    relations: Vec<CodeRelation>,
    file_ids: Vec<EntityId>,
    /// Per file, the entity id of each declaration.
    decl_ids: Vec<Vec<EntityId>>,
    by_name: HashMap<String, Vec<EntityId>>,
    file_of: HashMap<EntityId, usize>,
}

enum Resolution {
    Unique(EntityId),
    Ambiguous,
    Missing,
}

fn dir_of(path: &str) -> &str {
    path.rsplit_once('/').map(|(d, _)| d).unwrap_or("")
}

fn stem_of(path: &str) -> &str {
    let name = path.rsplit('/').next().unwrap_or(path);
    name.split_once('.').map(|(s, _)| s).unwrap_or(name)
}

impl Assembler {
    fn next_id(&self) -> EntityId {
        EntityId(self.entities.len() as u32)
    }

    fn push(&mut self, e: CodeEntity, file: usize) {
        self.by_name.entry(e.name.clone()).or_default().push(e.id);
        self.file_of.insert(e.id, file);
        self.entities.push(e);
    }

    fn add_file(&mut self, p: &Parsed) {
        let fi = self.file_ids.len();
        let file_id = self.next_id();
        let name = p.path.rsplit('/').next().unwrap_or(&p.path).to_string();
        self.push(
            CodeEntity {
                id: file_id,
                kind: EntityKind::File,
                name,
                location: Location {
                    path: p.path.clone(),
                    start_line: 1,
                    end_line: p.syntax.line_count.max(1),
                },
                name_position: NamePosition { line: 1, column: 1 },
                signature: None,
                doc: None,
            },
            fi,
        );
        self.file_ids.push(file_id);
        let mut ids = Vec::with_capacity(p.syntax.decls.len());
        for d in &p.syntax.decls {
            let id = self.next_id();
            ids.push(id);
            self.push(
                CodeEntity {
                    id,
                    kind: d.kind,
                    name: d.name.clone(),
                    location: Location {
                        path: p.path.clone(),
                        start_line: d.start_line,
                        end_line: d.end_line.max(d.start_line),
                    },
                    name_position: NamePosition {
                        line: d.name_line,
                        column: d.name_column,
                    },
                    signature: d.signature.clone(),
                    doc: d.doc.clone(),
                },
                fi,
            );
        }
        for (d, &id) in p.syntax.decls.iter().zip(&ids) {
            let parent = d.parent.map(|i| ids[i]).unwrap_or(file_id);
            self.relations.push(CodeRelation {
                src: parent,
                dst: id,
                kind: RelationKind::Contains,
                site: Site {
                    path: p.path.clone(),
                    line: d.start_line,
                },
            });
        }
        self.decl_ids.push(ids);
    }

    fn owner(&self, fi: usize, enclosing: Option<usize>) -> EntityId {
        enclosing
            .map(|i| self.decl_ids[fi][i])
            .unwrap_or(self.file_ids[fi])
    }

    /// Import aliases visible in a file mapped to the files they resolve to.
    fn import_targets(&self, fi: usize, parsed: &[Parsed]) -> HashMap<String, Vec<usize>> {
        let p = &parsed[fi];
        let mut out: HashMap<String, Vec<usize>> = HashMap::new();
        for imp in &p.syntax.imports {
            let files = resolve_module(p, &imp.module, parsed);
            let key = match (&imp.alias, p.tag) {
                (Some(a), _) => a.clone(),
                (None, LanguageTag::Go) => imp.module.rsplit('/').next().unwrap_or("").to_string(),
                (None, LanguageTag::Python) => {
                    if imp.names.is_empty() {
                        imp.module.clone()
                    } else {
                        // `from pkg import mod` binds `mod` as a module alias.
                        for name in &imp.names {
                            let sub = format!("{}.{}", imp.module, name);
                            let sub_files = resolve_module(p, &sub, parsed);
                            if !sub_files.is_empty() {
                                out.entry(name.clone()).or_default().extend(sub_files);
                            }
                        }
                        continue;
                    }
                }
            };
            out.entry(key).or_default().extend(files);
        }
        out
    }

    fn resolve(
        &self,
        name: &str,
        fi: usize,
        parsed: &[Parsed],
        accept: impl Fn(EntityKind) -> bool,
        restrict: Option<&[usize]>,
    ) -> Resolution {
        let all: Vec<EntityId> = self
            .by_name
            .get(name)
            .map(|v| {
                v.iter()
                    .copied()
                    .filter(|id| accept(self.entities[id.0 as usize].kind))
                    .collect()
            })
            .unwrap_or_default();
        let here = &parsed[fi].path;
        let tiers: Vec<Vec<EntityId>> = match restrict {
            Some(files) => vec![all
                .iter()
                .copied()
                .filter(|id| files.contains(&self.file_of[id]))
                .collect()],
            None => vec![
                all.iter()
                    .copied()
                    .filter(|id| self.file_of[id] == fi)
                    .collect(),
                all.iter()
                    .copied()
                    .filter(|id| dir_of(&parsed[self.file_of[id]].path) == dir_of(here))
                    .collect(),
                all.clone(),
            ],
        };
        for tier in tiers {
            match tier.len() {
                0 => continue,
                1 => return Resolution::Unique(tier[0]),
                _ => return Resolution::Ambiguous,
            }
        }
        Resolution::Missing
    }

    fn link_file(&mut self, fi: usize, p: &Parsed, parsed: &[Parsed], report: &mut BuildReport) {
        let imports = self.import_targets(fi, parsed);

        for call in &p.syntax.calls {
            let src = self.owner(fi, call.enclosing);
            let restrict = call.qualifier.as_ref().and_then(|q| imports.get(q));
            let res = match (&call.qualifier, restrict) {
                (_, Some(files)) => {
                    self.resolve(&call.callee, fi, parsed, |k| k != EntityKind::File, Some(files))
                }
                (Some(_), None) => {
                    self.resolve(&call.callee, fi, parsed, |k| k == EntityKind::Method, None)
                }
                _ => self.resolve(
                    &call.callee,
                    fi,
                    parsed,
                    |k| k == EntityKind::Function || k.is_type(),
                    None,
                ),
            };
            match res {
                Resolution::Unique(dst) => self.relations.push(CodeRelation {
                    src,
                    dst,
                    kind: RelationKind::Calls,
                    site: Site {
                        path: p.path.clone(),
                        line: call.line,
                    },
                }),
                Resolution::Ambiguous => report.ambiguous_calls += 1,
                Resolution::Missing => report.unresolved_calls += 1,
            }
        }

        let mut seen = HashSet::new();
        for u in &p.syntax.uses {
            let src = self.owner(fi, u.enclosing);
            let res = self.resolve(
                &u.name,
                fi,
                parsed,
                |k| k == EntityKind::Variable || k.is_type(),
                None,
            );
            if let Resolution::Unique(dst) = res {
                if dst != src && seen.insert((src, dst, u.line)) {
                    // A variable's own declaring statement is not a reference.
                    let target = &self.entities[dst.0 as usize];
                    if target.kind == EntityKind::Variable
                        && target.location.path == p.path
                        && target.location.contains_line(u.line)
                    {
                        continue;
                    }
                    self.relations.push(CodeRelation {
                        src,
                        dst,
                        kind: RelationKind::References,
                        site: Site {
                            path: p.path.clone(),
                            line: u.line,
                        },
                    });
                }
            }
        }

        let file_id = self.file_ids[fi];
        for imp in &p.syntax.imports {
            let targets = resolve_module(p, &imp.module, parsed);
            if targets.is_empty() {
                let mut any = false;
                for name in &imp.names {
                    let sub = format!("{}.{}", imp.module, name);
                    for t in resolve_module(p, &sub, parsed) {
                        any = true;
                        self.import_edge(file_id, self.file_ids[t], &p.path, imp.line);
                    }
                }
                if !any {
                    report.unresolved_imports += 1;
                }
                continue;
            }
            let mut linked = BTreeSet::new();
            for &t in &targets {
                if linked.insert(self.file_ids[t]) {
                    self.import_edge(file_id, self.file_ids[t], &p.path, imp.line);
                }
                for name in &imp.names {
                    let hit = self.decl_ids[t].iter().copied().find(|id| {
                        let e = &self.entities[id.0 as usize];
                        e.name == *name && self.container_is_file(*id, t, parsed)
                    });
                    if let Some(dst) = hit {
                        if linked.insert(dst) {
                            self.import_edge(file_id, dst, &p.path, imp.line);
                        }
                    }
                }
            }
        }

        for base in &p.syntax.bases {
            let src = self.decl_ids[fi][base.decl];
            if let Resolution::Unique(dst) =
                self.resolve(&base.base, fi, parsed, EntityKind::is_type, None)
            {
                if dst != src {
                    self.relations.push(CodeRelation {
                        src,
                        dst,
                        kind: RelationKind::Inherits,
                        site: Site {
                            path: p.path.clone(),
                            line: base.line,
                        },
                    });
                }
            }
        }
    }

    fn container_is_file(&self, id: EntityId, fi: usize, parsed: &[Parsed]) -> bool {
        let idx = self.decl_ids[fi].iter().position(|x| *x == id);
        idx.map(|i| parsed[fi].syntax.decls[i].parent.is_none())
            .unwrap_or(false)
    }

    fn import_edge(&mut self, src: EntityId, dst: EntityId, path: &str, line: usize) {
        self.relations.push(CodeRelation {
            src,
            dst,
            kind: RelationKind::Imports,
            site: Site {
                path: path.to_string(),
                line,
            },
        });
    }
}

/// Files of the indexed snapshot that an import path refers to.
fn resolve_module(from: &Parsed, module: &str, parsed: &[Parsed]) -> Vec<usize> {
    match from.tag {
        LanguageTag::Go => {
            // Match the package directory as a trailing path of the import.
            let mut by_dir: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, p) in parsed.iter().enumerate() {
                if p.tag == LanguageTag::Go {
                    by_dir.entry(dir_of(&p.path)).or_default().push(i);
                }
            }
            let best = by_dir
                .iter()
                .filter(|(dir, _)| {
                    !dir.is_empty()
                        && (module == **dir || module.ends_with(&format!("/{dir}")))
                })
                .max_by_key(|(dir, _)| dir.len());
            best.map(|(_, v)| v.clone()).unwrap_or_default()
        }
        LanguageTag::Python => {
            let (base_dir, rest) = if let Some(stripped) = module.strip_prefix('.') {
                let mut dir = dir_of(&from.path).to_string();
                let mut rest = stripped;
                while let Some(r) = rest.strip_prefix('.') {
                    dir = dir_of(&dir).to_string();
                    rest = r;
                }
                (dir, rest)
            } else {
                (String::new(), module)
            };
            let rel = rest.replace('.', "/");
            let join = |tail: &str| {
                [base_dir.as_str(), rel.as_str(), tail]
                    .iter()
                    .filter(|s| !s.is_empty())
                    .copied()
                    .collect::<Vec<_>>()
                    .join("/")
            };
            let as_file = if rel.is_empty() {
                String::new()
            } else {
                format!("{}.py", join(""))
            };
            let as_pkg = join("__init__.py");
            parsed
                .iter()
                .enumerate()
                .filter(|(_, p)| {
                    p.tag == LanguageTag::Python && (p.path == as_file || p.path == as_pkg)
                })
                .map(|(i, _)| i)
                .chain(
                    // Top-level module imported by bare name from a sibling file.
                    parsed.iter().enumerate().filter(|(_, p)| {
                        base_dir.is_empty()
                            && !rest.contains('.')
                            && p.tag == LanguageTag::Python
                            && stem_of(&p.path) == rest
                            && dir_of(&p.path) == dir_of(&from.path)
                            && !dir_of(&from.path).is_empty()
                    })
                    .map(|(i, _)| i),
                )
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        }
    }
}
