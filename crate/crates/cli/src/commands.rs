//! Subcommand implementations. Each returns the process exit code on success.

use crate::exit::{self, io, CliError};
use bugsmith::ckg::{build_graph, query_entities, read_graph, write_graph, QueryScorers};
use bugsmith::config::RunConfig;
use bugsmith::gate::{Gate, GateVerdict};
use bugsmith::index::{find_file, grep as grep_files, Scope, SearchOptions};
use bugsmith::navigator::{LspBackend, LspConfig, NavigationBackend, Navigator, StubBackend};
use bugsmith::orchestrator::{solve as solve_task, IssueTask, RouteKind, Session, Solution, Toolbox, Trace};
use bugsmith::patch::{apply_diff, apply_edits, parse_edit_blocks, PatchSet, DEV_NULL};
use bugsmith::sandbox::{checked_relative, Workspace};
use serde_json::{json, Value};
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub struct Output {
    pub json: bool,
}

impl Output {
    fn emit(&self, value: Value, text: impl FnOnce() -> String) {
        if self.json {
            println!("{value}");
        } else {
            print!("{}", text());
        }
    }
}

fn default_graph_path(repo: &Path) -> PathBuf {
    repo.join(".bugsmith").join("graph.jsonl")
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io(path, e))
}

/// Current text of a repository file; `None` when it does not exist.
fn read_repo_file(repo: &Path, rel: &str) -> Result<Option<String>, CliError> {
    let path = repo.join(checked_relative(rel)?);
    match fs::read_to_string(&path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io(&path, e)),
    }
}

fn navigator(config: &RunConfig, root: &Path) -> Result<Navigator, CliError> {
    let backend: Box<dyn NavigationBackend> = match &config.lsp_command {
        Some(cmd) => Box::new(LspBackend::start(LspConfig::new(cmd.clone(), root))?),
        None => Box::new(StubBackend::open(root, &config.languages)?),
    };
    Ok(Navigator::new(backend).with_radius(config.radius))
}

pub fn index(config: &RunConfig, output: Option<&Path>, out: &Output) -> Result<i32, CliError> {
    let built = build_graph(&config.repo, &config.languages)?;
    let target = output.map_or_else(|| default_graph_path(&config.repo), Path::to_path_buf);
    if let Some(dir) = target.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    let file = fs::File::create(&target).map_err(|e| io(&target, e))?;
    let mut w = BufWriter::new(file);
    write_graph(&built.graph, &mut w)?;
    w.flush().map_err(|e| io(&target, e))?;

    let g = &built.graph;
    out.emit(
        json!({
            "output": target,
            "entities": g.entities().len(),
            "relations": g.relations().len(),
            "snapshot": g.snapshot_id(),
            "report": built.report,
        }),
        || {
            let mut s = format!(
                "indexed {} files: {} entities, {} relations -> {}\n",
                built.report.files_indexed,
                g.entities().len(),
                g.relations().len(),
                target.display()
            );
            for f in &built.report.skipped {
                s.push_str(&format!("skipped {}: {}\n", f.path, f.reason));
            }
            for f in &built.report.files_with_syntax_errors {
                s.push_str(&format!("syntax errors in {f}; partial entities kept\n"));
            }
            s
        },
    );
    Ok(exit::OK)
}

pub fn query(config: &RunConfig, text: &str, graph: Option<&Path>, top_k: usize, out: &Output) -> Result<i32, CliError> {
    let path = graph.map_or_else(|| default_graph_path(&config.repo), Path::to_path_buf);
    let file = fs::File::open(&path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::new(exit::IO, format!("{}: graph not found; run `bugsmith index` first", path.display()))
        } else {
            io(&path, e)
        }
    })?;
    let g = read_graph(BufReader::new(file))?;
    let mut ranked = query_entities(&g, text, &QueryScorers::default())?;
    ranked.items.truncate(top_k);

    let rows: Vec<_> = ranked
        .items
        .iter()
        .filter_map(|r| g.entity(r.id).map(|e| (r, e)))
        .collect();
    out.emit(
        json!(rows
            .iter()
            .map(|(r, e)| json!({
                "id": r.id,
                "score": r.score,
                "provenance": r.provenance,
                "kind": e.kind,
                "name": e.name,
                "location": e.location,
                "signature": e.signature,
            }))
            .collect::<Vec<_>>()),
        || {
            let mut s = String::new();
            for (i, (r, e)) in rows.iter().enumerate() {
                s.push_str(&format!(
                    "{:>3}. {:.3}  {} {}  {}:{}-{}\n",
                    i + 1,
                    r.score,
                    e.kind,
                    e.name,
                    e.location.path,
                    e.location.start_line,
                    e.location.end_line
                ));
            }
            if rows.is_empty() {
                s.push_str("no matching entities\n");
            }
            s
        },
    );
    Ok(exit::OK)
}

pub fn find(config: &RunConfig, pattern: &str, out: &Output) -> Result<i32, CliError> {
    let found = find_file(&config.repo, pattern, &SearchOptions::default())?;
    out.emit(json!(found), || {
        let mut s: String = found.items.iter().map(|p| format!("{p}\n")).collect();
        if found.truncated {
            s.push_str("(more matches omitted)\n");
        }
        s
    });
    Ok(if found.items.is_empty() { exit::NO_MATCH } else { exit::OK })
}

pub fn grep(config: &RunConfig, pattern: &str, scope: Option<&str>, out: &Output) -> Result<i32, CliError> {
    let scope = scope.map(Scope::parse).transpose()?;
    let found = grep_files(&config.repo, pattern, scope.as_ref(), &SearchOptions::default())?;
    out.emit(json!(found), || {
        let mut s: String = found
            .items
            .iter()
            .map(|m| format!("{}:{}:{}: {}\n", m.path, m.line, m.column, m.line_text))
            .collect();
        if found.truncated {
            s.push_str("(more matches omitted)\n");
        }
        s
    });
    Ok(if found.items.is_empty() { exit::NO_MATCH } else { exit::OK })
}

/// Applies the blocks in memory only; the repository is never written.
pub fn edit(config: &RunConfig, blocks: &Path, out: &Output) -> Result<i32, CliError> {
    let parsed = parse_edit_blocks(&read_file(blocks)?)?;
    if !parsed.malformed.is_empty() {
        let reasons: Vec<String> = parsed
            .malformed
            .iter()
            .map(|m| format!("line {}: {}", m.line, m.reason))
            .collect();
        return Err(CliError::new(exit::FORMAT, format!("malformed edit block: {}", reasons.join("; "))));
    }
    let mut read_error = None;
    let edits = apply_edits(
        &parsed.blocks,
        |p| match read_repo_file(&config.repo, p) {
            Ok(c) => c,
            Err(e) => {
                read_error.get_or_insert(e);
                None
            }
        },
        &config.patch_options(),
    );
    if let Some(e) = read_error {
        return Err(e);
    }
    let edits = edits?;
    let set = PatchSet {
        files: edits.iter().map(|e| e.diff.clone()).collect(),
    };
    out.emit(
        json!({
            "diff": set.render(),
            "files": edits.iter().map(|e| json!({
                "path": e.path,
                "created": e.original.is_none(),
                "indentation_undecidable": e.indentation_undecidable,
            })).collect::<Vec<_>>(),
        }),
        || set.render(),
    );
    Ok(exit::OK)
}

pub fn diagnose(config: &RunConfig, diff: &Path, out: &Output) -> Result<i32, CliError> {
    let set = PatchSet::parse(&read_file(diff)?)?;
    let nav = navigator(config, &config.repo)?;
    let gate = Gate::new(&nav);
    let mut verdicts: Vec<GateVerdict> = Vec::new();
    for d in set.files.iter().filter(|d| !d.is_empty()) {
        let original = if d.old_path == DEV_NULL {
            String::new()
        } else {
            read_repo_file(&config.repo, &d.old_path)?
                .ok_or_else(|| CliError::new(exit::IO, format!("{}: not in the repository", d.old_path)))?
        };
        let patched = if d.new_path == DEV_NULL {
            String::new()
        } else {
            apply_diff(&original, d)?
        };
        verdicts.push(gate.evaluate_content(d.path(), &original, &patched, Some(d)));
    }
    let accepted = verdicts.iter().all(|v| v.accepted);
    out.emit(json!({"accepted": accepted, "files": verdicts}), || {
        let mut s = String::new();
        for v in &verdicts {
            let status = if v.accepted { "accepted" } else { "rejected" };
            s.push_str(&format!(
                "{}: {status} ({} before, {} after)\n",
                v.path, v.baseline_count, v.patched_count
            ));
            for d in &v.new_diagnostics {
                s.push_str(&format!("  {}:{}: {}: {}\n", d.path, d.line, d.severity, d.message));
            }
            if let Some(r) = &v.reason {
                s.push_str(&format!("  note: {r}\n"));
            }
        }
        s
    });
    Ok(if accepted { exit::OK } else { exit::GATE_REJECTED })
}

pub struct SolveOptions<'a> {
    pub issue: &'a Path,
    pub output: Option<&'a Path>,
    pub trace: Option<&'a Path>,
    pub apply: bool,
}

fn write_trace(path: &Path, trace: &Trace) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| io(path, e))?;
    let mut w = BufWriter::new(file);
    trace.write_jsonl(&mut w).map_err(|e| io(path, e))?;
    w.flush().map_err(|e| io(path, e))
}

/// Writes every file diff of `set` to the repository, after checking that
/// all of them apply.
fn apply_to_repo(repo: &Path, set: &PatchSet) -> Result<(), CliError> {
    let mut writes = Vec::new();
    for d in set.files.iter().filter(|d| !d.is_empty()) {
        let original = if d.old_path == DEV_NULL {
            String::new()
        } else {
            read_repo_file(repo, &d.old_path)?.unwrap_or_default()
        };
        let patched = apply_diff(&original, d)?;
        writes.push((d, patched));
    }
    for (d, patched) in writes {
        if d.new_path == DEV_NULL {
            let path = repo.join(checked_relative(&d.old_path)?);
            fs::remove_file(&path).map_err(|e| io(&path, e))?;
        } else {
            let path = repo.join(checked_relative(&d.new_path)?);
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
            }
            fs::write(&path, patched).map_err(|e| io(&path, e))?;
        }
    }
    Ok(())
}

fn solution_json(s: &Solution) -> Value {
    json!({
        "resolved": s.resolved,
        "route": s.route,
        "attempts": s.attempts,
        "votes": s.votes,
        "notes": s.notes,
        "diff": s.diff.render(),
        "events": s.trace.events().len(),
    })
}

/// Runs the pipeline in a private copy of the repository. The original tree
/// changes only with `--apply` and a resolved solution.
pub fn solve(config: &RunConfig, opts: &SolveOptions<'_>, out: &Output) -> Result<i32, CliError> {
    let provider = config.build_provider()?;
    let mut task = IssueTask::parse(&read_file(opts.issue)?)?;
    task.budget = config.budget;
    let workspace = Workspace::create(&config.repo)?;
    let graph = build_graph(workspace.root(), &config.languages)?.graph;
    let nav = navigator(config, workspace.root())?;
    let runner = config.build_runner();

    let mut tools = Toolbox::new(&workspace, &graph, &nav, runner.as_ref());
    tools.limits = config.limits;
    tools.interpreter = config.interpreter.clone();
    tools.patch = config.patch_options();
    let mut session = Session::new(&task, tools, provider.as_ref());
    let result = solve_task(&task, &mut session, config.n_candidates);

    let solution = match result {
        Ok(s) => s,
        Err(e) => {
            if let Some(path) = opts.trace {
                write_trace(path, &session.trace)?;
            }
            return Err(e.into());
        }
    };
    if let Some(path) = opts.trace {
        write_trace(path, &solution.trace)?;
    }
    let diff = solution.diff.render();
    if let Some(path) = opts.output {
        fs::write(path, &diff).map_err(|e| io(path, e))?;
    }
    if opts.apply && solution.resolved {
        apply_to_repo(&config.repo, &solution.diff)?;
    }

    out.emit(solution_json(&solution), || if opts.output.is_some() { String::new() } else { diff.clone() });
    if !out.json {
        let status = if solution.resolved { "resolved" } else { "unresolved" };
        eprintln!(
            "{status} on the {} route after {} attempt(s)",
            match solution.route.kind {
                RouteKind::Dynamic => "dynamic",
                RouteKind::Static => "static",
            },
            solution.attempts
        );
        for n in &solution.notes {
            eprintln!("note: {n}");
        }
    }
    Ok(if solution.resolved { exit::OK } else { exit::UNRESOLVED })
}

pub fn trace(file: &Path, out: &Output) -> Result<i32, CliError> {
    let f = fs::File::open(file).map_err(|e| io(file, e))?;
    let trace = Trace::read_jsonl(BufReader::new(f))?;
    out.emit(json!({"header": trace.header(), "events": trace.events()}), || trace.render_text());
    Ok(exit::OK)
}
