//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero on any failure.

mod common;

use bugsmith::ckg::{build_graph, EntityKind, KnowledgeGraph, RelationKind};
use bugsmith::gate::Gate;
use bugsmith::lang::LanguageTag;
use bugsmith::navigator::{resolve_position_observed, Navigator, PositionHint, StubBackend, Tier};
use bugsmith::orchestrator::{AgentRole, RouteKind, Tool, ToolPermissionMatrix};
use bugsmith::patch::{
    apply_diff, apply_edit, locate_match, parse_edit_blocks, render_unified_diff, PatchError, PatchOptions,
    UnifiedDiff,
};
use bugsmith::sandbox::{Limits, Runner, SubprocessRunner, Workspace};
use common::{fixture, normalize_ws, read_fixture, solve_seeded};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;
use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

/// Deterministic sample of `n` values drawn from `strategy`.
fn sample<S: Strategy>(strategy: S, n: usize) -> Vec<S::Value> {
    let mut runner = TestRunner::deterministic();
    (0..n)
        .map(|_| strategy.new_tree(&mut runner).expect("value").current())
        .collect()
}

fn permission_matrix() -> Result<String, String> {
    use AgentRole::*;
    use Tool::*;
    // Rows: CKG, LSP, file indexing, bash, editing, reset, reproduction.
    let table: [(Tool, [bool; 6]); 7] = [
        (Ckg, [true, true, true, true, true, false]),
        (Lsp, [true, true, true, true, true, false]),
        (GeneralFileIndexing, [true, true, true, true, true, false]),
        (GeneralBashCommand, [true, true, true, true, true, false]),
        (CodeEditing, [false, false, false, true, false, true]),
        (ResetRepository, [false, false, false, true, false, false]),
        (ReproductionScriptExecution, [false, false, true, false, true, false]),
    ];
    let roles = [Searcher, Planner, Reproducer, Programmer, Tester, Editor];
    let m = ToolPermissionMatrix::default();
    let mut checked = 0;
    for (tool, row) in table {
        for (role, want) in roles.iter().zip(row) {
            ensure!(m.allows(*role, tool) == want, "{role} x {tool}: expected {want}");
            ensure!(m.enforce(*role, tool).is_ok() == want, "{role} x {tool}: enforce disagrees");
            checked += 1;
        }
    }
    Ok(format!("{checked} role/tool pairs"))
}

fn go_packages_graph() -> Result<String, String> {
    let g = build_graph(&fixture("go_packages"), &[LanguageTag::Go]).map_err(|e| e.to_string())?.graph;
    let names: BTreeSet<&str> = g
        .entities()
        .iter()
        .filter(|e| e.kind != EntityKind::File)
        .map(|e| e.name.as_str())
        .collect();
    let want: BTreeSet<&str> = ["StructA", "FunctionA", "XFunction", "StructB", "NewStructB", "FunctionB"].into();
    ensure!(names == want, "entities {names:?}");
    let calls = |g: &KnowledgeGraph, a: &str, b: &str| {
        g.relations().iter().any(|r| {
            r.kind == RelationKind::Calls && g.entity(r.src).unwrap().name == a && g.entity(r.dst).unwrap().name == b
        })
    };
    ensure!(calls(&g, "XFunction", "FunctionB"), "missing XFunction calls FunctionB");
    ensure!(calls(&g, "XFunction", "NewStructB"), "missing XFunction calls NewStructB");
    Ok(format!("{} entities, {} relations", g.entities().len(), g.relations().len()))
}

fn example_edit_round_trip() -> Result<String, String> {
    let old = read_fixture("example/example.txt");
    let parsed = parse_edit_blocks(&read_fixture("example/edit.txt")).map_err(|e| e.to_string())?;
    ensure!(parsed.blocks.len() == 1 && parsed.malformed.is_empty(), "expected one block");
    let out = apply_edit(&old, &parsed.blocks[0], &PatchOptions::default()).map_err(|e| e.to_string())?;
    let expected = read_fixture("example/expected.diff");
    ensure!(out.diff.render() == expected, "diff differs:\n{}", out.diff.render());
    let reparsed = UnifiedDiff::parse(&expected).map_err(|e| e.to_string())?;
    ensure!(apply_diff(&old, &reparsed).map_err(|e| e.to_string())? == out.new_content, "re-apply differs");
    Ok("hunk byte-identical".into())
}

/// Character edit distance, computed independently of the crate.
fn levenshtein(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.chars().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, cb) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(ca != *cb)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

fn similarity(a: &str, b: &str) -> f64 {
    let (a, b) = (a.trim(), b.trim());
    let n = a.chars().count().max(b.chars().count());
    if n == 0 {
        1.0
    } else {
        1.0 - levenshtein(a, b) as f64 / n as f64
    }
}

/// Every window's mean similarity, in order of start line.
fn brute_force(lines: &[String], search: &[String]) -> Vec<f64> {
    if search.len() > lines.len() {
        return Vec::new();
    }
    (0..=lines.len() - search.len())
        .map(|s| search.iter().enumerate().map(|(i, q)| similarity(&lines[s + i], q)).sum::<f64>() / search.len() as f64)
        .collect()
}

#[derive(Debug, Clone)]
enum Perturb {
    None,
    Reindent(usize),
    Typos(Vec<(usize, usize, char)>),
    ReplaceLine(usize, String),
}

fn fuzzy_case() -> impl Strategy<Value = (Vec<String>, usize, usize, Perturb)> {
    use proptest::prelude::*;
    let line = (0usize..4, "[a-z_]{1,8}( [a-z_(),=+]{1,10}){0,4}").prop_map(|(ind, s)| format!("{}{}", "    ".repeat(ind), s));
    proptest::collection::vec(line, 1..=200).prop_flat_map(|lines| {
        let n = lines.len();
        (Just(lines), 0..n, 1usize..=8).prop_flat_map(move |(lines, start, len)| {
            let len = len.min(n - start);
            let perturb = prop_oneof![
                Just(Perturb::None),
                (1usize..8).prop_map(Perturb::Reindent),
                proptest::collection::vec((0..len, 0usize..20, proptest::char::range('a', 'z')), 1..4).prop_map(Perturb::Typos),
                (0..len, "[a-z ]{3,20}").prop_map(|(i, s)| Perturb::ReplaceLine(i, s)),
            ];
            (Just(lines), Just(start), Just(len), perturb)
        })
    })
}

fn perturbed(block: &[String], p: &Perturb) -> Vec<String> {
    let mut out = block.to_vec();
    match p {
        Perturb::None => {}
        Perturb::Reindent(k) => out.iter_mut().for_each(|l| *l = format!("{}{}", " ".repeat(*k), l.trim_start())),
        Perturb::Typos(edits) => {
            for (i, at, c) in edits {
                let mut chars: Vec<char> = out[*i].chars().collect();
                let at = (*at).min(chars.len());
                if at < chars.len() {
                    chars[at] = *c;
                } else {
                    chars.push(*c);
                }
                out[*i] = chars.into_iter().collect();
            }
        }
        Perturb::ReplaceLine(i, s) => out[*i] = s.clone(),
    }
    out
}

fn fuzzy_oracle() -> Result<String, String> {
    let threshold = 0.8;
    let cases = sample(fuzzy_case(), 600);
    let (mut matched, mut below, mut ambiguous) = (0, 0, 0);
    for (k, (lines, start, len, p)) in cases.iter().enumerate() {
        let search = perturbed(&lines[*start..start + len], p);
        let content: String = lines.iter().map(|l| format!("{l}\n")).collect();
        let scores = brute_force(lines, &search);
        let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let argmax: Vec<usize> = (0..scores.len()).filter(|&s| scores[s] == best).collect();
        let got = locate_match(&content, &search, threshold);
        if best < threshold {
            ensure!(matches!(got, Err(PatchError::NoAcceptableMatch { .. })), "case {k}: expected no match, got {got:?}");
            below += 1;
            continue;
        }
        match got {
            Ok(m) if best < 1.0 => {
                ensure!(m.start_line == argmax[0] + 1, "case {k}: window {} vs oracle {}", m.start_line, argmax[0] + 1);
                ensure!((m.score - best).abs() < 1e-9, "case {k}: score {} vs oracle {best}", m.score);
            }
            // A perfect score can be reached by several windows; any of them is a best window.
            Ok(m) => ensure!(argmax.contains(&(m.start_line - 1)), "case {k}: window {} not a best window", m.start_line),
            Err(PatchError::AmbiguousExactMatch { starts, .. }) if argmax.len() > 1 => {
                ensure!(starts.iter().all(|s| argmax.contains(&(s - 1))), "case {k}: ambiguity outside oracle");
                ambiguous += 1;
                continue;
            }
            Err(e) => return Err(format!("case {k}: {e}")),
        }
        matched += 1;
    }
    Ok(format!("{} cases: {matched} located, {below} below threshold, {ambiguous} ambiguous, 0 disagreements", cases.len()))
}

fn diff_round_trip() -> Result<String, String> {
    use proptest::prelude::*;
    let text = proptest::collection::vec(prop_oneof!["[abc]{0,3}", "[ \t]{0,2}x"], 0..30)
        .prop_flat_map(|lines| (Just(lines), any::<bool>()))
        .prop_map(|(lines, newline)| {
            let mut s = lines.join("\n");
            if newline && !s.is_empty() {
                s.push('\n');
            }
            s
        });
    let pairs = sample((text.clone(), text, 0usize..5), 1200);
    for (k, (old, new, ctx)) in pairs.iter().enumerate() {
        let d = render_unified_diff(old, new, "f.txt", *ctx);
        let applied = apply_diff(old, &d).map_err(|e| format!("pair {k}: {e}"))?;
        ensure!(applied == *new, "pair {k}: apply(render) differs");
        if d.is_empty() {
            // Identical texts render as no diff at all.
            ensure!(old == new && d.render().is_empty(), "pair {k}: empty diff for different texts");
            continue;
        }
        let reparsed = UnifiedDiff::parse(&d.render()).map_err(|e| format!("pair {k}: reparse {e}"))?;
        ensure!(apply_diff(old, &reparsed).map_err(|e| e.to_string())? == *new, "pair {k}: reparsed differs");
    }
    Ok(format!("{} pairs byte-exact", pairs.len()))
}

fn diagnostics_gate() -> Result<String, String> {
    let nav = Navigator::new(Box::new(StubBackend::from_parts(Default::default(), BTreeMap::new())));
    let gate = Gate::new(&nav);
    let clean = read_fixture("gate/clean.py");
    let broken = read_fixture("gate/clean_broken.py");
    let a = gate.evaluate_content("m.py", &clean, &broken, None);
    ensure!(!a.accepted, "syntax error accepted");
    let b = gate.evaluate_content("m.py", &clean, &clean, None);
    ensure!(b.accepted, "no-op rejected");
    let dirty = read_fixture("gate/dirty.py");
    let fixed = read_fixture("gate/dirty_fixed.py");
    let c = gate.evaluate_content("m.py", &dirty, &fixed, None);
    ensure!(c.accepted, "error-reducing patch rejected: {:?}", c.new_diagnostics);
    ensure!(c.patched_count < c.baseline_count, "error count did not drop");
    Ok(format!("baseline {} -> patched {} on dirty fixture", c.baseline_count, c.patched_count))
}

fn dynamic_replay() -> Result<String, String> {
    let run = solve_seeded(&read_fixture("seeded/dynamic.replay"));
    let s = run.result.map_err(|e| e.to_string())?;
    ensure!(s.resolved && s.route.kind == RouteKind::Dynamic, "not resolved on the dynamic route");
    let outcomes: Vec<bool> = s
        .trace
        .events()
        .iter()
        .filter(|e| e.role == AgentRole::Tester && e.tool == Some(Tool::ReproductionScriptExecution))
        .map(|e| e.outcome == bugsmith::orchestrator::Outcome::Ok)
        .collect();
    ensure!(outcomes == [false, true], "reproduction outcomes {outcomes:?}");
    ensure!(
        normalize_ws(&s.diff.render()) == normalize_ws(&read_fixture("seeded/gold.diff")),
        "diff differs from gold:\n{}",
        s.diff.render()
    );
    Ok(format!("resolved in {} attempt(s)", s.attempts))
}

fn static_voting() -> Result<String, String> {
    let replay = read_fixture("seeded/static.replay");
    let mut seen = BTreeSet::new();
    for _ in 0..20 {
        let s = solve_seeded(&replay).result.map_err(|e| e.to_string())?;
        let v = s.votes.ok_or("no vote summary")?;
        ensure!(v.votes == 2 && v.pools[0] == [1, 2], "pools {:?}", v.pools);
        seen.insert((v.winner, s.diff.render()));
    }
    ensure!(seen.len() == 1, "winner varied: {seen:?}");
    Ok("candidate 2 wins with 2 votes in 20/20 runs".into())
}

fn navigator_cascade() -> Result<String, String> {
    let mut files = BTreeMap::new();
    files.insert("a.py".to_string(), "import b\n\n\ndef f():\n    return b.target()\n".to_string());
    files.insert("b.py".to_string(), "def target():\n    return 1\n".to_string());
    files.insert("c.py".to_string(), "x = 1\nonly_here = 2\n".to_string());
    let cases = [
        ("a.py", 5, "target", vec![], Tier::ExactLine, vec![Tier::ExactLine]),
        ("a.py", 3, "target", vec![], Tier::NearbyLine, vec![Tier::ExactLine, Tier::NearbyLine]),
        (
            "a.py",
            1,
            "only_here",
            vec!["b.py".to_string(), "c.py".to_string()],
            Tier::OpenedFiles,
            vec![Tier::ExactLine, Tier::NearbyLine, Tier::OpenedFiles],
        ),
    ];
    for (path, line, id, opened, want, attempts) in cases {
        let hint = PositionHint {
            path: path.into(),
            line,
            identifier: Some(id.into()),
            opened_files: opened,
        };
        let mut seen = Vec::new();
        let r = resolve_position_observed(&hint, &files, 3, &mut |t| seen.push(t)).map_err(|e| e.to_string())?;
        ensure!(r.tier == want, "{id}: tier {:?}", r.tier);
        ensure!(seen == attempts, "{id}: attempted {seen:?}");
    }
    Ok("ExactLine, NearbyLine and OpenedFiles each short-circuit".into())
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    walk(root, root)
}

fn walk(root: &Path, dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(walk(root, &p));
        } else {
            out.insert(p.strip_prefix(root).unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap());
        }
    }
    out
}

fn sandbox_isolation() -> Result<String, String> {
    let outer = tempfile::tempdir().map_err(|e| e.to_string())?;
    let repo = outer.path().join("repo");
    std::fs::create_dir(&repo).unwrap();
    std::fs::write(repo.join("app.py"), "print('hi')\n").unwrap();
    let before = tree(outer.path());
    let ws = Workspace::create(&repo).map_err(|e| e.to_string())?;
    let script = format!(
        "import os\nfor t in [{:?}, {:?}, '../pristine/app.py']:\n    try:\n        open(t, 'w').write('x')\n        print('wrote', t)\n    except OSError:\n        pass\nopen('app.py', 'w').write('modified\\n')\n",
        outer.path().join("escaped.txt"),
        repo.join("app.py")
    );
    ws.write_file("escape.py", &script).map_err(|e| e.to_string())?;
    let argv = vec!["python3".to_string(), "escape.py".to_string()];
    let r = SubprocessRunner::new()
        .execute(&ws, &argv, &Limits::default().with_timeout(Duration::from_secs(30)))
        .map_err(|e| e.to_string())?;
    ensure!(!r.stdout.contains("wrote"), "escape succeeded: {}", r.stdout);
    ensure!(tree(outer.path()) == before, "outer tree changed");
    ensure!(ws.read_file("app.py").map_err(|e| e.to_string())?.as_deref() == Some("modified\n"), "inner write failed");
    ws.reset().map_err(|e| e.to_string())?;
    ensure!(ws.is_pristine().map_err(|e| e.to_string())?, "not pristine after reset");
    ensure!(std::fs::read(ws.root().join("app.py")).unwrap() == b"print('hi')\n", "reset not byte-equal");
    ensure!(ws.capture_solution_diff().map_err(|e| e.to_string())?.patch.is_empty(), "diff after reset");
    Ok(format!("runner {}", SubprocessRunner::new().name()))
}

fn main() {
    let criteria: [(&str, Check, Duration); 10] = [
        ("permission_matrix", permission_matrix, Duration::from_secs(1)),
        ("go_packages_golden_graph", go_packages_graph, Duration::MAX),
        ("example_edit_round_trip", example_edit_round_trip, Duration::MAX),
        ("fuzzy_match_oracle", fuzzy_oracle, Duration::from_secs(30)),
        ("diff_round_trip", diff_round_trip, Duration::MAX),
        ("diagnostics_gate", diagnostics_gate, Duration::MAX),
        ("dynamic_loop_replay", dynamic_replay, Duration::from_secs(60)),
        ("static_voting_determinism", static_voting, Duration::MAX),
        ("navigator_cascade", navigator_cascade, Duration::MAX),
        ("sandbox_isolation_and_reset", sandbox_isolation, Duration::MAX),
    ];
    let mut failed = 0;
    for (name, check, limit) in criteria {
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = t.elapsed();
        let result = match result {
            Ok(detail) if took > limit => Err(format!("{detail}; took {took:?}, limit {limit:?}")),
            other => other,
        };
        match result {
            Ok(detail) => println!("PASS {name}: {detail} [{} ms]", took.as_millis()),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} [{} ms]", took.as_millis());
            }
        }
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
