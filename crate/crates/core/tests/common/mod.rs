#![allow(dead_code)]

use bugsmith::ckg::build_graph;
use bugsmith::lang::LanguageTag;
use bugsmith::navigator::{Navigator, StubBackend};
use bugsmith::orchestrator::{solve, IssueTask, OrchestratorError, ScriptedProvider, Session, Solution, Toolbox};
use bugsmith::sandbox::{SubprocessRunner, Workspace};
use std::path::{Path, PathBuf};

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

/// Collapses every whitespace run so diffs compare by content.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub struct Run {
    pub workspace: Workspace,
    pub result: Result<Solution, OrchestratorError>,
    pub provider: ScriptedProvider,
}

/// Runs the full pipeline on a fresh copy of the seeded-bug repository.
pub fn solve_seeded(replay: &str) -> Run {
    let task = IssueTask::parse(&read_fixture("seeded/issue.md")).expect("issue");
    let provider = ScriptedProvider::parse(replay).expect("replay script");
    let workspace = Workspace::create(&fixture("seeded/repo")).expect("workspace");
    let result = {
        let graph = build_graph(workspace.root(), &[LanguageTag::Python]).expect("graph").graph;
        let stub = StubBackend::open(workspace.root(), &[LanguageTag::Python]).expect("stub");
        let navigator = Navigator::new(Box::new(stub));
        let runner = SubprocessRunner::new();
        let tools = Toolbox::new(&workspace, &graph, &navigator, &runner);
        let mut session = Session::new(&task, tools, &provider);
        solve(&task, &mut session, 4)
    };
    Run {
        workspace,
        result,
        provider,
    }
}
