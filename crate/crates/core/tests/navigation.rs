mod common;

use bugsmith::gate::Gate;
use bugsmith::navigator::lsp::{LspBackend, LspConfig};
use bugsmith::navigator::{
    resolve_position_observed, DirSnapshot, NavKind, NavLocation, Navigator, PositionHint, Severity, Tier,
};
use common::fixture;
use std::collections::BTreeMap;
use std::path::Path;

fn copy_repo(dst: &Path) {
    for rel in ["main.py", "pkg/__init__.py", "pkg/util.py"] {
        let to = dst.join(rel);
        std::fs::create_dir_all(to.parent().unwrap()).unwrap();
        std::fs::copy(fixture("nav/repo").join(rel), to).unwrap();
    }
}

fn lsp_navigator(root: &Path) -> Navigator {
    let server = fixture("nav/fake_lsp.py").to_string_lossy().into_owned();
    let backend = LspBackend::start(LspConfig::new(vec!["python3".into(), server], root)).expect("server starts");
    Navigator::new(Box::new(backend))
}

fn hint(path: &str, line: usize, id: &str) -> PositionHint {
    PositionHint {
        path: path.into(),
        line,
        identifier: Some(id.into()),
        opened_files: Vec::new(),
    }
}

fn loc(path: &str, line: usize, column: usize) -> NavLocation {
    NavLocation {
        path: path.into(),
        line,
        column,
    }
}

#[test]
fn lsp_definition_and_references() {
    let dir = tempfile::tempdir().unwrap();
    copy_repo(dir.path());
    let nav = lsp_navigator(dir.path());
    let snap = DirSnapshot::new(dir.path());

    let call = nav.resolve(&hint("main.py", 5, "helper"), &snap).unwrap();
    assert_eq!((call.line, call.column, call.tier), (5, 12, Tier::ExactLine));
    assert_eq!(nav.navigate(NavKind::Definition, &call).unwrap(), [loc("pkg/util.py", 1, 5)]);

    let def = nav.resolve(&hint("pkg/util.py", 1, "helper"), &snap).unwrap();
    let refs = nav.navigate(NavKind::References, &def).unwrap();
    assert_eq!(refs, [loc("main.py", 1, 22), loc("main.py", 5, 12), loc("main.py", 5, 24)]);
}

#[test]
fn lsp_diagnostics_drive_the_gate() {
    let dir = tempfile::tempdir().unwrap();
    copy_repo(dir.path());
    let nav = lsp_navigator(dir.path());
    let original = std::fs::read_to_string(dir.path().join("pkg/util.py")).unwrap();
    let gate = Gate::new(&nav);

    let broken = original.replace("x * 2", "x * 2  # ERROR");
    let v = gate.evaluate_content("pkg/util.py", &original, &broken, None);
    assert!(!v.accepted);
    let blocking: Vec<_> = v.blocking().collect();
    assert_eq!(blocking.len(), 1);
    assert_eq!((blocking[0].line, blocking[0].severity), (2, Severity::Error));

    let fine = original.replace("x * 2", "2 * x");
    assert!(gate.evaluate_content("pkg/util.py", &original, &fine, None).accepted);
    // Diagnostics are simulated: nothing was written.
    assert_eq!(std::fs::read_to_string(dir.path().join("pkg/util.py")).unwrap(), original);
}

#[test]
fn missing_server_is_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    let err = LspBackend::start(LspConfig::new(vec!["/nonexistent/language-server".into()], dir.path()));
    assert!(matches!(err, Err(bugsmith::navigator::NavError::BackendUnavailable(_))));
}

/// Resolves `h`, recording the order in which tiers are attempted.
fn observed(h: &PositionHint, files: &BTreeMap<String, String>) -> (Tier, usize, Vec<Tier>) {
    let mut seen = Vec::new();
    let r = resolve_position_observed(h, files, 3, &mut |t| seen.push(t)).unwrap();
    (r.tier, r.line, seen)
}

#[test]
fn cascade_tiers_short_circuit() {
    let mut files = BTreeMap::new();
    files.insert("a.py".to_string(), "import b\n\n\ndef f():\n    return b.target()\n".to_string());
    files.insert("b.py".to_string(), "def target():\n    return 1\n".to_string());

    assert_eq!(observed(&hint("a.py", 5, "target"), &files), (Tier::ExactLine, 5, vec![Tier::ExactLine]));
    assert_eq!(
        observed(&hint("a.py", 3, "target"), &files),
        (Tier::NearbyLine, 5, vec![Tier::ExactLine, Tier::NearbyLine])
    );
    let mut h = hint("a.py", 1, "missing_here");
    files.insert("c.py".to_string(), "x = 1\nmissing_here = 2\n".to_string());
    h.opened_files = vec!["b.py".into(), "c.py".into()];
    let (tier, line, seen) = observed(&h, &files);
    assert_eq!((tier, line), (Tier::OpenedFiles, 2));
    assert_eq!(seen, [Tier::ExactLine, Tier::NearbyLine, Tier::OpenedFiles]);
}
