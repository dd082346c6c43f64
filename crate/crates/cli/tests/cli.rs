use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(rel)
}

fn bugsmith(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bugsmith"))
        .args(args)
        .env_remove("BUGSMITH_PROVIDER")
        .env_remove("BUGSMITH_ENDPOINT")
        .env_remove("BUGSMITH_REPLAY_SCRIPT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn copy_tree(from: &Path, to: &Path) {
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let dst = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            std::fs::create_dir_all(&dst).unwrap();
            copy_tree(&entry.path(), &dst);
        } else {
            std::fs::copy(entry.path(), dst).unwrap();
        }
    }
}

#[test]
fn edit_prints_the_expected_diff() {
    let repo = fixture("example");
    let o = bugsmith(&["--repo", s(&repo), "edit", s(&repo.join("edit.txt"))]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), std::fs::read_to_string(repo.join("expected.diff")).unwrap());
}

#[test]
fn edit_json_round_trips() {
    let repo = fixture("example");
    let o = bugsmith(&["--json", "--repo", s(&repo), "edit", s(&repo.join("edit.txt"))]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let again: serde_json::Value = serde_json::from_str(&v.to_string()).unwrap();
    assert_eq!(v, again);
    assert_eq!(v["diff"], std::fs::read_to_string(repo.join("expected.diff")).unwrap());
    assert_eq!(v["files"][0]["path"], "example.txt");
}

#[test]
fn unmatched_edit_exits_with_match_code() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.txt"), "alpha\nbeta\n").unwrap();
    let blocks = dir.path().join("blocks.txt");
    std::fs::write(&blocks, "a.txt\n<<<<<<< SEARCH\nzzz qqq www\n=======\nx\n>>>>>>> REPLACE\n").unwrap();
    let o = bugsmith(&["--repo", s(dir.path()), "edit", s(&blocks)]);
    assert_eq!(o.status.code(), Some(5));
    assert_eq!(std::fs::read_to_string(dir.path().join("a.txt")).unwrap(), "alpha\nbeta\n");
}

#[test]
fn solve_in_replay_mode_writes_the_diff() {
    let dir = tempfile::tempdir().unwrap();
    copy_tree(&fixture("seeded/repo"), dir.path());
    let out = dir.path().join("solution.diff");
    let trace = dir.path().join("trace.jsonl");
    let o = bugsmith(&[
        "--repo",
        s(dir.path()),
        "solve",
        "--issue",
        s(&fixture("seeded/issue.md")),
        "--replay",
        s(&fixture("seeded/dynamic.replay")),
        "--output",
        s(&out),
        "--trace",
        s(&trace),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let gold = std::fs::read_to_string(fixture("seeded/gold.diff")).unwrap();
    let norm = |t: &str| t.split_whitespace().collect::<Vec<_>>().join(" ");
    assert_eq!(norm(&std::fs::read_to_string(&out).unwrap()), norm(&gold));
    // Without --apply the repository is unchanged.
    let stats = std::fs::read_to_string(dir.path().join("calc/stats.py")).unwrap();
    assert!(stats.contains("(len(values) - 1)"));

    let t = bugsmith(&["--json", "trace", s(&trace)]);
    assert_eq!(t.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&t)).unwrap();
    assert!(!v["events"].as_array().unwrap().is_empty());
}

#[test]
fn solve_apply_patches_the_repository() {
    let dir = tempfile::tempdir().unwrap();
    copy_tree(&fixture("seeded/repo"), dir.path());
    let o = bugsmith(&[
        "--json",
        "--repo",
        s(dir.path()),
        "solve",
        "--issue",
        s(&fixture("seeded/issue.md")),
        "--replay",
        s(&fixture("seeded/static.replay")),
        "--apply",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["resolved"], true);
    assert_eq!(v["route"]["kind"], "static");
    assert_eq!(v["votes"]["winner"], 1);
    let stats = std::fs::read_to_string(dir.path().join("calc/stats.py")).unwrap();
    assert!(stats.contains("return total(values) / len(values)\n"));
}

#[test]
fn solve_without_provider_is_a_provider_error() {
    let o = bugsmith(&[
        "--repo",
        s(&fixture("seeded/repo")),
        "solve",
        "--issue",
        s(&fixture("seeded/issue.md")),
    ]);
    assert_eq!(o.status.code(), Some(9));
}

#[test]
fn query_without_graph_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bugsmith(&["--repo", s(dir.path()), "query", "anything"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bugsmith index"));
}

#[test]
fn index_then_query() {
    let dir = tempfile::tempdir().unwrap();
    copy_tree(&fixture("seeded/repo"), dir.path());
    let i = bugsmith(&["--json", "--repo", s(dir.path()), "index"]);
    assert_eq!(i.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&i)).unwrap();
    assert!(v["entities"].as_u64().unwrap() > 0);
    let q = bugsmith(&["--json", "--repo", s(dir.path()), "query", "mean of values", "--top-k", "2"]);
    assert_eq!(q.status.code(), Some(0));
    let rows: serde_json::Value = serde_json::from_str(&stdout(&q)).unwrap();
    assert_eq!(rows[0]["name"], "mean");
    assert!(rows.as_array().unwrap().len() <= 2);
}

#[test]
fn grep_and_find() {
    let repo = fixture("seeded/repo");
    let g = bugsmith(&["--repo", s(&repo), "grep", r"def \w+", "--scope", "calc"]);
    assert_eq!(g.status.code(), Some(0));
    assert!(stdout(&g).contains("calc/stats.py:11:1: def mean(values):"));
    let f = bugsmith(&["--repo", s(&repo), "find", "nothing_like_this*"]);
    assert_eq!(f.status.code(), Some(5));
    let bad = bugsmith(&["--repo", s(&repo), "grep", "("]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn diagnose_rejects_a_breaking_diff() {
    let dir = tempfile::tempdir().unwrap();
    copy_tree(&fixture("seeded/repo"), dir.path());
    let ok = bugsmith(&["--repo", s(dir.path()), "diagnose", s(&fixture("seeded/gold.diff"))]);
    assert_eq!(ok.status.code(), Some(0));
    let broken = std::fs::read_to_string(fixture("seeded/gold.diff"))
        .unwrap()
        .replace("+    return total(values) / len(values)", "+    return total(values) / len(values))");
    let path = dir.path().join("broken.diff");
    std::fs::write(&path, broken).unwrap();
    let o = bugsmith(&["--json", "--repo", s(dir.path()), "diagnose", s(&path)]);
    assert_eq!(o.status.code(), Some(6));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["accepted"], false);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(bugsmith(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(bugsmith(&["solve"]).status.code(), Some(2));
    assert_eq!(bugsmith(&["--radius", "99", "find", "*"]).status.code(), Some(2));
    assert_eq!(bugsmith(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_and_flags_layer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bugsmith.toml");
    std::fs::write(&cfg, "fuzzy_threshold = 2.0\n").unwrap();
    let repo = fixture("example");
    let args = ["--config", s(&cfg), "--repo", s(&repo), "edit"];
    let bad = bugsmith(&[&args[..], &[s(&repo.join("edit.txt"))]].concat());
    assert_eq!(bad.status.code(), Some(2));
    let fixed = bugsmith(&[&args[..], &["--fuzzy-threshold", "0.9", s(&repo.join("edit.txt"))]].concat());
    assert_eq!(fixed.status.code(), Some(0));
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    assert_eq!(bugsmith(&[&args[..], &[s(&repo.join("edit.txt"))]].concat()).status.code(), Some(4));
}
