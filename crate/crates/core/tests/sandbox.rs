use bugsmith::sandbox::{Limits, Runner, SubprocessRunner, Workspace};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

/// Every file under `root` with its bytes.
fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

const ESCAPE: &str = r#"
import os, pathlib, sys
outer = sys.argv[1]
hits = []
for target in [os.path.join(outer, "pwned.txt"), os.path.join(outer, "repo", "app.py"), "../pristine/app.py", "../../pwned.txt"]:
    try:
        with open(target, "w") as f:
            f.write("escaped")
        hits.append(target)
    except OSError:
        pass
try:
    os.remove(os.path.join(outer, "repo", "app.py"))
    hits.append("remove")
except OSError:
    pass
pathlib.Path("app.py").write_text("changed inside\n")
print("escaped:", hits)
sys.exit(1 if hits else 0)
"#;

#[test]
fn escape_attempt_leaves_outer_tree_unchanged() {
    let outer = tempfile::tempdir().unwrap();
    let repo = outer.path().join("repo");
    std::fs::create_dir(&repo).unwrap();
    std::fs::write(repo.join("app.py"), "print('hi')\n").unwrap();
    let before = tree(outer.path());

    let ws = Workspace::create(&repo).unwrap();
    ws.write_file("escape.py", ESCAPE).unwrap();
    let argv: Vec<String> = ["python3", "escape.py", &outer.path().to_string_lossy()].iter().map(|s| s.to_string()).collect();
    let r = SubprocessRunner::new().execute(&ws, &argv, &Limits::default().with_timeout(Duration::from_secs(30))).unwrap();
    assert!(r.success(), "{}", r.summary());
    assert_eq!(tree(outer.path()), before);
    assert_eq!(ws.read_file("app.py").unwrap().unwrap(), "changed inside\n");

    ws.reset().unwrap();
    assert!(ws.is_pristine().unwrap());
    let restored: BTreeMap<_, _> = tree(ws.root()).into_iter().filter(|(k, _)| !k.starts_with(".bugsmith")).collect();
    let original: BTreeMap<_, _> = before
        .into_iter()
        .filter_map(|(k, v)| k.strip_prefix("repo/").map(|k| (k.to_string(), v)))
        .collect();
    assert_eq!(restored, original);
    assert!(ws.capture_solution_diff().unwrap().patch.is_empty());
}
