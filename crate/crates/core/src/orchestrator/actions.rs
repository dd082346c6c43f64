//! Tool requests embedded in agent replies.
//!
//! An action is a line starting with `@` followed by a command name:
//!
//! ```text
//! @ckg <query>
//! @definition <path>:<line> [identifier]
//! @references <path>:<line> [identifier]
//! @open <path>[:<line>]
//! @find <glob>
//! @grep <regex> [-- <scope>]
//! @bash <command>
//! @reset
//! ```
//!
//! Lines inside code fences and edit blocks are never actions.

use super::roles::Tool;
use crate::patch::edit_block::{DIVIDER_MARKER, REPLACE_MARKER, SEARCH_MARKER};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Ckg { query: String },
    Definition { path: String, line: usize, identifier: Option<String> },
    References { path: String, line: usize, identifier: Option<String> },
    Open { path: String, line: Option<usize> },
    Find { pattern: String },
    Grep { pattern: String, scope: Option<String> },
    Bash { command: String },
    Reset,
}

impl Action {
    pub fn tool(&self) -> Tool {
        match self {
            Action::Ckg { .. } => Tool::Ckg,
            Action::Definition { .. } | Action::References { .. } => Tool::Lsp,
            Action::Open { .. } | Action::Find { .. } | Action::Grep { .. } => Tool::GeneralFileIndexing,
            Action::Bash { .. } => Tool::GeneralBashCommand,
            Action::Reset => Tool::ResetRepository,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Action::Ckg { .. } => "ckg",
            Action::Definition { .. } => "definition",
            Action::References { .. } => "references",
            Action::Open { .. } => "open",
            Action::Find { .. } => "find",
            Action::Grep { .. } => "grep",
            Action::Bash { .. } => "bash",
            Action::Reset => "reset",
        }
    }

    /// The action as it would appear in a reply.
    pub fn render(&self) -> String {
        let position = |path: &str, line: &usize, ident: &Option<String>| match ident {
            Some(i) => format!("{path}:{line} {i}"),
            None => format!("{path}:{line}"),
        };
        match self {
            Action::Ckg { query } => format!("@ckg {query}"),
            Action::Definition { path, line, identifier } => format!("@definition {}", position(path, line, identifier)),
            Action::References { path, line, identifier } => format!("@references {}", position(path, line, identifier)),
            Action::Open { path, line: None } => format!("@open {path}"),
            Action::Open { path, line: Some(l) } => format!("@open {path}:{l}"),
            Action::Find { pattern } => format!("@find {pattern}"),
            Action::Grep { pattern, scope: None } => format!("@grep {pattern}"),
            Action::Grep { pattern, scope: Some(s) } => format!("@grep {pattern} -- {s}"),
            Action::Bash { command } => format!("@bash {command}"),
            Action::Reset => "@reset".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionParseError {
    pub line: usize,
    pub message: String,
}

fn position(arg: &str) -> Option<(String, usize, Option<String>)> {
    let mut parts = arg.split_whitespace();
    let loc = parts.next()?;
    let ident = parts.next().map(str::to_string);
    if parts.next().is_some() {
        return None;
    }
    let (path, line) = loc.rsplit_once(':')?;
    let line: usize = line.parse().ok().filter(|l| *l >= 1)?;
    (!path.is_empty()).then(|| (path.to_string(), line, ident))
}

fn parse_line(body: &str) -> Result<Option<Action>, String> {
    let (name, arg) = match body.split_once(char::is_whitespace) {
        Some((n, a)) => (n, a.trim()),
        None => (body, ""),
    };
    let need = |what: &str| -> Result<String, String> {
        if arg.is_empty() {
            Err(format!("@{name} needs {what}"))
        } else {
            Ok(arg.to_string())
        }
    };
    let action = match name {
        "ckg" => Action::Ckg { query: need("a query")? },
        "definition" | "references" => {
            let (path, line, identifier) =
                position(arg).ok_or_else(|| format!("@{name} expects <path>:<line> [identifier]"))?;
            if name == "definition" {
                Action::Definition { path, line, identifier }
            } else {
                Action::References { path, line, identifier }
            }
        }
        "open" => {
            let arg = need("a path")?;
            match arg.rsplit_once(':').map(|(p, l)| (p, l.parse::<usize>())) {
                Some((p, Ok(l))) if l >= 1 && !p.is_empty() => Action::Open {
                    path: p.to_string(),
                    line: Some(l),
                },
                _ => Action::Open { path: arg, line: None },
            }
        }
        "find" => Action::Find { pattern: need("a glob")? },
        "grep" => {
            let arg = need("a pattern")?;
            match arg.split_once(" -- ") {
                Some((p, s)) => Action::Grep {
                    pattern: p.trim().to_string(),
                    scope: Some(s.trim().to_string()),
                },
                None => Action::Grep {
                    pattern: arg,
                    scope: None,
                },
            }
        }
        "bash" => Action::Bash { command: need("a command")? },
        "reset" => Action::Reset,
        _ => return Ok(None),
    };
    Ok(Some(action))
}

/// Actions found in `reply`, in order, plus lines that named a known
/// command with bad arguments. Unknown `@words` are ordinary text.
pub fn parse_actions(reply: &str) -> (Vec<Action>, Vec<ActionParseError>) {
    let mut actions = Vec::new();
    let mut errors = Vec::new();
    let mut in_fence = false;
    let mut in_block = false;
    for (i, raw) in reply.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with("```") {
            in_fence = !in_fence;
            continue;
        }
        if line == SEARCH_MARKER {
            in_block = true;
            continue;
        }
        if in_block {
            if line == REPLACE_MARKER {
                in_block = false;
            }
            continue;
        }
        if in_fence || line == DIVIDER_MARKER {
            continue;
        }
        let Some(body) = line.strip_prefix('@') else {
            continue;
        };
        match parse_line(body) {
            Ok(Some(a)) => actions.push(a),
            Ok(None) => {}
            Err(message) => errors.push(ActionParseError { line: i + 1, message }),
        }
    }
    (actions, errors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_each_command() {
        let reply = "Let me look.\n@ckg mean function\n@definition calc/stats.py:3 mean\n@references a.go:10\n@open calc/stats.py:4\n@open README\n@find **/*.py\n@grep def mean -- calc\n@grep foo\n@bash ls -la\n@reset\n@someone else\n";
        let (actions, errors) = parse_actions(reply);
        assert!(errors.is_empty());
        assert_eq!(
            actions,
            vec![
                Action::Ckg { query: "mean function".into() },
                Action::Definition { path: "calc/stats.py".into(), line: 3, identifier: Some("mean".into()) },
                Action::References { path: "a.go".into(), line: 10, identifier: None },
                Action::Open { path: "calc/stats.py".into(), line: Some(4) },
                Action::Open { path: "README".into(), line: None },
                Action::Find { pattern: "**/*.py".into() },
                Action::Grep { pattern: "def mean".into(), scope: Some("calc".into()) },
                Action::Grep { pattern: "foo".into(), scope: None },
                Action::Bash { command: "ls -la".into() },
                Action::Reset,
            ]
        );
        for a in &actions {
            assert_eq!(parse_actions(&a.render()).0, vec![a.clone()]);
        }
    }

    #[test]
    fn fenced_and_block_lines_are_not_actions() {
        let reply = "```python\n@reset\n```\nf.py\n<<<<<<< SEARCH\n@grep x\n=======\n@bash rm -rf /\n>>>>>>> REPLACE\n@find *.py\n";
        let (actions, _) = parse_actions(reply);
        assert_eq!(actions, vec![Action::Find { pattern: "*.py".into() }]);
    }

    #[test]
    fn bad_arguments_are_reported() {
        let (actions, errors) = parse_actions("@definition nowhere\n@ckg\n");
        assert!(actions.is_empty());
        assert_eq!(errors.iter().map(|e| e.line).collect::<Vec<_>>(), [1, 2]);
    }

    #[test]
    fn tools_follow_the_command() {
        assert_eq!(Action::Reset.tool(), Tool::ResetRepository);
        assert_eq!(Action::Find { pattern: "x".into() }.tool(), Tool::GeneralFileIndexing);
    }
}
