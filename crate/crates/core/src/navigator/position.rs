//! Fuzzy position resolution: exact line, nearby lines, then opened files.

use super::{NavError, PositionHint, ResolvedPosition, Snapshot, Tier};

pub const DEFAULT_RADIUS: usize = 3;

const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "case", "chan", "class", "const",
    "continue", "def", "default", "defer", "del", "elif", "else", "except", "fallthrough", "finally", "for", "func",
    "global", "go", "goto", "if", "import", "in", "interface", "is", "lambda", "map", "match", "nonlocal", "not",
    "or", "package", "pass", "raise", "range", "return", "select", "struct", "switch", "try", "type", "var",
    "while", "with", "yield",
];

/// An identifier token on one line; `column` is 1-based in characters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub column: usize,
}

#[derive(Debug, Clone, Copy)]
struct CommentStyle {
    hash: bool,
    slashes: bool,
}

fn comment_style(path: &str) -> CommentStyle {
    match path.rsplit_once('.').map(|(_, e)| e) {
        Some("py" | "pyi" | "sh" | "toml" | "yaml" | "yml") => CommentStyle {
            hash: true,
            slashes: false,
        },
        Some("go" | "rs" | "c" | "h" | "cc" | "cpp" | "java" | "js" | "ts") => CommentStyle {
            hash: false,
            slashes: true,
        },
        _ => CommentStyle {
            hash: true,
            slashes: true,
        },
    }
}

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.binary_search(&word).is_ok()
}

pub fn is_identifier(word: &str) -> bool {
    let mut chars = word.chars();
    chars.next().is_some_and(|c| c == '_' || c.is_alphabetic())
        && chars.all(|c| c == '_' || c.is_alphanumeric())
}

/// Identifier tokens of a line, skipping string literals and comments.
/// Keywords are included; callers filter them when no identifier is given.
pub fn line_tokens(path: &str, line: &str) -> Vec<Token> {
    let style = comment_style(path);
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if (style.hash && c == '#') || (style.slashes && c == '/' && chars.get(i + 1) == Some(&'/')) {
            break;
        }
        if style.slashes && c == '/' && chars.get(i + 1) == Some(&'*') {
            i += 2;
            while i < chars.len() && !(chars[i] == '*' && chars.get(i + 1) == Some(&'/')) {
                i += 1;
            }
            i += 2;
            continue;
        }
        if matches!(c, '"' | '\'' | '`') {
            i += 1;
            while i < chars.len() && chars[i] != c {
                if chars[i] == '\\' {
                    i += 1;
                }
                i += 1;
            }
            i += 1;
            continue;
        }
        if c == '_' || c.is_alphabetic() {
            let start = i;
            while i < chars.len() && (chars[i] == '_' || chars[i].is_alphanumeric()) {
                i += 1;
            }
            out.push(Token {
                text: chars[start..i].iter().collect(),
                column: start + 1,
            });
            continue;
        }
        if c.is_ascii_digit() {
            while i < chars.len() && (chars[i] == '_' || chars[i] == '.' || chars[i].is_alphanumeric()) {
                i += 1;
            }
            continue;
        }
        i += 1;
    }
    out
}

/// The identifier token covering `column` on `line`, if any.
pub fn token_at(path: &str, line: &str, column: usize) -> Option<Token> {
    line_tokens(path, line)
        .into_iter()
        .find(|t| t.column <= column && column < t.column + t.text.chars().count())
}

struct Hit {
    distance: usize,
    line: usize,
    token: Token,
}

/// Picks the best hit among `hits`. With an identifier the nearest line then
/// lowest column wins; without one, several equally near hits are ambiguous.
fn choose(hits: Vec<Hit>, tier: Tier, named: bool) -> Result<Option<Hit>, NavError> {
    let Some(min) = hits.iter().map(|h| h.distance).min() else {
        return Ok(None);
    };
    let mut nearest: Vec<Hit> = hits.into_iter().filter(|h| h.distance == min).collect();
    nearest.sort_by_key(|h| (h.token.column, h.line));
    if !named && nearest.len() > 1 {
        let mut candidates: Vec<String> = nearest.iter().map(|h| h.token.text.clone()).collect();
        candidates.dedup();
        return Err(NavError::AmbiguousIdentifier { tier, candidates });
    }
    Ok(nearest.into_iter().next())
}

fn candidates_on(path: &str, text: &str, identifier: Option<&str>) -> Vec<Token> {
    line_tokens(path, text)
        .into_iter()
        .filter(|t| match identifier {
            Some(id) => t.text == id,
            None => !is_keyword(&t.text),
        })
        .collect()
}

/// Resolves a hint to a concrete identifier position.
pub fn resolve_position(hint: &PositionHint, snapshot: &dyn Snapshot, radius: usize) -> Result<ResolvedPosition, NavError> {
    resolve_position_observed(hint, snapshot, radius, &mut |_| {})
}

/// As [`resolve_position`], reporting each tier as it is attempted.
pub fn resolve_position_observed(
    hint: &PositionHint,
    snapshot: &dyn Snapshot,
    radius: usize,
    observe: &mut dyn FnMut(Tier),
) -> Result<ResolvedPosition, NavError> {
    if hint.line == 0 {
        return Err(NavError::InvalidHint("line numbers start at 1".into()));
    }
    if let Some(id) = &hint.identifier {
        if !is_identifier(id) {
            return Err(NavError::InvalidHint(format!("`{id}` is not a single identifier token")));
        }
    }
    let content = snapshot.read(&hint.path);
    if content.is_none() && hint.opened_files.is_empty() {
        return Err(NavError::InvalidHint(format!("`{}` is not in the snapshot", hint.path)));
    }
    let identifier = hint.identifier.as_deref();
    let found = |tier: Tier, path: &str, hit: Hit| ResolvedPosition {
        path: path.to_string(),
        line: hit.line,
        column: hit.token.column,
        identifier: hit.token.text,
        tier,
    };

    if let Some(content) = &content {
        let lines: Vec<&str> = content.lines().collect();
        observe(Tier::ExactLine);
        if let Some(text) = lines.get(hint.line - 1) {
            let hits = candidates_on(&hint.path, text, identifier)
                .into_iter()
                .map(|token| Hit {
                    distance: 0,
                    line: hint.line,
                    token,
                })
                .collect();
            if let Some(hit) = choose(hits, Tier::ExactLine, identifier.is_some())? {
                return Ok(found(Tier::ExactLine, &hint.path, hit));
            }
        }

        observe(Tier::NearbyLine);
        let lo = hint.line.saturating_sub(radius).max(1);
        let hi = (hint.line + radius).min(lines.len());
        let mut hits = Vec::new();
        for line in (lo..=hi).filter(|&l| l != hint.line) {
            hits.extend(candidates_on(&hint.path, lines[line - 1], identifier).into_iter().map(|token| Hit {
                distance: line.abs_diff(hint.line),
                line,
                token,
            }));
        }
        if let Some(hit) = choose(hits, Tier::NearbyLine, identifier.is_some())? {
            return Ok(found(Tier::NearbyLine, &hint.path, hit));
        }
    }

    if let Some(id) = identifier {
        observe(Tier::OpenedFiles);
        for path in &hint.opened_files {
            let Some(text) = snapshot.read(path) else {
                continue;
            };
            for (i, line) in text.lines().enumerate() {
                if let Some(token) = candidates_on(path, line, Some(id)).into_iter().next() {
                    return Ok(found(
                        Tier::OpenedFiles,
                        path,
                        Hit {
                            distance: 0,
                            line: i + 1,
                            token,
                        },
                    ));
                }
            }
        }
    }
    Err(NavError::NoIdentifierFound)
}
