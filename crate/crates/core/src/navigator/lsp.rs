//! Language-server backend over stdio JSON-RPC.
//!
//! Positions inside this crate are 1-based with character columns; on the
//! wire they are 0-based with UTF-16 columns.

use super::{relative_to, Diagnostic, NavError, NavLocation, NavigationBackend, ResolvedPosition, Severity};
use serde_json::{json, Value};
use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

/// Writes one `Content-Length` framed message.
pub fn write_frame<W: Write>(out: &mut W, message: &Value) -> io::Result<()> {
    let body = serde_json::to_vec(message)?;
    write!(out, "Content-Length: {}\r\n\r\n", body.len())?;
    out.write_all(&body)?;
    out.flush()
}

/// Reads one framed message; `None` at a clean end of stream.
pub fn read_frame<R: BufRead>(input: &mut R) -> io::Result<Option<Value>> {
    let mut length = None;
    let mut saw_header = false;
    loop {
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            return if saw_header {
                Err(io::Error::new(io::ErrorKind::UnexpectedEof, "stream ended inside a header"))
            } else {
                Ok(None)
            };
        }
        saw_header = true;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.trim().eq_ignore_ascii_case("content-length") {
                length = value.trim().parse::<usize>().ok();
            }
        }
    }
    let length = length.ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "missing Content-Length"))?;
    let mut body = vec![0; length];
    input.read_exact(&mut body)?;
    Ok(Some(serde_json::from_slice(&body)?))
}

/// UTF-16 offset of the 0-based character column `chars` in `line`.
pub fn utf16_offset(line: &str, chars: usize) -> usize {
    line.chars().take(chars).map(char::len_utf16).sum()
}

/// 0-based character column of the UTF-16 offset `units` in `line`.
pub fn char_offset(line: &str, units: usize) -> usize {
    let mut seen = 0;
    for (i, c) in line.chars().enumerate() {
        if seen >= units {
            return i;
        }
        seen += c.len_utf16();
    }
    line.chars().count()
}

fn is_uri_safe(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'/' | b'-' | b'_' | b'.' | b'~')
}

pub fn path_to_uri(path: &Path) -> String {
    let mut out = String::from("file://");
    for &b in path.to_string_lossy().as_bytes() {
        if is_uri_safe(b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

pub fn uri_to_path(uri: &str) -> Option<PathBuf> {
    let rest = uri.strip_prefix("file://")?;
    let bytes = rest.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            let hex = std::str::from_utf8(bytes.get(i + 1..i + 3)?).ok()?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    Some(PathBuf::from(String::from_utf8(out).ok()?))
}

fn language_id(path: &str) -> &'static str {
    match path.rsplit_once('.').map(|(_, e)| e) {
        Some("py" | "pyi") => "python",
        Some("go") => "go",
        _ => "plaintext",
    }
}

#[derive(Debug, Clone)]
pub struct LspConfig {
    /// Server program followed by its arguments.
    pub command: Vec<String>,
    pub root: PathBuf,
    pub request_timeout: Duration,
    pub diagnostics_timeout: Duration,
    /// Quiet period after the first publication before diagnostics are final.
    pub diagnostics_settle: Duration,
}

impl LspConfig {
    pub fn new(command: Vec<String>, root: impl Into<PathBuf>) -> Self {
        LspConfig {
            command,
            root: root.into(),
            request_timeout: Duration::from_secs(30),
            diagnostics_timeout: Duration::from_secs(30),
            diagnostics_settle: Duration::from_millis(150),
        }
    }
}

struct Doc {
    version: i64,
    content: String,
    /// Publication counter value when this version was sent.
    sent_at: u64,
}

struct Published {
    seq: u64,
    version: Option<i64>,
    items: Vec<Value>,
}

pub struct LspBackend {
    config: LspConfig,
    root: PathBuf,
    child: Child,
    stdin: ChildStdin,
    incoming: Receiver<Value>,
    next_id: i64,
    docs: HashMap<String, Doc>,
    published: HashMap<String, Published>,
    publications: u64,
}

impl LspBackend {
    /// Spawns the server and performs the initialize handshake.
    pub fn start(config: LspConfig) -> Result<Self, NavError> {
        let (program, args) = config
            .command
            .split_first()
            .ok_or_else(|| NavError::BackendUnavailable("no language server command configured".into()))?;
        let root = config
            .root
            .canonicalize()
            .map_err(|e| NavError::BackendUnavailable(format!("{}: {e}", config.root.display())))?;
        let mut child = Command::new(program)
            .args(args)
            .current_dir(&root)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| NavError::BackendUnavailable(format!("cannot start `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, incoming) = mpsc::channel();
        std::thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            while let Ok(Some(msg)) = read_frame(&mut reader) {
                if tx.send(msg).is_err() {
                    break;
                }
            }
        });
        let mut backend = LspBackend {
            config,
            root,
            child,
            stdin,
            incoming,
            next_id: 1,
            docs: HashMap::new(),
            published: HashMap::new(),
            publications: 0,
        };
        let root_uri = path_to_uri(&backend.root);
        backend.request(
            "initialize",
            json!({
                "processId": std::process::id(),
                "rootUri": root_uri,
                "rootPath": backend.root.to_string_lossy(),
                "workspaceFolders": [{"uri": root_uri, "name": "workspace"}],
                "capabilities": {
                    "general": {"positionEncodings": ["utf-16"]},
                    "textDocument": {
                        "synchronization": {"didSave": false},
                        "definition": {"linkSupport": true},
                        "references": {},
                        "publishDiagnostics": {"versionSupport": true},
                    },
                },
            }),
        )?;
        backend.notify("initialized", json!({}))?;
        Ok(backend)
    }

    fn send(&mut self, message: &Value) -> Result<(), NavError> {
        write_frame(&mut self.stdin, message).map_err(|e| NavError::BackendUnavailable(format!("write failed: {e}")))
    }

    fn notify(&mut self, method: &str, params: Value) -> Result<(), NavError> {
        self.send(&json!({"jsonrpc": "2.0", "method": method, "params": params}))
    }

    /// Handles one incoming message that is not the awaited response.
    fn dispatch(&mut self, msg: Value) {
        let method = msg.get("method").and_then(Value::as_str).map(str::to_string);
        match (method.as_deref(), msg.get("id")) {
            (Some(_), Some(id)) => {
                // Server-to-client request: decline politely.
                let reply = json!({"jsonrpc": "2.0", "id": id.clone(), "result": null});
                let _ = self.send(&reply);
            }
            (Some("textDocument/publishDiagnostics"), None) => {
                let params = &msg["params"];
                if let Some(uri) = params["uri"].as_str() {
                    self.publications += 1;
                    self.published.insert(
                        uri.to_string(),
                        Published {
                            seq: self.publications,
                            version: params["version"].as_i64(),
                            items: params["diagnostics"].as_array().cloned().unwrap_or_default(),
                        },
                    );
                }
            }
            _ => {}
        }
    }

    fn recv(&mut self, deadline: Instant, timeout: Duration) -> Result<Value, NavError> {
        let wait = deadline.saturating_duration_since(Instant::now());
        match self.incoming.recv_timeout(wait) {
            Ok(v) => Ok(v),
            Err(RecvTimeoutError::Timeout) => Err(NavError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(NavError::BackendUnavailable("language server exited".into())),
        }
    }

    fn request(&mut self, method: &str, params: Value) -> Result<Value, NavError> {
        let id = self.next_id;
        self.next_id += 1;
        self.send(&json!({"jsonrpc": "2.0", "id": id, "method": method, "params": params}))?;
        let timeout = self.config.request_timeout;
        let deadline = Instant::now() + timeout;
        loop {
            let msg = self.recv(deadline, timeout)?;
            if msg.get("method").is_none() && msg.get("id").and_then(Value::as_i64) == Some(id) {
                if let Some(err) = msg.get("error") {
                    return Err(NavError::Protocol(format!("{method}: {err}")));
                }
                return Ok(msg.get("result").cloned().unwrap_or(Value::Null));
            }
            self.dispatch(msg);
        }
    }

    fn uri(&self, path: &str) -> String {
        path_to_uri(&self.root.join(path))
    }

    /// Makes the server's view of `path` equal to `content`.
    fn sync(&mut self, path: &str, content: &str) -> Result<(), NavError> {
        let uri = self.uri(path);
        let sent_at = self.publications;
        match self.docs.get_mut(path) {
            None => {
                self.docs.insert(
                    path.to_string(),
                    Doc {
                        version: 1,
                        content: content.to_string(),
                        sent_at,
                    },
                );
                self.notify(
                    "textDocument/didOpen",
                    json!({"textDocument": {"uri": uri, "languageId": language_id(path), "version": 1, "text": content}}),
                )
            }
            Some(doc) if doc.content == content => Ok(()),
            Some(doc) => {
                doc.version += 1;
                doc.content = content.to_string();
                doc.sent_at = sent_at;
                let version = doc.version;
                self.notify(
                    "textDocument/didChange",
                    json!({"textDocument": {"uri": uri, "version": version}, "contentChanges": [{"text": content}]}),
                )
            }
        }
    }

    fn disk_text(&self, path: &str) -> Option<String> {
        crate::index::read_text(&self.root.join(path)).ok().flatten()
    }

    fn text_of(&self, path: &str) -> Option<String> {
        self.docs.get(path).map(|d| d.content.clone()).or_else(|| self.disk_text(path))
    }

    fn position_request(&mut self, method: &str, pos: &ResolvedPosition, extra: Value) -> Result<Value, NavError> {
        let out_of_range = || NavError::PositionOutOfRange {
            path: pos.path.clone(),
            line: pos.line,
            column: pos.column,
        };
        let text = self.disk_text(&pos.path).ok_or_else(out_of_range)?;
        let line = pos
            .line
            .checked_sub(1)
            .and_then(|i| text.lines().nth(i))
            .ok_or_else(out_of_range)?;
        if pos.column == 0 || pos.column > line.chars().count() + 1 {
            return Err(out_of_range());
        }
        let character = utf16_offset(line, pos.column - 1);
        self.sync(&pos.path, &text)?;
        let mut params = json!({
            "textDocument": {"uri": self.uri(&pos.path)},
            "position": {"line": pos.line - 1, "character": character},
        });
        if let (Some(p), Some(e)) = (params.as_object_mut(), extra.as_object()) {
            p.extend(e.clone());
        }
        self.request(method, params)
    }

    fn to_location(&self, v: &Value) -> Option<NavLocation> {
        let (uri, range) = match v.get("targetUri") {
            Some(u) => (u.as_str()?, v.get("targetSelectionRange").or_else(|| v.get("targetRange"))?),
            None => (v.get("uri")?.as_str()?, v.get("range")?),
        };
        let abs = uri_to_path(uri)?;
        let path = relative_to(&self.root, &abs).unwrap_or_else(|| abs.to_string_lossy().into_owned());
        let line0 = range["start"]["line"].as_u64()? as usize;
        let units = range["start"]["character"].as_u64()? as usize;
        let column0 = match self.text_of(&path).or_else(|| std::fs::read_to_string(&abs).ok()) {
            Some(text) => text.lines().nth(line0).map_or(units, |l| char_offset(l, units)),
            None => units,
        };
        Some(NavLocation {
            path,
            line: line0 + 1,
            column: column0 + 1,
        })
    }

    fn locations(&self, result: &Value) -> Vec<NavLocation> {
        match result {
            Value::Array(items) => items.iter().filter_map(|v| self.to_location(v)).collect(),
            Value::Object(_) => self.to_location(result).into_iter().collect(),
            _ => Vec::new(),
        }
    }
}

fn to_diagnostic(path: &str, v: &Value) -> Diagnostic {
    let severity = match v["severity"].as_u64() {
        Some(2) => Severity::Warning,
        Some(3) => Severity::Info,
        Some(4) => Severity::Hint,
        _ => Severity::Error,
    };
    let code = match &v["code"] {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    };
    Diagnostic {
        path: path.to_string(),
        line: v["range"]["start"]["line"].as_u64().unwrap_or(0) as usize + 1,
        severity,
        code,
        message: v["message"].as_str().unwrap_or_default().to_string(),
    }
}

impl NavigationBackend for LspBackend {
    fn name(&self) -> &str {
        "lsp"
    }

    fn definition(&mut self, pos: &ResolvedPosition) -> Result<Vec<NavLocation>, NavError> {
        let result = self.position_request("textDocument/definition", pos, json!({}))?;
        Ok(self.locations(&result))
    }

    fn references(&mut self, pos: &ResolvedPosition) -> Result<Vec<NavLocation>, NavError> {
        let result = self.position_request(
            "textDocument/references",
            pos,
            json!({"context": {"includeDeclaration": false}}),
        )?;
        Ok(self.locations(&result))
    }

    fn diagnostics(&mut self, path: &str, content: &str) -> Result<Vec<Diagnostic>, NavError> {
        self.sync(path, content)?;
        let uri = self.uri(path);
        let (version, sent_at) = {
            let d = &self.docs[path];
            (d.version, d.sent_at)
        };
        let fresh = |p: &Published| p.seq > sent_at && p.version.is_none_or(|v| v == version);
        let timeout = self.config.diagnostics_timeout;
        let deadline = Instant::now() + timeout;
        while !self.published.get(&uri).is_some_and(fresh) {
            let msg = self.recv(deadline, timeout)?;
            self.dispatch(msg);
        }
        // Later publications for the same version replace earlier ones.
        loop {
            let settle = Instant::now() + self.config.diagnostics_settle;
            match self.recv(settle, self.config.diagnostics_settle) {
                Ok(msg) => self.dispatch(msg),
                Err(NavError::Timeout(_)) => break,
                Err(e) => return Err(e),
            }
        }
        Ok(self.published[&uri].items.iter().map(|v| to_diagnostic(path, v)).collect())
    }

    fn file_changed(&mut self, path: &str, content: Option<&str>) -> Result<(), NavError> {
        match content {
            Some(c) if self.docs.contains_key(path) => self.sync(path, c),
            Some(_) => Ok(()),
            None => {
                if self.docs.remove(path).is_some() {
                    let uri = self.uri(path);
                    self.notify("textDocument/didClose", json!({"textDocument": {"uri": uri}}))?;
                }
                Ok(())
            }
        }
    }
}

impl Drop for LspBackend {
    fn drop(&mut self) {
        self.config.request_timeout = Duration::from_secs(2);
        if self.request("shutdown", Value::Null).is_ok() {
            let _ = self.notify("exit", Value::Null);
        }
        let deadline = Instant::now() + Duration::from_secs(1);
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
