//! Isolated command execution, reproduction scripts and workspace reset.

pub mod container;
pub mod subprocess;
pub mod workspace;

pub use container::ContainerRunner;
pub use subprocess::SubprocessRunner;
pub use workspace::{checked_relative, is_ignored, SolutionDiff, Workspace};

use serde::{Deserialize, Serialize};
use std::io::Read;
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

/// Directory inside every workspace that is excluded from snapshots and diffs.
pub const RESERVED_DIR: &str = ".bugsmith";
/// Where reproduction scripts are written, relative to the workspace root.
pub const REPRODUCTION_SCRIPT: &str = ".bugsmith/reproduce";

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);
pub const DEFAULT_OUTPUT_CAP: usize = 1 << 20;
/// Exit code reported for a command killed on timeout (128 + SIGKILL).
pub const TIMEOUT_EXIT_CODE: i32 = 137;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub exit_code: i32,
    pub stdout: String,
    pub stderr: String,
    /// Wall-clock seconds.
    pub duration: f64,
    pub timed_out: bool,
    #[serde(default)]
    pub stdout_truncated: bool,
    #[serde(default)]
    pub stderr_truncated: bool,
}

impl ExecutionResult {
    pub fn success(&self) -> bool {
        self.exit_code == 0 && !self.timed_out
    }

    /// Output as shown to agents, with the exit status appended.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        if !self.stdout.is_empty() {
            s.push_str("stdout:\n");
            s.push_str(&self.stdout);
            if !self.stdout.ends_with('\n') {
                s.push('\n');
            }
        }
        if !self.stderr.is_empty() {
            s.push_str("stderr:\n");
            s.push_str(&self.stderr);
            if !self.stderr.ends_with('\n') {
                s.push('\n');
            }
        }
        if self.timed_out {
            s.push_str(&format!("timed out after {:.1}s\n", self.duration));
        }
        s.push_str(&format!("exit code: {}\n", self.exit_code));
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    #[serde(with = "secs")]
    pub timeout: Duration,
    /// Bytes kept per output stream.
    pub output_cap: usize,
    /// Address-space limit for the command, if any.
    pub memory_bytes: Option<u64>,
    /// Largest file the command may write.
    pub file_size_bytes: Option<u64>,
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            timeout: DEFAULT_TIMEOUT,
            output_cap: DEFAULT_OUTPUT_CAP,
            memory_bytes: None,
            file_size_bytes: Some(256 << 20),
        }
    }
}

impl Limits {
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SandboxError {
    #[error("sandbox unavailable: {0}")]
    SandboxUnavailable(String),
    #[error("failed to start `{program}`: {source}")]
    SpawnFailure { program: String, source: std::io::Error },
    #[error("empty command")]
    EmptyCommand,
    #[error("reproduction script is empty")]
    EmptyScript,
    #[error("pristine snapshot missing: {0}")]
    SnapshotMissing(PathBuf),
    #[error("path `{0}` escapes the workspace")]
    PathEscape(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Executes commands inside a workspace under some isolation regime.
pub trait Runner: Send + Sync {
    fn name(&self) -> &str;
    fn execute(&self, ws: &Workspace, argv: &[String], limits: &Limits) -> Result<ExecutionResult, SandboxError>;
}

/// Writes `script` to the reserved path and runs it with `interpreter`.
pub fn run_reproduction(
    runner: &dyn Runner,
    ws: &Workspace,
    script: &str,
    interpreter: &[String],
    limits: &Limits,
) -> Result<ExecutionResult, SandboxError> {
    if script.trim().is_empty() {
        return Err(SandboxError::EmptyScript);
    }
    if interpreter.is_empty() {
        return Err(SandboxError::EmptyCommand);
    }
    ws.write_file(REPRODUCTION_SCRIPT, script)?;
    let mut argv = interpreter.to_vec();
    argv.push(REPRODUCTION_SCRIPT.to_string());
    runner.execute(ws, &argv, limits)
}

fn drain<R: Read + Send + 'static>(mut r: R, cap: usize) -> std::thread::JoinHandle<(Vec<u8>, bool)> {
    std::thread::spawn(move || {
        let mut kept = Vec::new();
        let mut truncated = false;
        let mut buf = [0u8; 8192];
        loop {
            match r.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(kept.len());
                    if n > room {
                        truncated = true;
                    }
                    kept.extend_from_slice(&buf[..n.min(room)]);
                }
            }
        }
        (kept, truncated)
    })
}

fn lossy(bytes: Vec<u8>) -> String {
    String::from_utf8(bytes).unwrap_or_else(|e| String::from_utf8_lossy(e.as_bytes()).into_owned())
}

/// Spawns `cmd` with piped output, enforces the timeout and captures output
/// up to the cap. `kill` terminates everything the command started.
pub(crate) fn run_captured(
    mut cmd: Command,
    limits: &Limits,
    spawn_error: impl FnOnce(std::io::Error) -> SandboxError,
    kill: &dyn Fn(&mut Child),
) -> Result<ExecutionResult, SandboxError> {
    cmd.stdin(Stdio::null()).stdout(Stdio::piped()).stderr(Stdio::piped());
    let start = Instant::now();
    let mut child = cmd.spawn().map_err(spawn_error)?;
    let out = drain(child.stdout.take().expect("piped"), limits.output_cap);
    let err = drain(child.stderr.take().expect("piped"), limits.output_cap);
    let deadline = start + limits.timeout;
    let mut timed_out = false;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) if Instant::now() >= deadline => {
                timed_out = true;
                kill(&mut child);
                break child.wait().ok();
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(5)),
            Err(_) => break None,
        }
    };
    // Stray descendants may still hold the pipes open.
    kill(&mut child);
    let duration = start.elapsed().as_secs_f64();
    let (stdout, stdout_truncated) = out.join().unwrap_or_default();
    let (stderr, stderr_truncated) = err.join().unwrap_or_default();
    let exit_code = if timed_out {
        TIMEOUT_EXIT_CODE
    } else {
        status.map_or(-1, exit_code_of)
    };
    Ok(ExecutionResult {
        exit_code,
        stdout: lossy(stdout),
        stderr: lossy(stderr),
        duration,
        timed_out,
        stdout_truncated,
        stderr_truncated,
    })
}

fn exit_code_of(status: std::process::ExitStatus) -> i32 {
    #[cfg(unix)]
    {
        use std::os::unix::process::ExitStatusExt;
        if let Some(sig) = status.signal() {
            return 128 + sig;
        }
    }
    status.code().unwrap_or(-1)
}

/// Finds `program` on `PATH` (or checks it directly if it has a slash).
pub(crate) fn which(program: &str) -> Option<PathBuf> {
    let candidate = std::path::Path::new(program);
    if program.contains('/') {
        return candidate.is_file().then(|| candidate.to_path_buf());
    }
    std::env::var_os("PATH").and_then(|paths| {
        std::env::split_paths(&paths)
            .map(|d| d.join(program))
            .find(|p| p.is_file())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capture_respects_cap_and_timeout() {
        let mut cmd = Command::new("sh");
        cmd.args(["-c", "printf 'abcdefghij'; printf 'err' >&2; exit 3"]);
        let limits = Limits {
            output_cap: 4,
            ..Limits::default()
        };
        let r = run_captured(cmd, &limits, |e| SandboxError::SpawnFailure { program: "sh".into(), source: e }, &|c| {
            let _ = c.kill();
        })
        .unwrap();
        assert_eq!((r.exit_code, r.stdout.as_str(), r.stdout_truncated), (3, "abcd", true));
        assert_eq!((r.stderr.as_str(), r.stderr_truncated), ("err", false));

        let mut cmd = Command::new("sleep");
        cmd.arg("5");
        let limits = Limits::default().with_timeout(Duration::from_millis(200));
        let r = run_captured(cmd, &limits, |e| SandboxError::SpawnFailure { program: "sleep".into(), source: e }, &|c| {
            let _ = c.kill();
        })
        .unwrap();
        assert!(r.timed_out);
        assert_eq!(r.exit_code, TIMEOUT_EXIT_CODE);
        assert!(r.duration >= 0.2 && r.duration < 4.0);
    }

    #[test]
    fn summary_mentions_streams_and_code() {
        let r = ExecutionResult {
            exit_code: 1,
            stdout: "out".into(),
            stderr: "Traceback".into(),
            duration: 0.1,
            timed_out: false,
            stdout_truncated: false,
            stderr_truncated: false,
        };
        let s = r.summary();
        assert!(s.contains("stdout:\nout\n") && s.contains("stderr:\nTraceback\n") && s.ends_with("exit code: 1\n"));
        assert!(!r.success());
    }

    #[test]
    fn which_finds_shell() {
        assert!(which("sh").is_some());
        assert!(which("definitely-not-a-real-binary-xyz").is_none());
    }
}
