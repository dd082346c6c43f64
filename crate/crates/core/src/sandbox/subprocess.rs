//! Restricted-subprocess runner.
//!
//! Commands run in the workspace root with a cleared environment, their own
//! process group and resource limits. On Linux a Landlock ruleset makes the
//! whole filesystem read-only except the workspace root and its scratch
//! directory, and denies TCP bind/connect where the kernel supports it.

use super::{run_captured, ExecutionResult, Limits, Runner, SandboxError, Workspace};
use std::collections::BTreeMap;
use std::process::Command;

const DEFAULT_PATH: &str = "/usr/local/bin:/usr/bin:/bin";

#[derive(Debug, Clone, Default)]
pub struct SubprocessRunner {
    /// Run without filesystem isolation when the kernel cannot provide it.
    pub allow_unconfined: bool,
    /// Extra environment variables for every command.
    pub env: BTreeMap<String, String>,
}

impl SubprocessRunner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn allow_unconfined(mut self, yes: bool) -> Self {
        self.allow_unconfined = yes;
        self
    }

    fn command(&self, ws: &Workspace, argv: &[String]) -> Command {
        let mut cmd = Command::new(&argv[0]);
        cmd.args(&argv[1..])
            .current_dir(ws.root())
            .env_clear()
            .env("PATH", std::env::var_os("PATH").unwrap_or_else(|| DEFAULT_PATH.into()))
            .env("HOME", ws.scratch())
            .env("TMPDIR", ws.scratch())
            .env("LANG", "C.UTF-8")
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .env("PYTHONUNBUFFERED", "1");
        cmd.envs(&self.env);
        cmd
    }
}

#[cfg(target_os = "linux")]
mod confine {
    use super::super::{Limits, SandboxError, Workspace};
    use landlock::{
        path_beneath_rules, Access, AccessFs, AccessNet, CompatLevel, Compatible, Ruleset, RulesetAttr,
        RulesetCreated, RulesetCreatedAttr, ABI,
    };
    use std::os::unix::process::CommandExt;
    use std::process::{Child, Command};
    use std::sync::Mutex;

    fn ruleset(ws: &Workspace) -> Result<RulesetCreated, String> {
        let abi = ABI::V5;
        let ruleset = Ruleset::default()
            .set_compatibility(CompatLevel::HardRequirement)
            .handle_access(AccessFs::from_all(ABI::V1))
            .map_err(|e| e.to_string())?
            .set_compatibility(CompatLevel::BestEffort)
            .handle_access(AccessFs::from_all(abi))
            .map_err(|e| e.to_string())?
            .handle_access(AccessNet::from_all(abi))
            .map_err(|e| e.to_string())?
            .create()
            .map_err(|e| e.to_string())?
            .add_rules(path_beneath_rules(["/"], AccessFs::from_read(abi)))
            .map_err(|e| e.to_string())?
            .add_rules(path_beneath_rules([ws.root(), ws.scratch()], AccessFs::from_all(abi)))
            .map_err(|e| e.to_string())?
            .add_rules(path_beneath_rules(["/dev/null"], AccessFs::from_all(abi)))
            .map_err(|e| e.to_string())?;
        Ok(ruleset)
    }

    #[cfg(target_env = "gnu")]
    type Resource = libc::__rlimit_resource_t;
    #[cfg(not(target_env = "gnu"))]
    type Resource = libc::c_int;

    fn set_limit(resource: Resource, value: u64) {
        let lim = libc::rlimit {
            rlim_cur: value as libc::rlim_t,
            rlim_max: value as libc::rlim_t,
        };
        // SAFETY: plain syscall on a stack value.
        unsafe {
            libc::setrlimit(resource, &lim);
        }
    }

    /// Installs process-group, rlimit and Landlock setup to run in the child.
    pub fn prepare(cmd: &mut Command, ws: &Workspace, limits: &Limits, allow_unconfined: bool) -> Result<(), SandboxError> {
        let rules = match ruleset(ws) {
            Ok(r) => Some(r),
            Err(_) if allow_unconfined => None,
            Err(e) => return Err(SandboxError::SandboxUnavailable(format!("Landlock unavailable: {e}"))),
        };
        let rules = Mutex::new(rules);
        let cpu = limits.timeout.as_secs() + 2;
        let memory = limits.memory_bytes;
        let fsize = limits.file_size_bytes;
        // SAFETY: the closure only performs async-signal-safe syscalls plus the
        // Landlock restriction, whose ruleset was fully built before fork.
        unsafe {
            cmd.pre_exec(move || {
                libc::setpgid(0, 0);
                set_limit(libc::RLIMIT_CPU, cpu);
                set_limit(libc::RLIMIT_CORE, 0);
                if let Some(m) = memory {
                    set_limit(libc::RLIMIT_AS, m);
                }
                if let Some(f) = fsize {
                    set_limit(libc::RLIMIT_FSIZE, f);
                }
                let taken = rules.lock().ok().and_then(|mut g| g.take());
                if let Some(r) = taken {
                    r.restrict_self().map_err(|_| std::io::Error::from_raw_os_error(libc::EPERM))?;
                }
                Ok(())
            });
        }
        Ok(())
    }

    pub fn kill_group(child: &mut Child) {
        // SAFETY: signalling our own child's process group.
        unsafe {
            libc::killpg(child.id() as libc::pid_t, libc::SIGKILL);
        }
        let _ = child.kill();
    }
}

impl Runner for SubprocessRunner {
    fn name(&self) -> &str {
        "subprocess"
    }

    fn execute(&self, ws: &Workspace, argv: &[String], limits: &Limits) -> Result<ExecutionResult, SandboxError> {
        if argv.is_empty() {
            return Err(SandboxError::EmptyCommand);
        }
        let mut cmd = self.command(ws, argv);
        let program = argv[0].clone();
        let spawn_error = move |source| SandboxError::SpawnFailure { program, source };
        #[cfg(target_os = "linux")]
        {
            confine::prepare(&mut cmd, ws, limits, self.allow_unconfined)?;
            run_captured(cmd, limits, spawn_error, &confine::kill_group)
        }
        #[cfg(not(target_os = "linux"))]
        {
            if !self.allow_unconfined {
                return Err(SandboxError::SandboxUnavailable(
                    "filesystem isolation is only implemented on Linux".into(),
                ));
            }
            run_captured(cmd, limits, spawn_error, &|c| {
                let _ = c.kill();
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;
    use std::time::Duration;

    fn ws() -> (tempfile::TempDir, Workspace) {
        let src = tempfile::tempdir().unwrap();
        fs::write(src.path().join("a.txt"), "hello\n").unwrap();
        let ws = Workspace::create(src.path()).unwrap();
        (src, ws)
    }

    fn sh(script: &str) -> Vec<String> {
        vec!["sh".into(), "-c".into(), script.into()]
    }

    #[test]
    fn echo_runs_in_root() {
        let (_src, ws) = ws();
        let r = SubprocessRunner::new().execute(&ws, &sh("echo ok; cat a.txt"), &Limits::default()).unwrap();
        assert_eq!((r.exit_code, r.stdout.as_str()), (0, "ok\nhello\n"));
    }

    #[test]
    fn stderr_is_captured_in_full() {
        let (_src, ws) = ws();
        let script = "import sys\nraise ValueError('boom ' * 3)\n";
        ws.write_file("t.py", script).unwrap();
        let r = SubprocessRunner::new()
            .execute(&ws, &["python3".into(), "t.py".into()], &Limits::default())
            .unwrap();
        assert_ne!(r.exit_code, 0);
        assert!(r.stderr.contains("Traceback (most recent call last)"));
        assert!(r.stderr.contains("ValueError: boom boom boom"));
    }

    #[test]
    fn endless_loop_times_out() {
        let (_src, ws) = ws();
        let limits = Limits::default().with_timeout(Duration::from_secs(1));
        let r = SubprocessRunner::new().execute(&ws, &sh("while :; do :; done"), &limits).unwrap();
        assert!(r.timed_out);
        assert!(r.duration >= 1.0);
        assert_eq!(r.exit_code, super::super::TIMEOUT_EXIT_CODE);
    }

    #[test]
    fn environment_is_cleared() {
        let (_src, ws) = ws();
        std::env::set_var("BUGSMITH_SECRET_TEST", "leak");
        let r = SubprocessRunner::new().execute(&ws, &sh("echo \"[$BUGSMITH_SECRET_TEST]\""), &Limits::default()).unwrap();
        assert_eq!(r.stdout, "[]\n");
    }

    #[test]
    fn missing_program_is_a_spawn_failure() {
        let (_src, ws) = ws();
        let err = SubprocessRunner::new()
            .execute(&ws, &["/no/such/program".into()], &Limits::default())
            .unwrap_err();
        assert!(matches!(err, SandboxError::SpawnFailure { .. }));
        assert!(matches!(
            SubprocessRunner::new().execute(&ws, &[], &Limits::default()),
            Err(SandboxError::EmptyCommand)
        ));
    }

    #[cfg(target_os = "linux")]
    #[test]
    fn writes_outside_the_workspace_are_denied() {
        let (src, ws) = ws();
        let outer = tempfile::tempdir().unwrap();
        let target = outer.path().join("escaped.txt");
        let script = format!(
            "echo pwned > {t}; echo pwned > {s}/a.txt; echo inside > b.txt; echo tmp > $TMPDIR/x",
            t = target.display(),
            s = src.path().display()
        );
        let r = SubprocessRunner::new().execute(&ws, &sh(&script), &Limits::default()).unwrap();
        assert!(r.stderr.contains("Permission denied"), "{r:?}");
        assert!(!target.exists());
        assert_eq!(fs::read_to_string(src.path().join("a.txt")).unwrap(), "hello\n");
        assert_eq!(fs::read_to_string(ws.root().join("b.txt")).unwrap(), "inside\n");
    }

    #[cfg(target_os = "linux")]
    #[test]
    fn tcp_connect_is_denied() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        let (_src, ws) = ws();
        let script = format!(
            "import socket\ntry:\n    socket.create_connection(('127.0.0.1', {port}), timeout=2)\n    print('connected')\nexcept OSError as e:\n    print('denied', e.errno)\n"
        );
        ws.write_file("net.py", &script).unwrap();
        let r = SubprocessRunner::new()
            .execute(&ws, &["python3".into(), "net.py".into()], &Limits::default())
            .unwrap();
        assert!(r.stdout.starts_with("denied"), "{r:?}");
    }
}
