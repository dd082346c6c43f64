//! Container runner: each command runs in a throwaway container with the
//! workspace bind-mounted and networking disabled.

use super::{run_captured, which, ExecutionResult, Limits, Runner, SandboxError, Workspace};
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};

static NEXT: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone)]
pub struct ContainerRunner {
    /// Container CLI, e.g. `docker` or `podman`.
    pub binary: String,
    pub image: String,
    /// Mount point of the workspace inside the container.
    pub mount: String,
    pub network: bool,
}

impl ContainerRunner {
    pub fn new(image: impl Into<String>) -> Self {
        ContainerRunner {
            binary: "docker".into(),
            image: image.into(),
            mount: "/workspace".into(),
            network: false,
        }
    }

    /// Full argument vector for the container CLI.
    pub fn container_args(&self, ws: &Workspace, argv: &[String], limits: &Limits, name: &str) -> Vec<String> {
        let mut args: Vec<String> = vec![
            "run".into(),
            "--rm".into(),
            "--name".into(),
            name.into(),
            "--network".into(),
            if self.network { "bridge" } else { "none" }.into(),
            "--volume".into(),
            format!("{}:{}", ws.root().display(), self.mount),
            "--workdir".into(),
            self.mount.clone(),
            "--env".into(),
            "PYTHONDONTWRITEBYTECODE=1".into(),
        ];
        if let Some(m) = limits.memory_bytes {
            args.push("--memory".into());
            args.push(m.to_string());
        }
        args.push(self.image.clone());
        args.extend(argv.iter().cloned());
        args
    }
}

impl Runner for ContainerRunner {
    fn name(&self) -> &str {
        "container"
    }

    fn execute(&self, ws: &Workspace, argv: &[String], limits: &Limits) -> Result<ExecutionResult, SandboxError> {
        if argv.is_empty() {
            return Err(SandboxError::EmptyCommand);
        }
        let binary = which(&self.binary)
            .ok_or_else(|| SandboxError::SandboxUnavailable(format!("container CLI `{}` not found", self.binary)))?;
        let name = format!("bugsmith-{}-{}", std::process::id(), NEXT.fetch_add(1, Ordering::Relaxed));
        let mut cmd = Command::new(&binary);
        cmd.args(self.container_args(ws, argv, limits, &name));
        let program = self.binary.clone();
        let kill = |child: &mut std::process::Child| {
            if child.try_wait().ok().flatten().is_none() {
                let _ = Command::new(&binary).args(["kill", &name]).output();
                let _ = child.kill();
            }
        };
        run_captured(cmd, limits, |source| SandboxError::SpawnFailure { program, source }, &kill)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_line_disables_network() {
        let src = tempfile::tempdir().unwrap();
        let ws = Workspace::create(src.path()).unwrap();
        let r = ContainerRunner::new("python:3.12-slim");
        let args = r.container_args(&ws, &["python".into(), "x.py".into()], &Limits::default(), "n1");
        let joined = args.join(" ");
        assert!(joined.starts_with("run --rm --name n1 --network none --volume "));
        assert!(joined.ends_with("--workdir /workspace --env PYTHONDONTWRITEBYTECODE=1 python:3.12-slim python x.py"));
    }

    #[test]
    fn missing_cli_is_unavailable() {
        let src = tempfile::tempdir().unwrap();
        let ws = Workspace::create(src.path()).unwrap();
        let r = ContainerRunner {
            binary: "no-such-container-cli".into(),
            ..ContainerRunner::new("img")
        };
        assert!(matches!(
            r.execute(&ws, &["true".into()], &Limits::default()),
            Err(SandboxError::SandboxUnavailable(_))
        ));
    }
}
