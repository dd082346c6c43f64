//! Run configuration, layered as defaults, then a TOML file, then
//! `BUGSMITH_*` environment variables, then command-line flags.

use crate::lang::LanguageTag;
use crate::orchestrator::{Budget, CompletionProvider, HttpConfig, HttpProvider, ProviderError, ScriptedProvider};
use crate::patch::PatchOptions;
use crate::sandbox::{ContainerRunner, Limits, Runner, SubprocessRunner, DEFAULT_OUTPUT_CAP, DEFAULT_TIMEOUT};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Duration;

pub const ENV_PREFIX: &str = "BUGSMITH_";
pub const DEFAULT_CANDIDATES: usize = 4;
pub const FUZZY_RANGE: (f64, f64) = (0.0, 1.0);
pub const MAX_RADIUS: usize = 50;
pub const MAX_CANDIDATES: usize = 16;
pub const MAX_DIFF_CONTEXT: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config file: {0}")]
    Parse(String),
    #[error("invalid value for {var}: {message}")]
    Env { var: String, message: String },
    #[error("invalid {field}: {message}")]
    Invalid { field: &'static str, message: String },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

/// One configuration layer. Every field is optional; later layers override
/// earlier ones field by field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub repo: Option<PathBuf>,
    pub languages: Option<Vec<String>>,
    /// Command that runs the reproduction script, e.g. `["python3"]`.
    pub interpreter: Option<Vec<String>>,
    /// Language server command; the built-in stub backend is used when unset.
    pub lsp_command: Option<Vec<String>>,

    /// `replay` or `http`.
    pub provider: Option<String>,
    pub replay_script: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
    pub http_timeout_secs: Option<f64>,

    /// `subprocess` or `container`.
    pub runner: Option<String>,
    pub allow_unconfined: Option<bool>,
    pub container_image: Option<String>,
    pub container_binary: Option<String>,

    pub max_iterations: Option<usize>,
    pub max_resets: Option<usize>,
    pub max_tokens: Option<usize>,
    pub wall_clock_secs: Option<f64>,
    pub max_tool_rounds: Option<usize>,
    pub exec_timeout_secs: Option<f64>,
    pub output_cap: Option<usize>,

    pub fuzzy_threshold: Option<f64>,
    pub radius: Option<usize>,
    pub n_candidates: Option<usize>,
    pub diff_context: Option<usize>,
}

macro_rules! fields {
    ($m:ident) => {
        $m!(
            repo, languages, interpreter, lsp_command, provider, replay_script, endpoint, model, api_key_env,
            http_timeout_secs, runner, allow_unconfined, container_image, container_binary, max_iterations,
            max_resets, max_tokens, wall_clock_secs, max_tool_rounds, exec_timeout_secs, output_cap,
            fuzzy_threshold, radius, n_candidates, diff_context
        )
    };
}

fn list(s: &str, sep: Option<char>) -> Vec<String> {
    match sep {
        Some(c) => s.split(c).map(str::trim).filter(|p| !p.is_empty()).map(String::from).collect(),
        None => s.split_whitespace().map(String::from).collect(),
    }
}

fn parsed<T: std::str::FromStr>(var: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    raw.trim().parse().map_err(|e: T::Err| ConfigError::Env {
        var: var.to_string(),
        message: e.to_string(),
    })
}

impl PartialConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Reads `BUGSMITH_<FIELD>` variables through `lookup`. Lists are comma
    /// separated, except command lines, which split on whitespace.
    pub fn from_env(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut c = PartialConfig::default();
        macro_rules! read {
            ($($f:ident),*) => {$(
                let var = format!("{ENV_PREFIX}{}", stringify!($f).to_ascii_uppercase());
                if let Some(raw) = lookup(&var).filter(|v| !v.trim().is_empty()) {
                    c.$f = Some(EnvValue::convert(&var, &raw, stringify!($f))?);
                }
            )*};
        }
        fields!(read);
        Ok(c)
    }

    pub fn from_process_env() -> Result<Self, ConfigError> {
        Self::from_env(|k| std::env::var(k).ok())
    }

    /// `over` wins wherever it sets a field.
    pub fn merge(mut self, over: PartialConfig) -> PartialConfig {
        macro_rules! take {
            ($($f:ident),*) => {$(
                if over.$f.is_some() {
                    self.$f = over.$f;
                }
            )*};
        }
        fields!(take);
        self
    }
}

trait EnvValue: Sized {
    fn convert(var: &str, raw: &str, field: &str) -> Result<Self, ConfigError>;
}

impl EnvValue for String {
    fn convert(_: &str, raw: &str, _: &str) -> Result<Self, ConfigError> {
        Ok(raw.trim().to_string())
    }
}

impl EnvValue for PathBuf {
    fn convert(_: &str, raw: &str, _: &str) -> Result<Self, ConfigError> {
        Ok(PathBuf::from(raw.trim()))
    }
}

impl EnvValue for Vec<String> {
    fn convert(_: &str, raw: &str, field: &str) -> Result<Self, ConfigError> {
        Ok(list(raw, (field == "languages").then_some(',')))
    }
}

impl EnvValue for bool {
    fn convert(var: &str, raw: &str, _: &str) -> Result<Self, ConfigError> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" | "on" => Ok(true),
            "0" | "false" | "no" | "off" => Ok(false),
            other => Err(ConfigError::Env {
                var: var.to_string(),
                message: format!("`{other}` is not a boolean"),
            }),
        }
    }
}

impl EnvValue for usize {
    fn convert(var: &str, raw: &str, _: &str) -> Result<Self, ConfigError> {
        parsed(var, raw)
    }
}

impl EnvValue for f64 {
    fn convert(var: &str, raw: &str, _: &str) -> Result<Self, ConfigError> {
        parsed(var, raw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderChoice {
    /// Scripted responses from a file; never touches the network.
    Replay { script: PathBuf },
    Http(HttpConfig),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunnerChoice {
    Subprocess { allow_unconfined: bool },
    Container { image: String, binary: String },
}

/// Fully resolved and validated settings for one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub repo: PathBuf,
    pub languages: Vec<LanguageTag>,
    pub interpreter: Vec<String>,
    pub lsp_command: Option<Vec<String>>,
    /// Unset until a provider is named; only `solve` needs one.
    pub provider: Option<ProviderChoice>,
    pub runner: RunnerChoice,
    pub budget: Budget,
    pub limits: Limits,
    pub fuzzy_threshold: f64,
    pub radius: usize,
    pub n_candidates: usize,
    pub diff_context: usize,
}

fn secs(field: &'static str, v: f64) -> Result<Duration, ConfigError> {
    if v.is_nan() || v <= 0.0 {
        return Err(invalid(field, format!("{v} is not a positive number of seconds")));
    }
    Duration::try_from_secs_f64(v).map_err(|e| invalid(field, e.to_string()))
}

impl RunConfig {
    /// Fills unset fields with defaults and validates the result.
    pub fn resolve(p: PartialConfig) -> Result<RunConfig, ConfigError> {
        let languages = match &p.languages {
            None => LanguageTag::SHIPPED.to_vec(),
            Some(tags) => tags
                .iter()
                .map(|t| t.parse().map_err(|e: crate::lang::UnknownLanguage| invalid("languages", e.to_string())))
                .collect::<Result<_, _>>()?,
        };

        let kind = p.provider.clone().or_else(|| {
            if p.replay_script.is_some() {
                Some("replay".into())
            } else if p.endpoint.is_some() {
                Some("http".into())
            } else {
                None
            }
        });
        let provider = match kind.as_deref() {
            None => None,
            Some("replay") => {
                let script = p
                    .replay_script
                    .clone()
                    .ok_or_else(|| invalid("provider", "replay mode needs replay_script"))?;
                Some(ProviderChoice::Replay { script })
            }
            Some("http") => {
                let endpoint = p.endpoint.clone().ok_or_else(|| invalid("provider", "http mode needs endpoint"))?;
                let model = p.model.clone().ok_or_else(|| invalid("provider", "http mode needs model"))?;
                let mut http = HttpConfig::new(endpoint, model);
                if let Some(env) = &p.api_key_env {
                    http.api_key_env = Some(env.clone());
                }
                if let Some(t) = p.http_timeout_secs {
                    http.timeout = secs("http_timeout_secs", t)?;
                }
                Some(ProviderChoice::Http(http))
            }
            Some(other) => return Err(invalid("provider", format!("`{other}` is not replay or http"))),
        };

        let runner = match p.runner.as_deref().unwrap_or("subprocess") {
            "subprocess" => RunnerChoice::Subprocess {
                allow_unconfined: p.allow_unconfined.unwrap_or(false),
            },
            "container" => RunnerChoice::Container {
                image: p
                    .container_image
                    .clone()
                    .ok_or_else(|| invalid("runner", "container runner needs container_image"))?,
                binary: p.container_binary.clone().unwrap_or_else(|| "docker".into()),
            },
            other => return Err(invalid("runner", format!("`{other}` is not subprocess or container"))),
        };

        let d = Budget::default();
        let budget = Budget {
            max_iterations: p.max_iterations.unwrap_or(d.max_iterations),
            max_resets: p.max_resets.unwrap_or(d.max_resets),
            max_tokens: p.max_tokens.unwrap_or(d.max_tokens),
            wall_clock: match p.wall_clock_secs {
                Some(v) => secs("wall_clock_secs", v)?,
                None => d.wall_clock,
            },
            max_tool_rounds: p.max_tool_rounds.unwrap_or(d.max_tool_rounds),
        };
        let limits = Limits {
            timeout: match p.exec_timeout_secs {
                Some(v) => secs("exec_timeout_secs", v)?,
                None => DEFAULT_TIMEOUT,
            },
            output_cap: p.output_cap.unwrap_or(DEFAULT_OUTPUT_CAP),
            ..Limits::default()
        };
        let patch = PatchOptions::default();
        let config = RunConfig {
            repo: p.repo.clone().unwrap_or_else(|| PathBuf::from(".")),
            languages,
            interpreter: p.interpreter.clone().unwrap_or_else(|| vec!["python3".into()]),
            lsp_command: p.lsp_command.clone(),
            provider,
            runner,
            budget,
            limits,
            fuzzy_threshold: p.fuzzy_threshold.unwrap_or(patch.fuzzy_threshold),
            radius: p.radius.unwrap_or(crate::navigator::DEFAULT_RADIUS),
            n_candidates: p.n_candidates.unwrap_or(DEFAULT_CANDIDATES),
            diff_context: p.diff_context.unwrap_or(patch.context),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = self.fuzzy_threshold;
        if !(t > FUZZY_RANGE.0 && t <= FUZZY_RANGE.1) {
            return Err(invalid("fuzzy_threshold", format!("{t} is outside (0, 1]")));
        }
        if self.radius > MAX_RADIUS {
            return Err(invalid("radius", format!("{} exceeds {MAX_RADIUS}", self.radius)));
        }
        if !(1..=MAX_CANDIDATES).contains(&self.n_candidates) {
            return Err(invalid("n_candidates", format!("{} is outside 1..={MAX_CANDIDATES}", self.n_candidates)));
        }
        if self.diff_context > MAX_DIFF_CONTEXT {
            return Err(invalid("diff_context", format!("{} exceeds {MAX_DIFF_CONTEXT}", self.diff_context)));
        }
        if self.interpreter.is_empty() {
            return Err(invalid("interpreter", "empty command"));
        }
        if self.lsp_command.as_ref().is_some_and(|c| c.is_empty()) {
            return Err(invalid("lsp_command", "empty command"));
        }
        if self.languages.is_empty() {
            return Err(invalid("languages", "no languages selected"));
        }
        if self.limits.output_cap == 0 {
            return Err(invalid("output_cap", "must be positive"));
        }
        if self.budget.max_iterations == 0 || self.budget.max_tokens == 0 {
            return Err(invalid("budget", "iteration and token budgets must be positive"));
        }
        Ok(())
    }

    pub fn patch_options(&self) -> PatchOptions {
        PatchOptions {
            fuzzy_threshold: self.fuzzy_threshold,
            context: self.diff_context,
        }
    }

    pub fn build_runner(&self) -> Box<dyn Runner> {
        match &self.runner {
            RunnerChoice::Subprocess { allow_unconfined } => {
                Box::new(SubprocessRunner::new().allow_unconfined(*allow_unconfined))
            }
            RunnerChoice::Container { image, binary } => {
                let mut r = ContainerRunner::new(image.clone());
                r.binary = binary.clone();
                Box::new(r)
            }
        }
    }

    /// The configured provider. Replay mode reads the script file and makes
    /// no network calls.
    pub fn build_provider(&self) -> Result<Box<dyn CompletionProvider>, ProviderError> {
        match &self.provider {
            None => Err(ProviderError::NotConfigured),
            Some(ProviderChoice::Replay { script }) => {
                let text = std::fs::read_to_string(script)
                    .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", script.display())))?;
                Ok(Box::new(ScriptedProvider::parse(&text)?))
            }
            Some(ProviderChoice::Http(c)) => Ok(Box::new(HttpProvider::new_requiring_key(c.clone())?)),
        }
    }
}
