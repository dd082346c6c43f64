//! `bugsmith` command line: graph indexing and queries, file search, edit
//! application, patch diagnostics, the full repair pipeline and trace
//! inspection.

mod commands;
mod exit;

use bugsmith::config::{PartialConfig, RunConfig};
use clap::{Args, Parser, Subcommand};
use exit::CliError;
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(name = "bugsmith", version, about = "Knowledge-graph driven bug repair toolkit")]
struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,

    /// TOML configuration file; flags and BUGSMITH_* variables override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(flatten)]
    settings: Settings,

    #[command(subcommand)]
    command: Command,
}

/// Configuration overrides shared by every subcommand.
#[derive(Args, Debug, Default)]
struct Settings {
    /// Repository root.
    #[arg(long, global = true, value_name = "DIR")]
    repo: Option<PathBuf>,
    /// Comma-separated language tags (python, go).
    #[arg(long, global = true, value_delimiter = ',')]
    languages: Option<Vec<String>>,
    /// Minimum mean line similarity for fuzzy matching, in (0, 1].
    #[arg(long, global = true)]
    fuzzy_threshold: Option<f64>,
    /// Lines searched around a hinted position (0 to 50).
    #[arg(long, global = true)]
    radius: Option<usize>,
    /// Context lines in rendered diffs (0 to 20).
    #[arg(long, global = true)]
    context: Option<usize>,
    /// Language server command line, e.g. "pylsp".
    #[arg(long, global = true, value_name = "CMD")]
    lsp_command: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the code knowledge graph and write it to a file.
    Index {
        /// Output file [default: <repo>/.bugsmith/graph.jsonl].
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Rank graph entities against a natural-language query.
    Query {
        text: String,
        /// Graph file written by `index` [default: <repo>/.bugsmith/graph.jsonl].
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
    },
    /// List files whose path or name matches a glob.
    Find { pattern: String },
    /// Search file contents with a regular expression.
    Grep {
        pattern: String,
        /// Restrict to a path, a directory or a glob.
        #[arg(long)]
        scope: Option<String>,
    },
    /// Apply edit blocks in memory and print the resulting diff.
    Edit {
        /// File holding one or more SEARCH/REPLACE edit blocks.
        blocks: PathBuf,
    },
    /// Check a unified diff with the diagnostics gate.
    Diagnose {
        /// Unified diff file.
        diff: PathBuf,
    },
    /// Run the full repair pipeline on an issue.
    Solve(SolveArgs),
    /// Pretty-print a trace log.
    Trace { file: PathBuf },
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Issue text: a `# title` line followed by the body.
    #[arg(long)]
    issue: PathBuf,
    /// Replay script with canned provider responses (no network).
    #[arg(long, value_name = "FILE")]
    replay: Option<PathBuf>,
    /// Chat-completions endpoint URL.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Static-route candidates per request (1 to 16).
    #[arg(long)]
    candidates: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Seconds allowed per sandboxed command.
    #[arg(long)]
    exec_timeout: Option<f64>,
    /// `subprocess` or `container`.
    #[arg(long)]
    runner: Option<String>,
    /// Run without filesystem confinement where the kernel lacks support.
    #[arg(long)]
    allow_unconfined: bool,
    /// Write the solution diff here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Write the JSON-lines trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Apply a resolved solution to the repository.
    #[arg(long)]
    apply: bool,
}

impl Cli {
    fn flags(&self) -> PartialConfig {
        let s = &self.settings;
        let mut p = PartialConfig {
            repo: s.repo.clone(),
            languages: s.languages.clone(),
            fuzzy_threshold: s.fuzzy_threshold,
            radius: s.radius,
            diff_context: s.context,
            lsp_command: s.lsp_command.as_ref().map(|c| c.split_whitespace().map(String::from).collect()),
            ..Default::default()
        };
        if let Command::Solve(a) = &self.command {
            p.replay_script = a.replay.clone();
            p.endpoint = a.endpoint.clone();
            p.model = a.model.clone();
            p.n_candidates = a.candidates;
            p.max_iterations = a.max_iterations;
            p.exec_timeout_secs = a.exec_timeout;
            p.runner = a.runner.clone();
            p.allow_unconfined = a.allow_unconfined.then_some(true);
            if a.replay.is_some() {
                p.provider = Some("replay".into());
            } else if a.endpoint.is_some() {
                p.provider = Some("http".into());
            }
        }
        p
    }

    fn config(&self) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(path) => PartialConfig::from_file(path)?,
            None => PartialConfig::default(),
        };
        let layered = file.merge(PartialConfig::from_process_env()?).merge(self.flags());
        Ok(RunConfig::resolve(layered)?)
    }
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    let config = cli.config()?;
    let out = commands::Output { json: cli.json };
    match &cli.command {
        Command::Index { output } => commands::index(&config, output.as_deref(), &out),
        Command::Query { text, graph, top_k } => commands::query(&config, text, graph.as_deref(), *top_k, &out),
        Command::Find { pattern } => commands::find(&config, pattern, &out),
        Command::Grep { pattern, scope } => commands::grep(&config, pattern, scope.as_deref(), &out),
        Command::Edit { blocks } => commands::edit(&config, blocks, &out),
        Command::Diagnose { diff } => commands::diagnose(&config, diff, &out),
        Command::Solve(a) => commands::solve(
            &config,
            &commands::SolveOptions {
                issue: &a.issue,
                output: a.output.as_deref(),
                trace: a.trace.as_deref(),
                apply: a.apply,
            },
            &out,
        ),
        Command::Trace { file } => commands::trace(file, &out),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { exit::USAGE } else { exit::OK });
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("BUGSMITH_LOG").unwrap_or_else(|_| "warn".into()),
        )
        .init();
    let code = match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            if cli.json {
                println!("{}", serde_json::json!({"error": e.message, "exit_code": e.code}));
            }
            eprintln!("error: {}", e.message);
            e.code
        }
    };
    std::process::exit(code);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_flags_select_the_provider() {
        let cli = Cli::try_parse_from(["bugsmith", "--radius", "5", "solve", "--issue", "i.md", "--replay", "r.txt"]).unwrap();
        let p = cli.flags();
        assert_eq!(p.radius, Some(5));
        assert_eq!(p.provider.as_deref(), Some("replay"));
        assert_eq!(p.replay_script, Some(PathBuf::from("r.txt")));
        assert_eq!(p.allow_unconfined, None);
    }

    #[test]
    fn global_flags_follow_the_subcommand() {
        let cli = Cli::try_parse_from(["bugsmith", "find", "*.py", "--json", "--languages", "go,python"]).unwrap();
        assert!(cli.json);
        assert_eq!(cli.flags().languages, Some(vec!["go".to_string(), "python".to_string()]));
    }
}
