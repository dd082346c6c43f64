//! Default system instructions for each role.

use super::roles::{AgentRole, Tool, ToolPermissionMatrix};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Prompts {
    /// Replaces the built-in instructions for a role.
    pub overrides: BTreeMap<AgentRole, String>,
}

fn duty(role: AgentRole) -> &'static str {
    match role {
        AgentRole::Searcher => {
            "You are the Searcher. Collect the code snippets needed to understand and fix the issue. \
             Request tools with action lines; reply without any action line when you have enough."
        }
        AgentRole::Planner => {
            "You are the Planner. Decide whether the issue needs dynamic debugging (it can be reproduced \
             by running code, e.g. it shows an exception or wrong output) or static repair (fixable by \
             reading code). Answer with a line `route: dynamic` or `route: static`."
        }
        AgentRole::Reproducer => {
            "You are the Reproducer. Write a standalone script that fails on the current code because of \
             the issue and passes once it is fixed. Reply with the script in one fenced code block. It runs \
             from the repository root."
        }
        AgentRole::Programmer => {
            "You are the Programmer. Fix the issue with edit blocks. Each block is the file path on its own \
             line, then `<<<<<<< SEARCH`, the exact lines to replace, `=======`, the new lines and \
             `>>>>>>> REPLACE`. An empty SEARCH part creates a new file. Reply `@reset` on its own line to \
             restore the repository and start over."
        }
        AgentRole::Tester => {
            "You are the Tester. Run the reproduction script and report whether the issue is resolved."
        }
        AgentRole::Editor => {
            "You are the Editor. Propose several independent candidate fixes in one reply. Start each with a \
             line `Candidate N` and give its edit blocks (file path line, `<<<<<<< SEARCH`, exact old \
             lines, `=======`, new lines, `>>>>>>> REPLACE`)."
        }
    }
}

fn usage(tool: Tool) -> &'static str {
    match tool {
        Tool::Ckg => "@ckg <query>: ranked code entities matching the query",
        Tool::Lsp => "@definition <path>:<line> [identifier] and @references <path>:<line> [identifier]",
        Tool::GeneralFileIndexing => "@open <path>[:<line>], @find <glob> and @grep <regex> [-- <path or glob>]",
        Tool::GeneralBashCommand => "@bash <command>: run a shell command in the repository",
        Tool::CodeEditing => "edit blocks as described above",
        Tool::ResetRepository => "@reset: restore the repository to its original state",
        Tool::ReproductionScriptExecution => "the reproduction script is run for you",
    }
}

impl Prompts {
    pub fn system(&self, role: AgentRole, matrix: &ToolPermissionMatrix) -> String {
        if let Some(text) = self.overrides.get(&role) {
            return text.clone();
        }
        let mut s = String::from(duty(role));
        s.push_str("\n\nTools available to you:\n");
        for t in matrix.tools_for(role) {
            s.push_str(&format!("- {}\n", usage(t)));
        }
        s
    }
}
