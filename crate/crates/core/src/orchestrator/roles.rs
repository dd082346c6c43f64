//! Agent roles, tools and the permission matrix granting tools to roles.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Searcher,
    Planner,
    Reproducer,
    Programmer,
    Tester,
    Editor,
}

impl AgentRole {
    pub const ALL: [AgentRole; 6] = [
        AgentRole::Searcher,
        AgentRole::Planner,
        AgentRole::Reproducer,
        AgentRole::Programmer,
        AgentRole::Tester,
        AgentRole::Editor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Searcher => "searcher",
            AgentRole::Planner => "planner",
            AgentRole::Reproducer => "reproducer",
            AgentRole::Programmer => "programmer",
            AgentRole::Tester => "tester",
            AgentRole::Editor => "editor",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown role `{0}`")]
pub struct UnknownRole(pub String);

impl FromStr for AgentRole {
    type Err = UnknownRole;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        AgentRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or(UnknownRole(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tool {
    Ckg,
    Lsp,
    GeneralFileIndexing,
    GeneralBashCommand,
    CodeEditing,
    ResetRepository,
    ReproductionScriptExecution,
}

impl Tool {
    pub const ALL: [Tool; 7] = [
        Tool::Ckg,
        Tool::Lsp,
        Tool::GeneralFileIndexing,
        Tool::GeneralBashCommand,
        Tool::CodeEditing,
        Tool::ResetRepository,
        Tool::ReproductionScriptExecution,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Tool::Ckg => "ckg",
            Tool::Lsp => "lsp",
            Tool::GeneralFileIndexing => "general_file_indexing",
            Tool::GeneralBashCommand => "general_bash_command",
            Tool::CodeEditing => "code_editing",
            Tool::ResetRepository => "reset_repository",
            Tool::ReproductionScriptExecution => "reproduction_script_execution",
        }
    }
}

impl fmt::Display for Tool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("role `{role}` may not use tool `{tool}`")]
pub struct PermissionDenied {
    pub role: AgentRole,
    pub tool: Tool,
}

/// Which tools each role may use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolPermissionMatrix {
    grants: BTreeSet<(AgentRole, Tool)>,
}

impl Default for ToolPermissionMatrix {
    /// Retrieval and shell tools for every role but the Editor; editing for
    /// Programmer and Editor; reset for the Programmer; reproduction runs
    /// for Reproducer and Tester.
    fn default() -> Self {
        use AgentRole::*;
        use Tool::*;
        let mut grants = BTreeSet::new();
        for role in [Searcher, Planner, Reproducer, Programmer, Tester] {
            for tool in [Ckg, Lsp, GeneralFileIndexing, GeneralBashCommand] {
                grants.insert((role, tool));
            }
        }
        grants.insert((Programmer, CodeEditing));
        grants.insert((Editor, CodeEditing));
        grants.insert((Programmer, ResetRepository));
        grants.insert((Reproducer, ReproductionScriptExecution));
        grants.insert((Tester, ReproductionScriptExecution));
        ToolPermissionMatrix { grants }
    }
}

impl ToolPermissionMatrix {
    pub fn allows(&self, role: AgentRole, tool: Tool) -> bool {
        self.grants.contains(&(role, tool))
    }

    pub fn enforce(&self, role: AgentRole, tool: Tool) -> Result<(), PermissionDenied> {
        if self.allows(role, tool) {
            Ok(())
        } else {
            Err(PermissionDenied { role, tool })
        }
    }

    pub fn tools_for(&self, role: AgentRole) -> Vec<Tool> {
        Tool::ALL.into_iter().filter(|t| self.allows(role, *t)).collect()
    }
}

/// Free-function form of [`ToolPermissionMatrix::enforce`].
pub fn enforce(matrix: &ToolPermissionMatrix, role: AgentRole, tool: Tool) -> Result<(), PermissionDenied> {
    matrix.enforce(role, tool)
}
