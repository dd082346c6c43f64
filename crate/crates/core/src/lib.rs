//! Mechanized pipeline for an LLM-driven bug-fixing agent.
//!
//! The crate is organized around the tools a repair agent uses:
//!
//! - [`ckg`]: a code knowledge graph of entities and relations extracted
//!   from a repository, with a three-strategy entity query.
//! - [`navigator`]: definition/reference navigation and diagnostics through a
//!   language-intelligence backend, with fuzzy position resolution.
//! - [`index`]: filename and content search.
//! - [`patch`]: conflict-marker edit blocks, fuzzy location, indentation
//!   adjustment and unified diffs.
//! - [`gate`]: the before/after static diagnostics check for candidate patches.
//! - [`sandbox`]: isolated execution, reproduction scripts and workspace reset.
//! - [`orchestrator`]: the six-role workflow with dynamic and static routes.

pub mod ckg;
pub mod config;
pub mod gate;
pub mod index;
pub mod lang;
pub mod navigator;
pub mod orchestrator;
pub mod patch;
pub mod sandbox;

pub(crate) mod digest {
    use sha2::{Digest, Sha256};

    pub fn sha256_hex(bytes: &[u8]) -> String {
        hex::encode(Sha256::digest(bytes))
    }

    /// First 16 hex characters of the SHA-256 digest.
    pub fn short(bytes: &[u8]) -> String {
        let mut full = sha256_hex(bytes);
        full.truncate(16);
        full
    }
}
