use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of entries in each generic table.
pub const TABLE_LEN: usize = 10;

#[derive(Debug, Error)]
pub enum TablesError {
    #[error("reading tables: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing tables: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("`{field}` must have exactly {TABLE_LEN} entries, found {found}")]
    WrongLength { field: &'static str, found: usize },
}

/// Instantiation strings for the generic `((cN))` context-role and `((tN))`
/// reasoning placeholders. Thought `tN` requests `N` reasoning steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTables")]
pub struct GenericTables {
    contexts: Vec<String>,
    thoughts: Vec<String>,
}

#[derive(Deserialize)]
struct RawTables {
    contexts: Vec<String>,
    thoughts: Vec<String>,
}

impl TryFrom<RawTables> for GenericTables {
    type Error = TablesError;

    fn try_from(raw: RawTables) -> Result<Self, Self::Error> {
        GenericTables::new(raw.contexts, raw.thoughts)
    }
}

// Replaceable defaults; only c1 is known verbatim.
const DEFAULT_CONTEXTS: [&str; TABLE_LEN] = [
    "You are a researcher presenting your findings at a scientific conference, answering questions from fellow scientists.",
    "You are a teacher explaining the answer to a curious student.",
    "You are a careful analyst who checks every detail before answering.",
    "You are an expert logician evaluating arguments for a formal proof.",
    "You are a librarian helping a visitor find a precise fact.",
    "You are a judge weighing the evidence before delivering a verdict.",
    "You are a journalist verifying a claim before publication.",
    "You are a puzzle enthusiast solving a brain teaser for a competition.",
    "You are a tutor preparing a student for a standardized exam.",
    "You are a consultant giving a concise answer to a busy client.",
];

impl Default for GenericTables {
    fn default() -> Self {
        let contexts = DEFAULT_CONTEXTS.iter().map(|s| s.to_string()).collect();
        let thoughts = (1..=TABLE_LEN)
            .map(|n| {
                format!("Think step by step. The number of steps you must consider is {n}.")
            })
            .collect();
        GenericTables { contexts, thoughts }
    }
}

impl GenericTables {
    pub fn new(contexts: Vec<String>, thoughts: Vec<String>) -> Result<Self, TablesError> {
        if contexts.len() != TABLE_LEN {
            return Err(TablesError::WrongLength {
                field: "contexts",
                found: contexts.len(),
            });
        }
        if thoughts.len() != TABLE_LEN {
            return Err(TablesError::WrongLength {
                field: "thoughts",
                found: thoughts.len(),
            });
        }
        Ok(GenericTables { contexts, thoughts })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TablesError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Context text for the one-based entry `((c<n>))`.
    pub fn context(&self, n: usize) -> Option<&str> {
        n.checked_sub(1)
            .and_then(|i| self.contexts.get(i))
            .map(String::as_str)
    }

    /// Thought text for the one-based entry `((t<n>))`.
    pub fn thought(&self, n: usize) -> Option<&str> {
        n.checked_sub(1)
            .and_then(|i| self.thoughts.get(i))
            .map(String::as_str)
    }

    pub fn contexts(&self) -> &[String] {
        &self.contexts
    }

    pub fn thoughts(&self) -> &[String] {
        &self.thoughts
    }
}
