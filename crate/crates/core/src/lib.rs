//! Grammar-driven MAP-Elites search over LLM prompt structures.
//!
//! Prompts are derived from a small context-free grammar; each derivation is
//! encoded as a [`grammar::Genotype`]. Individuals are scored against a task
//! dataset through a pluggable [`evaluator::Model`], binned by structural
//! descriptors ([`phenotype`]), and kept in a MAP-Elites [`archive::Archive`].
//! The [`stats`] module carries the coverage and feature analysis.

pub mod archive;
pub mod evaluator;
pub mod evolve;
pub mod export;
pub mod grammar;
pub mod phenotype;
pub mod report;
pub mod seed;
pub mod stats;
pub mod tasks;
