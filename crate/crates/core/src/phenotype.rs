//! Behavioral descriptors, archive binning, and feature categories.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::PromptTemplate;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Phenotype {
    pub shots: usize,
    pub word_count: usize,
    pub depth: usize,
    pub has_context: bool,
}

/// Discretized archive coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BinKey {
    pub shots_bin: usize,
    pub words_bin: usize,
    pub depth_bin: usize,
}

/// Per-axis bin widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinConfig {
    pub shots: usize,
    pub words: usize,
    pub depth: usize,
}

impl Default for BinConfig {
    fn default() -> Self {
        BinConfig {
            shots: 2,
            words: 25,
            depth: 2,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PhenotypeError {
    #[error("bin widths must be at least 1, got ({0}, {1}, {2})")]
    ZeroWidth(usize, usize, usize),
    #[error("text has no words")]
    EmptyText,
}

impl BinConfig {
    pub fn new(shots: usize, words: usize, depth: usize) -> Result<Self, PhenotypeError> {
        if shots == 0 || words == 0 || depth == 0 {
            return Err(PhenotypeError::ZeroWidth(shots, words, depth));
        }
        Ok(BinConfig { shots, words, depth })
    }
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Descriptors of an individual: structure from the template, word count
/// from `reference_text`.
pub fn extract(template: &PromptTemplate, reference_text: &str) -> Phenotype {
    Phenotype {
        shots: template.structure.shots,
        word_count: word_count(reference_text),
        depth: template.structure.depth,
        has_context: template.structure.has_context,
    }
}

pub fn bin(p: &Phenotype, cfg: &BinConfig) -> BinKey {
    BinKey {
        shots_bin: p.shots / cfg.shots,
        words_bin: p.word_count / cfg.words,
        depth_bin: p.depth / cfg.depth,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ShotCategory {
    ZeroShot,
    FewShot,
    ManyShot,
}

impl ShotCategory {
    pub const ALL: [ShotCategory; 3] = [Self::ZeroShot, Self::FewShot, Self::ManyShot];
}

impl fmt::Display for ShotCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ZeroShot => "0-shot",
            Self::FewShot => "few-shot",
            Self::ManyShot => "many-shot",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CotCategory {
    NoCot,
    Cot1,
    Cot2Plus,
}

impl CotCategory {
    pub const ALL: [CotCategory; 3] = [Self::NoCot, Self::Cot1, Self::Cot2Plus];
}

impl fmt::Display for CotCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NoCot => "No CoT",
            Self::Cot1 => "CoT-1",
            Self::Cot2Plus => "CoT2+",
        })
    }
}

pub fn shot_category(shots: usize) -> ShotCategory {
    match shots {
        0 => ShotCategory::ZeroShot,
        1 | 2 => ShotCategory::FewShot,
        _ => ShotCategory::ManyShot,
    }
}

pub fn cot_category(depth: usize) -> CotCategory {
    match depth {
        0 => CotCategory::NoCot,
        1 => CotCategory::Cot1,
        _ => CotCategory::Cot2Plus,
    }
}

/// Lowercases and strips leading/trailing punctuation; tokens that are
/// punctuation only are dropped.
fn normalized_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| c.is_ascii_punctuation() || c.is_ascii_control()))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Unique normalized words divided by the total number of words.
pub fn type_token_ratio(text: &str) -> Result<f64, PhenotypeError> {
    let words: Vec<String> = normalized_words(text).collect();
    if words.is_empty() {
        return Err(PhenotypeError::EmptyText);
    }
    let types: HashSet<&str> = words.iter().map(String::as_str).collect();
    Ok(types.len() as f64 / words.len() as f64)
}
