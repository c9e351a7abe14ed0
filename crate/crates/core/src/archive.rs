//! MAP-Elites archive: one elite per bin, strict-improvement replacement.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::Genotype;
use crate::phenotype::{bin, BinConfig, BinKey, Phenotype};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub iteration: usize,
    pub parent: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: u64,
    pub genotype: Genotype,
    pub phenotype: Phenotype,
    pub fitness: f64,
    pub eval_count: usize,
    /// Lexical diversity of the instantiated prompt.
    pub type_token_ratio: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsertOutcome {
    Inserted,
    Replaced,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsertionEvent {
    pub iteration: usize,
    pub bin: BinKey,
    pub individual: u64,
    pub old_fitness: Option<f64>,
    pub new_fitness: f64,
}

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("archive JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("reading archive: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("bin {0:?} appears more than once")]
    DuplicateBin(BinKey),
    #[error("elite {id} is stored in {stored:?} but its phenotype bins to {actual:?}")]
    MisplacedElite { id: u64, stored: BinKey, actual: BinKey },
    #[error("fitness {0} outside [0, 1]")]
    FitnessRange(f64),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ArchiveDoc", into = "ArchiveDoc")]
pub struct Archive {
    cells: BTreeMap<BinKey, Individual>,
    bin_config: BinConfig,
    insertion_log: Vec<InsertionEvent>,
}

#[derive(Serialize, Deserialize)]
struct ArchiveCell {
    bin: BinKey,
    elite: Individual,
}

#[derive(Serialize, Deserialize)]
struct ArchiveDoc {
    bin_config: BinConfig,
    cells: Vec<ArchiveCell>,
    insertion_log: Vec<InsertionEvent>,
}

impl From<Archive> for ArchiveDoc {
    fn from(a: Archive) -> Self {
        ArchiveDoc {
            bin_config: a.bin_config,
            cells: a
                .cells
                .into_iter()
                .map(|(bin, elite)| ArchiveCell { bin, elite })
                .collect(),
            insertion_log: a.insertion_log,
        }
    }
}

impl TryFrom<ArchiveDoc> for Archive {
    type Error = ArchiveError;

    fn try_from(doc: ArchiveDoc) -> Result<Self, Self::Error> {
        let mut cells = BTreeMap::new();
        for ArchiveCell { bin: key, elite } in doc.cells {
            if !(0.0..=1.0).contains(&elite.fitness) {
                return Err(ArchiveError::FitnessRange(elite.fitness));
            }
            let actual = bin(&elite.phenotype, &doc.bin_config);
            if actual != key {
                return Err(ArchiveError::MisplacedElite {
                    id: elite.id,
                    stored: key,
                    actual,
                });
            }
            if cells.insert(key, elite).is_some() {
                return Err(ArchiveError::DuplicateBin(key));
            }
        }
        Ok(Archive {
            cells,
            bin_config: doc.bin_config,
            insertion_log: doc.insertion_log,
        })
    }
}

/// Descriptor axes an archive can be projected onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Shots,
    Words,
    Depth,
}

impl Axis {
    fn of(self, key: &BinKey) -> usize {
        match self {
            Axis::Shots => key.shots_bin,
            Axis::Words => key.words_bin,
            Axis::Depth => key.depth_bin,
        }
    }
}

/// A projection of the bin grid onto some axes with a declared number of
/// bins per axis. Indices past the last bin are counted in the last bin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageSpace {
    axes: Vec<(Axis, usize)>,
}

impl CoverageSpace {
    pub fn new(axes: Vec<(Axis, usize)>) -> Self {
        assert!(
            axes.iter().all(|&(_, n)| n >= 1),
            "every axis needs at least one bin"
        );
        CoverageSpace { axes }
    }

    /// The 5 x 5 shots-by-depth grid used for the coverage analysis.
    pub fn shots_by_depth() -> Self {
        CoverageSpace::new(vec![(Axis::Shots, 5), (Axis::Depth, 5)])
    }

    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(|&(_, n)| n).product()
    }

    pub fn axes(&self) -> &[(Axis, usize)] {
        &self.axes
    }

    pub fn project(&self, key: &BinKey) -> Vec<usize> {
        self.axes
            .iter()
            .map(|&(axis, n)| axis.of(key).min(n - 1))
            .collect()
    }
}

/// Which elites count toward coverage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    Any,
    /// Fitness strictly above the value.
    Above(f64),
}

impl Threshold {
    pub fn admits(self, fitness: f64) -> bool {
        match self {
            Threshold::Any => true,
            Threshold::Above(t) => fitness > t,
        }
    }
}

impl Archive {
    pub fn new(bin_config: BinConfig) -> Self {
        Archive {
            cells: BTreeMap::new(),
            bin_config,
            insertion_log: Vec::new(),
        }
    }

    pub fn bin_config(&self) -> &BinConfig {
        &self.bin_config
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, key: &BinKey) -> Option<&Individual> {
        self.cells.get(key)
    }

    pub fn insertion_log(&self) -> &[InsertionEvent] {
        &self.insertion_log
    }

    pub fn best_fitness(&self) -> Option<f64> {
        self.cells.values().map(|i| i.fitness).reduce(f64::max)
    }

    /// Places `individual` in its bin if the bin is empty or the individual
    /// is strictly fitter than the incumbent. Ties keep the incumbent.
    pub fn try_insert(&mut self, individual: Individual, iteration: usize) -> InsertOutcome {
        let key = bin(&individual.phenotype, &self.bin_config);
        let old_fitness = self.cells.get(&key).map(|i| i.fitness);
        let outcome = match old_fitness {
            None => InsertOutcome::Inserted,
            Some(old) if individual.fitness > old => InsertOutcome::Replaced,
            Some(_) => return InsertOutcome::Rejected,
        };
        self.insertion_log.push(InsertionEvent {
            iteration,
            bin: key,
            individual: individual.id,
            old_fitness,
            new_fitness: individual.fitness,
        });
        self.cells.insert(key, individual);
        outcome
    }

    /// Snapshot of all elites ordered by bin.
    pub fn elites(&self) -> Vec<Individual> {
        self.cells.values().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BinKey, &Individual)> {
        self.cells.iter()
    }

    /// Distinct projected cells holding an elite admitted by `threshold`.
    pub fn covered_cells(&self, space: &CoverageSpace, threshold: Threshold) -> BTreeSet<Vec<usize>> {
        self.cells
            .iter()
            .filter(|(_, e)| threshold.admits(e.fitness))
            .map(|(k, _)| space.project(k))
            .collect()
    }

    /// Fraction of `space` covered by elites admitted by `threshold`.
    pub fn coverage(&self, space: &CoverageSpace, threshold: Threshold) -> f64 {
        self.covered_cells(space, threshold).len() as f64 / space.cell_count() as f64
    }

    pub fn to_json(&self) -> Result<String, ArchiveError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ArchiveError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, ArchiveError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// One row per elite, ordered by bin.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ArchiveError> {
        write_individuals_csv(out, self.cells.iter().map(|(k, e)| (Some(*k), e)))
    }
}

pub(crate) fn write_individuals_csv<'a, W: Write>(
    out: W,
    rows: impl Iterator<Item = (Option<BinKey>, &'a Individual)>,
) -> Result<(), ArchiveError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "id",
        "shots_bin",
        "words_bin",
        "depth_bin",
        "shots",
        "word_count",
        "depth",
        "has_context",
        "fitness",
        "eval_count",
        "type_token_ratio",
        "iteration",
        "parent",
        "genotype",
    ])?;
    for (key, e) in rows {
        let bins = key
            .map(|k| [k.shots_bin, k.words_bin, k.depth_bin].map(|v| v.to_string()))
            .unwrap_or_default();
        let p = &e.phenotype;
        w.write_record([
            e.id.to_string(),
            bins[0].clone(),
            bins[1].clone(),
            bins[2].clone(),
            p.shots.to_string(),
            p.word_count.to_string(),
            p.depth.to_string(),
            p.has_context.to_string(),
            e.fitness.to_string(),
            e.eval_count.to_string(),
            format!("{:.6}", e.type_token_ratio),
            e.provenance.iteration.to_string(),
            e.provenance.parent.map(|p| p.to_string()).unwrap_or_default(),
            e.genotype.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
