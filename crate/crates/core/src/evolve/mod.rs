//! Search drivers: MAP-Elites and the equal-budget random-search baseline.
//!
//! Both are [`SearchStrategy`] implementations looked up by name in a
//! [`StrategyRegistry`]. Fitness evaluations inside one generation run on a
//! bounded thread pool; results are merged in population order so the
//! outcome never depends on scheduling.

mod map_elites;
mod random_search;

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use map_elites::{next_generation, MapElites};
pub use random_search::RandomSearch;

use crate::archive::{Archive, CoverageSpace, InsertOutcome, Individual, Provenance, Threshold};
use crate::evaluator::{fitness, FitnessError, Model};
use crate::grammar::{GenericTables, Genotype, Grammar, DEFAULT_MAX_SHOTS};
use crate::phenotype::BinConfig;
use crate::seed;
use crate::tasks::{sample_eval_instances, TaskDataset, TaskError};

/// Fitness above which an individual is a high performer.
pub const HIGH_PERFORMER_THRESHOLD: f64 = 0.55;

const STREAM_EVAL: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_GENERATION: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub population_size: usize,
    pub num_iterations: usize,
    pub mut_rate: f64,
    pub mut_chance: f64,
    pub num_evaluations: usize,
    pub bin_config: BinConfig,
    pub max_shots: usize,
    pub seed: u64,
    pub algorithm: String,
    /// Maximum concurrent fitness evaluations.
    pub parallelism: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            population_size: 50,
            num_iterations: 10,
            mut_rate: 0.40,
            mut_chance: 0.40,
            num_evaluations: 50,
            bin_config: BinConfig::default(),
            max_shots: DEFAULT_MAX_SHOTS,
            seed: 0,
            algorithm: MapElites::NAME.to_string(),
            parallelism: 1,
        }
    }
}

impl RunConfig {
    pub fn check(&self) -> Result<(), RunError> {
        let bad = |msg: &str| Err(RunError::Config(msg.to_string()));
        if !(0.0..=1.0).contains(&self.mut_rate) {
            return bad("mut_rate must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.mut_chance) {
            return bad("mut_chance must lie in [0, 1]");
        }
        if self.population_size < 1 || self.num_iterations < 1 || self.num_evaluations < 1 {
            return bad("population_size, num_iterations and num_evaluations must be at least 1");
        }
        if self.parallelism < 1 {
            return bad("parallelism must be at least 1");
        }
        if self.bin_config.shots < 1 || self.bin_config.words < 1 || self.bin_config.depth < 1 {
            return bad("bin widths must be at least 1");
        }
        Ok(())
    }

    /// Offspring per generation: `mut_rate * population_size`, rounded half up.
    pub fn offspring_count(&self) -> usize {
        ((self.mut_rate * self.population_size as f64 + 0.5).floor() as usize).min(self.population_size)
    }

    /// Total fitness evaluations a run performs.
    pub fn budget(&self) -> usize {
        self.population_size * self.num_iterations
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Fitness(#[from] FitnessError),
    #[error("unknown algorithm `{0}`; available: {1}")]
    UnknownAlgorithm(String, String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub evaluated: usize,
    pub fitness_min: f64,
    pub fitness_mean: f64,
    pub fitness_max: f64,
    pub archive_size: usize,
    pub best_fitness: f64,
    /// Shots x depth coverage counting every elite.
    pub coverage_any: f64,
    /// Shots x depth coverage counting high performers only.
    pub coverage_high: f64,
    pub inserted: usize,
    pub replaced: usize,
    pub rejected: usize,
    pub failures: usize,
    pub ambiguous: usize,
}

/// Deterministic record of a run. Wall-clock timing lives in [`RunTiming`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub task: String,
    pub algorithm: String,
    pub model: String,
    pub config: RunConfig,
    pub eval_instances: Vec<usize>,
    pub iterations: Vec<IterationRecord>,
    pub total_evaluations: usize,
    pub total_model_calls: usize,
    pub total_failures: usize,
    /// Some instances were scored unmatched because the model failed.
    pub degraded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub archive: Archive,
    pub log: RunLog,
    /// Every evaluated individual, in evaluation order.
    pub population: Vec<Individual>,
    pub timing: RunTiming,
}

/// Inputs shared by every strategy.
pub struct RunContext<'a> {
    pub config: &'a RunConfig,
    pub task: &'a TaskDataset,
    pub grammar: &'a Grammar,
    pub tables: &'a GenericTables,
    pub model: &'a dyn Model,
}

pub trait SearchStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn run(&self, ctx: &RunContext<'_>) -> Result<RunOutput, RunError>;
}

/// Search strategies by name.
pub struct StrategyRegistry {
    strategies: BTreeMap<&'static str, Box<dyn SearchStrategy>>,
}

impl StrategyRegistry {
    pub fn builtin() -> Self {
        let mut r = StrategyRegistry {
            strategies: BTreeMap::new(),
        };
        r.register(Box::new(MapElites));
        r.register(Box::new(RandomSearch));
        r
    }

    pub fn register(&mut self, strategy: Box<dyn SearchStrategy>) {
        self.strategies.insert(strategy.name(), strategy);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.strategies.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn SearchStrategy, RunError> {
        self.strategies
            .get(name)
            .map(|s| s.as_ref())
            .ok_or_else(|| RunError::UnknownAlgorithm(name.to_string(), self.names().join(", ")))
    }
}

/// Runs the strategy named by `ctx.config.algorithm`.
pub fn run(ctx: &RunContext<'_>) -> Result<RunOutput, RunError> {
    StrategyRegistry::builtin().get(&ctx.config.algorithm)?.run(ctx)
}

/// A genotype awaiting evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub genotype: Genotype,
    pub parent: Option<u64>,
}

/// Mutable state common to both strategies.
pub(crate) struct Session<'a, 'c> {
    ctx: &'a RunContext<'c>,
    pool: rayon::ThreadPool,
    pub eval_instances: Vec<usize>,
    pub archive: Archive,
    pub population: Vec<Individual>,
    pub iterations: Vec<IterationRecord>,
    next_id: u64,
    started: Instant,
    space: CoverageSpace,
}

impl<'a, 'c> Session<'a, 'c> {
    pub fn new(ctx: &'a RunContext<'c>) -> Result<Self, RunError> {
        ctx.config.check()?;
        let mut rng = seed::stream(ctx.config.seed, &[STREAM_EVAL]);
        let eval_instances = sample_eval_instances(ctx.task, ctx.config.num_evaluations, &mut rng)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(ctx.config.parallelism)
            .build()
            .map_err(|e| RunError::Config(format!("thread pool: {e}")))?;
        Ok(Session {
            ctx,
            pool,
            eval_instances,
            archive: Archive::new(ctx.config.bin_config),
            population: Vec::new(),
            iterations: Vec::new(),
            next_id: 0,
            started: Instant::now(),
            space: CoverageSpace::shots_by_depth(),
        })
    }

    pub fn init_rng(&self) -> seed::StreamRng {
        seed::stream(self.ctx.config.seed, &[STREAM_INIT])
    }

    pub fn generation_rng(&self, iteration: usize) -> seed::StreamRng {
        seed::stream(self.ctx.config.seed, &[STREAM_GENERATION, iteration as u64])
    }

    pub fn config(&self) -> &RunConfig {
        self.ctx.config
    }

    pub fn grammar(&self) -> &Grammar {
        self.ctx.grammar
    }

    /// Evaluates `candidates`, inserts them in order, and logs the iteration.
    /// Returns the evaluated individuals in candidate order.
    pub fn evaluate(&mut self, iteration: usize, candidates: Vec<Candidate>) -> Result<Vec<Individual>, RunError> {
        let ctx = self.ctx;
        let eval = &self.eval_instances;
        let reports = self.pool.install(|| {
            candidates
                .par_iter()
                .map(|c| fitness(&c.genotype, ctx.task, eval, ctx.model, ctx.grammar, ctx.tables))
                .collect::<Vec<_>>()
        });

        let mut record = IterationRecord {
            iteration,
            evaluated: candidates.len(),
            fitness_min: f64::INFINITY,
            fitness_mean: 0.0,
            fitness_max: f64::NEG_INFINITY,
            archive_size: 0,
            best_fitness: 0.0,
            coverage_any: 0.0,
            coverage_high: 0.0,
            inserted: 0,
            replaced: 0,
            rejected: 0,
            failures: 0,
            ambiguous: 0,
        };
        let mut evaluated = Vec::with_capacity(candidates.len());
        let mut sum = 0.0;
        for (candidate, report) in candidates.into_iter().zip(reports) {
            let report = report?;
            let individual = Individual {
                id: self.next_id,
                genotype: candidate.genotype,
                phenotype: report.phenotype,
                fitness: report.fitness,
                eval_count: report.evaluations,
                type_token_ratio: report.type_token_ratio,
                provenance: Provenance {
                    iteration,
                    parent: candidate.parent,
                },
            };
            self.next_id += 1;
            record.fitness_min = record.fitness_min.min(report.fitness);
            record.fitness_max = record.fitness_max.max(report.fitness);
            sum += report.fitness;
            record.failures += report.failures;
            record.ambiguous += report.ambiguous;
            match self.archive.try_insert(individual.clone(), iteration) {
                InsertOutcome::Inserted => record.inserted += 1,
                InsertOutcome::Replaced => record.replaced += 1,
                InsertOutcome::Rejected => record.rejected += 1,
            }
            self.population.push(individual.clone());
            evaluated.push(individual);
        }
        if record.evaluated > 0 {
            record.fitness_mean = sum / record.evaluated as f64;
        } else {
            record.fitness_min = 0.0;
            record.fitness_max = 0.0;
        }
        record.archive_size = self.archive.len();
        record.best_fitness = self.archive.best_fitness().unwrap_or(0.0);
        record.coverage_any = self.archive.coverage(&self.space, Threshold::Any);
        record.coverage_high = self
            .archive
            .coverage(&self.space, Threshold::Above(HIGH_PERFORMER_THRESHOLD));
        self.iterations.push(record);
        Ok(evaluated)
    }

    pub fn finish(self, algorithm: &str) -> RunOutput {
        let total_failures: usize = self.iterations.iter().map(|r| r.failures).sum();
        let total_evaluations = self.population.len();
        let log = RunLog {
            task: self.ctx.task.name.clone(),
            algorithm: algorithm.to_string(),
            model: self.ctx.model.tag(),
            config: self.ctx.config.clone(),
            eval_instances: self.eval_instances,
            iterations: self.iterations,
            total_evaluations,
            total_model_calls: total_evaluations * self.ctx.config.num_evaluations,
            total_failures,
            degraded: total_failures > 0,
        };
        RunOutput {
            archive: self.archive,
            log,
            population: self.population,
            timing: RunTiming {
                wall_time_secs: self.started.elapsed().as_secs_f64(),
            },
        }
    }
}
