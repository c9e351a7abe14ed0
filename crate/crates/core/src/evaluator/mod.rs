//! Fitness evaluation through a model boundary.
//!
//! A [`Model`] turns a prompt into a short completion. Two families are
//! provided: [`RemoteModel`] talks to an HTTP inference endpoint and the
//! mock models in [`mock`] answer deterministically from an individual's
//! descriptors. [`fitness`] instantiates one prompt per evaluation
//! instance, queries the model, and scores the share of matched answers.

mod cache;
mod matching;
pub mod mock;
mod remote;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::CachedModel;
pub use matching::{match_answer, normalize, MatchError};
pub use mock::{MockRegistry, MockRule};
pub use remote::{truncate_tokens, RemoteModel};

use crate::grammar::{expand, ExpandError, GenericTables, Genotype, Grammar};
use crate::phenotype::{extract, type_token_ratio, Phenotype};
use crate::tasks::{instantiate, TaskDataset, TaskError, TaskInstance};

pub const DEFAULT_TOKEN_ENV: &str = "PROMPT_ELITES_API_TOKEN";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("request timed out")]
    Timeout,
    #[error("endpoint returned HTTP {status}")]
    Http { status: u16 },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("evaluator configuration: {0}")]
    Config(String),
}

impl EvalError {
    /// Errors that no retry or degradation can recover from.
    pub fn is_fatal(&self) -> bool {
        matches!(self, EvalError::Auth(_) | EvalError::Config(_))
    }

    pub fn is_retryable(&self) -> bool {
        match self {
            EvalError::Timeout | EvalError::Transport(_) => true,
            EvalError::Http { status } => *status == 408 || *status == 429 || *status >= 500,
            EvalError::Auth(_) | EvalError::Config(_) => false,
        }
    }
}

/// Everything a model may look at for one completion.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub prompt: &'a str,
    pub phenotype: &'a Phenotype,
    pub instance_index: usize,
    pub instance: &'a TaskInstance,
    pub choices: Option<&'a [String]>,
}

pub trait Model: Send + Sync {
    /// Short identifier used in output file names and cache keys.
    fn tag(&self) -> String;

    fn complete(&self, query: &Query<'_>) -> Result<String, EvalError>;
}

impl<M: Model + ?Sized> Model for Box<M> {
    fn tag(&self) -> String {
        (**self).tag()
    }

    fn complete(&self, query: &Query<'_>) -> Result<String, EvalError> {
        (**self).complete(query)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EvaluatorKind {
    Remote {
        endpoint: String,
        /// Environment variable holding the bearer token.
        token_env: String,
    },
    /// A registered mock, e.g. `zero-shot-only` or `constant:0.5`.
    Mock { rule: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorConfig {
    pub kind: EvaluatorKind,
    pub max_output_tokens: usize,
    pub temperature: f64,
    pub timeout: Duration,
    /// Retries after the first failed attempt.
    pub max_retries: u32,
    /// First backoff delay; doubles on each retry.
    pub backoff: Duration,
    pub cache_dir: Option<PathBuf>,
}

impl EvaluatorConfig {
    pub fn mock(rule: impl Into<String>) -> Self {
        EvaluatorConfig {
            kind: EvaluatorKind::Mock { rule: rule.into() },
            ..Self::remote("http://localhost")
        }
    }

    pub fn remote(endpoint: impl Into<String>) -> Self {
        EvaluatorConfig {
            kind: EvaluatorKind::Remote {
                endpoint: endpoint.into(),
                token_env: DEFAULT_TOKEN_ENV.to_string(),
            },
            max_output_tokens: 3,
            temperature: 0.0,
            timeout: Duration::from_secs(30),
            max_retries: 4,
            backoff: Duration::from_millis(500),
            cache_dir: None,
        }
    }

    pub fn check(&self) -> Result<(), EvalError> {
        if self.max_output_tokens < 1 {
            return Err(EvalError::Config("max_output_tokens must be at least 1".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(EvalError::Config("temperature must be non-negative".into()));
        }
        Ok(())
    }

    /// Builds the configured model. `seed` drives the mock rules.
    pub fn build(&self, seed: u64) -> Result<Box<dyn Model>, EvalError> {
        self.check()?;
        let model: Box<dyn Model> = match &self.kind {
            EvaluatorKind::Mock { rule } => MockRegistry::builtin().create(rule, seed)?,
            EvaluatorKind::Remote { endpoint, token_env } => {
                let token = std::env::var(token_env).map_err(|_| {
                    EvalError::Auth(format!("environment variable {token_env} is not set"))
                })?;
                Box::new(RemoteModel::new(endpoint.clone(), Some(token), self))
            }
        };
        Ok(match &self.cache_dir {
            Some(dir) => {
                let key = serde_json::to_string(&(
                    &self.kind,
                    self.max_output_tokens,
                    self.temperature.to_bits(),
                    seed,
                ))
                .expect("config serializes");
                Box::new(CachedModel::new(model, dir.clone(), key).map_err(|e| {
                    EvalError::Config(format!("cache directory {}: {e}", dir.display()))
                })?)
            }
            None => model,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub instance_index: usize,
    pub raw_output: String,
    pub matched: bool,
    pub latency: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    /// matched / evaluations.
    pub fitness: f64,
    pub matched: usize,
    pub evaluations: usize,
    /// Instances whose completion failed after retries.
    pub failures: usize,
    /// Outputs that could not be resolved to a single choice.
    pub ambiguous: usize,
    pub phenotype: Phenotype,
    pub type_token_ratio: f64,
    pub outcomes: Vec<EvalOutcome>,
}

#[derive(Debug, Error)]
pub enum FitnessError {
    #[error(transparent)]
    Expand(#[from] ExpandError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Model(#[from] EvalError),
    #[error("no evaluation instances")]
    NoInstances,
}

/// Scores `genotype` as the fraction of `eval_indices` answered correctly.
///
/// Examples are drawn from the instances outside the evaluation set when
/// there are enough of them, so every evaluation sees the same shots;
/// otherwise only the evaluated instance itself is excluded. Transport
/// failures count as unmatched and are tallied; authentication and
/// configuration errors abort.
pub fn fitness(
    genotype: &Genotype,
    task: &TaskDataset,
    eval_indices: &[usize],
    model: &dyn Model,
    grammar: &Grammar,
    tables: &GenericTables,
) -> Result<FitnessReport, FitnessError> {
    if eval_indices.is_empty() {
        return Err(FitnessError::NoInstances);
    }
    let template = expand(genotype, grammar, tables)?;
    let shots = template.structure.shots;
    let exclude: &[usize] = if task.len() - eval_indices.len() >= shots {
        eval_indices
    } else {
        &[]
    };
    let prompts = eval_indices
        .iter()
        .map(|&i| instantiate(&template, task, i, &genotype.example_seeds, exclude))
        .collect::<Result<Vec<_>, _>>()?;

    let reference = &prompts[0].descriptor_text;
    let phenotype = extract(&template, reference);
    let ttr = type_token_ratio(reference).unwrap_or(0.0);

    let mut outcomes = Vec::with_capacity(prompts.len());
    let (mut failures, mut ambiguous) = (0, 0);
    for prompt in &prompts {
        let instance = &task.instances[prompt.instance];
        let query = Query {
            prompt: &prompt.text,
            phenotype: &phenotype,
            instance_index: prompt.instance,
            instance,
            choices: task.choices.as_deref(),
        };
        let started = Instant::now();
        let (raw_output, matched) = match model.complete(&query) {
            Ok(out) => {
                let matched = match match_answer(&out, &instance.target, task.choices.as_deref()) {
                    Ok(m) => m,
                    Err(_) => {
                        ambiguous += 1;
                        false
                    }
                };
                (out, matched)
            }
            Err(e) if e.is_fatal() => return Err(e.into()),
            Err(_) => {
                failures += 1;
                (String::new(), false)
            }
        };
        outcomes.push(EvalOutcome {
            instance_index: prompt.instance,
            raw_output,
            matched,
            latency: started.elapsed(),
        });
    }

    let matched = outcomes.iter().filter(|o| o.matched).count();
    Ok(FitnessReport {
        fitness: matched as f64 / outcomes.len() as f64,
        matched,
        evaluations: outcomes.len(),
        failures,
        ambiguous,
        phenotype,
        type_token_ratio: ttr,
        outcomes,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::tasks::TaskInstance;

    pub(crate) fn task(n: usize) -> TaskDataset {
        TaskDataset {
            name: "toy".into(),
            task_request: "Decide whether the number is even.".into(),
            llm_instruction: "Answer Yes or No.".into(),
            choices: Some(vec!["Yes".into(), "No".into()]),
            instances: (0..n)
                .map(|i| TaskInstance {
                    input: format!("Number {i}"),
                    target: if i % 2 == 0 { "Yes" } else { "No" }.into(),
                })
                .collect(),
        }
    }

    /// Answers correctly for the first `k` instance indices it is asked about.
    struct FirstK(usize);

    impl Model for FirstK {
        fn tag(&self) -> String {
            "first-k".into()
        }

        fn complete(&self, q: &Query<'_>) -> Result<String, EvalError> {
            Ok(if q.instance_index < self.0 {
                q.instance.target.clone()
            } else {
                "maybe".into()
            })
        }
    }

    struct Failing(EvalError);

    impl Model for Failing {
        fn tag(&self) -> String {
            "failing".into()
        }

        fn complete(&self, _: &Query<'_>) -> Result<String, EvalError> {
            Err(self.0.clone())
        }
    }

    fn run(model: &dyn Model, genotype: &str) -> Result<FitnessReport, FitnessError> {
        let t = task(100);
        let idx: Vec<usize> = (0..50).collect();
        fitness(
            &genotype.parse().unwrap(),
            &t,
            &idx,
            model,
            &Grammar::prompt_default(),
            &GenericTables::default(),
        )
    }

    #[test]
    fn fitness_is_matched_fraction() {
        let r = run(&FirstK(37), "[P1, S1, R0, E0, I0]").unwrap();
        assert_eq!(r.matched, 37);
        assert_eq!(r.fitness, 0.74);
        let r = run(&FirstK(0), "[P1, S1, R0, E0, I0]").unwrap();
        assert_eq!(r.fitness, 0.0);
    }

    #[test]
    fn zero_shot_only_mock_scores_one() {
        let model = EvaluatorConfig::mock("zero-shot-only").build(1).unwrap();
        let r = run(model.as_ref(), "[P1, S1, R0, E0, I0]").unwrap();
        assert_eq!(r.fitness, 1.0);
    }

    #[test]
    fn transport_failures_degrade() {
        let r = run(&Failing(EvalError::Timeout), "[P1, S1, R0, E0, I0]").unwrap();
        assert_eq!(r.fitness, 0.0);
        assert_eq!(r.failures, 50);
    }

    #[test]
    fn auth_failure_aborts() {
        let err = run(&Failing(EvalError::Auth("bad token".into())), "[P1, S1, R0, E0, I0]").unwrap_err();
        assert!(matches!(err, FitnessError::Model(EvalError::Auth(_))));
    }

    #[test]
    fn examples_are_shared_across_evaluations() {
        let mut g: Genotype = "[P1, S0, R0, X1, N0, E0, I0]".parse().unwrap();
        g.example_seeds = vec![5, 6];
        let t = task(100);
        let idx: Vec<usize> = (0..50).collect();
        let r = fitness(
            &g,
            &t,
            &idx,
            &FirstK(0),
            &Grammar::prompt_default(),
            &GenericTables::default(),
        )
        .unwrap();
        assert_eq!(r.phenotype.shots, 2);
        assert!(r.phenotype.word_count > 0);
    }

    #[test]
    fn config_checks() {
        let mut c = EvaluatorConfig::mock("constant:0.5");
        c.max_output_tokens = 0;
        assert!(c.check().is_err());
        let mut c = EvaluatorConfig::mock("constant:0.5");
        c.temperature = -1.0;
        assert!(c.check().is_err());
    }

    #[test]
    fn missing_token_is_auth_error() {
        let mut c = EvaluatorConfig::remote("http://127.0.0.1:9");
        c.kind = EvaluatorKind::Remote {
            endpoint: "http://127.0.0.1:9".into(),
            token_env: "PROMPT_ELITES_TEST_UNSET_TOKEN".into(),
        };
        assert!(matches!(c.build(0), Err(EvalError::Auth(_))));
    }
}
