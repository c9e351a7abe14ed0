mod common;

use std::time::Duration;

use prompt_elites::evaluator::{fitness, CachedModel, EvalError, EvaluatorConfig, FitnessError, Model, RemoteModel};
use prompt_elites::grammar::{random_genotype, GenericTables, Grammar};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{even_numbers, Reply, Stub};

fn config(retries: u32) -> EvaluatorConfig {
    let mut c = EvaluatorConfig::remote("unused");
    c.timeout = Duration::from_millis(500);
    c.max_retries = retries;
    c.backoff = Duration::from_millis(1);
    c
}

fn score(model: &dyn Model, eval: &[usize]) -> Result<prompt_elites::evaluator::FitnessReport, FitnessError> {
    let grammar = Grammar::prompt_default();
    let g = random_genotype(&grammar, &mut ChaCha8Rng::seed_from_u64(3), 10);
    fitness(&g, &even_numbers(), eval, model, &grammar, &GenericTables::default())
}

#[test]
fn unauthorized_aborts_without_retry() {
    let stub = Stub::start(|_, _| Reply::Status(401));
    let model = RemoteModel::new(stub.url.clone(), Some("bad".into()), &config(3));
    let err = score(&model, &[0, 1]).unwrap_err();
    assert!(matches!(err, FitnessError::Model(EvalError::Auth(_))), "{err:?}");
    assert_eq!(stub.hits(), 1);
}

#[test]
fn rate_limits_are_retried() {
    let stub = Stub::start(|n, _| if n < 2 { Reply::Status(429) } else { Reply::Answer });
    let model = RemoteModel::new(stub.url.clone(), None, &config(3));
    let report = score(&model, &[0]).unwrap();
    assert_eq!(report.failures, 0);
    assert_eq!(stub.hits(), 3);
    assert_eq!(stub.auth_headers(), vec![None, None, None]);
}

#[test]
fn client_errors_are_not_retried() {
    let stub = Stub::start(|_, _| Reply::Status(400));
    let model = RemoteModel::new(stub.url.clone(), None, &config(3));
    let report = score(&model, &[0, 1]).unwrap();
    assert_eq!((report.failures, report.fitness), (2, 0.0));
    assert_eq!(stub.hits(), 2);
}

#[test]
fn cached_responses_skip_the_endpoint() {
    let stub = Stub::start(|_, _| Reply::Answer);
    let dir = tempfile::tempdir().unwrap();
    let first = CachedModel::new(
        RemoteModel::new(stub.url.clone(), None, &config(0)),
        dir.path().into(),
        "k".into(),
    )
    .unwrap();
    let a = score(&first, &[0, 1, 2]).unwrap();
    assert_eq!(stub.hits(), 3);

    let second = CachedModel::new(
        RemoteModel::new(stub.url.clone(), None, &config(0)),
        dir.path().into(),
        "k".into(),
    )
    .unwrap();
    let b = score(&second, &[0, 1, 2]).unwrap();
    assert_eq!(stub.hits(), 3, "served from disk");
    assert_eq!((second.hits(), second.misses()), (3, 0));
    assert_eq!(a.fitness, b.fitness);
}
