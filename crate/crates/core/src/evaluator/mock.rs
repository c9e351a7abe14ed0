//! Deterministic offline models, selected by name.
//!
//! A [`MockRule`] decides from an individual's descriptors whether an
//! instance is answered correctly; the wrapping model then returns either
//! the target or a wrong choice, so answer matching runs exactly as it would
//! against a real endpoint. Rules are pure functions of
//! `(phenotype, instance index, seed)`.

use std::collections::BTreeMap;

use super::{normalize, EvalError, Model, Query};
use crate::phenotype::{shot_category, Phenotype, ShotCategory};
use crate::seed;

pub trait MockRule: Send + Sync {
    fn name(&self) -> String;

    fn matched(&self, phenotype: &Phenotype, instance_index: usize, seed: u64) -> bool;
}

const PHENOTYPE_SALT: u64 = 0x5048_454e;
const INSTANCE_SALT: u64 = 0x494e_5354;

fn phenotype_tags(p: &Phenotype) -> [u64; 4] {
    [p.shots as u64, p.word_count as u64, p.depth as u64, p.has_context as u64]
}

/// Uniform draw fixed per phenotype.
fn phenotype_unit(p: &Phenotype, seed: u64) -> f64 {
    let t = phenotype_tags(p);
    seed::unit(seed, &[PHENOTYPE_SALT, t[0], t[1], t[2], t[3]])
}

/// Uniform draw fixed per (phenotype, instance).
fn instance_unit(p: &Phenotype, instance: usize, seed: u64) -> f64 {
    let t = phenotype_tags(p);
    seed::unit(seed, &[INSTANCE_SALT, t[0], t[1], t[2], t[3], instance as u64])
}

/// Matches each instance with a fixed probability.
#[derive(Debug, Clone, Copy)]
pub struct Constant(pub f64);

impl MockRule for Constant {
    fn name(&self) -> String {
        format!("constant:{}", self.0)
    }

    fn matched(&self, p: &Phenotype, instance: usize, seed: u64) -> bool {
        instance_unit(p, instance, seed) < self.0
    }
}

/// Only prompts without examples answer correctly.
#[derive(Debug, Clone, Copy)]
pub struct ZeroShotOnly;

impl MockRule for ZeroShotOnly {
    fn name(&self) -> String {
        "zero-shot-only".into()
    }

    fn matched(&self, p: &Phenotype, _: usize, _: u64) -> bool {
        p.shots == 0
    }
}

/// Match probability grows with the shot category.
#[derive(Debug, Clone, Copy)]
pub struct ShotsReward {
    pub zero: f64,
    pub few: f64,
    pub many: f64,
}

impl Default for ShotsReward {
    fn default() -> Self {
        ShotsReward {
            zero: 0.35,
            few: 0.55,
            many: 0.75,
        }
    }
}

impl MockRule for ShotsReward {
    fn name(&self) -> String {
        "shots-reward".into()
    }

    fn matched(&self, p: &Phenotype, instance: usize, seed: u64) -> bool {
        let prob = match shot_category(p.shots) {
            ShotCategory::ZeroShot => self.zero,
            ShotCategory::FewShot => self.few,
            ShotCategory::ManyShot => self.many,
        };
        instance_unit(p, instance, seed) < prob
    }
}

/// Each phenotype gets a latent skill `center + spread * (u - 0.5)`; an
/// instance is matched when the per-instance noise falls below that skill.
#[derive(Debug, Clone, Copy)]
pub struct NoisyThreshold {
    pub center: f64,
    pub spread: f64,
}

impl Default for NoisyThreshold {
    fn default() -> Self {
        NoisyThreshold {
            center: 0.6,
            spread: 0.4,
        }
    }
}

impl NoisyThreshold {
    pub fn skill(&self, p: &Phenotype, seed: u64) -> f64 {
        (self.center + self.spread * (phenotype_unit(p, seed) - 0.5)).clamp(0.0, 1.0)
    }
}

impl MockRule for NoisyThreshold {
    fn name(&self) -> String {
        "noisy-threshold".into()
    }

    fn matched(&self, p: &Phenotype, instance: usize, seed: u64) -> bool {
        instance_unit(p, instance, seed) < self.skill(p, seed)
    }
}

/// Adapts a [`MockRule`] into a [`Model`].
pub struct RuleModel {
    rule: Box<dyn MockRule>,
    seed: u64,
}

impl RuleModel {
    pub fn new(rule: Box<dyn MockRule>, seed: u64) -> Self {
        RuleModel { rule, seed }
    }
}

impl Model for RuleModel {
    fn tag(&self) -> String {
        format!("mock-{}", self.rule.name().replace(':', "-"))
    }

    fn complete(&self, q: &Query<'_>) -> Result<String, EvalError> {
        if self.rule.matched(q.phenotype, q.instance_index, self.seed) {
            return Ok(q.instance.target.clone());
        }
        let target = normalize(&q.instance.target);
        let wrong = q
            .choices
            .into_iter()
            .flatten()
            .find(|c| normalize(c) != target)
            .cloned()
            .unwrap_or_else(|| "unknown".to_string());
        Ok(wrong)
    }
}

/// Always answers with the first admissible choice.
pub struct EchoFirstChoice;

impl Model for EchoFirstChoice {
    fn tag(&self) -> String {
        "mock-echo-first-choice".into()
    }

    fn complete(&self, q: &Query<'_>) -> Result<String, EvalError> {
        Ok(q.choices
            .and_then(|c| c.first())
            .cloned()
            .unwrap_or_default())
    }
}

type Factory = fn(Option<&str>, u64) -> Result<Box<dyn Model>, EvalError>;

/// Mock models by name. A spec is `name` or `name:params`.
pub struct MockRegistry {
    factories: BTreeMap<&'static str, Factory>,
}

fn parse_params(name: &str, params: Option<&str>, defaults: &[f64]) -> Result<Vec<f64>, EvalError> {
    let Some(params) = params else {
        return Ok(defaults.to_vec());
    };
    let values = params
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| EvalError::Config(format!("mock `{name}`: {e}")))?;
    if values.len() != defaults.len() {
        return Err(EvalError::Config(format!(
            "mock `{name}` takes {} parameter(s), got {}",
            defaults.len(),
            values.len()
        )));
    }
    if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(EvalError::Config(format!("mock `{name}` parameters must lie in [0, 1]")));
    }
    Ok(values)
}

fn rule(rule: impl MockRule + 'static, seed: u64) -> Box<dyn Model> {
    Box::new(RuleModel::new(Box::new(rule), seed))
}

impl MockRegistry {
    pub fn empty() -> Self {
        MockRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("constant", |p, seed| {
            let v = parse_params("constant", p, &[0.5])?;
            Ok(rule(Constant(v[0]), seed))
        });
        r.register("zero-shot-only", |_, seed| Ok(rule(ZeroShotOnly, seed)));
        r.register("shots-reward", |p, seed| {
            let d = ShotsReward::default();
            let v = parse_params("shots-reward", p, &[d.zero, d.few, d.many])?;
            Ok(rule(
                ShotsReward {
                    zero: v[0],
                    few: v[1],
                    many: v[2],
                },
                seed,
            ))
        });
        r.register("noisy-threshold", |p, seed| {
            let d = NoisyThreshold::default();
            let v = parse_params("noisy-threshold", p, &[d.center, d.spread])?;
            Ok(rule(
                NoisyThreshold {
                    center: v[0],
                    spread: v[1],
                },
                seed,
            ))
        });
        r.register("echo-first-choice", |_, _| Ok(Box::new(EchoFirstChoice)));
        r
    }

    pub fn register(&mut self, name: &'static str, factory: Factory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn create(&self, spec: &str, seed: u64) -> Result<Box<dyn Model>, EvalError> {
        let (name, params) = match spec.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (spec, None),
        };
        let factory = self.factories.get(name).ok_or_else(|| {
            EvalError::Config(format!(
                "unknown mock `{name}`; available: {}",
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        factory(params, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::TaskInstance;

    fn pheno(shots: usize, words: usize) -> Phenotype {
        Phenotype {
            shots,
            word_count: words,
            depth: 3,
            has_context: false,
        }
    }

    fn ask(model: &dyn Model, p: &Phenotype, idx: usize) -> String {
        let inst = TaskInstance {
            input: "x".into(),
            target: "Yes".into(),
        };
        let choices = vec!["Yes".to_string(), "No".to_string()];
        model
            .complete(&Query {
                prompt: "",
                phenotype: p,
                instance_index: idx,
                instance: &inst,
                choices: Some(&choices),
            })
            .unwrap()
    }

    #[test]
    fn zero_shot_only() {
        assert!(!ZeroShotOnly.matched(&pheno(2, 10), 0, 0));
        assert!(ZeroShotOnly.matched(&pheno(0, 10), 0, 0));
    }

    #[test]
    fn echo_is_deterministic() {
        let m = MockRegistry::builtin().create("echo-first-choice", 0).unwrap();
        assert_eq!(ask(m.as_ref(), &pheno(0, 1), 0), "Yes");
        assert_eq!(ask(m.as_ref(), &pheno(5, 9), 3), "Yes");
    }

    #[test]
    fn unmatched_answers_a_wrong_choice() {
        let m = MockRegistry::builtin().create("zero-shot-only", 0).unwrap();
        assert_eq!(ask(m.as_ref(), &pheno(1, 1), 0), "No");
        assert_eq!(ask(m.as_ref(), &pheno(0, 1), 0), "Yes");
    }

    #[test]
    fn constant_rate_concentrates() {
        let rule = Constant(0.5);
        let p = pheno(1, 20);
        let hits = (0..10_000).filter(|&i| rule.matched(&p, i, 77)).count();
        let f = hits as f64 / 10_000.0;
        assert!((f - 0.5).abs() <= 0.02, "{f}");
    }

    #[test]
    fn shots_reward_is_monotone_in_category() {
        let rule = ShotsReward::default();
        let rate = |shots| {
            let mut hits = 0;
            for trial in 0..10_000usize {
                let p = pheno(shots, trial % 97);
                hits += rule.matched(&p, trial, 5) as usize;
            }
            hits as f64 / 10_000.0
        };
        let (zero, few, many) = (rate(0), rate(2), rate(5));
        assert!(zero < few && few < many, "{zero} {few} {many}");
    }

    #[test]
    fn rules_are_pure() {
        let rule = NoisyThreshold::default();
        let p = pheno(3, 44);
        for i in 0..100 {
            assert_eq!(rule.matched(&p, i, 9), rule.matched(&p, i, 9));
        }
    }

    #[test]
    fn registry_errors() {
        let r = MockRegistry::builtin();
        assert!(matches!(r.create("nope", 0), Err(EvalError::Config(_))));
        assert!(matches!(r.create("constant:2", 0), Err(EvalError::Config(_))));
        assert!(matches!(r.create("constant:0.1,0.2", 0), Err(EvalError::Config(_))));
        assert!(r.create("constant:0.25", 0).is_ok());
        assert_eq!(
            r.names().collect::<Vec<_>>(),
            ["constant", "echo-first-choice", "noisy-threshold", "shots-reward", "zero-shot-only"]
        );
    }
}
