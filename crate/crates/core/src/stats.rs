//! Coverage contingency tests, effect sizes, rank correlation and
//! proportion tests used to compare search runs.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::archive::{Archive, CoverageSpace, Individual, Threshold};
use crate::phenotype::{cot_category, shot_category, CotCategory, ShotCategory};

pub const ALPHA: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("contingency table is empty")]
    EmptyTable,
    #[error("inputs differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("invalid proportion counts: {0}")]
    InvalidCounts(String),
    #[error("no individual has fitness above {0}")]
    NoHighPerformers(f64),
}

/// Why a result was returned with a neutral statistic instead of a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Degenerate {
    /// A row or column total is zero.
    Table,
    /// One input is constant, so ranks carry no information.
    ConstantInput,
    /// The pooled proportion is 0 or 1.
    Pool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub statistic: f64,
    pub p_value: f64,
    pub effect_size: Option<f64>,
    pub significant: bool,
    pub degenerate: Option<Degenerate>,
}

impl StatResult {
    fn new(statistic: f64, p_value: f64, effect_size: Option<f64>) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        StatResult {
            statistic,
            p_value,
            effect_size,
            significant: p_value < ALPHA,
            degenerate: None,
        }
    }

    fn degenerate(kind: Degenerate, effect_size: Option<f64>) -> Self {
        StatResult {
            statistic: 0.0,
            p_value: 1.0,
            effect_size,
            significant: false,
            degenerate: Some(kind),
        }
    }
}

/// Rows are two methods, columns covered / uncovered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable2x2 {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable2x2 {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Result<Self, StatsError> {
        if a + b + c + d == 0 {
            return Err(StatsError::EmptyTable);
        }
        Ok(ContingencyTable2x2 { a, b, c, d })
    }

    /// Table for two methods covering `covered_a` and `covered_b` cells of a
    /// `universe`-cell space.
    pub fn from_coverage(covered_a: u64, covered_b: u64, universe: u64) -> Result<Self, StatsError> {
        if covered_a > universe || covered_b > universe {
            return Err(StatsError::InvalidCounts(format!(
                "covered cells ({covered_a}, {covered_b}) exceed universe {universe}"
            )));
        }
        Self::new(covered_a, universe - covered_a, covered_b, universe - covered_b)
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }
}

/// Covered vs uncovered cells of `space` for two archives; a cell counts
/// as covered when one of its elites passes `threshold`.
pub fn coverage_contingency(
    archive_a: &Archive,
    archive_b: &Archive,
    space: &CoverageSpace,
    threshold: Threshold,
) -> ContingencyTable2x2 {
    let universe = space.cell_count() as u64;
    let a = archive_a.covered_cells(space, threshold).len() as u64;
    let b = archive_b.covered_cells(space, threshold).len() as u64;
    ContingencyTable2x2::from_coverage(a, b, universe).expect("coverage lies within the universe")
}

/// Upper tail of the chi-square distribution with one degree of freedom.
pub fn chi2_sf_1df(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        erfc((x / 2.0).sqrt())
    }
}

/// Two-sided p-value of a standard normal statistic.
pub fn normal_two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Pearson chi-square with Yates' continuity correction. The corrected
/// deviation `|ad - bc| - n/2` is floored at zero.
pub fn chi_square_2x2_yates(t: &ContingencyTable2x2) -> StatResult {
    let [a, b, c, d] = [t.a, t.b, t.c, t.d].map(|v| v as f64);
    let n = a + b + c + d;
    let margins = (a + b) * (c + d) * (a + c) * (b + d);
    if margins == 0.0 {
        return StatResult::degenerate(Degenerate::Table, Some(0.0));
    }
    let dev = ((a * d - b * c).abs() - n / 2.0).max(0.0);
    let chi2 = n * dev * dev / margins;
    StatResult::new(chi2, chi2_sf_1df(chi2), Some(cramers_v(chi2, n as u64)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EffectMagnitude {
    Small,
    Medium,
    Large,
}

impl EffectMagnitude {
    pub fn classify(v: f64) -> Self {
        if v < 0.2 {
            EffectMagnitude::Small
        } else if v <= 0.5 {
            EffectMagnitude::Medium
        } else {
            EffectMagnitude::Large
        }
    }
}

impl fmt::Display for EffectMagnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EffectMagnitude::Small => "small",
            EffectMagnitude::Medium => "medium",
            EffectMagnitude::Large => "large",
        })
    }
}

/// Cramér's V for a 2x2 table: `sqrt(chi2 / n)`, capped at 1.
pub fn cramers_v(chi2: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (chi2.max(0.0) / n as f64).sqrt().min(1.0)
}

/// One-based ranks, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1 ..= end.
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho with a two-sided Student-t p-value on n - 2 degrees of
/// freedom. Constant input yields a degenerate result with p = 1.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<StatResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewObservations { needed: 3, got: x.len() });
    }
    let Some(rho) = pearson(&average_ranks(x), &average_ranks(y)) else {
        return Ok(StatResult::degenerate(Degenerate::ConstantInput, None));
    };
    let df = (x.len() - 2) as f64;
    let p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
        2.0 * dist.sf(t.abs())
    };
    Ok(StatResult::new(rho, p, None))
}

/// Pooled two-proportion z-test of `k1/n1` against `k2/n2`.
pub fn two_proportion_z(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<StatResult, StatsError> {
    if n1 == 0 || n2 == 0 || k1 > n1 || k2 > n2 {
        return Err(StatsError::InvalidCounts(format!("{k1}/{n1} vs {k2}/{n2}")));
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (k1 + k2) as f64 / (n1f + n2f);
    if pooled == 0.0 || pooled == 1.0 {
        return Ok(StatResult::degenerate(Degenerate::Pool, None));
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    let z = (k1 as f64 / n1f - k2 as f64 / n2f) / se;
    Ok(StatResult::new(z, normal_two_sided_p(z), None))
}

/// A binary prompt feature tested for enrichment among high performers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Feature {
    Context,
    Shots(ShotCategory),
    Cot(CotCategory),
}

impl Feature {
    pub fn all() -> Vec<Feature> {
        let mut v = vec![Feature::Context];
        v.extend(ShotCategory::ALL.map(Feature::Shots));
        v.extend(CotCategory::ALL.map(Feature::Cot));
        v
    }

    pub fn holds(&self, ind: &Individual) -> bool {
        let p = &ind.phenotype;
        match self {
            Feature::Context => p.has_context,
            Feature::Shots(c) => shot_category(p.shots) == *c,
            Feature::Cot(c) => cot_category(p.depth) == *c,
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feature::Context => f.write_str("Context"),
            Feature::Shots(c) => c.fmt(f),
            Feature::Cot(c) => c.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEnrichment {
    pub feature: Feature,
    pub name: String,
    pub overall_count: u64,
    pub overall_proportion: f64,
    pub high_count: u64,
    pub high_proportion: f64,
    /// High performers against the whole population.
    pub vs_overall: StatResult,
    pub complement_proportion: Option<f64>,
    /// High performers against everyone else; absent when everyone is one.
    pub vs_complement: Option<StatResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentReport {
    pub threshold: f64,
    pub population_size: u64,
    pub high_performer_count: u64,
    pub features: Vec<FeatureEnrichment>,
}

/// Feature proportions among individuals with fitness above `threshold`,
/// tested against the whole population and against the remainder.
pub fn enrichment_report(individuals: &[Individual], threshold: f64) -> Result<EnrichmentReport, StatsError> {
    let high: Vec<&Individual> = individuals.iter().filter(|i| i.fitness > threshold).collect();
    if high.is_empty() {
        return Err(StatsError::NoHighPerformers(threshold));
    }
    let n = individuals.len() as u64;
    let nh = high.len() as u64;
    let features = Feature::all()
        .into_iter()
        .map(|feature| {
            let k = individuals.iter().filter(|i| feature.holds(i)).count() as u64;
            let kh = high.iter().filter(|i| feature.holds(i)).count() as u64;
            let vs_overall = two_proportion_z(kh, nh, k, n).expect("subset counts are consistent");
            let (complement_proportion, vs_complement) = if n > nh {
                (
                    Some((k - kh) as f64 / (n - nh) as f64),
                    Some(two_proportion_z(kh, nh, k - kh, n - nh).expect("complement counts are consistent")),
                )
            } else {
                (None, None)
            };
            FeatureEnrichment {
                feature,
                name: feature.to_string(),
                overall_count: k,
                overall_proportion: k as f64 / n as f64,
                high_count: kh,
                high_proportion: kh as f64 / nh as f64,
                vs_overall,
                complement_proportion,
                vs_complement,
            }
        })
        .collect();
    Ok(EnrichmentReport {
        threshold,
        population_size: n,
        high_performer_count: nh,
        features,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub feature: String,
    pub result: StatResult,
}

/// Spearman correlation of each prompt feature with fitness.
pub fn feature_correlations(individuals: &[Individual]) -> Result<Vec<Correlation>, StatsError> {
    let fitness: Vec<f64> = individuals.iter().map(|i| i.fitness).collect();
    let columns: [(&str, fn(&Individual) -> f64); 5] = [
        ("shots", |i| i.phenotype.shots as f64),
        ("prompt_length", |i| i.phenotype.word_count as f64),
        ("reasoning_depth", |i| i.phenotype.depth as f64),
        ("context", |i| i.phenotype.has_context as u8 as f64),
        ("type_token_ratio", |i| i.type_token_ratio),
    ];
    columns
        .iter()
        .map(|(name, get)| {
            let x: Vec<f64> = individuals.iter().map(get).collect();
            Ok(Correlation {
                feature: name.to_string(),
                result: spearman(&x, &fitness)?,
            })
        })
        .collect()
}
