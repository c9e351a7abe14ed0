//! Analysis reports over run exports: coverage comparison, feature
//! distribution, feature/fitness correlations and high-performer enrichment.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::{Archive, CoverageSpace, Individual, Threshold};
use crate::stats::{
    chi_square_2x2_yates, coverage_contingency, enrichment_report, feature_correlations, ContingencyTable2x2,
    Correlation, EffectMagnitude, EnrichmentReport, Feature, StatResult, StatsError,
};

pub const DAGGER: char = '\u{2020}';

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("report JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("nothing to analyze: {0}")]
    NoInput(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub label: String,
    pub elites: usize,
    pub universe: u64,
    pub covered_high: u64,
    pub covered_any: u64,
    pub high_pct: f64,
    pub any_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageComparison {
    pub label_a: String,
    pub label_b: String,
    pub table: ContingencyTable2x2,
    pub test: StatResult,
    pub magnitude: EffectMagnitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureShare {
    pub feature: Feature,
    pub name: String,
    pub count: u64,
    pub pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub threshold: f64,
    pub coverage: Vec<CoverageSummary>,
    /// High-performer coverage of the first archive against the second.
    pub comparison: Option<CoverageComparison>,
    /// The same test counting every elite.
    pub comparison_any: Option<CoverageComparison>,
    pub individuals: usize,
    pub distribution: Vec<FeatureShare>,
    pub correlations: Vec<Correlation>,
    pub mean_type_token_ratio: Option<f64>,
    pub enrichment: Option<EnrichmentReport>,
}

#[derive(Debug, Clone, Default)]
pub struct AnalysisInputs {
    /// Labelled archives; with two, the first is compared against the second.
    pub archives: Vec<(String, Archive)>,
    /// Evaluated individuals for distribution, correlation and enrichment.
    pub individuals: Vec<Individual>,
    pub threshold: f64,
    pub enrichment: bool,
}

fn pct(k: u64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * k as f64 / n as f64
    }
}

fn compare(a: &(String, Archive), b: &(String, Archive), space: &CoverageSpace, t: Threshold) -> CoverageComparison {
    let table = coverage_contingency(&a.1, &b.1, space, t);
    let test = chi_square_2x2_yates(&table);
    CoverageComparison {
        label_a: a.0.clone(),
        label_b: b.0.clone(),
        table,
        magnitude: EffectMagnitude::classify(test.effect_size.unwrap_or(0.0)),
        test,
    }
}

pub fn feature_distribution(individuals: &[Individual]) -> Vec<FeatureShare> {
    let n = individuals.len() as u64;
    Feature::all()
        .into_iter()
        .map(|feature| {
            let count = individuals.iter().filter(|i| feature.holds(i)).count() as u64;
            FeatureShare {
                feature,
                name: feature.to_string(),
                count,
                pct: pct(count, n),
            }
        })
        .collect()
}

pub fn analyze(inputs: &AnalysisInputs) -> Result<AnalysisReport, ReportError> {
    if inputs.archives.is_empty() && inputs.individuals.is_empty() {
        return Err(ReportError::NoInput("give archives or a population"));
    }
    let space = CoverageSpace::shots_by_depth();
    let high = Threshold::Above(inputs.threshold);
    let universe = space.cell_count() as u64;
    let coverage = inputs
        .archives
        .iter()
        .map(|(label, archive)| {
            let covered_high = archive.covered_cells(&space, high).len() as u64;
            let covered_any = archive.covered_cells(&space, Threshold::Any).len() as u64;
            CoverageSummary {
                label: label.clone(),
                elites: archive.len(),
                universe,
                covered_high,
                covered_any,
                high_pct: pct(covered_high, universe),
                any_pct: pct(covered_any, universe),
            }
        })
        .collect();
    let (comparison, comparison_any) = match inputs.archives.as_slice() {
        [a, b] => (
            Some(compare(a, b, &space, high)),
            Some(compare(a, b, &space, Threshold::Any)),
        ),
        _ => (None, None),
    };

    let ind = &inputs.individuals;
    let correlations = if ind.len() >= 3 {
        feature_correlations(ind)?
    } else {
        Vec::new()
    };
    let mean_type_token_ratio =
        (!ind.is_empty()).then(|| ind.iter().map(|i| i.type_token_ratio).sum::<f64>() / ind.len() as f64);
    let enrichment = if inputs.enrichment {
        Some(enrichment_report(ind, inputs.threshold)?)
    } else {
        None
    };
    Ok(AnalysisReport {
        threshold: inputs.threshold,
        coverage,
        comparison,
        comparison_any,
        individuals: ind.len(),
        distribution: feature_distribution(ind),
        correlations,
        mean_type_token_ratio,
        enrichment,
    })
}

impl AnalysisReport {
    pub fn to_json(&self) -> Result<String, ReportError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Coverage table: HP and Any percentages per method, then the
    /// chi-square, p-value and Cramér's V of the HP comparison.
    pub fn write_coverage_csv<W: Write>(&self, out: W) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "method",
            "elites",
            "hp_coverage_pct",
            "any_coverage_pct",
            "chi_square",
            "p_value",
            "cramers_v",
            "effect",
        ])?;
        for (i, c) in self.coverage.iter().enumerate() {
            let test = self.comparison.as_ref().filter(|_| i == 0);
            w.write_record([
                c.label.clone(),
                c.elites.to_string(),
                format!("{:.1}", c.high_pct),
                format!("{:.1}", c.any_pct),
                test.map(|t| format!("{:.2}", t.test.statistic)).unwrap_or_default(),
                test.map(|t| format!("{:.4}", t.test.p_value)).unwrap_or_default(),
                test.map(|t| format!("{:.3}", t.test.effect_size.unwrap_or(0.0)))
                    .unwrap_or_default(),
                test.map(|t| t.magnitude.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Percentage of individuals with each feature.
    pub fn write_distribution_csv<W: Write>(&self, out: W) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["individuals".to_string()];
        header.extend(self.distribution.iter().map(|f| format!("{} (%)", f.name)));
        w.write_record(&header)?;
        let mut row = vec![self.individuals.to_string()];
        row.extend(self.distribution.iter().map(|f| format!("{:.1}", f.pct)));
        w.write_record(&row)?;
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Spearman correlation of each feature with fitness; significant
    /// coefficients carry a dagger.
    pub fn write_correlation_csv<W: Write>(&self, out: W) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["feature", "rho", "p_value", "marked"])?;
        for c in &self.correlations {
            w.write_record([
                c.feature.clone(),
                format!("{:.3}", c.result.statistic),
                format!("{:.4}", c.result.p_value),
                marked(format!("{:.2}", c.result.statistic), c.result.significant),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// High-performer feature percentages. The first row marks features
    /// that differ from the whole population, the second those that differ
    /// from the non-high performers.
    pub fn write_enrichment_csv<W: Write>(&self, out: W) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_writer(out);
        let Some(e) = &self.enrichment else {
            w.write_record(["high_performers"])?;
            w.flush().map_err(csv::Error::from)?;
            return Ok(());
        };
        let mut header = vec!["comparison".to_string(), "high_performers".to_string()];
        header.extend(e.features.iter().map(|f| format!("{} (%)", f.name)));
        w.write_record(&header)?;

        let mut overall = vec!["overall".to_string(), e.population_size.to_string()];
        overall.extend(e.features.iter().map(|f| format!("{:.1}", 100.0 * f.overall_proportion)));
        w.write_record(&overall)?;

        let mut vs_overall = vec!["high vs overall".to_string(), e.high_performer_count.to_string()];
        vs_overall.extend(
            e.features
                .iter()
                .map(|f| marked(format!("{:.1}", 100.0 * f.high_proportion), f.vs_overall.significant)),
        );
        w.write_record(&vs_overall)?;

        if e.features.iter().all(|f| f.vs_complement.is_some()) {
            let mut vs_rest = vec!["high vs rest".to_string(), e.high_performer_count.to_string()];
            vs_rest.extend(e.features.iter().map(|f| {
                let sig = f.vs_complement.is_some_and(|r| r.significant);
                marked(format!("{:.1}", 100.0 * f.high_proportion), sig)
            }));
            w.write_record(&vs_rest)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn marked(value: String, significant: bool) -> String {
    if significant {
        format!("{value}{DAGGER}")
    } else {
        value
    }
}
