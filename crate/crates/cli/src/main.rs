use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use prompt_elites::archive::{Archive, CoverageSpace, Individual, Threshold};
use prompt_elites::evaluator::{EvaluatorConfig, EvaluatorKind, DEFAULT_TOKEN_ENV};
use prompt_elites::evolve::{self, RunConfig, RunContext, StrategyRegistry};
use prompt_elites::export::{heatmap_svg, write_heatmap_csv, write_run, PopulationExport};
use prompt_elites::grammar::{GenericTables, Grammar};
use prompt_elites::phenotype::BinConfig;
use prompt_elites::report::{analyze, AnalysisInputs};
use prompt_elites::stats::{chi_square_2x2_yates, coverage_contingency};
use prompt_elites::tasks::load_task;

/// Grammar-guided MAP-Elites search over LLM prompt structures.
#[derive(Parser)]
#[command(name = "prompt-elites", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run MAP-Elites or random search on a task and write the exports.
    Run(RunArgs),
    /// Coverage tests, correlations and feature enrichment over exports.
    Analyze(AnalyzeArgs),
    /// Elite scatter (shots x depth) as CSV and optionally SVG.
    Heatmap(HeatmapArgs),
    /// Paired-seed summary of MAP-Elites against random-search archives.
    Compare(CompareArgs),
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("evaluator").required(true).args(["endpoint", "mock"])))]
struct RunArgs {
    /// Task JSON file.
    #[arg(long)]
    task: PathBuf,
    /// Search algorithm: map-elites or random.
    #[arg(long, default_value = "map-elites")]
    algo: String,
    /// Inference endpoint URL.
    #[arg(long)]
    endpoint: Option<String>,
    /// Environment variable holding the endpoint's bearer token.
    #[arg(long, default_value = DEFAULT_TOKEN_ENV)]
    token_env: String,
    /// Offline mock model, e.g. `zero-shot-only` or `noisy-threshold:0.6,0.4`.
    #[arg(long)]
    mock: Option<String>,
    #[arg(long, default_value_t = 50)]
    population: usize,
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    #[arg(long, default_value_t = 0.40)]
    mut_rate: f64,
    #[arg(long, default_value_t = 0.40)]
    mut_chance: f64,
    /// Task instances each prompt is scored on.
    #[arg(long, default_value_t = 50)]
    evaluations: usize,
    /// Bin widths for shots, words and depth.
    #[arg(long, default_value = "2,25,2", value_parser = parse_bins)]
    bin_sizes: BinConfig,
    #[arg(long, default_value_t = 10)]
    max_shots: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum concurrent fitness evaluations.
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
    /// High-performer threshold for the progress lines.
    #[arg(long, default_value_t = 0.55)]
    threshold: f64,
    /// Grammar JSON replacing the built-in prompt grammar.
    #[arg(long)]
    grammar: Option<PathBuf>,
    /// JSON with `contexts` and `thoughts` tables replacing the defaults.
    #[arg(long)]
    tables: Option<PathBuf>,
    /// Response cache directory.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 30.0)]
    timeout: f64,
    #[arg(long, default_value_t = 4)]
    retries: u32,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// MAP-Elites archive export.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Random-search archive export.
    #[arg(long)]
    random: Option<PathBuf>,
    /// Any further archive export (repeatable).
    #[arg(long)]
    archive: Vec<PathBuf>,
    /// Population export(s) for correlations and enrichment. Without one,
    /// the archive elites are used.
    #[arg(long)]
    population: Vec<PathBuf>,
    /// Also emit the high-performer feature table.
    #[arg(long)]
    enrichment: bool,
    #[arg(long, default_value_t = 0.55)]
    threshold: f64,
    /// Output path prefix.
    #[arg(long, default_value = "analysis")]
    out: PathBuf,
}

#[derive(Args)]
struct HeatmapArgs {
    #[arg(long)]
    archive: PathBuf,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    max_shots: usize,
    #[arg(long, default_value_t = 10)]
    max_depth: usize,
}

#[derive(Args)]
struct CompareArgs {
    /// MAP-Elites archives, one per seed.
    #[arg(long, required = true, num_args = 1..)]
    map: Vec<PathBuf>,
    /// Random-search archives paired with `--map` in order.
    #[arg(long, required = true, num_args = 1..)]
    random: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.55)]
    threshold: f64,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_bins(s: &str) -> Result<BinConfig, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [shots, words, depth] => BinConfig::new(shots, words, depth).map_err(|e| e.to_string()),
        _ => Err("expected three comma-separated widths".into()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Heatmap(a) => cmd_heatmap(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let registry = StrategyRegistry::builtin();
    registry.get(&a.algo)?;
    let task = load_task(&a.task).with_context(|| format!("loading task {}", a.task.display()))?;
    let grammar = match &a.grammar {
        Some(p) => Grammar::from_json(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("grammar {}", p.display()))?,
        None => Grammar::prompt_default(),
    };
    let tables = match &a.tables {
        Some(p) => GenericTables::load(p).with_context(|| format!("tables {}", p.display()))?,
        None => GenericTables::default(),
    };
    let config = RunConfig {
        population_size: a.population,
        num_iterations: a.iterations,
        mut_rate: a.mut_rate,
        mut_chance: a.mut_chance,
        num_evaluations: a.evaluations,
        bin_config: a.bin_sizes,
        max_shots: a.max_shots,
        seed: a.seed,
        algorithm: a.algo.clone(),
        parallelism: a.parallelism,
    };
    config.check()?;

    let mut eval = match (&a.mock, &a.endpoint) {
        (Some(rule), _) => EvaluatorConfig::mock(rule.clone()),
        (None, Some(endpoint)) => {
            let mut c = EvaluatorConfig::remote(endpoint.clone());
            c.kind = EvaluatorKind::Remote {
                endpoint: endpoint.clone(),
                token_env: a.token_env.clone(),
            };
            c
        }
        (None, None) => bail!("give --endpoint or --mock"),
    };
    if !(a.timeout > 0.0) {
        bail!("--timeout must be positive");
    }
    eval.timeout = Duration::from_secs_f64(a.timeout);
    eval.max_retries = a.retries;
    eval.cache_dir = a.cache_dir.clone();
    let model = eval.build(a.seed)?;

    let ctx = RunContext {
        config: &config,
        task: &task,
        grammar: &grammar,
        tables: &tables,
        model: model.as_ref(),
    };
    let output = evolve::run(&ctx)?;
    let hp = Threshold::Above(a.threshold);
    let space = CoverageSpace::shots_by_depth();
    for r in &output.log.iterations {
        println!(
            "iter {:>3}  evaluated {:>4}  fitness min/mean/max {:.2}/{:.3}/{:.2}  archive {:>4}  coverage any {:.2} hp {:.2}  failures {}",
            r.iteration,
            r.evaluated,
            r.fitness_min,
            r.fitness_mean,
            r.fitness_max,
            r.archive_size,
            r.coverage_any,
            r.coverage_high,
            r.failures
        );
    }
    let files = write_run(&a.out_dir, &output)?;
    println!(
        "{} on {}: best {:.2}, hp coverage (> {}) {:.2}, {} model calls{}",
        output.log.algorithm,
        output.log.task,
        output.archive.best_fitness().unwrap_or(0.0),
        a.threshold,
        output.archive.coverage(&space, hp),
        output.log.total_model_calls,
        if output.log.degraded {
            format!(", DEGRADED: {} failed calls", output.log.total_failures)
        } else {
            String::new()
        }
    );
    println!("archive: {}", files.archive_json.display());
    println!("log: {}", files.log_json.display());
    Ok(())
}

fn load_archive(path: &Path) -> Result<Archive> {
    Archive::load(path).with_context(|| format!("archive {}", path.display()))
}

fn label_for(path: &Path) -> String {
    path.file_name()
        .and_then(|n| n.to_str())
        .map(|n| n.trim_end_matches(".archive.json").to_string())
        .unwrap_or_else(|| path.display().to_string())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<()> {
    let mut archives = Vec::new();
    if let Some(p) = &a.map {
        archives.push(("map-elites".to_string(), load_archive(p)?));
    }
    if let Some(p) = &a.random {
        archives.push(("random".to_string(), load_archive(p)?));
    }
    for p in &a.archive {
        archives.push((label_for(p), load_archive(p)?));
    }
    let mut individuals: Vec<Individual> = Vec::new();
    for p in &a.population {
        let pop = PopulationExport::load(p).with_context(|| format!("population {}", p.display()))?;
        individuals.extend(pop.individuals);
    }
    if a.population.is_empty() {
        individuals = archives.iter().flat_map(|(_, ar)| ar.elites()).collect();
    }
    if archives.is_empty() && individuals.is_empty() {
        bail!("nothing to analyze: give --map/--random/--archive or --population");
    }
    let report = analyze(&AnalysisInputs {
        archives,
        individuals,
        threshold: a.threshold,
        enrichment: a.enrichment,
    })?;

    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let json = with_suffix(&a.out, ".json");
    fs::write(&json, report.to_json()?).with_context(|| format!("writing {}", json.display()))?;
    let coverage = with_suffix(&a.out, ".coverage.csv");
    write_with(&coverage, |b| Ok(report.write_coverage_csv(b)?))?;
    write_with(&with_suffix(&a.out, ".distribution.csv"), |b| Ok(report.write_distribution_csv(b)?))?;
    write_with(&with_suffix(&a.out, ".correlation.csv"), |b| Ok(report.write_correlation_csv(b)?))?;
    if a.enrichment {
        write_with(&with_suffix(&a.out, ".enrichment.csv"), |b| Ok(report.write_enrichment_csv(b)?))?;
    }

    for c in &report.coverage {
        println!("{:<40} hp {:>5.1}%  any {:>5.1}%", c.label, c.high_pct, c.any_pct);
    }
    if let Some(c) = &report.comparison {
        println!(
            "chi-square {:.2}  p {:.4}  cramers v {:.3} ({})",
            c.test.statistic,
            c.test.p_value,
            c.test.effect_size.unwrap_or(0.0),
            c.magnitude
        );
    }
    println!("report: {}", json.display());
    Ok(())
}

fn cmd_heatmap(a: HeatmapArgs) -> Result<()> {
    let archive = load_archive(&a.archive)?;
    if archive.is_empty() {
        eprintln!("warning: archive {} is empty", a.archive.display());
    }
    match &a.out {
        Some(p) => write_with(p, |b| Ok(write_heatmap_csv(&archive, b)?))?,
        None => write_heatmap_csv(&archive, io::stdout().lock())?,
    }
    if let Some(svg) = &a.svg {
        fs::write(svg, heatmap_svg(&archive, a.max_shots, a.max_depth))
            .with_context(|| format!("writing {}", svg.display()))?;
    }
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    if a.map.len() != a.random.len() {
        bail!("--map and --random need the same number of archives ({} vs {})", a.map.len(), a.random.len());
    }
    let space = CoverageSpace::shots_by_depth();
    let hp = Threshold::Above(a.threshold);
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        w.write_record(["pair", "map_hp_pct", "random_hp_pct", "chi_square", "p_value", "cramers_v"])?;
        let (mut sum_map, mut sum_random, mut above) = (0.0, 0.0, 0);
        for (i, (m, r)) in a.map.iter().zip(&a.random).enumerate() {
            let (m, r) = (load_archive(m)?, load_archive(r)?);
            let (cm, cr) = (m.coverage(&space, hp), r.coverage(&space, hp));
            sum_map += cm;
            sum_random += cr;
            if cm > 0.6 {
                above += 1;
            }
            let test = chi_square_2x2_yates(&coverage_contingency(&m, &r, &space, hp));
            w.write_record([
                (i + 1).to_string(),
                format!("{:.1}", 100.0 * cm),
                format!("{:.1}", 100.0 * cr),
                format!("{:.2}", test.statistic),
                format!("{:.4}", test.p_value),
                format!("{:.3}", test.effect_size.unwrap_or(0.0)),
            ])?;
        }
        let n = a.map.len() as f64;
        w.write_record([
            "mean".to_string(),
            format!("{:.1}", 100.0 * sum_map / n),
            format!("{:.1}", 100.0 * sum_random / n),
            String::new(),
            String::new(),
            String::new(),
        ])?;
        w.flush()?;
        eprintln!("map-elites above 60% hp coverage in {above} of {} pairs", a.map.len());
    }
    match &a.out {
        Some(p) => fs::write(p, &buf).with_context(|| format!("writing {}", p.display()))?,
        None => io::stdout().lock().write_all(&buf)?,
    }
    Ok(())
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}
