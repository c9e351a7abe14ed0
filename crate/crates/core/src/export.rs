//! Files written by a run, and the heatmap rendering of an archive.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::{write_individuals_csv, Archive, ArchiveError, Individual};
use crate::evolve::{RunLog, RunOutput, RunTiming};
use crate::phenotype::bin;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> ExportError + '_ {
    move |source| ExportError::Json {
        path: path.to_path_buf(),
        source,
    }
}

/// Every individual a run evaluated, in evaluation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationExport {
    pub task: String,
    pub algorithm: String,
    pub model: String,
    pub seed: u64,
    pub individuals: Vec<Individual>,
}

impl PopulationExport {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExportError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(json_err(path))
    }
}

pub fn load_log(path: impl AsRef<Path>) -> Result<RunLog, ExportError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(json_err(path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFiles {
    pub archive_json: PathBuf,
    pub archive_csv: PathBuf,
    pub log_json: PathBuf,
    pub population_json: PathBuf,
    pub population_csv: PathBuf,
    pub timing_json: PathBuf,
}

impl RunFiles {
    /// The deterministic exports; timing is excluded.
    pub fn deterministic(&self) -> [&Path; 5] {
        [
            &self.archive_json,
            &self.archive_csv,
            &self.log_json,
            &self.population_json,
            &self.population_csv,
        ]
    }
}

fn sanitize(part: &str) -> String {
    part.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '-' })
        .collect()
}

/// `{task}_{algorithm}_{model}_seed{seed}`
pub fn file_stem(task: &str, algorithm: &str, model: &str, seed: u64) -> String {
    format!("{}_{}_{}_seed{seed}", sanitize(task), sanitize(algorithm), sanitize(model))
}

pub fn run_files(out_dir: &Path, stem: &str) -> RunFiles {
    let f = |ext: &str| out_dir.join(format!("{stem}.{ext}"));
    RunFiles {
        archive_json: f("archive.json"),
        archive_csv: f("archive.csv"),
        log_json: f("log.json"),
        population_json: f("population.json"),
        population_csv: f("population.csv"),
        timing_json: f("timing.json"),
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), ExportError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn pretty<T: Serialize>(value: &T, path: &Path) -> Result<Vec<u8>, ExportError> {
    let mut v = serde_json::to_vec_pretty(value).map_err(json_err(path))?;
    v.push(b'\n');
    Ok(v)
}

/// Writes archive, log, population and timing files into `out_dir`.
pub fn write_run(out_dir: &Path, output: &RunOutput) -> Result<RunFiles, ExportError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let log = &output.log;
    let files = run_files(out_dir, &file_stem(&log.task, &log.algorithm, &log.model, log.config.seed));

    let mut archive_json = output.archive.to_json()?.into_bytes();
    archive_json.push(b'\n');
    write_file(&files.archive_json, &archive_json)?;

    let mut csv = Vec::new();
    output.archive.write_csv(&mut csv)?;
    write_file(&files.archive_csv, &csv)?;

    write_file(&files.log_json, &pretty(log, &files.log_json)?)?;

    let population = PopulationExport {
        task: log.task.clone(),
        algorithm: log.algorithm.clone(),
        model: log.model.clone(),
        seed: log.config.seed,
        individuals: output.population.clone(),
    };
    write_file(&files.population_json, &pretty(&population, &files.population_json)?)?;

    let cfg = output.archive.bin_config();
    let mut csv = Vec::new();
    write_individuals_csv(&mut csv, output.population.iter().map(|i| (Some(bin(&i.phenotype, cfg)), i)))?;
    write_file(&files.population_csv, &csv)?;

    write_file(&files.timing_json, &pretty::<RunTiming>(&output.timing, &files.timing_json)?)?;
    Ok(files)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub shots: usize,
    pub depth: usize,
    pub fitness: f64,
    pub has_context: bool,
}

/// One row per elite, in bin order.
pub fn heatmap_rows(archive: &Archive) -> Vec<HeatmapRow> {
    archive
        .iter()
        .map(|(_, e)| HeatmapRow {
            shots: e.phenotype.shots,
            depth: e.phenotype.depth,
            fitness: e.fitness,
            has_context: e.phenotype.has_context,
        })
        .collect()
}

pub fn write_heatmap_csv<W: Write>(archive: &Archive, out: W) -> Result<(), ExportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["shots", "depth", "fitness", "has_context"])?;
    for r in heatmap_rows(archive) {
        w.write_record([
            r.shots.to_string(),
            r.depth.to_string(),
            r.fitness.to_string(),
            r.has_context.to_string(),
        ])?;
    }
    w.flush().map_err(|e| ExportError::Csv(e.into()))?;
    Ok(())
}

/// Linear blue-to-red ramp over [0, 1].
fn color(fitness: f64) -> String {
    let t = fitness.clamp(0.0, 1.0);
    let r = (40.0 + 215.0 * t).round() as u8;
    let b = (255.0 - 215.0 * t).round() as u8;
    format!("#{r:02x}40{b:02x}")
}

/// Scatter of elites: x = shots, y = depth, color = fitness, circles
/// without context and squares with it.
pub fn heatmap_svg(archive: &Archive, max_shots: usize, max_depth: usize) -> String {
    const W: f64 = 480.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    let sx = (W - 2.0 * M) / max_shots.max(1) as f64;
    let sy = (H - 2.0 * M) / max_depth.max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{M} {M} V{} H{}" fill="none" stroke="black"/>"#,
        H - M,
        W - M
    );
    for x in 0..=max_shots {
        let px = M + x as f64 * sx;
        let _ = writeln!(
            s,
            r#"<text x="{px:.1}" y="{:.1}" font-size="10" text-anchor="middle">{x}</text>"#,
            H - M + 14.0
        );
    }
    for y in 0..=max_depth {
        let py = H - M - y as f64 * sy;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{y}</text>"#,
            M - 6.0,
            py + 3.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">number of examples</text>"#,
        W / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.1})">reasoning depth</text>"#,
        H / 2.0,
        H / 2.0
    );
    for r in heatmap_rows(archive) {
        let px = M + r.shots.min(max_shots) as f64 * sx;
        let py = H - M - r.depth.min(max_depth) as f64 * sy;
        let fill = color(r.fitness);
        if r.has_context {
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{fill}" fill-opacity="0.8"><title>{:.2}</title></rect>"#,
                px - 5.0,
                py - 5.0,
                r.fitness
            );
        } else {
            let _ = writeln!(
                s,
                r#"<circle cx="{px:.1}" cy="{py:.1}" r="5" fill="{fill}" fill-opacity="0.8"><title>{:.2}</title></circle>"#,
                r.fitness
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
