use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_prompt-elites"))
}

fn task_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/even_numbers.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn small_run(out: &Path, algo: &str, mock: &str, seed: &str) -> Output {
    run(&[
        "run",
        "--task",
        task_path().to_str().unwrap(),
        "--algo",
        algo,
        "--mock",
        mock,
        "--seed",
        seed,
        "--population",
        "20",
        "--iterations",
        "3",
        "--evaluations",
        "10",
        "--out-dir",
        out.to_str().unwrap(),
    ])
}

fn stem(algo: &str, mock: &str, seed: u64) -> String {
    format!("even-numbers_{algo}_mock-{mock}_seed{seed}")
}

#[test]
fn run_writes_exports() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_run(dir.path(), "map-elites", "zero-shot-only", "7");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().filter(|l| l.starts_with("iter")).count(), 3);
    let s = stem("map-elites", "zero-shot-only", 7);
    for ext in ["archive.json", "archive.csv", "log.json", "population.json", "population.csv", "timing.json"] {
        assert!(dir.path().join(format!("{s}.{ext}")).is_file(), "{ext}");
    }
}

#[test]
fn missing_task_is_a_usage_error() {
    let out = run(&["run", "--mock", "zero-shot-only"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["run", "--task", "t.json"]);
    assert_eq!(out.status.code(), Some(2), "an evaluator is required");
}

#[test]
fn runtime_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["run", "--task", dir.path().join("nope.json").to_str().unwrap(), "--mock", "constant"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"name": "x", "task_request": "r", "instances": []}"#).unwrap();
    let out = run(&["run", "--task", bad.to_str().unwrap(), "--mock", "constant"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("llm_instruction"));

    let out = run(&["run", "--task", task_path().to_str().unwrap(), "--mock", "no-such-rule"]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["run", "--task", task_path().to_str().unwrap(), "--mock", "constant", "--algo", "cma"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn remote_without_token_is_an_auth_error() {
    let out = bin()
        .args([
            "run",
            "--task",
            task_path().to_str().unwrap(),
            "--endpoint",
            "http://127.0.0.1:9",
            "--token-env",
            "PROMPT_ELITES_TEST_UNSET_TOKEN",
        ])
        .env_remove("PROMPT_ELITES_TEST_UNSET_TOKEN")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("PROMPT_ELITES_TEST_UNSET_TOKEN"));
}

#[test]
fn random_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert!(small_run(d.path(), "random", "noisy-threshold", "3").status.success());
    }
    let s = stem("random", "noisy-threshold", 3);
    for ext in ["archive.json", "archive.csv", "log.json", "population.json", "population.csv"] {
        let name = format!("{s}.{ext}");
        assert_eq!(fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap(), "{ext}");
    }
}

#[test]
fn analyze_and_heatmap_accept_run_exports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(small_run(d, "map-elites", "zero-shot-only", "1").status.success());
    assert!(small_run(d, "random", "zero-shot-only", "1").status.success());
    let map = d.join(format!("{}.archive.json", stem("map-elites", "zero-shot-only", 1)));
    let random = d.join(format!("{}.archive.json", stem("random", "zero-shot-only", 1)));
    let pop = d.join(format!("{}.population.json", stem("map-elites", "zero-shot-only", 1)));
    let before = fs::read(&map).unwrap();

    let prefix = d.join("report/analysis");
    let out = run(&[
        "analyze",
        "--map",
        map.to_str().unwrap(),
        "--random",
        random.to_str().unwrap(),
        "--population",
        pop.to_str().unwrap(),
        "--enrichment",
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let coverage = fs::read_to_string(d.join("report/analysis.coverage.csv")).unwrap();
    assert!(coverage.starts_with("method,elites,hp_coverage_pct,any_coverage_pct,chi_square,p_value,cramers_v,effect\n"));
    assert!(coverage.contains("map-elites,") && coverage.contains("random,"));
    let json = fs::read_to_string(d.join("report/analysis.json")).unwrap();
    for key in ["\"comparison\"", "\"correlations\"", "\"enrichment\"", "\"mean_type_token_ratio\""] {
        assert!(json.contains(key), "{key}");
    }
    let enrichment = fs::read_to_string(d.join("report/analysis.enrichment.csv")).unwrap();
    assert!(enrichment.contains('\u{2020}'));

    let csv = d.join("heat.csv");
    let svg = d.join("heat.svg");
    let out = run(&[
        "heatmap",
        "--archive",
        map.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
        "--svg",
        svg.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    let elites = prompt_elites::archive::Archive::load(&map).unwrap().len();
    assert_eq!(rows.len(), elites);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        if f[2].parse::<f64>().unwrap() > 0.55 {
            assert_eq!(f[0], "0", "only zero-shot prompts score under this mock");
        }
    }
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    assert_eq!(fs::read(&map).unwrap(), before, "inputs are left untouched");

    let out = run(&["compare", "--map", map.to_str().unwrap(), "--random", random.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("pair,map_hp_pct,random_hp_pct"));
    assert_eq!(text.lines().last().unwrap().split(',').next(), Some("mean"), "{text}");
}

#[test]
fn empty_archive_heatmap_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.archive.json");
    fs::write(
        &path,
        r#"{"bin_config": {"shots": 2, "words": 25, "depth": 2}, "cells": [], "insertion_log": []}"#,
    )
    .unwrap();
    let out = run(&["heatmap", "--archive", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "shots,depth,fitness,has_context\n");
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn malformed_export_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.archive.json");
    fs::write(&path, r#"{"cells": 3}"#).unwrap();
    let out = run(&["analyze", "--archive", path.to_str().unwrap(), "--out", dir.path().join("r").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}
