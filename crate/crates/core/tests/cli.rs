use std::path::Path;
use std::process::{Command, Output};

use mfair::dataset::{write_continent_map, write_interactions_tsv};
use mfair::testkit::{synth_dataset, SynthSpec};

fn mfair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfair")).args(args).output().unwrap()
}

fn write_data(dir: &Path) -> (String, String) {
    let spec = SynthSpec {
        n_users: 60,
        n_items: 90,
        ratings_per_user: 20,
        ..Default::default()
    };
    let (set, map) = synth_dataset(&spec).unwrap();
    let (ratings, continents) = (dir.join("ratings.tsv"), dir.join("continents.tsv"));
    write_interactions_tsv(&set, &ratings).unwrap();
    write_continent_map(&map, &continents).unwrap();
    (ratings.display().to_string(), continents.display().to_string())
}

#[test]
fn recommend_mitigate_evaluate_chain() {
    let dir = tempfile::tempdir().unwrap();
    let (ratings, continents) = write_data(dir.path());
    let data = ["--dataset", &ratings, "--format", "generic_tsv", "--continents", &continents];
    let lists = dir.path().join("lists.tsv").display().to_string();
    let fair = dir.path().join("fair.tsv").display().to_string();

    let out = mfair(&[&["recommend"], &data[..], &["--topn", "40", "--out", &lists]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = mfair(&[&["mitigate"], &data[..], &["--topn", "40", "--topk", "8", "--lists", &lists, "--out", &fair]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = mfair(&[&["evaluate"], &data[..], &["--topk", "8", "--lists", &fair]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["k"], 8);
}

#[test]
fn run_writes_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let (ratings, continents) = write_data(dir.path());
    let results = dir.path().join("results");
    let out = mfair(&[
        "run", "--dataset", &ratings, "--format", "generic_tsv", "--continents", &continents, "--topn", "30", "--topk", "6",
        "--out", results.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(results.join("report.csv")).unwrap();
    assert!(csv.starts_with("algorithm,metric,group,vanilla,mitigated"));
}

#[test]
fn missing_input_fails_with_message() {
    let out = mfair(&["ingest", "--dataset", "does-not-exist.tsv", "--continents", "nope.tsv"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error:"), "{stderr}");
}
