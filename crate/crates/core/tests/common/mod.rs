//! Helpers shared by the integration test targets.
#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mindkb::pipeline::Settings;
use mindkb::synth::{synth_corpus, SynthManifest, SyntheticSpec};

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().expect("workspace root")
}

pub fn config_path() -> PathBuf {
    workspace_root().join("config/pipeline.toml")
}

pub fn fixture(name: &str) -> PathBuf {
    workspace_root().join("fixtures").join(name)
}

pub fn settings() -> Settings {
    Settings::load(&config_path(), &[]).expect("bundled config loads")
}

/// Runs the `mindkb` binary from the workspace root.
pub fn mindkb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mindkb"))
        .args(args)
        .current_dir(workspace_root())
        .env_remove("MINDKB_SEED")
        .output()
        .expect("mindkb binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// `mindkb run` against `corpus`, writing into `out`.
pub fn run_pipeline(corpus: &Path, out: &Path, stages: &str, extra: &[&str]) -> Output {
    let config = config_path();
    let corpus_set = format!("corpus_root={}", corpus.display());
    let out_set = format!("output_dir={}", out.display());
    let mut args = vec![
        "run",
        "--config",
        config.to_str().expect("utf-8 path"),
        "--stages",
        stages,
        "--set",
        &corpus_set,
        "--set",
        &out_set,
    ];
    for e in extra {
        args.push("--set");
        args.push(e);
    }
    mindkb(&args)
}

/// Writes a synthetic corpus drawing signal words from the bundled config.
pub fn synth(spec: &SyntheticSpec, out: &Path) -> SynthManifest {
    let (words, phrases) = settings().signal_vocabulary().expect("signal vocabulary");
    synth_corpus(spec, &words, &phrases, out).expect("synthetic corpus")
}

/// `user_id -> label` from an eRisk labels file.
pub fn read_truth(path: &Path) -> BTreeMap<String, u8> {
    std::fs::read_to_string(path)
        .expect("labels file")
        .lines()
        .filter_map(|l| {
            let mut it = l.split_whitespace();
            Some((it.next()?.to_string(), it.next()?.parse().ok()?))
        })
        .collect()
}

/// `(user_id, probability, label)` rows of a labels CSV.
pub fn read_labels(path: &Path) -> Vec<(String, f64, u8)> {
    let mut rdr = csv::Reader::from_path(path).expect("labels csv");
    rdr.records()
        .map(|r| {
            let r = r.expect("labels row");
            (r[0].to_string(), r[1].parse().expect("probability"), r[2].parse().expect("label"))
        })
        .collect()
}
