//! Helpers shared by the CLI integration tests and the acceptance suite.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_loadcast");

pub fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("LOADCAST_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn loadcast")
}

pub fn ok(dir: &Path, args: &[&str]) {
    let out = run_in(dir, args);
    assert!(
        out.status.success(),
        "loadcast {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
}

pub const TABLES: [&str; 8] = [
    "--reservations",
    "data/reservations.csv",
    "--airports",
    "data/airports.csv",
    "--routes",
    "data/routes.csv",
    "--holidays",
    "data/holidays.csv",
];

pub fn with_tables<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(TABLES.iter()).chain(tail.iter()).copied().collect()
}

/// Every stage, small enough for a test, with relative paths only.
pub fn full_pipeline(dir: &Path) {
    ok(dir, &["generate", "--out-dir", "data", "--flights-per-route", "80"]);
    ok(dir, &with_tables(&["ingest"], &["--out", "work/flights.csv"]));
    ok(dir, &with_tables(&["features"], &["--out", "work/features.csv"]));
    ok(
        dir,
        &[
            "select",
            "--features",
            "work/features.csv",
            "--out",
            "work/selection_report.json",
            "--feature-set-out",
            "work/feature_set.json",
        ],
    );
    ok(
        dir,
        &[
            "sequences",
            "--features",
            "work/features.csv",
            "--feature-set",
            "work/feature_set.json",
            "--out-dir",
            "work/seq",
        ],
    );
    ok(dir, &["train", "--sequences", "work/seq", "--variant", "DLSTM-HA", "--runs-dir", "work", "--epochs", "2"]);
    ok(
        dir,
        &[
            "evaluate",
            "--sequences",
            "work/seq",
            "--out-dir",
            "work/eval",
            "--models",
            "SLSTM-H,SLSTM-V,linear,random_forest,naive",
            "--runs",
            "2",
            "--epochs",
            "2",
            "--forest-trees",
            "8",
            "--jobs",
            "3",
        ],
    );
    ok(dir, &["horizon", "--predictions", "work/eval/predictions.csv", "--out-dir", "work/horizon"]);
    ok(
        dir,
        &[
            "categories",
            "--predictions",
            "work/eval/predictions.csv",
            "--routes",
            "data/routes.csv",
            "--airports",
            "data/airports.csv",
            "--out-dir",
            "work/categories",
        ],
    );
    ok(
        dir,
        &[
            "sweep",
            "--features",
            "work/features.csv",
            "--out",
            "work/sweep.csv",
            "--sizes",
            "2,3",
            "--epochs",
            "1",
            "--d-max",
            "7",
            "--jobs",
            "2",
        ],
    );
    ok(
        dir,
        &[
            "predict",
            "--checkpoint",
            "work/runs/DLSTM-HA/42/best.ckpt",
            "--sequences",
            "work/seq",
            "--out",
            "work/forecast.csv",
            "--capacity",
            "162",
        ],
    );
}

pub fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}
