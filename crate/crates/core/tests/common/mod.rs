#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use relemb::dataset::{RelationRecord, WordPair};

/// `relations` relations with `per_relation` scored pairs each; relation
/// `r` belongs to category `cat{r % categories}`.
pub fn relation_fixture(relations: usize, per_relation: usize, categories: usize) -> Vec<RelationRecord> {
    let mut out = Vec::new();
    for r in 0..relations {
        for i in 0..per_relation {
            out.push(RelationRecord {
                relation_id: format!("rel{r}"),
                category_id: format!("cat{}", r % categories),
                pair: WordPair::new(format!("h{r}x{i}"), format!("t{r}y{i}")).unwrap(),
                typicality: (per_relation - i) as f64,
            });
        }
    }
    out
}

pub fn relemb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relemb"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

pub fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Fast training flags for smoke runs.
pub const FAST: &[&str] = &[
    "--top-n",
    "5",
    "--bottom-n",
    "5",
    "--train-fraction",
    "0.6",
    "--category-per-category",
    "20",
    "--learning-rate",
    "1e-3",
    "--batch-size",
    "32",
];
