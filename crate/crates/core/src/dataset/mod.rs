//! Relational-similarity records, positive/negative splits, training
//! triples and benchmark loaders.
//!
//! Every sampler is a pure function of its inputs and a seed. Seeds are
//! combined with stable labels (relation or category ids) so that adding a
//! relation does not reshuffle the others.

mod benchmarks;
mod records;
mod splits;
mod triples;

use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;

pub use benchmarks::{
    load_analogy, load_classification, write_analogy, write_classification, AnalogyQuestion, LabeledPair, Split,
};
pub use records::{
    categories, exclude_category, load_relation_data, relations, write_relation_data, RelationRecord, WordPair,
};
pub use splits::{build_splits, RelationSplit, SplitConfig, Splits};
pub use triples::{
    augment_batch, augmented_len, triples_category, triples_within, CategoryTriples, Triple, TripleSource,
};

use crate::error::{Error, Result};

/// Parses one JSON object per non-blank line; line numbers are 1-based.
pub(crate) fn read_jsonl<R, O>(path: &Path, mut convert: impl FnMut(usize, R) -> Result<O>) -> Result<Vec<O>>
where
    R: DeserializeOwned,
{
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: R = serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.push(convert(i + 1, raw)?);
    }
    Ok(out)
}

/// FNV-1a over the labels, mixed with `seed`.
pub fn derive_seed(seed: u64, labels: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for label in labels {
        for b in label.bytes().chain(std::iter::once(0xff)) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

pub fn derive_rng(seed: u64, labels: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, labels))
}
