use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::analogy::cosine;
use crate::dataset::WordPair;
use crate::embedding::EmbeddingStore;
use crate::error::{Error, Result};
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub pair: WordPair,
    pub cosine: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbors {
    pub neighbors: Vec<Neighbor>,
    /// `k` exceeded the number of candidates, so all were returned.
    pub truncated: bool,
}

/// Top-`k` store entries by cosine to `query`, descending, ties in pair
/// order. The target pair itself is never returned.
pub fn nearest_neighbors<T: Scalar>(
    target: &WordPair,
    query: &[T],
    store: &EmbeddingStore<T>,
    k: usize,
) -> Result<Neighbors> {
    if store.is_empty() {
        return Err(Error::EmptyInput("embedding store"));
    }
    if query.len() != store.dim() {
        return Err(Error::DimensionMismatch {
            context: "neighbor query",
            expected: store.dim(),
            got: query.len(),
        });
    }
    let entries: Vec<(&WordPair, &[T])> = store.iter().filter(|(p, _)| *p != target).collect();
    let mut scored: Vec<Neighbor> = entries
        .par_iter()
        .map(|(p, v)| Neighbor {
            pair: (*p).clone(),
            cosine: cosine(query, v).to_f64().unwrap_or(f64::NAN),
        })
        .collect();
    scored.sort_by(|a, b| {
        b.cosine
            .partial_cmp(&a.cosine)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.pair.cmp(&b.pair))
    });
    let truncated = k > scored.len();
    if truncated {
        log::warn!("k = {k} exceeds the {} candidates; returning all", scored.len());
    }
    scored.truncate(k);
    Ok(Neighbors {
        neighbors: scored,
        truncated,
    })
}

/// As [`nearest_neighbors`] with the query taken from the store.
pub fn nearest_neighbors_of<T: Scalar>(target: &WordPair, store: &EmbeddingStore<T>, k: usize) -> Result<Neighbors> {
    let query = store
        .get(target)
        .ok_or_else(|| Error::InvalidConfig(format!("{target} is not in the store")))?
        .to_vec();
    nearest_neighbors(target, &query, store, k)
}
