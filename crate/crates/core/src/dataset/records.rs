use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::read_jsonl;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WordPair {
    pub head: String,
    pub tail: String,
}

impl WordPair {
    pub fn new(head: impl Into<String>, tail: impl Into<String>) -> Result<Self> {
        let (head, tail) = (head.into(), tail.into());
        if head.trim().is_empty() || tail.trim().is_empty() {
            return Err(Error::EmptyInput("word pair"));
        }
        Ok(WordPair { head, tail })
    }

    pub fn reversed(&self) -> Self {
        WordPair {
            head: self.tail.clone(),
            tail: self.head.clone(),
        }
    }
}

impl fmt::Display for WordPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.head, self.tail)
    }
}

/// One scored pair of a fine-grained relation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationRecord {
    pub relation_id: String,
    pub category_id: String,
    pub pair: WordPair,
    pub typicality: f64,
}

#[derive(Deserialize)]
struct RawRecord {
    relation_id: String,
    category_id: Option<String>,
    head: String,
    tail: String,
    score: f64,
}

/// Reads relation data JSONL:
/// `{"relation_id", "category_id", "head", "tail", "score"}` per line.
/// A relation must map to the same category on every line.
pub fn load_relation_data(path: &Path) -> Result<Vec<RelationRecord>> {
    let mut parents: BTreeMap<String, String> = BTreeMap::new();
    read_jsonl(path, |line, raw: RawRecord| {
        let category_id = raw
            .category_id
            .filter(|c| !c.is_empty())
            .ok_or_else(|| Error::parse(path, line, "missing category_id"))?;
        if raw.relation_id.is_empty() {
            return Err(Error::parse(path, line, "empty relation_id"));
        }
        if !raw.score.is_finite() {
            return Err(Error::parse(path, line, "non-finite score"));
        }
        let parent = parents
            .entry(raw.relation_id.clone())
            .or_insert_with(|| category_id.clone());
        if *parent != category_id {
            return Err(Error::parse(
                path,
                line,
                format!(
                    "relation `{}` listed under categories `{}` and `{}`",
                    raw.relation_id, parent, category_id
                ),
            ));
        }
        let pair = WordPair::new(raw.head, raw.tail).map_err(|_| Error::parse(path, line, "empty head or tail"))?;
        Ok(RelationRecord {
            relation_id: raw.relation_id,
            category_id,
            pair,
            typicality: raw.score,
        })
    })
}

/// Writes records in the format read by [`load_relation_data`].
pub fn write_relation_data(path: &Path, records: &[RelationRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        let line = serde_json::json!({
            "relation_id": r.relation_id,
            "category_id": r.category_id,
            "head": r.pair.head,
            "tail": r.pair.tail,
            "score": r.typicality,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn categories(records: &[RelationRecord]) -> BTreeSet<String> {
    records.iter().map(|r| r.category_id.clone()).collect()
}

pub fn relations(records: &[RelationRecord]) -> BTreeSet<&str> {
    records.iter().map(|r| r.relation_id.as_str()).collect()
}

/// Drops every record of `category_id`; other records keep their order.
/// `known` is the category set of the full dataset, so repeating an
/// exclusion on already-filtered records is a no-op rather than an error.
pub fn exclude_category(
    records: &[RelationRecord],
    category_id: &str,
    known: &BTreeSet<String>,
) -> Result<Vec<RelationRecord>> {
    if !known.contains(category_id) {
        return Err(Error::UnknownCategory(category_id.to_string()));
    }
    Ok(records
        .iter()
        .filter(|r| r.category_id != category_id)
        .cloned()
        .collect())
}
