use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{derive_rng, RelationRecord, WordPair};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub top_n: usize,
    pub bottom_n: usize,
    pub train_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            top_n: 10,
            bottom_n: 10,
            train_fraction: 0.8,
        }
    }
}

/// Most and least typical pairs of one relation, each partitioned into
/// train and validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationSplit {
    pub relation_id: String,
    pub category_id: String,
    pub train_positives: Vec<WordPair>,
    pub validation_positives: Vec<WordPair>,
    pub train_negatives: Vec<WordPair>,
    pub validation_negatives: Vec<WordPair>,
}

impl RelationSplit {
    pub fn positives(&self) -> impl Iterator<Item = &WordPair> {
        self.train_positives.iter().chain(&self.validation_positives)
    }

    pub fn negatives(&self) -> impl Iterator<Item = &WordPair> {
        self.train_negatives.iter().chain(&self.validation_negatives)
    }

    /// The validation half viewed as a split of its own (empty train lists swapped in).
    pub fn validation_view(&self) -> RelationSplit {
        RelationSplit {
            relation_id: self.relation_id.clone(),
            category_id: self.category_id.clone(),
            train_positives: self.validation_positives.clone(),
            validation_positives: Vec::new(),
            train_negatives: self.validation_negatives.clone(),
            validation_negatives: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub splits: Vec<RelationSplit>,
    /// Relations with fewer than `top_n + bottom_n` pairs.
    pub skipped: Vec<String>,
}

fn partition(mut pairs: Vec<WordPair>, fraction: f64, rng: &mut impl rand::Rng) -> (Vec<WordPair>, Vec<WordPair>) {
    pairs.shuffle(rng);
    let n_train = ((pairs.len() as f64) * fraction).round() as usize;
    let validation = pairs.split_off(n_train.min(pairs.len()));
    (pairs, validation)
}

/// Per relation (in relation-id order): the `top_n` highest-typicality pairs
/// are positives, the `bottom_n` lowest are negatives. Typicality ties are
/// broken by lexicographic pair order. Each polarity is shuffled with a
/// per-relation seed and cut at `train_fraction`.
pub fn build_splits(records: &[RelationRecord], config: &SplitConfig, seed: u64) -> Result<Splits> {
    if !(0.0..=1.0).contains(&config.train_fraction) {
        return Err(Error::InvalidConfig("train_fraction must lie in [0, 1]".into()));
    }
    let mut by_relation: BTreeMap<&str, Vec<&RelationRecord>> = BTreeMap::new();
    for r in records {
        by_relation.entry(r.relation_id.as_str()).or_default().push(r);
    }
    let mut out = Splits::default();
    for (relation, mut rs) in by_relation {
        if rs.len() < config.top_n + config.bottom_n {
            log::warn!(
                "relation {relation}: {} pairs, need {}; skipped",
                rs.len(),
                config.top_n + config.bottom_n
            );
            out.skipped.push(relation.to_string());
            continue;
        }
        rs.sort_by(|a, b| {
            b.typicality
                .partial_cmp(&a.typicality)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.pair.cmp(&b.pair))
        });
        let positives: Vec<WordPair> = rs[..config.top_n].iter().map(|r| r.pair.clone()).collect();
        let mut bottom: Vec<&RelationRecord> = rs[rs.len() - config.bottom_n..].to_vec();
        bottom.sort_by(|a, b| {
            a.typicality
                .partial_cmp(&b.typicality)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.pair.cmp(&b.pair))
        });
        let negatives: Vec<WordPair> = bottom.iter().map(|r| r.pair.clone()).collect();

        let mut rng = derive_rng(seed, &["splits", relation]);
        let (train_positives, validation_positives) = partition(positives, config.train_fraction, &mut rng);
        let (train_negatives, validation_negatives) = partition(negatives, config.train_fraction, &mut rng);
        out.splits.push(RelationSplit {
            relation_id: relation.to_string(),
            category_id: rs[0].category_id.clone(),
            train_positives,
            validation_positives,
            train_negatives,
            validation_negatives,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relation(id: &str, n: usize, score: impl Fn(usize) -> f64) -> Vec<RelationRecord> {
        (0..n)
            .map(|i| RelationRecord {
                relation_id: id.into(),
                category_id: "1".into(),
                pair: WordPair::new(format!("h{i:02}"), format!("t{i:02}")).unwrap(),
                typicality: score(i),
            })
            .collect()
    }

    #[test]
    fn default_split_sizes() {
        let records = relation("1a", 40, |i| i as f64);
        let s = build_splits(&records, &SplitConfig::default(), 1).unwrap();
        let r = &s.splits[0];
        assert_eq!((r.train_positives.len(), r.validation_positives.len()), (8, 2));
        assert_eq!((r.train_negatives.len(), r.validation_negatives.len()), (8, 2));
    }

    #[test]
    fn positives_are_the_top_scored_pairs() {
        // Scores 1..=20 over 20 pairs.
        let records = relation("1a", 20, |i| (i + 1) as f64);
        let s = build_splits(&records, &SplitConfig::default(), 5).unwrap();
        let mut pos: Vec<_> = s.splits[0].positives().cloned().collect();
        pos.sort();
        let mut expected: Vec<_> = records
            .iter()
            .filter(|r| r.typicality >= 11.0)
            .map(|r| r.pair.clone())
            .collect();
        expected.sort();
        assert_eq!(pos, expected);
        let negs: Vec<_> = s.splits[0].negatives().collect();
        assert!(negs.iter().all(|p| !pos.contains(p)));
    }

    #[test]
    fn ties_break_lexicographically() {
        let records = relation("1a", 4, |_| 1.0);
        let cfg = SplitConfig {
            top_n: 2,
            bottom_n: 2,
            train_fraction: 1.0,
        };
        let s = build_splits(&records, &cfg, 0).unwrap();
        let mut pos: Vec<_> = s.splits[0].positives().map(|p| p.head.clone()).collect();
        pos.sort();
        assert_eq!(pos, vec!["h00", "h01"]);
        assert!(s.splits[0].validation_positives.is_empty());
    }

    #[test]
    fn short_relations_are_skipped() {
        let mut records = relation("1a", 20, |i| i as f64);
        records.extend(relation("1b", 5, |i| i as f64));
        let s = build_splits(&records, &SplitConfig::default(), 0).unwrap();
        assert_eq!(s.splits.len(), 1);
        assert_eq!(s.skipped, vec!["1b".to_string()]);
    }

    #[test]
    fn splits_are_seeded() {
        let records = relation("1a", 30, |i| i as f64);
        let a = build_splits(&records, &SplitConfig::default(), 3).unwrap();
        let b = build_splits(&records, &SplitConfig::default(), 3).unwrap();
        assert_eq!(a, b);
        let r = &a.splits[0];
        assert!(r.train_positives.iter().all(|p| !r.validation_positives.contains(p)));
    }
}
