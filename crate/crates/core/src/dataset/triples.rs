use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{derive_rng, RelationSplit, WordPair};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripleSource {
    /// Two positives and one low-typicality pair of the same relation.
    Within,
    /// Negative borrowed from another triple of the same batch.
    InBatch,
    /// Anchor and positive from sibling relations of one category.
    Category,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub anchor: WordPair,
    pub positive: WordPair,
    pub negative: WordPair,
    pub source: TripleSource,
    /// Relation the anchor and positive share; the category id for category triples.
    pub relation: String,
}

impl Triple {
    pub fn is_well_formed(&self) -> bool {
        self.anchor != self.positive && self.negative != self.anchor && self.negative != self.positive
    }
}

/// Within-relation triples from the train half of `split`.
///
/// Every unordered pair of distinct positives is combined with every
/// negative. `count = None` emits all `C(P, 2) × N` combinations; with
/// `Some(n)`, `n` combinations are drawn without replacement, topping up with
/// replacement only when fewer than `n` exist. Anchor/positive order within
/// each pair is randomised.
pub fn triples_within(split: &RelationSplit, count: Option<usize>, seed: u64) -> Result<Vec<Triple>> {
    let (pos, neg) = (&split.train_positives, &split.train_negatives);
    if neg.is_empty() {
        return Err(Error::InsufficientData(format!(
            "relation {} has no negatives",
            split.relation_id
        )));
    }
    if pos.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "relation {} needs at least two positives",
            split.relation_id
        )));
    }
    let mut rng = derive_rng(seed, &["within", &split.relation_id]);
    let mut combos = Vec::with_capacity(pos.len() * (pos.len() - 1) / 2 * neg.len());
    for i in 0..pos.len() {
        for j in i + 1..pos.len() {
            for k in 0..neg.len() {
                combos.push((i, j, k));
            }
        }
    }
    let chosen: Vec<(usize, usize, usize)> = match count {
        None => combos,
        Some(n) if n <= combos.len() => {
            combos.shuffle(&mut rng);
            combos.truncate(n);
            combos
        }
        Some(n) => {
            let extra: Vec<_> = (combos.len()..n)
                .map(|_| *combos.choose(&mut rng).expect("non-empty"))
                .collect();
            combos.extend(extra);
            combos
        }
    };
    Ok(chosen
        .into_iter()
        .map(|(i, j, k)| {
            let (a, p) = if rng.random_bool(0.5) { (i, j) } else { (j, i) };
            Triple {
                anchor: pos[a].clone(),
                positive: pos[p].clone(),
                negative: neg[k].clone(),
                source: TripleSource::Within,
                relation: split.relation_id.clone(),
            }
        })
        .collect())
}

/// Adds in-batch negatives: for every ordered pair `(i, j)` of triples with
/// different relations, `(anchor_i, positive_i, anchor_j)` and
/// `(anchor_i, positive_i, positive_j)`. Originals come first.
pub fn augment_batch(batch: &[Triple]) -> Vec<Triple> {
    let mut out = batch.to_vec();
    for (i, ti) in batch.iter().enumerate() {
        for (j, tj) in batch.iter().enumerate() {
            if i == j || ti.relation == tj.relation {
                continue;
            }
            for negative in [&tj.anchor, &tj.positive] {
                out.push(Triple {
                    anchor: ti.anchor.clone(),
                    positive: ti.positive.clone(),
                    negative: negative.clone(),
                    source: TripleSource::InBatch,
                    relation: ti.relation.clone(),
                });
            }
        }
    }
    out
}

/// Number of triples [`augment_batch`] returns for relations `rels`.
pub fn augmented_len<S: PartialEq>(rels: &[S]) -> usize {
    let cross = rels
        .iter()
        .enumerate()
        .map(|(i, a)| rels.iter().enumerate().filter(|(j, b)| *j != i && a != *b).count())
        .sum::<usize>();
    rels.len() + 2 * cross
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CategoryTriples {
    pub triples: Vec<Triple>,
    /// Categories with fewer than two relations.
    pub skipped: Vec<String>,
}

/// Category-level triples from train positives: anchor and positive from two
/// different relations of one category, negative a positive of a relation
/// in another category. `count = Some(n)` samples exactly `n` per category
/// uniformly (relation pair, then pairs); `None` enumerates every combination.
pub fn triples_category(splits: &[RelationSplit], count: Option<usize>, seed: u64) -> Result<CategoryTriples> {
    let mut by_category: BTreeMap<&str, Vec<&RelationSplit>> = BTreeMap::new();
    for s in splits.iter().filter(|s| !s.train_positives.is_empty()) {
        by_category.entry(s.category_id.as_str()).or_default().push(s);
    }
    if by_category.len() < 2 {
        return Err(Error::InsufficientData(
            "category triples need at least two categories".into(),
        ));
    }
    let mut out = CategoryTriples::default();
    for (&category, members) in &by_category {
        if members.len() < 2 {
            log::warn!("category {category} has a single relation; skipped");
            out.skipped.push(category.to_string());
            continue;
        }
        let others: Vec<&WordPair> = by_category
            .iter()
            .filter(|(c, _)| **c != category)
            .flat_map(|(_, rs)| rs.iter().flat_map(|r| r.train_positives.iter()))
            .collect();
        let make = |a: &WordPair, p: &WordPair, n: &WordPair| Triple {
            anchor: a.clone(),
            positive: p.clone(),
            negative: n.clone(),
            source: TripleSource::Category,
            relation: category.to_string(),
        };
        match count {
            None => {
                for (i, r1) in members.iter().enumerate() {
                    for (j, r2) in members.iter().enumerate() {
                        if i == j {
                            continue;
                        }
                        for a in &r1.train_positives {
                            for p in &r2.train_positives {
                                for n in &others {
                                    out.triples.push(make(a, p, n));
                                }
                            }
                        }
                    }
                }
            }
            Some(n) => {
                let mut rng = derive_rng(seed, &["category", category]);
                let other_categories: Vec<&Vec<&RelationSplit>> = by_category
                    .iter()
                    .filter(|(c, _)| **c != category)
                    .map(|(_, rs)| rs)
                    .collect();
                for _ in 0..n {
                    let i = rng.random_range(0..members.len());
                    let mut j = rng.random_range(0..members.len() - 1);
                    if j >= i {
                        j += 1;
                    }
                    let a = members[i].train_positives.choose(&mut rng).expect("non-empty");
                    let p = members[j].train_positives.choose(&mut rng).expect("non-empty");
                    let neg_rel = other_categories
                        .choose(&mut rng)
                        .expect("two categories")
                        .choose(&mut rng)
                        .expect("non-empty category");
                    let neg = neg_rel.train_positives.choose(&mut rng).expect("non-empty");
                    out.triples.push(make(a, p, neg));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn pairs(prefix: &str, n: usize) -> Vec<WordPair> {
        (0..n)
            .map(|i| WordPair::new(format!("{prefix}h{i}"), format!("{prefix}t{i}")).unwrap())
            .collect()
    }

    fn split(rel: &str, cat: &str, p: usize, n: usize) -> RelationSplit {
        RelationSplit {
            relation_id: rel.into(),
            category_id: cat.into(),
            train_positives: pairs(&format!("{rel}p"), p),
            validation_positives: Vec::new(),
            train_negatives: pairs(&format!("{rel}n"), n),
            validation_negatives: Vec::new(),
        }
    }

    fn key(t: &Triple) -> (WordPair, WordPair, WordPair) {
        let (a, p) = if t.anchor < t.positive {
            (t.anchor.clone(), t.positive.clone())
        } else {
            (t.positive.clone(), t.anchor.clone())
        };
        (a, p, t.negative.clone())
    }

    #[test]
    fn ten_by_ten_gives_450_distinct_triples() {
        let s = split("1a", "1", 10, 10);
        let t = triples_within(&s, Some(450), 9).unwrap();
        assert_eq!(t.len(), 450);
        let unique: HashSet<_> = t.iter().map(key).collect();
        assert_eq!(unique.len(), 450);
        assert!(t.iter().all(Triple::is_well_formed));
    }

    #[test]
    fn forced_single_triple() {
        let s = split("1a", "1", 2, 1);
        let t = triples_within(&s, Some(1), 0).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].negative, s.train_negatives[0]);
    }

    #[test]
    fn exhaustive_count_is_combinatorial() {
        let s = split("1a", "1", 5, 4);
        let t = triples_within(&s, None, 0).unwrap();
        assert_eq!(t.len(), 10 * 4);
    }

    #[test]
    fn small_pools_top_up_with_replacement() {
        let s = split("1a", "1", 3, 1);
        let t = triples_within(&s, Some(7), 0).unwrap();
        assert_eq!(t.len(), 7);
        let unique: HashSet<_> = t.iter().map(key).collect();
        assert_eq!(unique.len(), 3);
    }

    #[test]
    fn empty_negative_pool_is_rejected() {
        let s = split("1a", "1", 4, 0);
        assert!(triples_within(&s, None, 0).is_err());
    }

    fn batch(rels: &[&str]) -> Vec<Triple> {
        rels.iter()
            .enumerate()
            .map(|(i, r)| {
                let s = split(&format!("{r}{i}"), "c", 2, 1);
                let mut t = triples_within(&s, Some(1), 0).unwrap().remove(0);
                t.relation = r.to_string();
                t
            })
            .collect()
    }

    #[test]
    fn augmentation_of_eight_distinct_relations() {
        let b = batch(&["a", "b", "c", "d", "e", "f", "g", "h"]);
        let out = augment_batch(&b);
        assert_eq!(out.len(), 8 + 2 * 8 * 7);
        assert_eq!(&out[..8], &b[..]);
        assert!(out[8..].iter().all(|t| t.source == TripleSource::InBatch));
    }

    #[test]
    fn augmentation_of_one_triple_adds_nothing() {
        let b = batch(&["a"]);
        assert_eq!(augment_batch(&b), b);
    }

    #[test]
    fn same_relation_triples_do_not_cross() {
        let b = batch(&["a", "a", "b"]);
        let out = augment_batch(&b);
        assert_eq!(out.len(), augmented_len(&["a", "a", "b"]));
        assert_eq!(out.len(), 3 + 2 * 4);
        for t in &out[3..] {
            let from_other_a = [&b[0], &b[1]]
                .iter()
                .any(|o| o.anchor == t.anchor && (t.negative == b[0].anchor || t.negative == b[1].anchor));
            assert!(!from_other_a);
        }
    }

    fn category_fixture() -> Vec<RelationSplit> {
        vec![
            split("1a", "1", 2, 1),
            split("1b", "1", 2, 1),
            split("2a", "2", 2, 1),
            split("2b", "2", 2, 1),
        ]
    }

    fn satisfies_category_constraint(t: &Triple, splits: &[RelationSplit]) -> bool {
        let owner = |p: &WordPair| splits.iter().find(|s| s.train_positives.contains(p));
        match (owner(&t.anchor), owner(&t.positive), owner(&t.negative)) {
            (Some(a), Some(p), Some(n)) => {
                a.category_id == p.category_id
                    && a.relation_id != p.relation_id
                    && n.category_id != a.category_id
                    && t.relation == a.category_id
            }
            _ => false,
        }
    }

    #[test]
    fn exhaustive_category_triples_satisfy_brute_force_filter() {
        let splits = category_fixture();
        let out = triples_category(&splits, None, 0).unwrap();
        // Brute force over every (anchor, positive, negative) among all positives.
        let all: Vec<&WordPair> = splits.iter().flat_map(|s| s.train_positives.iter()).collect();
        let mut expected = 0;
        for a in &all {
            for p in &all {
                for n in &all {
                    let t = Triple {
                        anchor: (*a).clone(),
                        positive: (*p).clone(),
                        negative: (*n).clone(),
                        source: TripleSource::Category,
                        relation: splits
                            .iter()
                            .find(|s| s.train_positives.contains(a))
                            .unwrap()
                            .category_id
                            .clone(),
                    };
                    if satisfies_category_constraint(&t, &splits) {
                        expected += 1;
                    }
                }
            }
        }
        assert_eq!(out.triples.len(), expected);
        assert!(out.triples.iter().all(|t| satisfies_category_constraint(t, &splits)));
    }

    #[test]
    fn sampled_category_triples_hit_the_count() {
        let splits = category_fixture();
        let out = triples_category(&splits, Some(37), 4).unwrap();
        assert_eq!(out.triples.len(), 2 * 37);
        assert!(out.triples.iter().all(|t| satisfies_category_constraint(t, &splits)));
        assert!(triples_category(&splits, Some(0), 4).unwrap().triples.is_empty());
        assert_eq!(out, triples_category(&splits, Some(37), 4).unwrap());
    }

    #[test]
    fn single_relation_category_is_skipped() {
        let mut splits = category_fixture();
        splits.push(split("3a", "3", 2, 1));
        let out = triples_category(&splits, Some(5), 0).unwrap();
        assert_eq!(out.skipped, vec!["3".to_string()]);
        assert_eq!(out.triples.len(), 10);
    }
}
