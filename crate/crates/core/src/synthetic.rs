//! Small synthetic datasets with known structure, used for smoke runs and
//! behavioral checks on the reference encoder.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{
    build_splits, derive_rng, AnalogyQuestion, LabeledPair, RelationRecord, Split, SplitConfig, WordPair,
};
use crate::error::{Error, Result};
use crate::evaluation::LabeledVectors;
use crate::training::{PipelineConfig, PromptMethod, TrainConfig};
use crate::Scalar;

/// Shape of the toy relation task. Relation `r` links head words of group
/// `2r` to tail words of group `2r + 1`: its high-score pairs are the
/// combinations `(i, i)` and `(i, i + 1)` (indices mod the group size), its
/// low-score pairs join its heads to the tails of another relation.
/// Relations `2c` and `2c + 1` form category `c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToySpec {
    pub relations: usize,
    pub group_size: usize,
    pub negatives: usize,
    pub questions: usize,
    pub choices: usize,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            relations: 4,
            group_size: 4,
            negatives: 4,
            questions: 100,
            choices: 4,
        }
    }
}

impl ToySpec {
    pub fn positives(&self) -> usize {
        2 * self.group_size
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyTask {
    pub records: Vec<RelationRecord>,
    /// Held-out questions: stems and gold choices are combinations that
    /// never occur in the records, built from words of training pairs.
    pub questions: Vec<AnalogyQuestion>,
}

fn word(group: usize, index: usize, group_size: usize) -> String {
    format!("w{}", group * group_size + index)
}

fn relation_id(r: usize) -> String {
    format!("rel{r}")
}

/// Split settings matching the toy task: every pair is used.
pub fn toy_split_config(spec: &ToySpec) -> SplitConfig {
    SplitConfig {
        top_n: spec.positives(),
        bottom_n: spec.negatives,
        train_fraction: 0.75,
    }
}

/// Builds the records and held-out analogy questions for `spec`. Uses
/// filler tokens `w0`.. of the reference vocabulary, so `2 · relations ·
/// group_size` must not exceed the number of fillers. Question words are
/// restricted to words of the training positives under
/// [`toy_split_config`] and `seed`, so every question is answerable from
/// what training sees.
pub fn toy_task(spec: &ToySpec, seed: u64) -> Result<ToyTask> {
    let g = spec.group_size;
    if g < 4 || spec.relations < 2 || spec.choices < 2 || spec.choices > spec.relations {
        return Err(Error::InvalidConfig(
            "toy task needs group_size ≥ 4, ≥ 2 relations and 2..=relations choices".into(),
        ));
    }
    let pair =
        |r: usize, i: usize, j: usize| WordPair::new(word(2 * r, i, g), word(2 * r + 1, j, g)).expect("non-empty");
    let mut records = Vec::new();
    for r in 0..spec.relations {
        let other = (r + spec.relations / 2) % spec.relations;
        let category_id = format!("cat{}", r / 2);
        for i in 0..spec.positives() {
            records.push(RelationRecord {
                relation_id: relation_id(r),
                category_id: category_id.clone(),
                pair: pair(r, i % g, (i + i / g) % g),
                typicality: 10.0 - i as f64 * 0.1,
            });
        }
        for i in 0..spec.negatives {
            records.push(RelationRecord {
                relation_id: relation_id(r),
                category_id: category_id.clone(),
                pair: WordPair::new(word(2 * r, i % g, g), word(2 * other + 1, (i + 1) % g, g)).expect("non-empty"),
                typicality: -10.0 + i as f64 * 0.1,
            });
        }
    }

    let splits = build_splits(&records, &toy_split_config(spec), seed)?;
    let seen: HashSet<&WordPair> = records.iter().map(|r| &r.pair).collect();
    // Unseen combinations of training words, per relation.
    let unseen: Vec<Vec<(usize, usize)>> = (0..spec.relations)
        .map(|r| {
            let split = &splits.splits[r];
            let known = |w: &str, head: bool| {
                split
                    .train_positives
                    .iter()
                    .any(|p| if head { p.head == w } else { p.tail == w })
            };
            (0..g)
                .flat_map(|i| (0..g).map(move |j| (i, j)))
                .filter(|&(i, j)| {
                    !seen.contains(&pair(r, i, j))
                        && known(&word(2 * r, i, g), true)
                        && known(&word(2 * r + 1, j, g), false)
                })
                .collect()
        })
        .collect();

    let mut rng = derive_rng(seed, &["toy_questions"]);
    let mut questions = Vec::with_capacity(spec.questions);
    let mut attempts = 0;
    while questions.len() < spec.questions {
        attempts += 1;
        if attempts > 100 * spec.questions {
            return Err(Error::InsufficientData(
                "too few unseen combinations for toy questions".into(),
            ));
        }
        let r = rng.random_range(0..spec.relations);
        let Some(&(a, b)) = unseen[r].choose(&mut rng) else {
            continue;
        };
        let golds: Vec<&(usize, usize)> = unseen[r].iter().filter(|(c, d)| *c != a && *d != b).collect();
        let Some(&&(c, d)) = golds.choose(&mut rng) else {
            continue;
        };
        let mut others: Vec<usize> = (0..spec.relations)
            .filter(|&s| s != r && !unseen[s].is_empty())
            .collect();
        if others.len() < spec.choices - 1 {
            continue;
        }
        others.shuffle(&mut rng);
        let gold = pair(r, c, d);
        let mut choices = vec![gold.clone()];
        for &s in &others[..spec.choices - 1] {
            let &(i, j) = unseen[s].choose(&mut rng).expect("non-empty");
            choices.push(pair(s, i, j));
        }
        choices.shuffle(&mut rng);
        let answer = choices.iter().position(|p| *p == gold).expect("gold present");
        questions.push(AnalogyQuestion {
            stem: pair(r, a, b),
            choices,
            answer,
        });
    }
    Ok(ToyTask { records, questions })
}

/// Pipeline settings sized for the toy task: every within-relation triple,
/// 45 category triples per category, a fast learning rate and 8 epochs.
/// Exhaustive category triples outnumber within-relation triples tenfold
/// and pull the two relations of a category onto one point.
pub fn toy_pipeline_config(spec: &ToySpec, seed: u64) -> PipelineConfig {
    PipelineConfig {
        train: TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 8,
            seed,
            ..TrainConfig::default()
        },
        split: toy_split_config(spec),
        within_per_relation: None,
        category_per_category: Some(45),
        method: PromptMethod::manual(),
    }
}

/// Gaussian blobs around well separated class centres, one label per
/// class, split 60/20/20 into train, validation and test.
pub fn separable_classes<T: Scalar>(classes: usize, per_class: usize, dim: usize, seed: u64) -> [LabeledVectors<T>; 3] {
    let mut rng = derive_rng(seed, &["separable"]);
    let noise = Normal::new(0.0, 0.3).expect("valid");
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            (0..dim)
                .map(|_| if rng.random::<bool>() { 2.0 } else { -2.0 })
                .collect()
        })
        .collect();
    let mut parts: [(Vec<Vec<T>>, Vec<String>); 3] = Default::default();
    for (c, centre) in centres.iter().enumerate() {
        for i in 0..per_class {
            let v: Vec<T> = centre.iter().map(|&m| T::lit(m + noise.sample(&mut rng))).collect();
            let part = match i * 5 / per_class {
                0..=2 => 0,
                3 => 1,
                _ => 2,
            };
            parts[part].0.push(v);
            parts[part].1.push(format!("class{c}"));
        }
    }
    parts.map(|(rows, labels)| LabeledVectors::new(&rows, labels).expect("consistent"))
}

/// Labeled pairs for a relation-classification smoke run: pairs of the
/// toy relations labeled with their relation id.
pub fn toy_labeled_pairs(spec: &ToySpec, seed: u64) -> Vec<LabeledPair> {
    let g = spec.group_size;
    let mut rng = derive_rng(seed, &["toy_labeled"]);
    let splits = [Split::Train, Split::Train, Split::Train, Split::Validation, Split::Test];
    let mut out = Vec::new();
    for r in 0..spec.relations {
        for i in 0..g {
            for j in 0..g {
                out.push(LabeledPair {
                    pair: WordPair::new(word(2 * r, i, g), word(2 * r + 1, j, g)).expect("non-empty"),
                    label: relation_id(r),
                    split: *splits.choose(&mut rng).expect("non-empty"),
                });
            }
        }
    }
    out
}
