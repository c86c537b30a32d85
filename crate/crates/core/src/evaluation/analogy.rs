use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{AnalogyQuestion, WordPair};
use crate::error::{Error, Result};
use crate::Scalar;

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut dot = T::zero();
    let mut na = T::zero();
    let mut nb = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == T::zero() || nb == T::zero() {
        return T::zero();
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax_first<T: PartialOrd + Copy>(values: &[T]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        match best {
            None if v.partial_cmp(v).is_some() => best = Some(i),
            Some(b) if *v > values[b] => best = Some(i),
            _ => {}
        }
    }
    best
}

/// The choice whose embedding is most cosine-similar to the stem's.
pub fn solve_analogy<T: Scalar>(stem: &[T], choices: &[Vec<T>]) -> Result<usize> {
    if choices.len() < 2 {
        return Err(Error::InsufficientData(
            "an analogy question needs at least two choices".into(),
        ));
    }
    if let Some(c) = choices.iter().find(|c| c.len() != stem.len()) {
        return Err(Error::DimensionMismatch {
            context: "analogy choice",
            expected: stem.len(),
            got: c.len(),
        });
    }
    let sims: Vec<T> = choices.iter().map(|c| cosine(stem, c)).collect();
    Ok(argmax_first(&sims).unwrap_or(0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalogyResult {
    pub predictions: Vec<usize>,
    pub accuracy: f64,
}

impl AnalogyResult {
    pub fn from_predictions(questions: &[AnalogyQuestion], predictions: Vec<usize>) -> Self {
        let correct = questions
            .iter()
            .zip(&predictions)
            .filter(|(q, &p)| q.answer == p)
            .count();
        let accuracy = if questions.is_empty() {
            0.0
        } else {
            correct as f64 / questions.len() as f64
        };
        AnalogyResult { predictions, accuracy }
    }
}

/// Solves every question. `embed` receives each distinct pair once, in
/// first-appearance order, and returns one vector per pair.
pub fn evaluate_analogy<T, F>(questions: &[AnalogyQuestion], embed: F) -> Result<AnalogyResult>
where
    T: Scalar,
    F: FnOnce(&[WordPair]) -> Result<Vec<Vec<T>>>,
{
    let mut index: HashMap<&WordPair, usize> = HashMap::new();
    let mut pairs: Vec<WordPair> = Vec::new();
    for q in questions {
        for p in std::iter::once(&q.stem).chain(&q.choices) {
            index.entry(p).or_insert_with(|| {
                pairs.push(p.clone());
                pairs.len() - 1
            });
        }
    }
    let vectors = embed(&pairs)?;
    if vectors.len() != pairs.len() {
        return Err(Error::DimensionMismatch {
            context: "embedded pairs",
            expected: pairs.len(),
            got: vectors.len(),
        });
    }
    let predictions = questions
        .iter()
        .map(|q| {
            let choices: Vec<Vec<T>> = q.choices.iter().map(|c| vectors[index[c]].clone()).collect();
            solve_analogy(&vectors[index[&q.stem]], &choices)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AnalogyResult::from_predictions(questions, predictions))
}
