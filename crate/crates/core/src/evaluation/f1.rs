use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassF1 {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// Class occurs in neither predictions nor gold; its F1 is set to 0.
    pub absent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub per_class: Vec<ClassF1>,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub accuracy: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class, macro and micro F1 over the union of observed labels.
pub fn f1_scores(predictions: &[String], gold: &[String]) -> Result<F1Report> {
    let classes: BTreeSet<String> = predictions.iter().chain(gold).cloned().collect();
    f1_scores_for(predictions, gold, &classes.into_iter().collect::<Vec<_>>())
}

/// As [`f1_scores`] over an explicit class list, which may include classes
/// that never occur (reported with F1 0 and `absent` set).
pub fn f1_scores_for(predictions: &[String], gold: &[String], classes: &[String]) -> Result<F1Report> {
    if predictions.len() != gold.len() {
        return Err(Error::DimensionMismatch {
            context: "predictions vs gold",
            expected: gold.len(),
            got: predictions.len(),
        });
    }
    let mut per_class = Vec::with_capacity(classes.len());
    let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
    for c in classes {
        let mut tp = 0;
        let mut fp = 0;
        let mut fn_ = 0;
        for (p, g) in predictions.iter().zip(gold) {
            match (p == c, g == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
        let absent = tp + fp + fn_ == 0;
        if absent {
            log::warn!("class {c} occurs in neither predictions nor gold; F1 set to 0");
        }
        per_class.push(ClassF1 {
            label: c.clone(),
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
            support: tp + fn_,
            absent,
        });
    }
    let macro_f1 = if per_class.is_empty() {
        0.0
    } else {
        per_class.iter().map(|c| c.f1).sum::<f64>() / per_class.len() as f64
    };
    let correct = predictions.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(F1Report {
        per_class,
        macro_f1,
        micro_f1: ratio(2 * tp_all, 2 * tp_all + fp_all + fn_all),
        accuracy: ratio(correct, gold.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(s: &str) -> Vec<String> {
        s.chars().map(|c| c.to_string()).collect()
    }

    #[test]
    fn perfect_predictions() {
        let g = labels("abcabc");
        let r = f1_scores(&g, &g).unwrap();
        assert!(r.per_class.iter().all(|c| c.f1 == 1.0));
        assert_eq!((r.macro_f1, r.micro_f1, r.accuracy), (1.0, 1.0, 1.0));
    }

    #[test]
    fn worked_two_class_counts() {
        // Class A: TP 3, FP 1, FN 2 over 10 items.
        let gold = labels("AAAAABBBBB");
        let pred = labels("AAABBABBBB");
        let r = f1_scores(&pred, &gold).unwrap();
        assert!((r.per_class[0].f1 - 6.0 / 9.0).abs() < 1e-12);
        // Class B: TP 4, FP 2, FN 1.
        assert!((r.per_class[1].f1 - 8.0 / 11.0).abs() < 1e-12);
        assert_eq!(r.micro_f1, r.accuracy);
    }

    #[test]
    fn absent_class_is_flagged() {
        let g = labels("ab");
        let r = f1_scores_for(&g, &g, &labels("abc")).unwrap();
        assert!(r.per_class[2].absent);
        assert_eq!(r.per_class[2].f1, 0.0);
        assert!((r.macro_f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!(f1_scores(&labels("a"), &labels("ab")).is_err());
    }
}
