use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_jsonl, WordPair};
use crate::error::{Error, Result};

/// A stem pair, candidate pairs and the index of the gold candidate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalogyQuestion {
    pub stem: WordPair,
    pub choices: Vec<WordPair>,
    pub answer: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub pair: WordPair,
    pub label: String,
    pub split: Split,
}

#[derive(Deserialize)]
struct RawAnalogy {
    stem: (String, String),
    choices: Vec<(String, String)>,
    answer: i64,
}

#[derive(Deserialize)]
struct RawLabeled {
    head: String,
    tail: String,
    label: String,
    split: Split,
}

/// Reads `{"stem": [h, t], "choices": [[h, t], ...], "answer": i}` lines.
pub fn load_analogy(path: &Path) -> Result<Vec<AnalogyQuestion>> {
    read_jsonl(path, |line, raw: RawAnalogy| {
        let pair = |(h, t): (String, String)| WordPair::new(h, t).map_err(|_| Error::parse(path, line, "empty word"));
        if raw.choices.len() < 2 {
            return Err(Error::parse(path, line, "fewer than two choices"));
        }
        if raw.answer < 0 || raw.answer as usize >= raw.choices.len() {
            return Err(Error::parse(
                path,
                line,
                format!("answer {} out of range for {} choices", raw.answer, raw.choices.len()),
            ));
        }
        Ok(AnalogyQuestion {
            stem: pair(raw.stem)?,
            choices: raw.choices.into_iter().map(pair).collect::<Result<_>>()?,
            answer: raw.answer as usize,
        })
    })
}

pub fn write_analogy(path: &Path, questions: &[AnalogyQuestion]) -> Result<()> {
    let mut out = String::new();
    for q in questions {
        let line = serde_json::json!({
            "stem": [q.stem.head, q.stem.tail],
            "choices": q.choices.iter().map(|c| [&c.head, &c.tail]).collect::<Vec<_>>(),
            "answer": q.answer,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads `{"head", "tail", "label", "split"}` lines, preserving split tags.
pub fn load_classification(path: &Path) -> Result<Vec<LabeledPair>> {
    read_jsonl(path, |line, raw: RawLabeled| {
        if raw.label.is_empty() {
            return Err(Error::parse(path, line, "empty label"));
        }
        Ok(LabeledPair {
            pair: WordPair::new(raw.head, raw.tail).map_err(|_| Error::parse(path, line, "empty word"))?,
            label: raw.label,
            split: raw.split,
        })
    })
}

pub fn write_classification(path: &Path, pairs: &[LabeledPair]) -> Result<()> {
    let mut out = String::new();
    for p in pairs {
        let line = serde_json::json!({
            "head": p.pair.head,
            "tail": p.pair.tail,
            "label": p.label,
            "split": p.split,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
