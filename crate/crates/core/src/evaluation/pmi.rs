use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use crate::dataset::{AnalogyQuestion, WordPair};
use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 10;

/// Unordered co-occurrence counts. Each line is one context; two tokens
/// co-occur when at most `window` positions apart on the same line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorpusCounts {
    pub window: usize,
    unigrams: HashMap<String, u64>,
    pairs: HashMap<(String, String), u64>,
    total_tokens: u64,
    total_pairs: u64,
}

fn key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl CorpusCounts {
    pub fn new(window: usize) -> Self {
        CorpusCounts {
            window,
            ..Default::default()
        }
    }

    pub fn add_line(&mut self, line: &str) {
        let tokens: Vec<String> = line.split_whitespace().map(str::to_lowercase).collect();
        for (i, a) in tokens.iter().enumerate() {
            *self.unigrams.entry(a.clone()).or_default() += 1;
            self.total_tokens += 1;
            for b in tokens.iter().skip(i + 1).take(self.window) {
                *self.pairs.entry(key(a, b)).or_default() += 1;
                self.total_pairs += 1;
            }
        }
    }

    pub fn from_text(text: &str, window: usize) -> Self {
        let mut c = Self::new(window);
        text.lines().for_each(|l| c.add_line(l));
        c
    }

    pub fn read(path: &Path, window: usize) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut c = Self::new(window);
        for line in std::io::BufReader::new(f).lines() {
            c.add_line(&line.map_err(|e| Error::io(path, e))?);
        }
        Ok(c)
    }

    pub fn count(&self, word: &str) -> u64 {
        self.unigrams.get(&word.to_lowercase()).copied().unwrap_or(0)
    }

    pub fn pair_count(&self, a: &str, b: &str) -> u64 {
        self.pairs
            .get(&key(&a.to_lowercase(), &b.to_lowercase()))
            .copied()
            .unwrap_or(0)
    }

    /// ln[p(h,t) / (p(h) p(t))] with maximum-likelihood estimates:
    /// p(h,t) over all co-occurrence events, p(w) over all tokens.
    /// Unseen pairs score −∞.
    pub fn pmi(&self, pair: &WordPair) -> f64 {
        let joint = self.pair_count(&pair.head, &pair.tail);
        if joint == 0 {
            return f64::NEG_INFINITY;
        }
        let m = self.total_tokens as f64;
        let ph = self.count(&pair.head) as f64 / m;
        let pt = self.count(&pair.tail) as f64 / m;
        (joint as f64 / self.total_pairs as f64 / (ph * pt)).ln()
    }
}

/// The choice with the highest PMI; the stem is ignored. Ties (including
/// all-unseen) go to the lowest index.
pub fn pmi_solve(question: &AnalogyQuestion, counts: &CorpusCounts) -> usize {
    let scores: Vec<f64> = question.choices.iter().map(|c| counts.pmi(c)).collect();
    (0..scores.len()).fold(0, |b, i| if scores[i] > scores[b] { i } else { b })
}
