use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::dataset::WordPair;
use crate::error::{Error, Result};
use crate::Scalar;

const MAGIC: &str = "relemb";
const VERSION: &str = "v1";

/// Provenance written as `# key value` lines under the header.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StoreMetadata {
    pub model: Option<String>,
    pub prompt: Option<String>,
}

/// Pair vectors of one dimension, in insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore<T> {
    dim: usize,
    pub metadata: StoreMetadata,
    entries: Vec<(WordPair, Vec<T>)>,
    index: HashMap<WordPair, usize>,
}

impl<T: Scalar> EmbeddingStore<T> {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore {
            dim,
            metadata: StoreMetadata::default(),
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, pair: WordPair, vector: Vec<T>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "embedding store entry",
                expected: self.dim,
                got: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite embedding for {pair}")));
        }
        if self.index.contains_key(&pair) {
            return Err(Error::DuplicatePair(pair.head, pair.tail));
        }
        self.index.insert(pair.clone(), self.entries.len());
        self.entries.push((pair, vector));
        Ok(())
    }

    pub fn get(&self, pair: &WordPair) -> Option<&[T]> {
        self.index.get(pair).map(|&i| self.entries[i].1.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&WordPair, &[T])> {
        self.entries.iter().map(|(p, v)| (p, v.as_slice()))
    }

    /// Text form: `relemb v1 <dim>`, optional `# key value` lines, then
    /// `head\ttail\tv1 v2 ...` with 9 significant digits per value.
    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION} {}\n", self.dim);
        if let Some(m) = &self.metadata.model {
            let _ = writeln!(out, "# model {m}");
        }
        if let Some(p) = &self.metadata.prompt {
            let _ = writeln!(out, "# prompt {p}");
        }
        for (pair, v) in &self.entries {
            let _ = write!(out, "{}\t{}\t", pair.head, pair.tail);
            for (i, x) in v.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{:.8e}", x.to_f64().expect("finite"));
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate();
        let dim = match lines.next().map(|(_, l)| l.split(' ').collect::<Vec<_>>()) {
            Some(h) if h.len() == 3 && h[0] == MAGIC && h[1] == VERSION => h[2]
                .parse::<usize>()
                .map_err(|_| Error::parse(path, 1, "bad dimension in header"))?,
            _ => {
                return Err(Error::parse(
                    path,
                    1,
                    format!("expected header `{MAGIC} {VERSION} <dim>`"),
                ))
            }
        };
        let mut store = EmbeddingStore::new(dim);
        for (i, line) in lines {
            let n = i + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix("# ") {
                match meta.split_once(' ') {
                    Some(("model", v)) => store.metadata.model = Some(v.to_string()),
                    Some(("prompt", v)) => store.metadata.prompt = Some(v.to_string()),
                    _ => {}
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(path, n, "expected `head\\ttail\\tvector`"));
            }
            let pair = WordPair::new(fields[0], fields[1]).map_err(|e| Error::parse(path, n, e.to_string()))?;
            let vector = fields[2]
                .split(' ')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map(T::lit))
                .collect::<std::result::Result<Vec<T>, _>>()
                .map_err(|_| Error::parse(path, n, "bad float"))?;
            store
                .insert(pair, vector)
                .map_err(|e| Error::parse(path, n, e.to_string()))?;
        }
        Ok(store)
    }
}
