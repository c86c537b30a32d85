use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::dataset::WordPair;
use crate::error::{Error, Result};
use crate::Scalar;

/// Word vectors in the plain text format: `word v1 v2 ...` per line, with
/// an optional leading `count dim` header line.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticVectors<T> {
    dim: usize,
    vectors: HashMap<String, Vec<T>>,
}

impl<T: Scalar> StaticVectors<T> {
    pub fn new(dim: usize) -> Self {
        StaticVectors {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<T>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "static vector",
                expected: self.dim,
                got: vector.len(),
            });
        }
        self.vectors.insert(word.into(), vector);
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<&[T]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut out: Option<Self> = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
                out = Some(Self::new(fields[1].parse().expect("checked")));
                continue;
            }
            let values = fields[1..]
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .map(T::lit)
                        .ok_or_else(|| Error::parse(path, line_no, format!("bad value `{f}`")))
                })
                .collect::<Result<Vec<T>>>()?;
            let table = out.get_or_insert_with(|| Self::new(values.len()));
            if values.is_empty() || values.len() != table.dim {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected {} values, got {}", table.dim, values.len()),
                ));
            }
            table.vectors.insert(fields[0].to_string(), values);
        }
        out.ok_or(Error::EmptyInput("static vector file"))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Component {
    Diff,
    Cat,
    Dot,
}

/// A sequence of components concatenated in order, e.g. `cat+dot`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComposeMethod(pub Vec<Component>);

impl ComposeMethod {
    pub fn output_dim(&self, dim: usize) -> usize {
        self.0
            .iter()
            .map(|c| if *c == Component::Cat { 2 * dim } else { dim })
            .sum()
    }
}

impl FromStr for ComposeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts = s
            .split('+')
            .map(|p| match p.trim() {
                "diff" => Ok(Component::Diff),
                "cat" => Ok(Component::Cat),
                "dot" => Ok(Component::Dot),
                other => Err(Error::InvalidConfig(format!("unknown composition `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ComposeMethod(parts))
    }
}

impl fmt::Display for ComposeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self
            .0
            .iter()
            .map(|c| match c {
                Component::Diff => "diff",
                Component::Cat => "cat",
                Component::Dot => "dot",
            })
            .collect();
        f.write_str(&names.join("+"))
    }
}

/// diff = v_t − v_h, cat = v_h ⊕ v_t, dot = v_h ⊙ v_t.
pub fn compose_static<T: Scalar>(
    pair: &WordPair,
    vectors: &StaticVectors<T>,
    method: &ComposeMethod,
) -> Result<Vec<T>> {
    let lookup = |w: &str| vectors.get(w).ok_or_else(|| Error::OutOfVocabulary(w.to_string()));
    let h = lookup(&pair.head)?;
    let t = lookup(&pair.tail)?;
    let mut out = Vec::with_capacity(method.output_dim(vectors.dim()));
    for c in &method.0 {
        match c {
            Component::Diff => out.extend(h.iter().zip(t).map(|(&a, &b)| b - a)),
            Component::Cat => {
                out.extend_from_slice(h);
                out.extend_from_slice(t);
            }
            Component::Dot => out.extend(h.iter().zip(t).map(|(&a, &b)| a * b)),
        }
    }
    Ok(out)
}

/// Composes every pair; out-of-vocabulary pairs are logged and yield `None`.
pub fn compose_all<T: Scalar>(
    pairs: &[WordPair],
    vectors: &StaticVectors<T>,
    method: &ComposeMethod,
) -> Result<Vec<Option<Vec<T>>>> {
    pairs
        .iter()
        .map(|p| match compose_static(p, vectors, method) {
            Ok(v) => Ok(Some(v)),
            Err(Error::OutOfVocabulary(w)) => {
                log::warn!("skipping {p}: `{w}` has no static vector");
                Ok(None)
            }
            Err(e) => Err(e),
        })
        .collect()
}
