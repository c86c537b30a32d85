//! Relation embeddings: pooled encoder outputs of a rendered prompt, and a
//! plain-text store for them.

mod store;

use serde::{Deserialize, Serialize};

pub use store::{EmbeddingStore, StoreMetadata};

use crate::dataset::WordPair;
use crate::error::{Error, Result};
use crate::lm_backend::{encode, ContextualOutput, MaskedEncoder, ModelInput};
use crate::prompting::{render, Prompt};
use crate::tape::Matrix;
use crate::Scalar;

/// Which output positions are averaged into the relation embedding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Every content position of the prompt.
    #[default]
    Mean,
    /// Only the mask position.
    Mask,
}

impl Pooling {
    /// Positions averaged for `input`, in increasing order.
    pub fn positions<T>(self, input: &ModelInput<T>) -> Result<Vec<usize>> {
        match self {
            Pooling::Mean => Ok(input.encoded.content_positions()),
            Pooling::Mask => input
                .encoded
                .slot_map
                .mask
                .map(|p| vec![p])
                .ok_or_else(|| Error::InvalidConfig("mask pooling needs a prompt with a mask slot".into())),
        }
    }

    pub fn pool<T: Scalar>(self, input: &ModelInput<T>, output: &ContextualOutput<T>) -> Result<Vec<T>> {
        let positions = self.positions(input)?;
        let d = output.vectors.ncols();
        let mut acc = vec![T::zero(); d];
        for &p in &positions {
            acc.iter_mut().zip(output.vectors.row(p)).for_each(|(a, &v)| *a += v);
        }
        let n = T::from_usize_lossy(positions.len());
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }

    /// Gradient wrt the output matrix of `len` rows given the gradient wrt
    /// the pooled vector.
    pub fn spread<T: Scalar>(self, input: &ModelInput<T>, grad: &[T]) -> Result<Matrix<T>> {
        let positions = self.positions(input)?;
        let mut out = Matrix::zeros((input.encoded.len(), grad.len()));
        let n = T::from_usize_lossy(positions.len());
        for &p in &positions {
            out.row_mut(p).iter_mut().zip(grad).for_each(|(o, &g)| *o = g / n);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelationEmbedding<T> {
    pub pair: WordPair,
    pub vector: Vec<T>,
}

/// Embeds many pairs at once; order follows `pairs`.
pub fn embed_pairs<T, M>(model: &M, prompt: &Prompt<T>, pairs: &[WordPair], pooling: Pooling) -> Result<Vec<Vec<T>>>
where
    T: Scalar,
    M: MaskedEncoder<T> + ?Sized,
{
    let inputs = pairs
        .iter()
        .map(|p| render(prompt, p, model.vocab()))
        .collect::<Result<Vec<_>>>()?;
    let outputs = encode(model, &inputs)?;
    inputs.iter().zip(&outputs).map(|(i, o)| pooling.pool(i, o)).collect()
}

pub fn embed_pair<T, M>(
    model: &M,
    prompt: &Prompt<T>,
    pair: &WordPair,
    pooling: Pooling,
) -> Result<RelationEmbedding<T>>
where
    T: Scalar,
    M: MaskedEncoder<T> + ?Sized,
{
    let vector = embed_pairs(model, prompt, std::slice::from_ref(pair), pooling)?.remove(0);
    Ok(RelationEmbedding {
        pair: pair.clone(),
        vector,
    })
}

/// `embed(h, t) ⊕ embed(t, h)`.
pub fn embed_bidirectional<T, M>(model: &M, prompt: &Prompt<T>, pair: &WordPair, pooling: Pooling) -> Result<Vec<T>>
where
    T: Scalar,
    M: MaskedEncoder<T> + ?Sized,
{
    let both = embed_pairs(model, prompt, &[pair.clone(), pair.reversed()], pooling)?;
    Ok(both.concat())
}

/// Bidirectional embeddings for many pairs, sharing one encoding pass.
pub fn embed_pairs_bidirectional<T, M>(
    model: &M,
    prompt: &Prompt<T>,
    pairs: &[WordPair],
    pooling: Pooling,
) -> Result<Vec<Vec<T>>>
where
    T: Scalar,
    M: MaskedEncoder<T> + ?Sized,
{
    let all: Vec<WordPair> = pairs.iter().flat_map(|p| [p.clone(), p.reversed()]).collect();
    let vs = embed_pairs(model, prompt, &all, pooling)?;
    Ok(vs.chunks(2).map(|c| c.concat()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm_backend::ReferenceEncoder;
    use crate::prompting::ManualTemplate;

    fn setup() -> (ReferenceEncoder<f64>, Prompt<f64>) {
        (
            ReferenceEncoder::reference(3),
            Prompt::Manual(ManualTemplate::builtin()[3].clone()),
        )
    }

    #[test]
    fn mean_equals_recomputed_average() {
        let (m, p) = setup();
        let pair = WordPair::new("coffee", "barista").unwrap();
        let e = embed_pair(&m, &p, &pair, Pooling::Mean).unwrap();
        let input = render(&p, &pair, m.vocab()).unwrap();
        let out = encode(&m, std::slice::from_ref(&input)).unwrap().remove(0);
        let n = input.encoded.len() as f64;
        for k in 0..32 {
            let mean = out.vectors.column(k).sum() / n;
            assert!((mean - e.vector[k]).abs() < 1e-7);
        }
        let again = embed_pair(&m, &p, &pair, Pooling::Mean).unwrap();
        assert_eq!(e, again);
    }

    #[test]
    fn mask_pooling_picks_the_mask_row() {
        let (m, p) = setup();
        let pair = WordPair::new("bread", "baker").unwrap();
        let e = embed_pair(&m, &p, &pair, Pooling::Mask).unwrap();
        let input = render(&p, &pair, m.vocab()).unwrap();
        let out = encode(&m, std::slice::from_ref(&input)).unwrap().remove(0);
        let row = out.vectors.row(input.encoded.slot_map.mask.unwrap()).to_vec();
        assert_eq!(e.vector, row);
    }

    #[test]
    fn bidirectional_halves_are_standalone_embeddings() {
        let (m, p) = setup();
        let pair = WordPair::new("beer", "brewer").unwrap();
        let both = embed_bidirectional(&m, &p, &pair, Pooling::Mean).unwrap();
        assert_eq!(both.len(), 64);
        let fwd = embed_pair(&m, &p, &pair, Pooling::Mean).unwrap().vector;
        let bwd = embed_pair(&m, &p, &pair.reversed(), Pooling::Mean).unwrap().vector;
        assert_eq!(both[..32], fwd[..]);
        assert_eq!(both[32..], bwd[..]);
        let swapped = embed_bidirectional(&m, &p, &pair.reversed(), Pooling::Mean).unwrap();
        assert_eq!([&both[32..], &both[..32]].concat(), swapped);
    }

    #[test]
    fn spread_is_the_adjoint_of_pool() {
        let (m, p) = setup();
        let pair = WordPair::new("Paris", "France").unwrap();
        let input = render(&p, &pair, m.vocab()).unwrap();
        let out = encode(&m, std::slice::from_ref(&input)).unwrap().remove(0);
        let g: Vec<f64> = (0..32).map(|k| (k as f64 * 0.37).sin()).collect();
        for pooling in [Pooling::Mean, Pooling::Mask] {
            let pooled = pooling.pool(&input, &out).unwrap();
            let lhs: f64 = pooled.iter().zip(&g).map(|(a, b)| a * b).sum();
            let seed = pooling.spread(&input, &g).unwrap();
            let rhs = (&seed * &out.vectors).sum();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
