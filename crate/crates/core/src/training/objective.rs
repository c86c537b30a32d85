//! The training objective as a function of a model, a prompt and a set of
//! triples: mean `L_t` (plus mean `L_c` when a head is given) over the
//! triples, with analytic gradients wrt the pooled embeddings pushed
//! through the encoder.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::losses::{clamp_score, distance, nll_from_scores, sigmoid, ClassifierHead, SCORE_CLAMP};
use crate::dataset::{augment_batch, Triple, WordPair};
use crate::embedding::{embed_pairs, Pooling};
use crate::error::{Error, Result};
use crate::lm_backend::{forward_backward, GradRequest, LossGradient, MaskedEncoder, ModelInput};
use crate::prompting::{render, Prompt};
use crate::Scalar;

/// Triples over unique pairs: `triples[i] = [anchor, positive, negative]`
/// indices into `pairs`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IndexedTriples {
    pub pairs: Vec<WordPair>,
    pub triples: Vec<[usize; 3]>,
}

impl IndexedTriples {
    pub fn new(triples: &[Triple]) -> Self {
        let mut index: HashMap<&WordPair, usize> = HashMap::new();
        let mut pairs = Vec::new();
        let mut idx = Vec::with_capacity(triples.len());
        for t in triples {
            let mut slot = [0; 3];
            for (s, p) in slot.iter_mut().zip([&t.anchor, &t.positive, &t.negative]) {
                *s = *index.entry(p).or_insert_with(|| {
                    pairs.push(p.clone());
                    pairs.len() - 1
                });
            }
            idx.push(slot);
        }
        IndexedTriples { pairs, triples: idx }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

/// Triples the objective averages over: consecutive chunks of
/// `batch_size`, each extended with in-batch negatives when `augment` is set.
pub fn batched_triples(triples: &[Triple], batch_size: usize, augment: bool) -> Vec<Triple> {
    if !augment {
        return triples.to_vec();
    }
    triples.chunks(batch_size.max(1)).flat_map(augment_batch).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts<T> {
    pub triplet: T,
    pub classification: T,
}

impl<T: Scalar> LossParts<T> {
    pub fn total(&self) -> T {
        self.triplet + self.classification
    }
}

/// Loss parts, gradient per embedding, and the head gradient when a head is given.
pub type EmbeddingLoss<T> = (LossParts<T>, Vec<Vec<T>>, Option<Vec<T>>);

/// Mean losses over `triples` of precomputed embeddings together with the
/// gradient wrt each embedding and, when a head is given, wrt its weights.
///
/// The norm has subgradient 0 at zero distance; the hinge contributes no
/// gradient when inactive. Clamped scores have zero gradient.
pub fn embedding_loss<T: Scalar>(
    embeddings: &[Vec<T>],
    triples: &[[usize; 3]],
    margin: T,
    head: Option<&ClassifierHead<T>>,
) -> Result<EmbeddingLoss<T>> {
    if triples.is_empty() {
        return Err(Error::EmptyInput("triples"));
    }
    let d = embeddings.first().map_or(0, Vec::len);
    if let Some(h) = head {
        if h.weights.len() != 3 * d {
            return Err(Error::DimensionMismatch {
                context: "classifier head",
                expected: 3 * d,
                got: h.weights.len(),
            });
        }
    }
    let scale = T::one() / T::from_usize_lossy(triples.len());
    let mut parts = LossParts::default();
    let mut grads = vec![vec![T::zero(); d]; embeddings.len()];
    let mut head_grad = head.map(|_| vec![T::zero(); 3 * d]);

    for &[ia, ip, in_] in triples {
        let (a, p, n) = (&embeddings[ia], &embeddings[ip], &embeddings[in_]);
        let dap = distance(a, p);
        let dan = distance(a, n);
        let s = dap - dan + margin;
        if s > T::zero() {
            parts.triplet += s * scale;
            for k in 0..d {
                let gp = if dap > T::zero() {
                    (a[k] - p[k]) / dap * scale
                } else {
                    T::zero()
                };
                let gn = if dan > T::zero() {
                    (a[k] - n[k]) / dan * scale
                } else {
                    T::zero()
                };
                grads[ia][k] += gp - gn;
                grads[ip][k] -= gp;
                grads[in_][k] += gn;
            }
        }
        if let (Some(h), Some(hg)) = (head, head_grad.as_mut()) {
            let gp = sigmoid(h.logit(a, p));
            let gn = sigmoid(h.logit(a, n));
            parts.classification += nll_from_scores(gp, gn) * scale;
            let lo = T::lit(SCORE_CLAMP);
            let interior = |g: T| g > lo && g < T::one() - lo && clamp_score(g) == g;
            // d(−ln σ(z))/dz = σ − 1 and d(−ln(1 − σ(z)))/dz = σ.
            for (other, io, dz) in [
                (p, ip, if interior(gp) { gp - T::one() } else { T::zero() }),
                (n, in_, if interior(gn) { gn } else { T::zero() }),
            ] {
                if dz == T::zero() {
                    continue;
                }
                let dz = dz * scale;
                for k in 0..d {
                    let diff = other[k] - a[k];
                    let sign = if diff > T::zero() {
                        T::one()
                    } else if diff < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    };
                    let (w1, w2, w3) = (h.weights[k], h.weights[d + k], h.weights[2 * d + k]);
                    grads[ia][k] += dz * (w1 - w3 * sign);
                    grads[io][k] += dz * (w2 + w3 * sign);
                    hg[k] += dz * a[k];
                    hg[d + k] += dz * other[k];
                    hg[2 * d + k] += dz * diff.abs();
                }
            }
        }
    }
    Ok((parts, grads, head_grad))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSettings {
    pub margin: f64,
    pub pooling: Pooling,
}

impl Default for ObjectiveSettings {
    fn default() -> Self {
        ObjectiveSettings {
            margin: 1.0,
            pooling: Pooling::Mean,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ObjectiveGradient<T> {
    pub loss: LossParts<T>,
    pub encoder: LossGradient<T>,
    pub head: Option<Vec<T>>,
}

fn render_all<T: Scalar, M: MaskedEncoder<T> + ?Sized>(
    model: &M,
    prompt: &Prompt<T>,
    pairs: &[WordPair],
) -> Result<Vec<ModelInput<T>>> {
    pairs.iter().map(|p| render(prompt, p, model.vocab())).collect()
}

/// Loss value only; the model is not differentiated.
pub fn objective_loss<T, M>(
    model: &M,
    prompt: &Prompt<T>,
    set: &IndexedTriples,
    settings: &ObjectiveSettings,
    head: Option<&ClassifierHead<T>>,
) -> Result<LossParts<T>>
where
    T: Scalar,
    M: MaskedEncoder<T> + ?Sized,
{
    let emb = embed_pairs(model, prompt, &set.pairs, settings.pooling)?;
    Ok(embedding_loss(&emb, &set.triples, T::lit(settings.margin), head)?.0)
}

/// Loss and gradients wrt whatever `wrt` requests, plus the head when given.
pub fn objective_gradient<T, M>(
    model: &M,
    prompt: &Prompt<T>,
    set: &IndexedTriples,
    settings: &ObjectiveSettings,
    head: Option<&ClassifierHead<T>>,
    wrt: &GradRequest,
) -> Result<ObjectiveGradient<T>>
where
    T: Scalar,
    M: MaskedEncoder<T> + ?Sized,
{
    let inputs = render_all(model, prompt, &set.pairs)?;
    let mut parts = LossParts::default();
    let mut head_grad = None;
    let encoder = forward_backward(model, &inputs, wrt, |outputs| {
        let emb = inputs
            .iter()
            .zip(outputs)
            .map(|(i, o)| settings.pooling.pool(i, o))
            .collect::<Result<Vec<_>>>()?;
        let (p, grads, hg) = embedding_loss(&emb, &set.triples, T::lit(settings.margin), head)?;
        parts = p;
        head_grad = hg;
        let seeds = inputs
            .iter()
            .zip(&grads)
            .map(|(i, g)| settings.pooling.spread(i, g))
            .collect::<Result<Vec<_>>>()?;
        Ok((p.total(), seeds))
    })?;
    Ok(ObjectiveGradient {
        loss: parts,
        encoder,
        head: head_grad,
    })
}
