use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::losses::ClassifierHead;
use super::objective::{batched_triples, objective_gradient, IndexedTriples, LossParts, ObjectiveSettings};
use crate::dataset::{derive_rng, Triple};
use crate::embedding::Pooling;
use crate::error::{Error, Result};
use crate::lm_backend::{apply_update, clip_global_norm, Adam, AdamConfig, GradRequest, MaskedEncoder};
use crate::prompting::Prompt;
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Triplet margin ε.
    pub margin: f64,
    pub seed: u64,
    /// Adds `L_c` during fine-tuning; never used while optimizing prompts.
    pub use_classification_loss: bool,
    /// In-batch negatives, in both phases.
    pub augment: bool,
    /// Global gradient-norm clip; off by default.
    pub clip_norm: Option<f64>,
    pub pooling: Pooling,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 2e-5,
            batch_size: 64,
            epochs: 1,
            margin: 1.0,
            seed: 0,
            use_classification_loss: true,
            augment: true,
            clip_norm: None,
            pooling: Pooling::Mean,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::InvalidConfig("margin must be positive".into()));
        }
        if matches!(self.clip_norm, Some(c) if c.is_nan() || c <= 0.0) {
            return Err(Error::InvalidConfig("clip_norm must be positive".into()));
        }
        Ok(())
    }

    pub fn objective(&self) -> ObjectiveSettings {
        ObjectiveSettings {
            margin: self.margin,
            pooling: self.pooling,
        }
    }

    /// The prompt-phase objective over `triples`: fixed order, batched and
    /// augmented like fine-tuning batches.
    pub fn objective_set(&self, triples: &[Triple]) -> IndexedTriples {
        IndexedTriples::new(&batched_triples(triples, self.batch_size, self.augment))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchLoss {
    pub epoch: usize,
    pub batch: usize,
    pub triplet: f64,
    pub classification: f64,
    pub total: f64,
}

impl BatchLoss {
    fn new<T: Scalar>(epoch: usize, batch: usize, parts: LossParts<T>) -> Self {
        let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
        BatchLoss {
            epoch,
            batch,
            triplet: f(parts.triplet),
            classification: f(parts.classification),
            total: f(parts.total()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FineTuneOutcome<T> {
    pub head: ClassifierHead<T>,
    /// Loss of every batch, measured before its update.
    pub history: Vec<BatchLoss>,
}

/// Fine-tunes `model` and `head` jointly with Adam on the mean of
/// `L_t (+ L_c)` over each augmented batch. Triples are reshuffled every
/// epoch from the seed.
pub fn fine_tune<T, M>(
    model: &mut M,
    prompt: &Prompt<T>,
    triples: &[Triple],
    config: &TrainConfig,
    mut head: ClassifierHead<T>,
) -> Result<FineTuneOutcome<T>>
where
    T: Scalar,
    M: MaskedEncoder<T> + ?Sized,
{
    config.validate()?;
    if triples.is_empty() {
        return Err(Error::EmptyInput("fine-tuning triples"));
    }
    if head.weights.len() != 3 * model.hidden_dim() {
        return Err(Error::DimensionMismatch {
            context: "classifier head",
            expected: 3 * model.hidden_dim(),
            got: head.weights.len(),
        });
    }
    let adam = AdamConfig::with_learning_rate(config.learning_rate);
    let mut model_opt = Adam::new(adam);
    let mut head_opt = Adam::new(adam);
    let settings = config.objective();
    let mut history = Vec::new();

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..triples.len()).collect();
        order.shuffle(&mut derive_rng(config.seed, &["fine_tune", &epoch.to_string()]));
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<Triple> = chunk.iter().map(|&i| triples[i].clone()).collect();
            let set = IndexedTriples::new(&batched_triples(&batch, batch.len(), config.augment));
            let head_ref = config.use_classification_loss.then_some(&head);
            let g = objective_gradient(&*model, prompt, &set, &settings, head_ref, &GradRequest::parameters())?;
            history.push(BatchLoss::new(epoch, b, g.loss));
            let mut grads = g.encoder.parameters.expect("parameter gradients requested");
            let mut head_grad = g.head;
            if let Some(max) = config.clip_norm {
                let mut views: Vec<&mut [T]> = grads
                    .iter_mut()
                    .map(|m| m.as_slice_mut().expect("contiguous"))
                    .collect();
                if let Some(h) = head_grad.as_mut() {
                    views.push(h.as_mut_slice());
                }
                clip_global_norm(&mut views, T::lit(max));
            }
            apply_update(model, &grads, &mut model_opt)?;
            if let Some(hg) = head_grad {
                head_opt.step(&mut [head.weights.as_mut_slice()], &[hg.as_slice()])?;
            }
            log::debug!(
                "epoch {epoch} batch {b}: loss {:.6}",
                history.last().map_or(0.0, |h| h.total)
            );
        }
    }
    Ok(FineTuneOutcome { head, history })
}
