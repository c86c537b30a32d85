use std::cmp::Ordering;
use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::template::{Prompt, TriggerTemplate};
use crate::dataset::{derive_rng, Triple};
use crate::error::{Error, Result};
use crate::lm_backend::{GradRequest, MaskedEncoder, TokenId};
use crate::tape::Matrix;
use crate::training::{objective_gradient, objective_loss, IndexedTriples, TrainConfig};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutoPromptConfig {
    /// Candidates per iteration.
    pub top_k: usize,
    pub iterations: usize,
    /// Evaluate each iteration on this many sampled triples instead of the
    /// whole training set. Losses are then not comparable across iterations.
    pub subset: Option<usize>,
}

impl Default for AutoPromptConfig {
    fn default() -> Self {
        AutoPromptConfig {
            top_k: 50,
            iterations: 50,
            subset: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AutoPromptStep<T> {
    pub slot: usize,
    /// Gradient of the loss wrt the input embedding at the slot.
    pub gradient: Vec<T>,
    pub candidates: Vec<TokenId>,
    pub candidate_losses: Vec<T>,
    pub accepted: Option<TokenId>,
    pub loss: T,
}

#[derive(Clone, Debug)]
pub struct AutoPromptOutcome<T> {
    pub template: TriggerTemplate<T>,
    /// Loss before the first iteration, then after every iteration.
    pub loss_history: Vec<T>,
    pub steps: Vec<AutoPromptStep<T>>,
}

/// The `k` tokens with the largest `e_w · gradient`, highest first; ties go
/// to the lower id. `k` is clamped to the number of eligible tokens.
pub fn top_k_candidates<T: Scalar>(
    embeddings: &Matrix<T>,
    gradient: &[T],
    k: usize,
    excluded: &BTreeSet<TokenId>,
) -> Result<Vec<TokenId>> {
    if gradient.len() != embeddings.ncols() {
        return Err(Error::DimensionMismatch {
            context: "candidate gradient",
            expected: embeddings.ncols(),
            got: gradient.len(),
        });
    }
    let g = ndarray::ArrayView1::from(gradient);
    let scores = embeddings.dot(&g);
    let mut eligible: Vec<(TokenId, T)> = scores
        .iter()
        .enumerate()
        .filter(|(id, _)| !excluded.contains(id))
        .map(|(id, &s)| (id, s))
        .collect();
    if k > eligible.len() {
        log::warn!("top-k of {k} exceeds the {} eligible tokens; using all", eligible.len());
    }
    eligible.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    eligible.truncate(k);
    Ok(eligible.into_iter().map(|(id, _)| id).collect())
}

/// Index of the smallest value; ties and NaNs resolve to the earliest index.
pub fn argmin_first<T: PartialOrd + Copy>(values: &[T]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        match best {
            None if v.partial_cmp(v).is_some() => best = Some(i),
            Some(b) if *v < values[b] => best = Some(i),
            _ => {}
        }
    }
    best
}

/// Gradient-guided search over discrete trigger tokens.
///
/// Each iteration draws a slot uniformly, ranks the vocabulary by
/// `e_w · ∇_slot L_t`, evaluates `L_t` for each of the top-k replacements
/// and keeps the best one only if it strictly lowers the loss. Special
/// tokens are never candidates. The LM is only read.
pub fn autoprompt_search<T, M>(
    template: &TriggerTemplate<T>,
    model: &M,
    train: &[Triple],
    config: &AutoPromptConfig,
    train_config: &TrainConfig,
) -> Result<AutoPromptOutcome<T>>
where
    T: Scalar,
    M: MaskedEncoder<T> + ?Sized,
{
    template.validate()?;
    if template.discrete_ids().is_none() {
        return Err(Error::InvalidTemplate("AutoPrompt needs discrete triggers".into()));
    }
    if config.top_k == 0 || config.iterations == 0 {
        return Err(Error::InvalidConfig(
            "AutoPrompt needs top_k ≥ 1 and iterations ≥ 1".into(),
        ));
    }
    if train.is_empty() {
        return Err(Error::EmptyInput("AutoPrompt training triples"));
    }
    train_config.validate()?;
    let settings = train_config.objective();
    let full = train_config.objective_set(train);
    let shape = template.shape();
    let mut rng = derive_rng(
        train_config.seed,
        &["autoprompt", &format!("{}/{}/{}", shape.pi, shape.tau, shape.gamma)],
    );
    let mut current = template.clone();
    let loss_of = |t: &TriggerTemplate<T>, set: &IndexedTriples| -> Result<T> {
        Ok(objective_loss(model, &Prompt::Trigger(t.clone()), set, &settings, None)?.triplet)
    };
    let mut current_loss = loss_of(&current, &full)?;
    let mut outcome = AutoPromptOutcome {
        template: current.clone(),
        loss_history: vec![current_loss],
        steps: Vec::new(),
    };
    if template.is_empty() {
        log::warn!("AutoPrompt on a template without triggers does nothing");
        return Ok(outcome);
    }
    let excluded = model.vocab().special_ids().clone();

    for it in 0..config.iterations {
        let subset;
        let set = match config.subset {
            Some(n) if n < train.len() => {
                let picked: Vec<Triple> = sample(&mut rng, train.len(), n)
                    .into_iter()
                    .map(|i| train[i].clone())
                    .collect();
                subset = train_config.objective_set(&picked);
                current_loss = loss_of(&current, &subset)?;
                &subset
            }
            _ => &full,
        };
        let slot = rng.random_range(0..current.len());
        let prompt = Prompt::Trigger(current.clone());
        let grad = objective_gradient(model, &prompt, set, &settings, None, &GradRequest::trigger_slot(slot))?
            .encoder
            .trigger_slot
            .expect("slot gradient requested");
        let candidates = top_k_candidates(model.input_embeddings(), &grad, config.top_k, &excluded)?;
        let candidate_losses = candidates
            .par_iter()
            .map(|&w| loss_of(&current.with_token(slot, w), set))
            .collect::<Result<Vec<T>>>()?;
        let mut accepted = None;
        if let Some(best) = argmin_first(&candidate_losses) {
            if candidate_losses[best] < current_loss {
                current = current.with_token(slot, candidates[best]);
                current_loss = candidate_losses[best];
                accepted = Some(candidates[best]);
            }
        }
        log::debug!("AutoPrompt iteration {it}: slot {slot}, loss {current_loss}");
        outcome.loss_history.push(current_loss);
        outcome.steps.push(AutoPromptStep {
            slot,
            gradient: grad,
            candidates,
            candidate_losses,
            accepted,
            loss: current_loss,
        });
    }
    outcome.template = current;
    Ok(outcome)
}
