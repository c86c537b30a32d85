use serde::{Deserialize, Serialize};

use super::autoprompt::{argmin_first, autoprompt_search, AutoPromptConfig};
use super::ptuning::{ptuning_optimize, PTuningConfig};
use super::template::{ManualTemplate, Prompt, Shape, TriggerTemplate};
use crate::dataset::Triple;
use crate::error::{Error, Result};
use crate::lm_backend::MaskedEncoder;
use crate::training::{objective_loss, TrainConfig};
use crate::Scalar;

/// Mean validation `L_t` of a prompt.
pub fn validation_loss<T, M>(model: &M, prompt: &Prompt<T>, validation: &[Triple], config: &TrainConfig) -> Result<T>
where
    T: Scalar,
    M: MaskedEncoder<T> + ?Sized,
{
    if validation.is_empty() {
        return Err(Error::EmptyInput("validation triples"));
    }
    let set = config.objective_set(validation);
    Ok(objective_loss(model, prompt, &set, &config.objective(), None)?.triplet)
}

#[derive(Clone, Debug)]
pub struct TemplateChoice {
    pub template: ManualTemplate,
    /// `(template id, validation loss)` for every candidate, in input order.
    pub losses: Vec<(u32, f64)>,
}

/// The candidate with the lowest validation `L_t`; ties go to the lowest id.
pub fn select_manual_template<T, M>(
    candidates: &[ManualTemplate],
    model: &M,
    validation: &[Triple],
    config: &TrainConfig,
) -> Result<TemplateChoice>
where
    T: Scalar,
    M: MaskedEncoder<T> + ?Sized,
{
    if candidates.is_empty() {
        return Err(Error::EmptyInput("template candidates"));
    }
    if validation.is_empty() {
        return Err(Error::EmptyInput("validation triples"));
    }
    let mut losses = Vec::with_capacity(candidates.len());
    for c in candidates {
        let l: T = validation_loss(model, &Prompt::Manual(c.clone()), validation, config)?;
        losses.push((c.id, l.to_f64().unwrap_or(f64::NAN)));
    }
    let best = pick_lowest(&losses);
    Ok(TemplateChoice {
        template: candidates[best].clone(),
        losses,
    })
}

/// Index of the lowest loss, ties resolved by the smaller key.
fn pick_lowest<K: Ord + Copy>(losses: &[(K, f64)]) -> usize {
    let values: Vec<f64> = losses.iter().map(|l| l.1).collect();
    let min = argmin_first(&values).unwrap_or(0);
    (0..losses.len())
        .filter(|&i| values[i] == values[min])
        .min_by_key(|&i| losses[i].0)
        .unwrap_or(min)
}

/// Search space of trigger-template shapes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeGrid {
    pub pi: Vec<usize>,
    pub tau: Vec<usize>,
    pub gamma: Vec<usize>,
}

impl Default for ShapeGrid {
    fn default() -> Self {
        ShapeGrid {
            pi: vec![8, 9],
            tau: vec![1, 2],
            gamma: vec![1, 2],
        }
    }
}

impl ShapeGrid {
    pub fn single(shape: Shape) -> Self {
        ShapeGrid {
            pi: vec![shape.pi],
            tau: vec![shape.tau],
            gamma: vec![shape.gamma],
        }
    }

    /// Every combination, in lexicographic `(π, τ, γ)` order.
    pub fn shapes(&self) -> Vec<Shape> {
        let mut out = Vec::new();
        for &pi in &self.pi {
            for &tau in &self.tau {
                for &gamma in &self.gamma {
                    out.push(Shape::new(pi, tau, gamma));
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum TriggerMethod {
    AutoPrompt(AutoPromptConfig),
    PTuning(PTuningConfig),
}

#[derive(Clone, Debug)]
pub struct GridOutcome<T> {
    pub template: TriggerTemplate<T>,
    /// Validation `L_t` per trained shape, in grid order.
    pub results: Vec<(Shape, f64)>,
}

/// Trains one template per shape and keeps the lowest validation `L_t`;
/// ties go to the lexicographically smallest shape.
pub fn grid_search_shape<T, M>(
    grid: &ShapeGrid,
    method: &TriggerMethod,
    model: &M,
    train: &[Triple],
    validation: &[Triple],
    config: &TrainConfig,
) -> Result<GridOutcome<T>>
where
    T: Scalar,
    M: MaskedEncoder<T> + ?Sized,
{
    let shapes = grid.shapes();
    if shapes.is_empty() {
        return Err(Error::InvalidConfig("empty shape grid".into()));
    }
    if validation.is_empty() {
        return Err(Error::EmptyInput("validation triples"));
    }
    let mut trained = Vec::with_capacity(shapes.len());
    let mut results = Vec::with_capacity(shapes.len());
    for shape in shapes {
        let template = match method {
            TriggerMethod::AutoPrompt(cfg) => {
                let init = TriggerTemplate::discrete(shape, model.vocab());
                autoprompt_search(&init, model, train, cfg, config)?.template
            }
            TriggerMethod::PTuning(cfg) => {
                let mask = model.input_embeddings().row(model.vocab().mask_id()).to_vec();
                let init = TriggerTemplate::continuous(shape, &mask);
                ptuning_optimize(&init, model, train, cfg, config)?.template
            }
        };
        let loss: T = validation_loss(model, &Prompt::Trigger(template.clone()), validation, config)?;
        log::info!(
            "shape {}/{}/{}: validation loss {loss}",
            shape.pi,
            shape.tau,
            shape.gamma
        );
        results.push((shape, loss.to_f64().unwrap_or(f64::NAN)));
        trained.push(template);
    }
    let best = pick_lowest(&results);
    Ok(GridOutcome {
        template: trained.swap_remove(best),
        results,
    })
}
