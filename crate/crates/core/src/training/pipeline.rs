use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::finetune::{fine_tune, BatchLoss, TrainConfig};
use super::losses::ClassifierHead;
use crate::dataset::{build_splits, derive_rng, triples_category, triples_within, RelationRecord, SplitConfig, Triple};
use crate::error::{Error, Result};
use crate::lm_backend::{parameter_hash, MaskedEncoder};
use crate::prompting::{
    grid_search_shape, select_manual_template, AutoPromptConfig, ManualTemplate, PTuningConfig, Prompt, ShapeGrid,
    TriggerMethod,
};
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PromptMethod {
    Manual { candidates: Vec<ManualTemplate> },
    AutoPrompt { config: AutoPromptConfig, grid: ShapeGrid },
    PTuning { config: PTuningConfig, grid: ShapeGrid },
}

impl PromptMethod {
    pub fn manual() -> Self {
        PromptMethod::Manual {
            candidates: ManualTemplate::builtin(),
        }
    }

    pub fn autoprompt() -> Self {
        PromptMethod::AutoPrompt {
            config: AutoPromptConfig::default(),
            grid: ShapeGrid::default(),
        }
    }

    pub fn ptuning() -> Self {
        PromptMethod::PTuning {
            config: PTuningConfig::default(),
            grid: ShapeGrid::default(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PromptMethod::Manual { .. } => "manual",
            PromptMethod::AutoPrompt { .. } => "autoprompt",
            PromptMethod::PTuning { .. } => "ptuning",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    pub split: SplitConfig,
    /// Within-relation triples per relation; `None` takes every combination.
    pub within_per_relation: Option<usize>,
    /// Category triples per category; `None` takes every combination.
    pub category_per_category: Option<usize>,
    pub method: PromptMethod,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            train: TrainConfig::default(),
            split: SplitConfig::default(),
            within_per_relation: None,
            category_per_category: Some(5040),
            method: PromptMethod::manual(),
        }
    }
}

/// Training and validation triples derived from relation records.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PreparedTriples {
    pub train: Vec<Triple>,
    pub validation: Vec<Triple>,
    pub skipped_relations: Vec<String>,
    pub skipped_categories: Vec<String>,
}

/// Splits the records, then builds within-relation and category triples
/// from the train halves (shuffled once from the seed) and within-relation
/// triples from the validation halves.
pub fn prepare_triples(records: &[RelationRecord], config: &PipelineConfig) -> Result<PreparedTriples> {
    let seed = config.train.seed;
    let splits = build_splits(records, &config.split, seed)?;
    if splits.splits.is_empty() {
        return Err(Error::InsufficientData("no relation has enough scored pairs".into()));
    }
    let mut out = PreparedTriples {
        skipped_relations: splits.skipped.clone(),
        ..Default::default()
    };
    for s in &splits.splits {
        out.train.extend(triples_within(s, config.within_per_relation, seed)?);
        match triples_within(&s.validation_view(), None, seed) {
            Ok(v) => out.validation.extend(v),
            Err(Error::InsufficientData(why)) => log::warn!("no validation triples: {why}"),
            Err(e) => return Err(e),
        }
    }
    match triples_category(&splits.splits, config.category_per_category, seed) {
        Ok(c) => {
            out.train.extend(c.triples);
            out.skipped_categories = c.skipped;
        }
        Err(Error::InsufficientData(why)) => log::warn!("no category triples: {why}"),
        Err(e) => return Err(e),
    }
    out.train.shuffle(&mut derive_rng(seed, &["train_order"]));
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub method: String,
    pub prompt: String,
    /// Validation loss of every prompt candidate considered in phase 1.
    pub candidate_losses: Vec<(String, f64)>,
    pub initial_hash: String,
    pub hash_after_prompt_phase: String,
    pub final_hash: String,
    pub train_triples: usize,
    pub validation_triples: usize,
    pub skipped_relations: Vec<String>,
    pub skipped_categories: Vec<String>,
    pub history: Vec<BatchLoss>,
}

#[derive(Clone, Debug)]
pub struct TrainedModel<T, M> {
    pub model: M,
    pub prompt: Prompt<T>,
    pub head: ClassifierHead<T>,
    pub report: PipelineReport,
}

/// Phase 1 chooses or learns the prompt with the LM frozen; phase 2
/// fine-tunes the LM and the classifier head with that prompt fixed.
pub fn train_pipeline<T, M>(
    mut model: M,
    records: &[RelationRecord],
    config: &PipelineConfig,
) -> Result<TrainedModel<T, M>>
where
    T: Scalar,
    M: MaskedEncoder<T>,
{
    config.train.validate()?;
    let data = prepare_triples(records, config)?;
    if data.train.is_empty() {
        return Err(Error::EmptyInput("training triples"));
    }
    let initial_hash = parameter_hash(&model);
    let prompt_config = TrainConfig {
        use_classification_loss: false,
        ..config.train.clone()
    };

    let (prompt, candidate_losses) = match &config.method {
        PromptMethod::Manual { candidates } => {
            if candidates.len() == 1 && data.validation.is_empty() {
                (Prompt::Manual(candidates[0].clone()), Vec::new())
            } else {
                let choice = select_manual_template(candidates, &model, &data.validation, &prompt_config)?;
                let losses = choice
                    .losses
                    .iter()
                    .map(|(id, l)| (format!("manual:{id}"), *l))
                    .collect();
                (Prompt::Manual(choice.template), losses)
            }
        }
        PromptMethod::AutoPrompt { config: c, grid } => {
            let out = grid_search_shape(
                grid,
                &TriggerMethod::AutoPrompt(*c),
                &model,
                &data.train,
                &data.validation,
                &prompt_config,
            )?;
            (Prompt::Trigger(out.template), shape_losses(&out.results))
        }
        PromptMethod::PTuning { config: c, grid } => {
            let out = grid_search_shape(
                grid,
                &TriggerMethod::PTuning(*c),
                &model,
                &data.train,
                &data.validation,
                &prompt_config,
            )?;
            (Prompt::Trigger(out.template), shape_losses(&out.results))
        }
    };
    let hash_after_prompt_phase = parameter_hash(&model);
    if hash_after_prompt_phase != initial_hash {
        return Err(Error::InvalidConfig("prompt optimization modified the LM".into()));
    }
    log::info!("prompt: {}", prompt.describe());

    let head = ClassifierHead::random(model.hidden_dim(), &mut derive_rng(config.train.seed, &["head"]));
    let tuned = fine_tune(&mut model, &prompt, &data.train, &config.train, head)?;
    let report = PipelineReport {
        method: config.method.name().to_string(),
        prompt: prompt.describe(),
        candidate_losses,
        initial_hash,
        hash_after_prompt_phase,
        final_hash: parameter_hash(&model),
        train_triples: data.train.len(),
        validation_triples: data.validation.len(),
        skipped_relations: data.skipped_relations,
        skipped_categories: data.skipped_categories,
        history: tuned.history,
    };
    Ok(TrainedModel {
        model,
        prompt,
        head: tuned.head,
        report,
    })
}

fn shape_losses(results: &[(crate::prompting::Shape, f64)]) -> Vec<(String, f64)> {
    results
        .iter()
        .map(|(s, l)| (format!("{}/{}/{}", s.pi, s.tau, s.gamma), *l))
        .collect()
}

pub const RUN_FORMAT: &str = "relemb-run";
pub const RUN_FORMAT_VERSION: u32 = 1;

/// Everything needed to reproduce and audit a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub scalar: String,
    pub data: Option<String>,
    pub excluded_categories: Vec<String>,
    pub excluded_relations: Vec<String>,
    pub config: PipelineConfig,
    pub report: PipelineReport,
}

impl RunMetadata {
    pub fn new<T: Scalar>(config: &PipelineConfig, report: PipelineReport) -> Self {
        RunMetadata {
            format: RUN_FORMAT.into(),
            version: RUN_FORMAT_VERSION,
            seed: config.train.seed,
            scalar: T::NAME.into(),
            data: None,
            excluded_categories: Vec::new(),
            excluded_relations: Vec::new(),
            config: config.clone(),
            report,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: RunMetadata = serde_json::from_str(text)?;
        if m.format != RUN_FORMAT || m.version != RUN_FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported run metadata {} v{}",
                m.format, m.version
            )));
        }
        Ok(m)
    }
}
