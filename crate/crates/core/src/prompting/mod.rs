//! Prompts: hand-written templates, discrete (AutoPrompt) and continuous
//! (P-tuning) trigger templates, their rendering, and the procedures that
//! choose or learn them with the LM frozen.

mod autoprompt;
mod ptuning;
mod render;
mod select;
mod template;

pub use autoprompt::{
    argmin_first, autoprompt_search, top_k_candidates, AutoPromptConfig, AutoPromptOutcome, AutoPromptStep,
};
pub use ptuning::{ptuning_optimize, PTuningConfig, PTuningOutcome, TriggerEncoder};
pub use render::{render, render_manual, render_trigger, PromptRender};
pub use select::{
    grid_search_shape, select_manual_template, validation_loss, GridOutcome, ShapeGrid, TemplateChoice, TriggerMethod,
};
pub use template::{
    read_template_file, write_template_file, ManualTemplate, Prompt, Shape, TriggerTemplate, Triggers,
    BUILTIN_TEMPLATES, HEAD_SLOT, MASK_SLOT, TAIL_SLOT, TRIGGER_FORMAT_VERSION,
};
