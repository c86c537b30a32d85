//! Trains the reference encoder on the synthetic toy task and prints
//! held-out analogy accuracy before and after training.

use std::time::Instant;

use relemb::embedding::{embed_pairs, Pooling};
use relemb::evaluation::evaluate_analogy;
use relemb::prompting::Prompt;
use relemb::synthetic::{toy_pipeline_config, toy_task, ToySpec};
use relemb::training::train_pipeline;
use relemb::ReferenceEncoder64;

fn main() -> anyhow::Result<()> {
    let seed = std::env::args().nth(1).map_or(Ok(0), |s| s.parse())?;
    let spec = ToySpec::default();
    let task = toy_task(&spec, seed)?;
    let config = toy_pipeline_config(&spec, seed);
    let model = ReferenceEncoder64::reference(seed);
    let start = Instant::now();
    let before_prompt = Prompt::Manual(relemb::prompting::ManualTemplate::builtin()[0].clone());
    for pooling in [Pooling::Mean, Pooling::Mask] {
        let acc = evaluate_analogy(&task.questions, |p| embed_pairs(&model, &before_prompt, p, pooling))?.accuracy;
        println!("before ({pooling:?}): {acc:.3}");
    }
    let trained = train_pipeline(model, &task.records, &config)?;
    println!(
        "prompt {} trained in {:.1?}",
        trained.prompt.describe(),
        start.elapsed()
    );
    for pooling in [Pooling::Mean, Pooling::Mask] {
        let acc = evaluate_analogy(&task.questions, |p| {
            embed_pairs(&trained.model, &trained.prompt, p, pooling)
        })?
        .accuracy;
        println!("after ({pooling:?}): {acc:.3}");
    }
    let h = &trained.report.history;
    println!(
        "loss first {:.4} last {:.4} ({} batches)",
        h[0].total,
        h[h.len() - 1].total,
        h.len()
    );
    Ok(())
}
