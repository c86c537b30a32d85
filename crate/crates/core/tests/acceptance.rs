//! Acceptance checks. Runs without the libtest harness so the PASS/FAIL
//! line of every criterion is always printed.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{path, relation_fixture, relemb, FAST};
use relemb::dataset::{
    augment_batch, build_splits, categories, exclude_category, triples_category, triples_within, write_relation_data,
    AnalogyQuestion, RelationRecord, RelationSplit, SplitConfig, Triple, TripleSource, WordPair,
};
use relemb::embedding::{embed_pairs, Pooling};
use relemb::evaluation::{evaluate_analogy, f1_scores, train_relation_classifier, MlpConfig};
use relemb::lm_backend::{parameter_hash, GradRequest, MaskedEncoder};
use relemb::prompting::{
    autoprompt_search, ptuning_optimize, AutoPromptConfig, ManualTemplate, PTuningConfig, Prompt, Shape,
    TriggerTemplate,
};
use relemb::synthetic::{separable_classes, toy_pipeline_config, toy_task, ToySpec};
use relemb::training::{
    classification_loss, objective_gradient, objective_loss, prepare_triples, train_pipeline, triplet_loss,
    ClassifierHead, IndexedTriples, ObjectiveSettings, TrainConfig, SCORE_CLAMP,
};
use relemb::ReferenceEncoder64;

type Check = fn() -> Result<String>;

fn main() -> ExitCode {
    let criteria: [(&str, Check); 10] = [
        ("loss oracles", loss_oracles),
        ("gradient check", gradient_check),
        ("sampler counts", sampler_counts),
        ("autoprompt search", autoprompt_behaviour),
        ("frozen LM", frozen_lm),
        ("toy overfit", toy_overfit),
        ("analogy solver", analogy_solver),
        ("classification harness", classification_harness),
        ("determinism", determinism),
        ("category exclusion", category_exclusion),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check));
        let secs = start.elapsed().as_secs_f64();
        let (status, detail) = match outcome {
            Ok(Ok(detail)) => ("PASS", detail),
            Ok(Err(e)) => ("FAIL", format!("{e:#}")),
            Err(p) => (
                "FAIL",
                p.downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".into()),
            ),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {:>2} {name}: {status} ({secs:.1}s) {detail}", i + 1);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn wp(h: &str, t: &str) -> WordPair {
    WordPair::new(h, t).unwrap()
}

fn random_vec(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()
}

// 1 -------------------------------------------------------------------------

fn scalar_triplet(a: &[f64], p: &[f64], n: &[f64], margin: f64) -> f64 {
    let mut dp = 0.0;
    let mut dn = 0.0;
    for i in 0..a.len() {
        dp += (a[i] - p[i]).powi(2);
        dn += (a[i] - n[i]).powi(2);
    }
    (dp.sqrt() - dn.sqrt() + margin).max(0.0)
}

fn scalar_score(u: &[f64], v: &[f64], w: &[f64]) -> f64 {
    let d = u.len();
    let mut z = 0.0;
    for i in 0..d {
        z += w[i] * u[i] + w[d + i] * v[i] + w[2 * d + i] * (v[i] - u[i]).abs();
    }
    let g = 1.0 / (1.0 + (-z).exp());
    g.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP)
}

fn loss_oracles() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let d = rng.random_range(1..16);
        let (a, p, n) = (
            random_vec(&mut rng, d),
            random_vec(&mut rng, d),
            random_vec(&mut rng, d),
        );
        let margin = rng.random_range(0.01..3.0);
        let w = random_vec(&mut rng, 3 * d);
        let head = ClassifierHead { weights: w.clone() };
        let lt = triplet_loss(&a, &p, &n, margin)?;
        let lc = classification_loss(&a, &p, &n, &head)?;
        let oracle_c = -scalar_score(&a, &p, &w).ln() - (1.0 - scalar_score(&a, &n, &w)).ln();
        worst = worst
            .max((lt - scalar_triplet(&a, &p, &n, margin)).abs())
            .max((lc - oracle_c).abs());
    }
    ensure!(worst < 1e-6, "max deviation {worst:e}");

    ensure!(triplet_loss(&[0.0, 0.0], &[3.0, 4.0], &[6.0, 8.0], 1.0)? == 0.0);
    ensure!(triplet_loss(&[0.0, 0.0], &[3.0, 4.0], &[0.0, 1.0], 0.5)? == 4.5);
    ensure!(triplet_loss(&[1.0, 1.0], &[1.0, 1.0], &[1.0, 3.0], 1.0)? == 0.0);
    let head = ClassifierHead {
        weights: vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0],
    };
    let g: f64 = relemb::training::pair_score(&[1.0, 0.0], &[0.0, 1.0], &head)?;
    ensure!((g - 0.98201).abs() < 5e-6, "pair score {g}");
    let zero = ClassifierHead::<f64>::zeros(2);
    let both_half = classification_loss(&[0.3, 1.0], &[2.0, -1.0], &[0.0, 5.0], &zero)?;
    ensure!((both_half - 2.0 * 2f64.ln()).abs() < 1e-12);
    let mixed: f64 = relemb::training::nll_from_scores(g, 0.5);
    ensure!((mixed - 0.711297).abs() < 1e-6, "mixed-score loss {mixed}");
    Ok(format!("1000 random inputs, max deviation {worst:.1e}"))
}

// 2 -------------------------------------------------------------------------

fn gradient_check() -> Result<String> {
    let model = ReferenceEncoder64::reference(4);
    let prompt = Prompt::Manual(ManualTemplate::builtin()[1].clone());
    let triple = |a: (&str, &str), p: (&str, &str), n: (&str, &str), rel: &str| Triple {
        anchor: wp(a.0, a.1),
        positive: wp(p.0, p.1),
        negative: wp(n.0, n.1),
        source: TripleSource::Within,
        relation: rel.into(),
    };
    let triples = vec![
        triple(("w1", "w2"), ("w3", "w4"), ("w5", "w6"), "r"),
        triple(("w7", "w8"), ("w9", "w10"), ("w11", "w12"), "s"),
        triple(("w13", "w14"), ("w15", "w16"), ("w2", "w1"), "t"),
    ];
    let set = TrainConfig::default().objective_set(&triples);
    let head = ClassifierHead::random(model.hidden_dim(), &mut ChaCha8Rng::seed_from_u64(3));

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for margin in [0.05, 0.2, 0.5, 1.0, 2.0, 5.0] {
        let settings = ObjectiveSettings {
            margin,
            pooling: Pooling::Mean,
        };
        let hinges = hinge_arguments(&model, &prompt, &set, margin)?;
        if hinges.iter().any(|s| s.abs() < 1e-3) {
            continue;
        }
        let active = hinges.iter().filter(|s| **s > 0.0).count();
        let grads = objective_gradient(
            &model,
            &prompt,
            &set,
            &settings,
            Some(&head),
            &GradRequest::parameters(),
        )?
        .encoder
        .parameters
        .context("parameter gradients")?;
        let used: Vec<usize> = set
            .pairs
            .iter()
            .flat_map(|p| prompt_tokens(&model, &prompt, p))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        for k in 0..20 {
            let tensor = k % model.parameters().len();
            let shape = model.parameters()[tensor].dim();
            let row = if tensor == model.embedding_table() {
                *used.choose(&mut rng).unwrap()
            } else {
                rng.random_range(0..shape.0)
            };
            let col = rng.random_range(0..shape.1);
            let at = |delta: f64| -> Result<f64> {
                let mut m = model.clone();
                std::sync::Arc::make_mut(&mut m.parameters_mut()[tensor])[[row, col]] += delta;
                ensure!(
                    hinge_arguments(&m, &prompt, &set, margin)?
                        .iter()
                        .all(|s| s.abs() > 1e-4),
                    "hinge crossed zero under perturbation"
                );
                Ok(objective_loss(&m, &prompt, &set, &settings, Some(&head))?.total())
            };
            let numeric = (at(h)? - at(-h)?) / (2.0 * h);
            let analytic = grads[tensor][[row, col]];
            let err = (analytic - numeric).abs();
            ensure!(
                err <= 1e-4 * analytic.abs().max(numeric.abs()) + 1e-8,
                "tensor {tensor} [{row},{col}]: analytic {analytic:e} vs numeric {numeric:e}"
            );
            worst = worst.max(err / analytic.abs().max(numeric.abs()).max(1e-8));
        }
        return Ok(format!(
            "20 points, margin {margin}, {active}/{} hinges active, max relative error {worst:.1e}",
            set.triples.len()
        ));
    }
    anyhow::bail!("no margin kept every hinge away from its kink")
}

/// `‖a − p‖ − ‖a − n‖ + ε` for every triple.
fn hinge_arguments(
    model: &ReferenceEncoder64,
    prompt: &Prompt<f64>,
    set: &IndexedTriples,
    margin: f64,
) -> Result<Vec<f64>> {
    let emb = embed_pairs(model, prompt, &set.pairs, Pooling::Mean)?;
    let dist = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(set
        .triples
        .iter()
        .map(|t| dist(&emb[t[0]], &emb[t[1]]) - dist(&emb[t[0]], &emb[t[2]]) + margin)
        .collect())
}

fn prompt_tokens(model: &ReferenceEncoder64, prompt: &Prompt<f64>, pair: &WordPair) -> Vec<usize> {
    relemb::prompting::render(prompt, pair, model.vocab())
        .expect("renders")
        .encoded
        .token_ids
}

// 3 -------------------------------------------------------------------------

fn full_shape_splits(relations: usize, categories: usize) -> Result<Vec<RelationSplit>> {
    let records = relation_fixture(relations, 20, categories);
    let config = SplitConfig {
        top_n: 10,
        bottom_n: 10,
        train_fraction: 1.0,
    };
    Ok(build_splits(&records, &config, 0)?.splits)
}

fn unordered(t: &Triple) -> (WordPair, WordPair, WordPair) {
    let (a, p) = if t.anchor <= t.positive {
        (t.anchor.clone(), t.positive.clone())
    } else {
        (t.positive.clone(), t.anchor.clone())
    };
    (a, p, t.negative.clone())
}

fn sampler_counts() -> Result<String> {
    let splits = full_shape_splits(6, 2)?;
    for s in &splits {
        ensure!(s.train_positives.len() == 10 && s.train_negatives.len() == 10);
        let within = triples_within(s, None, 5)?;
        ensure!(within.len() == 450, "{} within-relation triples", within.len());
        let pos: HashSet<_> = s.train_positives.iter().collect();
        let neg: HashSet<_> = s.train_negatives.iter().collect();
        let distinct: HashSet<_> = within.iter().map(unordered).collect();
        ensure!(distinct.len() == 450, "duplicate within-relation triples");
        ensure!(within.iter().all(|t| pos.contains(&t.anchor)
            && pos.contains(&t.positive)
            && t.anchor != t.positive
            && neg.contains(&t.negative)
            && t.relation == s.relation_id));
        let sampled = triples_within(s, Some(450), 5)?;
        ensure!(sampled.iter().map(unordered).collect::<HashSet<_>>() == distinct);
    }

    let category = triples_category(&splits, Some(5040), 5)?;
    let relation_of: BTreeMap<&WordPair, &RelationSplit> = splits
        .iter()
        .flat_map(|s| s.train_positives.iter().map(move |p| (p, s)))
        .collect();
    let mut per_category: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &category.triples {
        let (a, p, n) = (
            relation_of[&t.anchor],
            relation_of[&t.positive],
            relation_of[&t.negative],
        );
        ensure!(a.category_id == p.category_id && a.relation_id != p.relation_id);
        ensure!(n.category_id != a.category_id && t.relation == a.category_id);
        *per_category.entry(&a.category_id).or_default() += 1;
    }
    ensure!(
        per_category.len() == 2 && per_category.values().all(|&c| c == 5040),
        "{per_category:?}"
    );

    let within: Vec<Triple> = splits
        .iter()
        .chain(&full_shape_splits(8, 1)?[6..])
        .map(|s| triples_within(s, Some(1), 1).map(|mut v| v.remove(0)))
        .collect::<relemb::Result<_>>()?;
    ensure!(within.len() == 8);
    let augmented = augment_batch(&within);
    ensure!(augmented.len() == 120, "{} augmented triples", augmented.len());
    let mut expected: Vec<(WordPair, WordPair, WordPair)> = Vec::new();
    for ti in &within {
        for tj in within.iter().filter(|tj| tj.relation != ti.relation) {
            for n in [&tj.anchor, &tj.positive] {
                expected.push((ti.anchor.clone(), ti.positive.clone(), n.clone()));
            }
        }
    }
    let mut got: Vec<_> = augmented[8..]
        .iter()
        .map(|t| (t.anchor.clone(), t.positive.clone(), t.negative.clone()))
        .collect();
    expected.sort();
    got.sort();
    ensure!(got == expected && augmented[..8] == within[..]);
    Ok("450 per relation, 5040 per category, 120 augmented; all constraints hold".into())
}

// 4, 5 ----------------------------------------------------------------------

struct ToyPromptSetup {
    model: ReferenceEncoder64,
    train: Vec<Triple>,
    config: TrainConfig,
}

fn toy_prompt_setup() -> Result<ToyPromptSetup> {
    let spec = ToySpec::default();
    let task = toy_task(&spec, 0)?;
    let pipeline = toy_pipeline_config(&spec, 0);
    let mut train = prepare_triples(&task.records, &pipeline)?.train;
    train.truncate(48);
    Ok(ToyPromptSetup {
        model: ReferenceEncoder64::reference(0),
        train,
        config: TrainConfig {
            batch_size: 16,
            ..pipeline.train
        },
    })
}

fn autoprompt_behaviour() -> Result<String> {
    let ToyPromptSetup { model, train, config } = toy_prompt_setup()?;
    let start = TriggerTemplate::discrete(Shape::new(2, 1, 2), model.vocab());
    let search = AutoPromptConfig {
        top_k: 8,
        iterations: 12,
        subset: None,
    };
    let outcome = autoprompt_search(&start, &model, &train, &search, &config)?;
    let losses = &outcome.loss_history;
    ensure!(losses.len() == 13);
    ensure!(losses.windows(2).all(|w| w[1] <= w[0]), "loss increased: {losses:?}");

    let set = config.objective_set(&train);
    let settings = config.objective();
    let table = model.input_embeddings();
    let mut current = start;
    let mut accepted = 0;
    for step in &outcome.steps {
        let prompt = Prompt::Trigger(current.clone());
        let grad = objective_gradient(
            &model,
            &prompt,
            &set,
            &settings,
            None,
            &GradRequest::trigger_slot(step.slot),
        )?
        .encoder
        .trigger_slot
        .context("slot gradient")?;
        ensure!(
            grad == step.gradient,
            "recorded gradient differs from a fresh computation"
        );
        let mut scored: Vec<(f64, usize)> = (0..table.nrows())
            .filter(|&w| !model.vocab().is_special(w))
            .map(|w| ((0..table.ncols()).map(|k| table[[w, k]] * grad[k]).sum(), w))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let brute: Vec<usize> = scored.iter().take(search.top_k).map(|s| s.1).collect();
        ensure!(
            step.candidates == brute,
            "candidates {:?} vs brute force {brute:?}",
            step.candidates
        );
        if let Some(w) = step.accepted {
            current = current.with_token(step.slot, w);
            accepted += 1;
        }
    }
    ensure!(current == outcome.template);
    Ok(format!(
        "loss {:.4} -> {:.4} over 12 iterations, {accepted} swaps",
        losses[0], losses[12]
    ))
}

fn frozen_lm() -> Result<String> {
    let ToyPromptSetup { model, train, config } = toy_prompt_setup()?;
    let before = parameter_hash(&model);
    let discrete = TriggerTemplate::discrete(Shape::new(1, 1, 1), model.vocab());
    let search = AutoPromptConfig {
        top_k: 4,
        iterations: 4,
        subset: None,
    };
    let a = autoprompt_search(&discrete, &model, &train, &search, &config)?;
    ensure!(parameter_hash(&model) == before, "AutoPrompt changed the LM");
    let mask = model.input_embeddings().row(model.vocab().mask_id()).to_vec();
    let continuous = TriggerTemplate::continuous(Shape::new(1, 1, 1), &mask);
    let p = ptuning_optimize(&continuous, &model, &train, &PTuningConfig::default(), &config)?;
    ensure!(parameter_hash(&model) == before, "P-tuning changed the LM");
    ensure!(p.final_loss < p.initial_loss, "P-tuning did not lower the loss");
    Ok(format!(
        "hash {} unchanged; AutoPrompt loss {:.4} -> {:.4}, P-tuning {:.4} -> {:.4}",
        &before[..12],
        a.loss_history[0],
        a.loss_history[a.loss_history.len() - 1],
        p.initial_loss,
        p.final_loss
    ))
}

// 6 -------------------------------------------------------------------------

fn toy_overfit() -> Result<String> {
    let spec = ToySpec::default();
    let task = toy_task(&spec, 0)?;
    ensure!(task.records.len() == spec.relations * 12 && spec.relations == 4);
    ensure!(task.questions.iter().all(|q| q.choices.len() == 4));
    let model = ReferenceEncoder64::reference(0);
    ensure!(model.vocab().tokens().len() == 256);
    let accuracy = |m: &ReferenceEncoder64, prompt: &Prompt<f64>, pooling| {
        evaluate_analogy(&task.questions, |p| embed_pairs(m, prompt, p, pooling)).map(|r| r.accuracy)
    };
    let trained = train_pipeline(model.clone(), &task.records, &toy_pipeline_config(&spec, 0))?;
    let before = accuracy(&model, &trained.prompt, Pooling::Mean)?;
    let after = accuracy(&trained.model, &trained.prompt, Pooling::Mean)?;
    let mask_before = accuracy(&model, &trained.prompt, Pooling::Mask)?;
    let mask_after = accuracy(&trained.model, &trained.prompt, Pooling::Mask)?;
    let history = &trained.report.history;
    let last_epoch = history.iter().filter(|b| b.epoch == history[history.len() - 1].epoch);
    let (sum, n) = last_epoch.fold((0.0, 0), |(s, n), b| (s + b.total, n + 1));
    let detail = format!(
        "{} questions, prompt {}: mean pooling {before:.3} -> {after:.3}; mask pooling {mask_before:.3} -> {mask_after:.3}",
        task.questions.len(),
        trained.prompt.describe()
    );
    ensure!(
        (0.10..=0.45).contains(&before),
        "pre-training accuracy out of range: {detail}"
    );
    ensure!(after >= 0.90 && after > before, "{detail}");
    ensure!(
        sum / n as f64 <= history[0].total,
        "final epoch loss did not drop below the first batch"
    );
    Ok(detail)
}

// 7 -------------------------------------------------------------------------

fn random_questions(rng: &mut impl Rng, n: usize, choices: usize) -> Vec<AnalogyQuestion> {
    (0..n)
        .map(|i| AnalogyQuestion {
            stem: wp(&format!("s{i}"), "x"),
            choices: (0..choices).map(|c| wp(&format!("c{i}"), &format!("y{c}"))).collect(),
            answer: rng.random_range(0..choices),
        })
        .collect()
}

fn analogy_solver() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let questions = random_questions(&mut rng, 100, 5);
    let mut vectors: BTreeMap<WordPair, Vec<f64>> = BTreeMap::new();
    let result = evaluate_analogy(&questions, |pairs| {
        Ok(pairs
            .iter()
            .map(|p| {
                vectors
                    .entry(p.clone())
                    .or_insert_with(|| random_vec(&mut rng, 8))
                    .clone()
            })
            .collect())
    })?;
    for (q, &pred) in questions.iter().zip(&result.predictions) {
        let stem = &vectors[&q.stem];
        let mut best = 0;
        let mut best_cos = f64::NEG_INFINITY;
        for (i, c) in q.choices.iter().enumerate() {
            let v = &vectors[c];
            let dot: f64 = stem.iter().zip(v).map(|(a, b)| a * b).sum();
            let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
            let cos = dot / (norm(stem) * norm(v));
            if cos > best_cos {
                best = i;
                best_cos = cos;
            }
        }
        ensure!(pred == best, "solver picked {pred}, exhaustive scan {best}");
    }

    let questions = random_questions(&mut rng, 10_000, 5);
    let mut embed_rng = ChaCha8Rng::seed_from_u64(60);
    let random = evaluate_analogy(&questions, |pairs| {
        Ok(pairs.iter().map(|_| random_vec(&mut embed_rng, 16)).collect())
    })?;
    ensure!(
        (random.accuracy - 0.20).abs() <= 0.03,
        "random accuracy {}",
        random.accuracy
    );
    Ok(format!(
        "100 questions match the exhaustive scan; random embedder {:.4} on 10000",
        random.accuracy
    ))
}

// 8 -------------------------------------------------------------------------

fn classification_harness() -> Result<String> {
    let [train, validation, test] = separable_classes::<f64>(3, 100, 16, 2);
    let snapshot = (train.clone(), validation.clone(), test.clone());
    let classifier = train_relation_classifier(&train, Some(&validation), &MlpConfig::default())?;
    let predictions = classifier.mlp.predict_labels(&test.vectors);
    let report = f1_scores(&predictions, &test.labels)?;
    ensure!(snapshot == (train, validation, test), "classifier mutated its inputs");
    ensure!(report.macro_f1 >= 0.95, "macro F1 {}", report.macro_f1);
    ensure!(
        report.micro_f1 == report.accuracy,
        "micro {} vs accuracy {}",
        report.micro_f1,
        report.accuracy
    );
    Ok(format!(
        "hidden {} lr {:e}: macro F1 {:.4}, micro F1 = accuracy = {:.4}",
        classifier.spec.hidden, classifier.spec.learning_rate, report.macro_f1, report.accuracy
    ))
}

// 9 -------------------------------------------------------------------------

fn determinism() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let data = dir.path().join("rel.jsonl");
    write_relation_data(&data, &relation_fixture(4, 12, 2))?;
    let pairs = dir.path().join("pairs.txt");
    fs::write(&pairs, "h0x0\tt0y0\nh1x3\tt1y3\nt2y1\th2x1\nw5\tw9\n")?;
    let mut stores = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let mut args = vec!["train", "--data", path(&data), "--out", path(&out), "--seed", "7"];
        args.extend_from_slice(FAST);
        let o = relemb(&args);
        ensure!(
            o.status.success(),
            "train failed: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let store = dir.path().join(format!("{run}.txt"));
        let o = relemb(&[
            "embed",
            "--data",
            path(&pairs),
            "--model",
            path(&out),
            "--out",
            path(&store),
        ]);
        ensure!(
            o.status.success(),
            "embed failed: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        stores.push((fs::read(&store)?, fs::read(out.join("model/params.bin"))?));
    }
    ensure!(stores[0].1 == stores[1].1, "checkpoints differ");
    ensure!(stores[0].0 == stores[1].0, "stores differ");
    Ok(format!("two runs wrote identical {}-byte stores", stores[0].0.len()))
}

// 10 ------------------------------------------------------------------------

fn category_exclusion() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut records: Vec<RelationRecord> = relation_fixture(12, 6, 4);
    records.shuffle(&mut rng);
    let known = categories(&records);
    for target in &known {
        let kept = exclude_category(&records, target, &known)?;
        let brute: Vec<RelationRecord> = records.iter().filter(|r| &r.category_id != target).cloned().collect();
        ensure!(
            kept == brute,
            "exclusion of {target} differs from the brute-force filter"
        );
        ensure!(exclude_category(&kept, target, &known)? == kept, "not idempotent");
    }
    ensure!(exclude_category(&records, "missing", &known).is_err());

    let dir = tempfile::tempdir()?;
    let data = dir.path().join("rel.jsonl");
    let records = relation_fixture(6, 12, 3);
    write_relation_data(&data, &records)?;
    let out = dir.path().join("run");
    let mut args = vec![
        "train",
        "--data",
        path(&data),
        "--out",
        path(&out),
        "--exclude-category",
        "cat1",
        "--epochs",
        "0",
    ];
    args.extend_from_slice(FAST);
    let o = relemb(&args);
    ensure!(
        o.status.success(),
        "train failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    let meta = relemb::training::RunMetadata::from_json(&fs::read_to_string(out.join("run.json"))?)?;
    let brute: BTreeSet<String> = records
        .iter()
        .filter(|r| r.category_id == "cat1")
        .map(|r| r.relation_id.clone())
        .collect();
    ensure!(meta.excluded_relations.iter().cloned().collect::<BTreeSet<_>>() == brute);
    Ok(format!(
        "{} categories match the brute-force filter; CLI removed {:?}",
        known.len(),
        meta.excluded_relations
    ))
}
