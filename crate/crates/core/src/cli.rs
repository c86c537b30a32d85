//! Command-line entry points: `train`, `embed`, `eval-analogy`, `eval-rc`
//! and `neighbors`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
//! Every input is validated before any output is written.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataset::{
    categories, exclude_category, load_analogy, load_classification, load_relation_data, relations, LabeledPair, Split,
    SplitConfig, WordPair,
};
use crate::embedding::{embed_pairs, embed_pairs_bidirectional, EmbeddingStore, Pooling, StoreMetadata};
use crate::evaluation::{
    compose_all, evaluate_analogy, f1_scores_for, nearest_neighbors, pmi_solve, train_relation_classifier,
    AnalogyResult, ComposeMethod, CorpusCounts, EvalReport, EvalResult, LabeledVectors, MlpConfig, StaticVectors,
};
use crate::lm_backend::{load_checkpoint, parameter_hash, save_checkpoint, ReferenceEncoder};
use crate::prompting::{read_template_file, AutoPromptConfig, ManualTemplate, PTuningConfig, Prompt, ShapeGrid};
use crate::training::{train_pipeline, PipelineConfig, PromptMethod, RunMetadata, TrainConfig};
use crate::Scalar;

pub const MODEL_DIR: &str = "model";
pub const PROMPT_FILE: &str = "prompt.json";
pub const HEAD_FILE: &str = "head.json";
pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Parser)]
#[command(
    name = "relemb",
    version,
    about = "Relation embeddings from a prompted, fine-tuned masked language model"
)]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Choose a prompt and fine-tune the encoder on relation data.
    Train(TrainArgs),
    /// Embed word pairs into a store file.
    Embed(EmbedArgs),
    /// Solve analogy questions and report accuracy.
    EvalAnalogy(EvalAnalogyArgs),
    /// Train and test a relation classifier on frozen pair vectors.
    EvalRc(EvalRcArgs),
    /// Nearest neighbors of a pair in a store.
    Neighbors(NeighborsArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PromptKind {
    Manual,
    Autoprompt,
    Ptuning,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PoolingArg {
    Mean,
    Mask,
}

impl From<PoolingArg> for Pooling {
    fn from(p: PoolingArg) -> Self {
        match p {
            PoolingArg::Mean => Pooling::Mean,
            PoolingArg::Mask => Pooling::Mask,
        }
    }
}

/// Where the encoder and prompt come from.
#[derive(Clone, Debug, Args)]
pub struct ModelArgs {
    /// A `train` output directory or a bare checkpoint directory. Without
    /// it, a freshly initialised reference encoder is used.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Manual templates (`relemb-templates v1`); the first one is used when
    /// the model directory carries no prompt.
    #[arg(long)]
    pub template_file: Option<PathBuf>,
    /// Overrides the pooling recorded with the model.
    #[arg(long, value_enum)]
    pub pooling: Option<PoolingArg>,
    /// Scalar type of a fresh encoder; trained models keep their own.
    #[arg(long, value_enum, default_value = "f32")]
    pub precision: Precision,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Relation data (JSONL: relation_id, category_id, head, tail, score).
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory; must not exist or be empty.
    #[arg(long)]
    pub out: PathBuf,
    /// Initial checkpoint; defaults to a fresh reference encoder.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "manual")]
    pub prompt: PromptKind,
    /// Manual template candidates (default: the five built-in templates).
    #[arg(long)]
    pub template_file: Option<PathBuf>,
    /// Drop every relation of this category before training (repeatable).
    #[arg(long)]
    pub exclude_category: Vec<String>,
    #[arg(long, value_enum, default_value = "f32")]
    pub precision: Precision,

    #[arg(long, default_value_t = 2e-5)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    pub margin: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fine-tune with the triplet loss only.
    #[arg(long)]
    pub no_classification_loss: bool,
    /// Disable in-batch negatives.
    #[arg(long)]
    pub no_augment: bool,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long, value_enum, default_value = "mean")]
    pub pooling: PoolingArg,

    #[arg(long, default_value_t = 10)]
    pub top_n: usize,
    #[arg(long, default_value_t = 10)]
    pub bottom_n: usize,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Within-relation triples per relation (default: every combination).
    #[arg(long)]
    pub within_per_relation: Option<usize>,
    #[arg(long, default_value_t = 5040)]
    pub category_per_category: usize,
    /// Use every category combination instead of sampling.
    #[arg(long)]
    pub category_exhaustive: bool,

    /// AutoPrompt candidates per iteration.
    #[arg(long, default_value_t = 50)]
    pub top_k: usize,
    #[arg(long, default_value_t = 50)]
    pub iterations: usize,
    /// Score AutoPrompt candidates on this many sampled triples.
    #[arg(long)]
    pub subset: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub ptuning_epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub ptuning_learning_rate: f64,
    #[arg(long, value_delimiter = ',', default_values_t = vec![8, 9])]
    pub pi: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2])]
    pub tau: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2])]
    pub gamma: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Pairs, one `head<TAB>tail` per line.
    #[arg(long)]
    pub data: PathBuf,
    /// Store file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Store `embed(h,t) ⊕ embed(t,h)` instead of `embed(h,t)`.
    #[arg(long)]
    pub bidirectional: bool,
    #[command(flatten)]
    pub model: ModelArgs,
}

/// Pair vectors from static word vectors instead of the encoder.
#[derive(Clone, Debug, Args)]
pub struct StaticArgs {
    /// Word vectors in text format (`word v1 v2 ...`).
    #[arg(long)]
    pub static_vectors: Option<PathBuf>,
    /// `diff`, `cat`, `dot` or a `+`-joined combination.
    #[arg(long, default_value = "diff")]
    pub compose: String,
}

#[derive(Debug, Args)]
pub struct EvalAnalogyArgs {
    /// Questions (JSONL: stem, choices, answer).
    #[arg(long)]
    pub data: PathBuf,
    /// Report file; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub statics: StaticArgs,
    /// Solve with the PMI baseline over this corpus (one context per line).
    #[arg(long, conflicts_with = "static_vectors")]
    pub pmi_corpus: Option<PathBuf>,
    #[arg(long, default_value_t = crate::evaluation::DEFAULT_WINDOW)]
    pub window: usize,
}

#[derive(Debug, Args)]
pub struct EvalRcArgs {
    /// Labeled pairs (JSONL: head, tail, label, split).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Take pair vectors from a store: `v(h,t) ⊕ v(t,h)` when both
    /// directions are stored, else `v(h,t)`.
    #[arg(long, conflicts_with = "static_vectors")]
    pub embeddings: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub statics: StaticArgs,
    #[arg(long, default_value_t = 200)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
}

#[derive(Debug, Args)]
pub struct NeighborsArgs {
    /// Store to search.
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub head: String,
    #[arg(long)]
    pub tail: String,
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
    /// Also write the listing here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Embeds the target with this model when it is not in the store.
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub bidirectional: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Library errors raised while reading and checking inputs are usage errors.
fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

fn require_dir(path: &Path, what: &str) -> CliResult<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} is not a directory", path.display())))
    }
}

fn require_fresh_output(path: &Path) -> CliResult<()> {
    match fs::read_dir(path) {
        Ok(mut it) => match it.next() {
            Some(_) => Err(usage(format!("output directory {} is not empty", path.display()))),
            None => Ok(()),
        },
        Err(_) if path.exists() => Err(usage(format!("output {} is not a directory", path.display()))),
        Err(_) => Ok(()),
    }
}

fn require_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => {
            Err(usage(format!("directory {} does not exist", p.display())))
        }
        _ => Ok(()),
    }
}

/// Parses arguments, runs the command and maps the outcome to an exit code.
pub fn main_entry() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("error: {m}"),
                CliError::Runtime(err) => eprintln!("error: {err:#}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Embed(a) => cmd_embed(&a),
        Command::EvalAnalogy(a) => cmd_eval_analogy(&a),
        Command::EvalRc(a) => cmd_eval_rc(&a),
        Command::Neighbors(a) => cmd_neighbors(&a),
    }
}

/// Either a `train` output directory or a bare checkpoint directory.
fn checkpoint_dir(dir: &Path) -> PathBuf {
    let nested = dir.join(MODEL_DIR);
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

fn read_run(dir: &Path) -> CliResult<Option<RunMetadata>> {
    let path = dir.join(RUN_FILE);
    if !path.is_file() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(invalid)?;
    RunMetadata::from_json(&text)
        .map(Some)
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn model_precision(args: &ModelArgs) -> CliResult<Precision> {
    if let Some(dir) = &args.model {
        require_dir(dir, "model")?;
        if let Some(run) = read_run(dir)? {
            return Ok(if run.scalar == "f64" {
                Precision::F64
            } else {
                Precision::F32
            });
        }
    }
    Ok(args.precision)
}

struct Bundle<T> {
    model: ReferenceEncoder<T>,
    prompt: Prompt<T>,
    pooling: Pooling,
    /// Path-independent model identity for store metadata.
    id: String,
}

fn default_prompt<T: Scalar>(template_file: Option<&Path>) -> CliResult<Prompt<T>> {
    let template = match template_file {
        Some(p) => {
            require_file(p, "template file")?;
            read_template_file(p).map_err(invalid)?.into_iter().next()
        }
        None => ManualTemplate::builtin().into_iter().next(),
    };
    template
        .map(Prompt::Manual)
        .ok_or_else(|| usage("template file has no templates"))
}

fn load_bundle<T: Scalar>(args: &ModelArgs) -> CliResult<Bundle<T>> {
    let (model, prompt, pooling) = match &args.model {
        None => (
            ReferenceEncoder::<T>::reference(args.seed),
            default_prompt(args.template_file.as_deref())?,
            Pooling::default(),
        ),
        Some(dir) => {
            require_dir(dir, "model")?;
            let model = load_checkpoint::<T>(&checkpoint_dir(dir)).map_err(invalid)?;
            let prompt_path = dir.join(PROMPT_FILE);
            let prompt = if prompt_path.is_file() && args.template_file.is_none() {
                let text = fs::read_to_string(&prompt_path).map_err(invalid)?;
                Prompt::from_json(&text).map_err(|e| usage(format!("{}: {e}", prompt_path.display())))?
            } else {
                default_prompt(args.template_file.as_deref())?
            };
            let pooling = read_run(dir)?.map(|r| r.config.train.pooling).unwrap_or_default();
            (model, prompt, pooling)
        }
    };
    let pooling = args.pooling.map(Pooling::from).unwrap_or(pooling);
    let id = format!("sha256:{}", &parameter_hash(&model)[..16]);
    Ok(Bundle {
        model,
        prompt,
        pooling,
        id,
    })
}

impl<T: Scalar> Bundle<T> {
    fn embed(&self, pairs: &[WordPair], bidirectional: bool) -> anyhow::Result<Vec<Vec<T>>> {
        let out = if bidirectional {
            embed_pairs_bidirectional(&self.model, &self.prompt, pairs, self.pooling)
        } else {
            embed_pairs(&self.model, &self.prompt, pairs, self.pooling)
        };
        out.context("embedding pairs")
    }
}

// ---------------------------------------------------------------- train

struct TrainPlan {
    records: Vec<crate::dataset::RelationRecord>,
    excluded_relations: Vec<String>,
    config: PipelineConfig,
}

fn plan_train(a: &TrainArgs) -> CliResult<TrainPlan> {
    require_file(&a.data, "data file")?;
    require_fresh_output(&a.out)?;
    if let Some(m) = &a.model {
        require_dir(m, "model")?;
    }
    let all = load_relation_data(&a.data).map_err(invalid)?;
    let known = categories(&all);
    let mut records = all.clone();
    for c in &a.exclude_category {
        records = exclude_category(&records, c, &known).map_err(invalid)?;
    }
    let kept: BTreeSet<&str> = relations(&records);
    let excluded_relations = relations(&all)
        .into_iter()
        .filter(|r| !kept.contains(r))
        .map(str::to_string)
        .collect();
    let grid = ShapeGrid {
        pi: a.pi.clone(),
        tau: a.tau.clone(),
        gamma: a.gamma.clone(),
    };
    let method = match a.prompt {
        PromptKind::Manual => PromptMethod::Manual {
            candidates: match &a.template_file {
                Some(p) => {
                    require_file(p, "template file")?;
                    read_template_file(p).map_err(invalid)?
                }
                None => ManualTemplate::builtin(),
            },
        },
        PromptKind::Autoprompt => PromptMethod::AutoPrompt {
            config: AutoPromptConfig {
                top_k: a.top_k,
                iterations: a.iterations,
                subset: a.subset,
            },
            grid,
        },
        PromptKind::Ptuning => PromptMethod::PTuning {
            config: PTuningConfig {
                epochs: a.ptuning_epochs,
                learning_rate: a.ptuning_learning_rate,
            },
            grid,
        },
    };
    if let PromptMethod::Manual { candidates } = &method {
        if candidates.is_empty() {
            return Err(usage("no manual templates"));
        }
    }
    let config = PipelineConfig {
        train: TrainConfig {
            learning_rate: a.learning_rate,
            batch_size: a.batch_size,
            epochs: a.epochs,
            margin: a.margin,
            seed: a.seed,
            use_classification_loss: !a.no_classification_loss,
            augment: !a.no_augment,
            clip_norm: a.clip_norm,
            pooling: a.pooling.into(),
        },
        split: SplitConfig {
            top_n: a.top_n,
            bottom_n: a.bottom_n,
            train_fraction: a.train_fraction,
        },
        within_per_relation: a.within_per_relation,
        category_per_category: (!a.category_exhaustive).then_some(a.category_per_category),
        method,
    };
    config.train.validate().map_err(invalid)?;
    if !(0.0..=1.0).contains(&a.train_fraction) {
        return Err(usage("--train-fraction must lie in [0, 1]"));
    }
    if a.top_k == 0 || a.pi.is_empty() || a.tau.is_empty() || a.gamma.is_empty() {
        return Err(usage("--top-k and the --pi/--tau/--gamma grids must be non-empty"));
    }
    Ok(TrainPlan {
        records,
        excluded_relations,
        config,
    })
}

pub fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    let plan = plan_train(a)?;
    match a.precision {
        Precision::F32 => run_train::<f32>(a, plan),
        Precision::F64 => run_train::<f64>(a, plan),
    }
    .map_err(CliError::Runtime)
}

fn run_train<T: Scalar>(a: &TrainArgs, plan: TrainPlan) -> anyhow::Result<()> {
    let model = match &a.model {
        Some(dir) => load_checkpoint::<T>(&checkpoint_dir(dir))?,
        None => ReferenceEncoder::<T>::reference(a.seed),
    };
    let trained = train_pipeline(model, &plan.records, &plan.config).context("training failed")?;
    let mut meta = RunMetadata::new::<T>(&plan.config, trained.report.clone());
    meta.data = Some(a.data.display().to_string());
    meta.excluded_categories = a.exclude_category.clone();
    meta.excluded_relations = plan.excluded_relations;

    // Write everything next to the target, then move it into place.
    let staging = staging_dir(&a.out);
    let write = || -> anyhow::Result<()> {
        fs::create_dir_all(&staging)?;
        save_checkpoint(&trained.model, &staging.join(MODEL_DIR))?;
        fs::write(staging.join(PROMPT_FILE), trained.prompt.to_json() + "\n")?;
        fs::write(staging.join(HEAD_FILE), trained.head.to_json() + "\n")?;
        fs::write(staging.join(RUN_FILE), meta.to_json() + "\n")?;
        if a.out.exists() {
            fs::remove_dir(&a.out)?;
        }
        fs::rename(&staging, &a.out)?;
        Ok(())
    };
    if let Err(e) = write() {
        let _ = fs::remove_dir_all(&staging);
        return Err(e.context(format!("writing {}", a.out.display())));
    }
    println!(
        "trained with prompt {} ({} triples); wrote {}",
        trained.prompt.describe(),
        trained.report.train_triples,
        a.out.display()
    );
    Ok(())
}

fn staging_dir(out: &Path) -> PathBuf {
    let name = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!(".{name}.partial-{}", std::process::id()))
}

// ---------------------------------------------------------------- embed

/// Reads `head<TAB>tail` lines (whitespace when no tab); blank lines and
/// `#` comments are skipped, repeated pairs are kept once.
pub fn read_pairs(path: &Path) -> crate::Result<Vec<WordPair>> {
    let text = fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (h, t) = line
            .split_once('\t')
            .or_else(|| line.split_once(char::is_whitespace))
            .ok_or_else(|| crate::Error::parse(path, i + 1, "expected `head<TAB>tail`"))?;
        let pair = WordPair::new(h.trim(), t.trim()).map_err(|_| crate::Error::parse(path, i + 1, "empty word"))?;
        if seen.insert(pair.clone()) {
            out.push(pair);
        } else {
            log::warn!("{}:{}: repeated pair {pair}", path.display(), i + 1);
        }
    }
    Ok(out)
}

pub fn cmd_embed(a: &EmbedArgs) -> CliResult<()> {
    require_file(&a.data, "pair file")?;
    require_parent(&a.out)?;
    let pairs = read_pairs(&a.data).map_err(invalid)?;
    if pairs.is_empty() {
        return Err(usage(format!("{} has no pairs", a.data.display())));
    }
    match model_precision(&a.model)? {
        Precision::F32 => run_embed(a, &pairs, load_bundle::<f32>(&a.model)?),
        Precision::F64 => run_embed(a, &pairs, load_bundle::<f64>(&a.model)?),
    }
    .map_err(CliError::Runtime)
}

fn run_embed<T: Scalar>(a: &EmbedArgs, pairs: &[WordPair], bundle: Bundle<T>) -> anyhow::Result<()> {
    let vectors = bundle.embed(pairs, a.bidirectional)?;
    let dim = vectors.first().map_or(0, Vec::len);
    let mut store = EmbeddingStore::new(dim);
    store.metadata = StoreMetadata {
        model: Some(bundle.id.clone()),
        prompt: Some(bundle.prompt.describe()),
    };
    for (p, v) in pairs.iter().zip(vectors) {
        store.insert(p.clone(), v)?;
    }
    store.write(&a.out)?;
    println!("embedded {} pairs (dim {dim}) into {}", store.len(), a.out.display());
    Ok(())
}

// ---------------------------------------------------------------- eval

fn static_table(s: &StaticArgs) -> CliResult<Option<(StaticVectors<f64>, ComposeMethod)>> {
    let Some(path) = &s.static_vectors else { return Ok(None) };
    require_file(path, "static vector file")?;
    let method: ComposeMethod = s.compose.parse().map_err(invalid)?;
    let table = StaticVectors::read(path).map_err(invalid)?;
    Ok(Some((table, method)))
}

fn emit_report(report: &EvalReport, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(p) => report.write(p)?,
        None => println!("{}", report.to_json()?),
    }
    Ok(())
}

pub fn cmd_eval_analogy(a: &EvalAnalogyArgs) -> CliResult<()> {
    require_file(&a.data, "analogy file")?;
    if let Some(o) = &a.out {
        require_parent(o)?;
    }
    let questions = load_analogy(&a.data).map_err(invalid)?;
    if questions.is_empty() {
        return Err(usage(format!("{} has no questions", a.data.display())));
    }
    let mut config = serde_json::json!({ "command": "eval-analogy", "data": a.data.display().to_string() });
    let result: AnalogyResult = if let Some(corpus) = &a.pmi_corpus {
        require_file(corpus, "corpus")?;
        if a.window == 0 {
            return Err(usage("--window must be at least 1"));
        }
        let counts = CorpusCounts::read(corpus, a.window).map_err(invalid)?;
        config["method"] = format!("pmi(window {})", a.window).into();
        let predictions = questions.iter().map(|q| pmi_solve(q, &counts)).collect();
        AnalogyResult::from_predictions(&questions, predictions)
    } else if let Some((table, method)) = static_table(&a.statics)? {
        config["method"] = format!("static:{method}").into();
        let dim = method.output_dim(table.dim());
        evaluate_analogy(&questions, |pairs| {
            let vs = compose_all(pairs, &table, &method)?;
            let missing = vs.iter().filter(|v| v.is_none()).count();
            if missing > 0 {
                log::warn!("{missing} pairs without static vectors score cosine 0");
            }
            Ok(vs.into_iter().map(|v| v.unwrap_or_else(|| vec![0.0; dim])).collect())
        })
        .map_err(|e| CliError::Runtime(e.into()))?
    } else {
        match model_precision(&a.model)? {
            Precision::F32 => analogy_with_model::<f32>(&questions, &a.model, &mut config)?,
            Precision::F64 => analogy_with_model::<f64>(&questions, &a.model, &mut config)?,
        }
    };
    println!("accuracy: {:.4} over {} questions", result.accuracy, questions.len());
    let report = EvalReport::new(
        a.model.seed,
        config,
        EvalResult::Analogy {
            questions: questions.len(),
            accuracy: result.accuracy,
            predictions: result.predictions,
        },
    );
    emit_report(&report, a.out.as_deref()).map_err(CliError::Runtime)
}

fn analogy_with_model<T: Scalar>(
    questions: &[crate::dataset::AnalogyQuestion],
    args: &ModelArgs,
    config: &mut serde_json::Value,
) -> CliResult<AnalogyResult> {
    let bundle = load_bundle::<T>(args)?;
    config["method"] = "relemb".into();
    config["model"] = bundle.id.clone().into();
    config["prompt"] = bundle.prompt.describe().into();
    config["pooling"] = serde_json::to_value(bundle.pooling).map_err(|e| CliError::Runtime(e.into()))?;
    evaluate_analogy(questions, |pairs| {
        embed_pairs(&bundle.model, &bundle.prompt, pairs, bundle.pooling)
    })
    .map_err(|e| CliError::Runtime(e.into()))
}

/// Feature vector per pair, or `None` when the source cannot represent it.
type Featurizer<'a> = Box<dyn Fn(&[WordPair]) -> anyhow::Result<Vec<Option<Vec<f64>>>> + 'a>;

fn to_f64<T: Scalar>(v: Vec<T>) -> Vec<f64> {
    v.into_iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect()
}

pub fn cmd_eval_rc(a: &EvalRcArgs) -> CliResult<()> {
    require_file(&a.data, "classification file")?;
    if let Some(o) = &a.out {
        require_parent(o)?;
    }
    let data = load_classification(&a.data).map_err(invalid)?;
    let part = |s: Split| -> Vec<&LabeledPair> { data.iter().filter(|p| p.split == s).collect() };
    let (train, validation, test) = (part(Split::Train), part(Split::Validation), part(Split::Test));
    if test.is_empty() {
        return Err(usage("classification data has no test split"));
    }
    if train.iter().map(|p| &p.label).collect::<BTreeSet<_>>().len() < 2 {
        return Err(usage("training split needs at least two labels"));
    }
    let mut config = serde_json::json!({ "command": "eval-rc", "data": a.data.display().to_string() });

    let store;
    let statics;
    let bundle32;
    let bundle64;
    let featurize: Featurizer = if let Some(path) = &a.embeddings {
        require_file(path, "embedding store")?;
        store = EmbeddingStore::<f64>::read(path).map_err(invalid)?;
        config["features"] = format!("store:{}", path.display()).into();
        let s = &store;
        Box::new(move |pairs: &[WordPair]| {
            Ok(pairs
                .iter()
                .map(|p| {
                    let fwd = s.get(p)?;
                    Some(match s.get(&p.reversed()) {
                        Some(rev) if p.head != p.tail => [fwd, rev].concat(),
                        _ => fwd.to_vec(),
                    })
                })
                .collect())
        })
    } else if let Some(found) = static_table(&a.statics)? {
        statics = found;
        config["features"] = format!("static:{}", statics.1).into();
        let (t, m) = (&statics.0, &statics.1);
        Box::new(move |pairs: &[WordPair]| Ok(compose_all(pairs, t, m)?))
    } else {
        match model_precision(&a.model)? {
            Precision::F32 => {
                bundle32 = load_bundle::<f32>(&a.model)?;
                config["features"] = format!("relemb:{} {}", bundle32.id, bundle32.prompt.describe()).into();
                let b = &bundle32;
                Box::new(move |pairs: &[WordPair]| {
                    Ok(b.embed(pairs, true)?.into_iter().map(|v| Some(to_f64(v))).collect())
                })
            }
            Precision::F64 => {
                bundle64 = load_bundle::<f64>(&a.model)?;
                config["features"] = format!("relemb:{} {}", bundle64.id, bundle64.prompt.describe()).into();
                let b = &bundle64;
                Box::new(move |pairs: &[WordPair]| Ok(b.embed(pairs, true)?.into_iter().map(Some).collect()))
            }
        }
    };
    run_eval_rc(a, &train, &validation, &test, featurize, config).map_err(CliError::Runtime)
}

fn labeled(items: &[&LabeledPair], featurize: &Featurizer) -> anyhow::Result<(LabeledVectors<f64>, usize)> {
    let pairs: Vec<WordPair> = items.iter().map(|p| p.pair.clone()).collect();
    let feats = featurize(&pairs)?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut skipped = 0;
    for (item, f) in items.iter().zip(feats) {
        match f {
            Some(v) => {
                rows.push(v);
                labels.push(item.label.clone());
            }
            None => skipped += 1,
        }
    }
    Ok((LabeledVectors::new(&rows, labels)?, skipped))
}

fn run_eval_rc(
    a: &EvalRcArgs,
    train: &[&LabeledPair],
    validation: &[&LabeledPair],
    test: &[&LabeledPair],
    featurize: Featurizer,
    mut config: serde_json::Value,
) -> anyhow::Result<()> {
    let (train_x, s1) = labeled(train, &featurize)?;
    let (val_x, s2) = labeled(validation, &featurize)?;
    let (test_x, s3) = labeled(test, &featurize)?;
    if s1 + s2 + s3 > 0 {
        log::warn!("skipped {} pairs without features", s1 + s2 + s3);
    }
    config["skipped_pairs"] = (s1 + s2 + s3).into();
    let mlp = MlpConfig {
        max_epochs: a.max_epochs,
        patience: a.patience,
        seed: a.model.seed,
        ..MlpConfig::default()
    };
    config["classifier"] = serde_json::to_value(mlp)?;
    let trained = train_relation_classifier(&train_x, (!val_x.is_empty()).then_some(&val_x), &mlp)?;
    let predictions = trained.mlp.predict_labels(&test_x.vectors);
    let f1 = f1_scores_for(&predictions, &test_x.labels, &trained.mlp.classes)?;
    println!(
        "macro F1 {:.4}, micro F1 {:.4} on {} test pairs (hidden {}, lr {})",
        f1.macro_f1,
        f1.micro_f1,
        test_x.len(),
        trained.spec.hidden,
        trained.spec.learning_rate
    );
    let report = EvalReport::new(
        a.model.seed,
        config,
        EvalResult::RelationClassification {
            spec: trained.spec,
            validation_macro_f1: trained.validation_macro_f1,
            grid: trained.grid,
            test: f1,
        },
    );
    emit_report(&report, a.out.as_deref())
}

// ---------------------------------------------------------------- neighbors

pub fn cmd_neighbors(a: &NeighborsArgs) -> CliResult<()> {
    require_file(&a.embeddings, "embedding store")?;
    if let Some(o) = &a.out {
        require_parent(o)?;
    }
    let target = WordPair::new(a.head.clone(), a.tail.clone()).map_err(invalid)?;
    let store = EmbeddingStore::<f64>::read(&a.embeddings).map_err(invalid)?;
    if store.is_empty() {
        return Err(usage(format!("{} is empty", a.embeddings.display())));
    }
    let query: Vec<f64> = match store.get(&target) {
        Some(v) => v.to_vec(),
        None if a.model.model.is_some() => {
            let vs = match model_precision(&a.model)? {
                Precision::F32 => load_bundle::<f32>(&a.model)?
                    .embed(std::slice::from_ref(&target), a.bidirectional)
                    .map(|v| v.into_iter().map(to_f64).collect::<Vec<_>>()),
                Precision::F64 => load_bundle::<f64>(&a.model)?.embed(std::slice::from_ref(&target), a.bidirectional),
            }
            .map_err(CliError::Runtime)?;
            vs.into_iter().next().expect("one pair")
        }
        None => return Err(usage(format!("{target} is not in the store; pass --model to embed it"))),
    };
    let found = nearest_neighbors(&target, &query, &store, a.k).map_err(invalid)?;
    let mut listing = String::new();
    for n in &found.neighbors {
        listing.push_str(&format!("{}\t{}\t{:.6}\n", n.pair.head, n.pair.tail, n.cosine));
    }
    print!("{listing}");
    if found.truncated {
        eprintln!("note: k = {} exceeds the {} candidates", a.k, found.neighbors.len());
    }
    if let Some(o) = &a.out {
        fs::write(o, listing).map_err(|e| CliError::Runtime(crate::Error::io(o, e).into()))?;
    }
    Ok(())
}
