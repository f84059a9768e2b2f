//! Command line driver for every pipeline stage. Each stage reads and writes
//! plain files, so the output of one is a valid input to the next.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use emoji_predict::augmentation::{
    build_tag_mapping, generate_synthetic, load_tag_mapping, merge, review_marker_path, save_tag_mapping,
    AugmentError, AugmentationPlan, GeneratorAdapter, OfflineAdapter, RemoteAdapter,
};
use emoji_predict::classifier::{
    model_size_report, model_version, save_model, train, ModelArchitecture, ModelError, TrainConfig, TrainError,
};
use emoji_predict::corpus::{
    coverage_curve, examples_from_raw, generate_zipf_corpus, load_corpus, save_corpus, Corpus, CorpusError, Origin,
};
use emoji_predict::evaluation::{
    bench_latency, evaluate, simulate_alpha_sweep, BenchConfig, EvalOptions, SimConfig, SimUserProfile, PANEL_SIZE,
};
use emoji_predict::featurizer::FeaturizerConfig;
use emoji_predict::personalization::{load_store, user_log_path, FavoritesStore, RerankConfig};
use emoji_predict::Model;

use crate::service::{self, rank_for_user, PredictResponse, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "emoji-predict", version, about = "Emoji prediction: corpus, training, evaluation and serving")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic Zipf-distributed labeled corpus.
    GenCorpus(GenCorpusArgs),
    /// Turn raw messages (one per line) into a labeled corpus.
    Import(ImportArgs),
    /// Build the emoji → tags mapping for a corpus vocabulary.
    Tags(TagsArgs),
    /// Generate synthetic sentences for under-represented classes.
    Augment(AugmentArgs),
    /// Merge a base corpus with synthetic examples.
    Merge(MergeArgs),
    /// Train a float model.
    Train(TrainArgs),
    /// Quantize a float model to int8 weights.
    Quantize(QuantizeArgs),
    /// Top-K accuracy and macro F1 on a test corpus.
    Eval(EvalArgs),
    /// Class coverage curve of a corpus.
    Coverage(CoverageArgs),
    /// Single-threaded inference latency.
    Bench(BenchArgs),
    /// Favorites reranking sweep over simulated users.
    Simulate(SimulateArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Predict once for a piece of text.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long, env = "EMOJI_CLASSES", default_value_t = 200)]
    pub classes: usize,
    #[arg(long, env = "EMOJI_EXAMPLES", default_value_t = 50_000)]
    pub examples: usize,
    /// Held-out examples drawn from an independent stream; 0 skips the split.
    #[arg(long, env = "EMOJI_TEST_EXAMPLES", default_value_t = 5_000)]
    pub test_examples: usize,
    #[arg(long, env = "EMOJI_ZIPF_EXPONENT", default_value_t = 1.2)]
    pub zipf_exponent: f64,
    #[arg(long, env = "EMOJI_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "EMOJI_OUT")]
    pub out: PathBuf,
    #[arg(long, env = "EMOJI_TEST_OUT")]
    pub test_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long, env = "EMOJI_INPUT")]
    pub input: PathBuf,
    #[arg(long, env = "EMOJI_OUT")]
    pub out: PathBuf,
    #[arg(long, env = "EMOJI_ORIGIN", value_enum, default_value_t = OriginArg::Human)]
    pub origin: OriginArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OriginArg {
    Human,
    Synthetic,
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum GeneratorKind {
    /// Built-in dictionary and sentence templates.
    #[default]
    Offline,
    /// HTTP endpoint from EMOJI_GEN_URL / EMOJI_GEN_TOKEN.
    Remote,
}

#[derive(Debug, Args)]
pub struct GeneratorArgs {
    #[arg(long, env = "EMOJI_GENERATOR", value_enum, default_value_t = GeneratorKind::Offline)]
    pub generator: GeneratorKind,
    #[arg(long, env = "EMOJI_GEN_TIMEOUT_SECS", default_value_t = 30)]
    pub timeout_secs: u64,
    #[arg(long, env = "EMOJI_GEN_MAX_RETRIES", default_value_t = 2)]
    pub max_retries: u32,
    #[arg(long, env = "EMOJI_MAX_IN_FLIGHT", default_value_t = 4)]
    pub max_in_flight: usize,
}

#[derive(Debug, Args)]
pub struct TagsArgs {
    #[arg(long, env = "EMOJI_CORPUS")]
    pub corpus: PathBuf,
    #[arg(long, env = "EMOJI_OUT")]
    pub out: PathBuf,
    #[command(flatten)]
    pub generator: GeneratorArgs,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long, env = "EMOJI_CORPUS")]
    pub corpus: PathBuf,
    #[arg(long, env = "EMOJI_TAGS")]
    pub tags: PathBuf,
    #[arg(long, env = "EMOJI_OUT")]
    pub out: PathBuf,
    /// Top each targeted class up to this many examples.
    #[arg(long, env = "EMOJI_TARGET_COUNT", default_value_t = 200)]
    pub target_count: u64,
    /// Target every class instead of the rarest quarter.
    #[arg(long, env = "EMOJI_ALL_CLASSES")]
    pub all_classes: bool,
    /// Refuse to run unless `<tags>.reviewed` exists.
    #[arg(long, env = "EMOJI_REQUIRE_REVIEW")]
    pub require_review: bool,
    #[arg(long, env = "EMOJI_SEED", default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub generator: GeneratorArgs,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    #[arg(long, env = "EMOJI_BASE")]
    pub base: PathBuf,
    #[arg(long, env = "EMOJI_SYNTHETIC")]
    pub synthetic: PathBuf,
    #[arg(long, env = "EMOJI_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, env = "EMOJI_CORPUS")]
    pub corpus: PathBuf,
    #[arg(long, env = "EMOJI_OUT")]
    pub out: PathBuf,
    #[arg(long, env = "EMOJI_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Large-corpus optimizer defaults (small step, strong decay) instead
    /// of the small-corpus preset.
    #[arg(long, env = "EMOJI_LARGE_CORPUS")]
    pub large_corpus: bool,
    #[arg(long, env = "EMOJI_EPOCHS")]
    pub epochs: Option<usize>,
    #[arg(long, env = "EMOJI_LEARNING_RATE")]
    pub learning_rate: Option<f64>,
    #[arg(long, env = "EMOJI_WEIGHT_DECAY")]
    pub weight_decay: Option<f64>,
    #[arg(long, env = "EMOJI_BATCH_SIZE")]
    pub batch_size: Option<usize>,
    #[arg(long, env = "EMOJI_EMBEDDING_DIM")]
    pub embedding_dim: Option<usize>,
    #[arg(long, env = "EMOJI_HIDDEN_LAYERS")]
    pub hidden_layers: Option<usize>,
    #[arg(long, env = "EMOJI_HIDDEN_DIM")]
    pub hidden_dim: Option<usize>,
    /// Power of two.
    #[arg(long, env = "EMOJI_BUCKETS")]
    pub buckets: Option<u32>,
    #[arg(long, env = "EMOJI_NO_BIGRAMS")]
    pub no_bigrams: bool,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    #[arg(long, env = "EMOJI_MODEL_PATH")]
    pub model: PathBuf,
    #[arg(long, env = "EMOJI_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    /// Reranking coefficient in [0, 1).
    #[arg(long, env = "EMOJI_ALPHA", default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, env = "EMOJI_RERANK_S", default_value_t = 4)]
    pub rerank_s: u32,
    #[arg(long, env = "EMOJI_RERANK_FLOOR", default_value_t = 1e-4)]
    pub rerank_floor: f64,
    #[arg(long, env = "EMOJI_FAV_SMOOTHING", default_value_t = 1.0)]
    pub fav_smoothing: f64,
}

impl RerankArgs {
    fn config(&self) -> Result<RerankConfig, CliError> {
        let cfg = RerankConfig { alpha: self.alpha, s: self.rerank_s, floor: self.rerank_floor, fav_smoothing: self.fav_smoothing };
        cfg.validate().map_err(user)?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, env = "EMOJI_MODEL_PATH")]
    pub model: PathBuf,
    #[arg(long, env = "EMOJI_TEST")]
    pub test: PathBuf,
    #[arg(long, env = "EMOJI_K", value_delimiter = ',', default_value = "1,3,24")]
    pub k: Vec<usize>,
    /// Training corpus whose frequency ranking defines the tail quartile.
    #[arg(long, env = "EMOJI_TRAIN_CORPUS")]
    pub train_corpus: Option<PathBuf>,
    /// Event log whose favorites rerank every prediction.
    #[arg(long, env = "EMOJI_FAVORITES")]
    pub favorites: Option<PathBuf>,
    #[command(flatten)]
    pub rerank: RerankArgs,
    /// JSONL report path.
    #[arg(long, env = "EMOJI_REPORT")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    #[arg(long, env = "EMOJI_CORPUS")]
    pub corpus: PathBuf,
    #[arg(long, env = "EMOJI_REPORT")]
    pub report: Option<PathBuf>,
    #[arg(long, env = "EMOJI_EMIT_CSV")]
    pub emit_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, env = "EMOJI_MODEL_PATH")]
    pub model: PathBuf,
    /// Sentences to time, one per line; a built-in set otherwise.
    #[arg(long, env = "EMOJI_SENTENCES")]
    pub sentences: Option<PathBuf>,
    #[arg(long, env = "EMOJI_WARMUP_ITERS", default_value_t = 300)]
    pub warmup_iters: usize,
    #[arg(long, env = "EMOJI_MEASURED_ITERS", default_value_t = 50)]
    pub measured_iters: usize,
    #[arg(long, env = "EMOJI_REPORT")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, env = "EMOJI_MODEL_PATH")]
    pub model: PathBuf,
    /// Labeled corpus the simulated users type from.
    #[arg(long, env = "EMOJI_PROMPTS")]
    pub prompts: PathBuf,
    #[arg(long, env = "EMOJI_ALPHAS", value_delimiter = ',', default_value = "0,0.25,0.5,0.75,0.9")]
    pub alphas: Vec<f64>,
    #[arg(long, env = "EMOJI_USERS", default_value_t = 50)]
    pub users: usize,
    #[arg(long, env = "EMOJI_USER_FAVORITES", default_value_t = 5)]
    pub user_favorites: usize,
    /// Dirichlet concentration of each user's taste.
    #[arg(long, env = "EMOJI_CONCENTRATION", default_value_t = 0.1)]
    pub concentration: f64,
    #[arg(long, env = "EMOJI_SESSIONS", default_value_t = 200)]
    pub sessions: usize,
    #[arg(long, env = "EMOJI_MIX", default_value_t = 0.5)]
    pub mix: f64,
    /// Only panel insertions feed the favorites.
    #[arg(long, env = "EMOJI_PANEL_ONLY")]
    pub panel_only: bool,
    #[arg(long, env = "EMOJI_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "EMOJI_REPORT")]
    pub report: Option<PathBuf>,
    #[arg(long, env = "EMOJI_EMIT_CSV")]
    pub emit_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "EMOJI_MODEL_PATH")]
    pub model: PathBuf,
    #[arg(long, env = "EMOJI_DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
    #[arg(long, env = "EMOJI_BIND", default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    #[arg(long, env = "EMOJI_DEFAULT_K", default_value_t = PANEL_SIZE)]
    pub default_k: usize,
    #[command(flatten)]
    pub rerank: RerankArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, env = "EMOJI_MODEL_PATH")]
    pub model: PathBuf,
    #[arg(long, env = "EMOJI_TEXT")]
    pub text: String,
    #[arg(long, env = "EMOJI_DEFAULT_K", default_value_t = PANEL_SIZE)]
    pub k: usize,
    /// Rerank with this user's favorites from the data directory.
    #[arg(long, env = "EMOJI_USER_ID", requires = "data_dir")]
    pub user_id: Option<String>,
    #[arg(long, env = "EMOJI_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    #[command(flatten)]
    pub rerank: RerankArgs,
}

/// Failure of a subcommand: bad input (exit 1) or a fault of ours (exit 2).
#[derive(Debug)]
pub enum CliError {
    User(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::User(m) => write!(f, "error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

fn user(e: impl Display) -> CliError {
    CliError::User(e.to_string())
}

fn internal(e: impl Display) -> CliError {
    CliError::Internal(e.to_string())
}

fn write_failed(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Internal(format!("{}: {e}", path.display()))
}

fn read_corpus(path: &Path) -> Result<Corpus, CliError> {
    load_corpus(path).map_err(|e| match e {
        CorpusError::Io { .. } | CorpusError::Parse { .. } | CorpusError::EmptyCorpus => CliError::User(format!("{}: {e}", path.display())),
        other => internal(other),
    })
}

fn write_corpus(corpus: &Corpus, path: &Path) -> Result<(), CliError> {
    save_corpus(corpus, path).map_err(internal)
}

fn read_model(path: &Path) -> Result<(Model, String), CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;
    let model = Model::from_bytes(&bytes).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;
    Ok((model, model_version(&bytes)))
}

fn write_model(model: &Model, path: &Path) -> Result<(), CliError> {
    save_model(model, path).map_err(|e| match e {
        ModelError::Io(io) => CliError::Internal(format!("{}: {io}", path.display())),
        other => internal(other),
    })
}

/// Writes one JSON record per line.
fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CliError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(internal)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(write_failed(path))
}

fn adapter(args: &GeneratorArgs) -> Result<Box<dyn GeneratorAdapter>, CliError> {
    if args.max_in_flight == 0 {
        return Err(user("--max-in-flight must be at least 1"));
    }
    Ok(match args.generator {
        GeneratorKind::Offline => Box::new(OfflineAdapter::default()),
        GeneratorKind::Remote => {
            Box::new(RemoteAdapter::from_env(Duration::from_secs(args.timeout_secs), args.max_retries).map_err(user)?)
        }
    })
}

fn augment_error(e: AugmentError) -> CliError {
    match e {
        AugmentError::Adapter(_) | AugmentError::Io { .. } => internal(e),
        _ => user(e),
    }
}

fn gen_corpus(a: &GenCorpusArgs) -> Result<(), CliError> {
    let train = generate_zipf_corpus(a.classes, a.examples, a.zipf_exponent, a.seed).map_err(user)?;
    write_corpus(&train, &a.out)?;
    println!("wrote {} examples over {} classes to {}", train.len(), train.vocabulary().len(), a.out.display());
    if let Some(test_out) = &a.test_out {
        if a.test_examples == 0 {
            return Err(user("--test-out needs --test-examples > 0"));
        }
        // Same class inventory and frequencies, independent sentences.
        let test = generate_zipf_corpus(a.classes, a.test_examples, a.zipf_exponent, a.seed.wrapping_add(1000)).map_err(user)?;
        write_corpus(&test, test_out)?;
        println!("wrote {} held-out examples to {}", test.len(), test_out.display());
    }
    Ok(())
}

fn import(a: &ImportArgs) -> Result<(), CliError> {
    let raw = fs::read_to_string(&a.input).map_err(|e| CliError::User(format!("{}: {e}", a.input.display())))?;
    let origin = match a.origin {
        OriginArg::Human => Origin::Human,
        OriginArg::Synthetic => Origin::Synthetic,
    };
    let examples: Vec<_> = raw.lines().flat_map(|line| examples_from_raw(line, origin)).collect();
    if examples.is_empty() {
        return Err(user(format!("{}: no message contains both text and an emoji", a.input.display())));
    }
    let corpus = Corpus::from_examples(examples);
    write_corpus(&corpus, &a.out)?;
    println!("wrote {} examples over {} classes to {}", corpus.len(), corpus.vocabulary().len(), a.out.display());
    Ok(())
}

fn tags(a: &TagsArgs) -> Result<(), CliError> {
    let corpus = read_corpus(&a.corpus)?;
    let gen = adapter(&a.generator)?;
    let report = build_tag_mapping(corpus.vocabulary(), gen.as_ref(), a.generator.max_in_flight);
    save_tag_mapping(&report.mapping, &a.out).map_err(augment_error)?;
    println!("mapped {} of {} classes to {}", report.mapping.len(), corpus.vocabulary().len(), a.out.display());
    for (emoji, why) in &report.unmapped {
        eprintln!("unmapped {emoji}: {why}");
    }
    Ok(())
}

fn augment(a: &AugmentArgs) -> Result<(), CliError> {
    if a.require_review && !review_marker_path(&a.tags).exists() {
        return Err(user(format!(
            "{} has not been reviewed; create {} after checking it",
            a.tags.display(),
            review_marker_path(&a.tags).display()
        )));
    }
    let base = read_corpus(&a.corpus)?;
    let mapping = load_tag_mapping(&a.tags).map_err(|e| CliError::User(format!("{}: {e}", a.tags.display())))?;
    let gen = adapter(&a.generator)?;
    let plan = if a.all_classes { AugmentationPlan::new(a.target_count) } else { AugmentationPlan::rare_only(a.target_count) };
    let outcome = generate_synthetic(&mapping, &plan, &base, gen.as_ref(), a.seed, a.generator.max_in_flight);
    for s in &outcome.shortfall {
        eprintln!("shortfall {}: {} of {} ({})", s.emoji, s.produced, s.requested, s.reason);
    }
    if outcome.corpus.is_empty() {
        return Err(user("no synthetic examples were produced"));
    }
    write_corpus(&outcome.corpus, &a.out)?;
    println!("wrote {} synthetic examples to {}", outcome.corpus.len(), a.out.display());
    Ok(())
}

fn merge_cmd(a: &MergeArgs) -> Result<(), CliError> {
    let base = read_corpus(&a.base)?;
    let synthetic = read_corpus(&a.synthetic)?;
    let merged = merge(&base, &synthetic).map_err(augment_error)?;
    write_corpus(&merged, &a.out)?;
    println!("wrote {} examples ({} synthetic) to {}", merged.len(), synthetic.len(), a.out.display());
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> Result<(), CliError> {
    let corpus = read_corpus(&a.corpus)?;
    let base = if a.large_corpus { TrainConfig::default() } else { TrainConfig::desk() };
    let cfg = TrainConfig {
        learning_rate: a.learning_rate.unwrap_or(base.learning_rate),
        weight_decay: a.weight_decay.unwrap_or(base.weight_decay),
        batch_size: a.batch_size.unwrap_or(base.batch_size),
        epochs: a.epochs.unwrap_or(base.epochs),
        seed: a.seed,
    };
    let default_arch = ModelArchitecture::new(corpus.vocabulary().len());
    let arch = ModelArchitecture {
        embedding_dim: a.embedding_dim.unwrap_or(default_arch.embedding_dim),
        hidden_layers: a.hidden_layers.unwrap_or(default_arch.hidden_layers),
        hidden_dim: a.hidden_dim.unwrap_or(default_arch.hidden_dim),
        ..default_arch
    };
    let default_fz = FeaturizerConfig::default();
    let fz = FeaturizerConfig {
        n_buckets: a.buckets.unwrap_or(default_fz.n_buckets),
        use_bigrams: !a.no_bigrams,
        ..default_fz
    };
    let model: Model = train(&corpus, &arch, &fz, &cfg).map_err(|e| match e {
        TrainError::NonFiniteLoss { .. } => internal(e),
        _ => user(e),
    })?;
    write_model(&model, &a.out)?;
    let size = model_size_report(&model);
    println!("trained {} classes, {} parameters, {} bytes -> {}", model.n_classes(), size.parameter_count, size.bytes_on_disk, a.out.display());
    Ok(())
}

fn quantize(a: &QuantizeArgs) -> Result<(), CliError> {
    let (model, _) = read_model(&a.model)?;
    let q = model.quantize().map_err(user)?;
    write_model(&q, &a.out)?;
    let before = model_size_report(&model).bytes_on_disk;
    let after = model_size_report(&q).bytes_on_disk;
    println!("{} -> {} bytes ({:.3}x) -> {}", before, after, after as f64 / before as f64, a.out.display());
    Ok(())
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum EvalRecord<'a> {
    Summary {
        model_version: &'a str,
        n_examples: u64,
        out_of_candidates: u64,
        alpha: Option<f64>,
    },
    Cutoff {
        k: usize,
        hit: f64,
        macro_f1: f64,
        tail_hit: f64,
        tail_macro_f1: f64,
    },
    Class {
        emoji: &'a str,
        support: u64,
        hit_at: &'a std::collections::BTreeMap<usize, f64>,
        f1_at: &'a std::collections::BTreeMap<usize, f64>,
    },
}

fn eval_cmd(a: &EvalArgs) -> Result<(), CliError> {
    let (model, version) = read_model(&a.model)?;
    let test = read_corpus(&a.test)?;
    let reference = a.train_corpus.as_deref().map(read_corpus).transpose()?;
    let store: Option<FavoritesStore> = a.favorites.as_deref().map(|p| load_store(p).map_err(user)).transpose()?;

    let mut opts = EvalOptions::new(&a.k);
    if let Some(r) = &reference {
        opts = opts.with_tail_reference(r.vocabulary().classes());
    }
    let rerank_cfg = a.rerank.config()?;
    if let Some(s) = &store {
        opts = opts.with_favorites(s, rerank_cfg);
    }
    let report = evaluate(&model, &test, &opts).map_err(user)?;

    println!("{:>5} {:>9} {:>9} {:>9} {:>9}", "K", "hit", "macro-F1", "tail hit", "tail F1");
    let mut records = vec![EvalRecord::Summary {
        model_version: &version,
        n_examples: report.n_examples,
        out_of_candidates: report.out_of_candidates,
        alpha: store.as_ref().map(|_| rerank_cfg.alpha),
    }];
    for (&k, &hit) in &report.hit_at {
        let r = EvalRecord::Cutoff {
            k,
            hit,
            macro_f1: report.macro_f1_at[&k],
            tail_hit: report.tail_quartile.hit_at[&k],
            tail_macro_f1: report.tail_quartile.macro_f1_at[&k],
        };
        if let EvalRecord::Cutoff { k, hit, macro_f1, tail_hit, tail_macro_f1 } = &r {
            println!("{k:>5} {hit:>9.4} {macro_f1:>9.4} {tail_hit:>9.4} {tail_macro_f1:>9.4}");
        }
        records.push(r);
    }
    println!("{} examples, {} out of candidates", report.n_examples, report.out_of_candidates);
    let emojis: Vec<String> = report.per_class.keys().map(|e| e.to_string()).collect();
    for (emoji, m) in emojis.iter().zip(report.per_class.values()) {
        records.push(EvalRecord::Class { emoji, support: m.support, hit_at: &m.hit_at, f1_at: &m.f1_at });
    }
    if let Some(path) = &a.report {
        write_jsonl(path, &records)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CoveragePoint {
    k: usize,
    coverage: f64,
}

fn coverage(a: &CoverageArgs) -> Result<(), CliError> {
    let corpus = read_corpus(&a.corpus)?;
    let vocab = corpus.vocabulary();
    let curve = coverage_curve(vocab).map_err(user)?;
    let tail: u64 = vocab.tail_quartile().iter().map(|e| vocab.count_of(e)).sum();
    println!("{} classes, {} examples, tail quartile share {:.4}", vocab.len(), vocab.total(), tail as f64 / vocab.total() as f64);
    println!("{:>6} {:>9}", "top-K", "coverage");
    for &(k, c) in curve.iter().filter(|(k, _)| [1, 5, 10, 24, 50, 100, 200, 500].contains(k) || *k == vocab.len()) {
        println!("{k:>6} {c:>9.4}");
    }
    let points: Vec<CoveragePoint> = curve.iter().map(|&(k, coverage)| CoveragePoint { k, coverage }).collect();
    if let Some(path) = &a.report {
        write_jsonl(path, &points)?;
    }
    if let Some(path) = &a.emit_csv {
        let mut csv = String::from("k,coverage\n");
        for p in &points {
            csv.push_str(&format!("{},{}\n", p.k, p.coverage));
        }
        fs::write(path, csv).map_err(write_failed(path))?;
    }
    Ok(())
}

const BENCH_SENTENCES: &[&str] = &[
    "good morning",
    "happy birthday to you",
    "lol that is hilarious",
    "pizza tonight?",
    "I miss you so much",
    "congrats on the new job!!",
    "ugh mondays",
    "see you at the beach this weekend",
    "thank you so much for everything you did for us today",
    "omg",
];

fn bench(a: &BenchArgs) -> Result<(), CliError> {
    let (model, version) = read_model(&a.model)?;
    let sentences: Vec<String> = match &a.sentences {
        Some(p) => fs::read_to_string(p)
            .map_err(|e| CliError::User(format!("{}: {e}", p.display())))?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(str::to_string)
            .collect(),
        None => BENCH_SENTENCES.iter().map(|s| s.to_string()).collect(),
    };
    if sentences.is_empty() || a.measured_iters == 0 {
        return Err(user("need at least one sentence and one measured iteration"));
    }
    let cfg = BenchConfig { warmup_iters: a.warmup_iters, measured_iters: a.measured_iters, sentences };
    let report = bench_latency(&model, &cfg);
    let o = &report.overall;
    println!("model {version}: median {:.4} ms, p95 {:.4} ms, mean {:.4} ms over {} calls", o.median_ms, o.p95_ms, o.mean_ms, o.samples);
    if let Some(size) = &report.size {
        println!("{} parameters, {} bytes, {:?}", size.parameter_count, size.bytes_on_disk, size.precision);
    }
    if let Some(path) = &a.report {
        write_jsonl(path, std::slice::from_ref(&report))?;
    }
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let (model, _) = read_model(&a.model)?;
    let prompts = read_corpus(&a.prompts)?;
    if !(a.concentration > 0.0 && a.concentration.is_finite()) {
        return Err(user("--concentration must be positive"));
    }
    if !(0.0..=1.0).contains(&a.mix) {
        return Err(user("--mix must be in [0, 1]"));
    }
    let profiles = SimUserProfile::population(model.class_ids(), a.users, a.user_favorites, a.concentration, a.sessions, a.seed);
    let cfg = SimConfig { mix: a.mix, panel_size: PANEL_SIZE, count_external: !a.panel_only, seed: a.seed };
    let points = simulate_alpha_sweep(&model, &profiles, &prompts, &a.alphas, &cfg).map_err(user)?;
    println!("{:>6} {:>9} {:>9} {:>11} {:>11}", "alpha", "hit@1", "hit@24", "panel/user", "extern/user");
    for p in &points {
        println!(
            "{:>6.3} {:>9.4} {:>9.4} {:>11.2} {:>11.2}",
            p.alpha, p.hit_at_1, p.hit_at_panel, p.panel_insertions_per_user, p.external_insertions_per_user
        );
    }
    if let Some(path) = &a.report {
        write_jsonl(path, &points)?;
    }
    if let Some(path) = &a.emit_csv {
        let mut csv = String::from("alpha,hit_at_1,hit_at_panel,panel_insertions_per_user,external_insertions_per_user\n");
        for p in &points {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                p.alpha, p.hit_at_1, p.hit_at_panel, p.panel_insertions_per_user, p.external_insertions_per_user
            ));
        }
        fs::write(path, csv).map_err(write_failed(path))?;
    }
    Ok(())
}

fn serve(a: &ServeArgs) -> Result<(), CliError> {
    let cfg = ServiceConfig {
        model_path: a.model.clone(),
        data_dir: a.data_dir.clone(),
        bind: a.bind,
        default_k: a.default_k,
        rerank: a.rerank.config()?,
    };
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(internal)?;
    runtime.block_on(service::serve(cfg)).map_err(|e| match e.downcast_ref::<service::ServiceError>() {
        Some(_) => user(e),
        None => internal(e),
    })
}

fn predict(a: &PredictArgs) -> Result<(), CliError> {
    if a.k == 0 {
        return Err(user("--k must be at least 1"));
    }
    let (model, version) = read_model(&a.model)?;
    let cfg = a.rerank.config()?;
    let store = match (&a.user_id, &a.data_dir) {
        (Some(id), Some(dir)) => load_store(user_log_path(dir, id)).map_err(user)?,
        _ => FavoritesStore::new(),
    };
    let ranked = rank_for_user(&model, &a.text, a.k, &store, &cfg).map_err(user)?;
    let response = PredictResponse { ranked, model_version: version, alpha: cfg.alpha };
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, &response).map_err(internal)?;
    writeln!(stdout).map_err(internal)?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::Import(a) => import(a),
        Command::Tags(a) => tags(a),
        Command::Augment(a) => augment(a),
        Command::Merge(a) => merge_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Quantize(a) => quantize(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Coverage(a) => coverage(a),
        Command::Bench(a) => bench(a),
        Command::Simulate(a) => simulate(a),
        Command::Serve(a) => serve(a),
        Command::Predict(a) => predict(a),
    }
}

/// Parses `std::env::args`, runs the subcommand and maps the outcome to the
/// process exit code.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
