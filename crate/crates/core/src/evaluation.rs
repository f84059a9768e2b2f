//! Metrics, the favorites simulation and the latency harness.
//!
//! Top-k macro F1 convention: for class `c` and cutoff `k`,
//! `recall = #{gold = c, c in top-k} / #{gold = c}` and
//! `precision = #{gold = c, c in top-k} / #{c in top-k}`. F1 is their
//! harmonic mean (0 when both are 0), averaged over classes with at least
//! one test example.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Gamma;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::classifier::{model_size_report, ClassifierModel, ModelSizeReport, Prediction};
use crate::corpus::{Corpus, EmojiId};
use crate::personalization::{rerank, FavoritesStore, RerankConfig, RerankError};
use crate::scalar::Scalar;

/// Size of the suggestion panel.
pub const PANEL_SIZE: usize = 24;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("at least one cutoff K is required")]
    NoCutoffs,
    #[error("cutoff K must be positive")]
    ZeroCutoff,
    #[error("a favorites store requires a rerank config")]
    MissingRerankConfig,
    #[error("test corpus is empty")]
    EmptyTestSet,
    #[error(transparent)]
    Rerank(#[from] RerankError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub support: u64,
    pub hit_at: BTreeMap<usize, f64>,
    pub f1_at: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceMetrics {
    pub classes: usize,
    pub support: u64,
    pub hit_at: BTreeMap<usize, f64>,
    pub macro_f1_at: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub n_examples: u64,
    pub hit_at: BTreeMap<usize, f64>,
    pub macro_f1_at: BTreeMap<usize, f64>,
    pub per_class: BTreeMap<EmojiId, ClassMetrics>,
    /// Least frequent quarter of classes by training-frequency rank.
    pub tail_quartile: SliceMetrics,
    pub head_support: u64,
    /// Examples whose gold label could never be ranked; counted as misses.
    pub out_of_candidates: u64,
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions<'a> {
    pub ks: Vec<usize>,
    pub store: Option<&'a FavoritesStore>,
    pub rerank: Option<RerankConfig>,
    /// Classes in training-frequency order used for the tail quartile;
    /// defaults to the model's class order.
    pub tail_reference: Option<&'a [EmojiId]>,
}

impl<'a> EvalOptions<'a> {
    pub fn new(ks: &[usize]) -> Self {
        EvalOptions { ks: ks.to_vec(), ..Default::default() }
    }

    pub fn with_favorites(mut self, store: &'a FavoritesStore, cfg: RerankConfig) -> Self {
        self.store = Some(store);
        self.rerank = Some(cfg);
        self
    }

    pub fn with_tail_reference(mut self, classes: &'a [EmojiId]) -> Self {
        self.tail_reference = Some(classes);
        self
    }
}

/// Ranked emoji for one text: the bare model, or reranked with favorites.
fn ranked_emoji<F: Scalar>(
    model: &ClassifierModel<F>,
    text: &str,
    depth: usize,
    favorites: Option<(&FavoritesStore, &RerankConfig)>,
) -> Result<Vec<EmojiId>, RerankError> {
    match favorites {
        None => Ok(model.predict(text, depth).ranked.into_iter().map(|s| s.emoji).collect()),
        Some((store, cfg)) => {
            let full: Prediction<f64> = model.predict(text, model.n_classes()).cast();
            let out = rerank(&full, store, cfg)?;
            Ok(out.ranked.into_iter().take(depth).map(|r| r.emoji).collect())
        }
    }
}

fn f1(hits: u64, support: u64, predicted: u64) -> f64 {
    if hits == 0 {
        return 0.0;
    }
    let recall = hits as f64 / support as f64;
    let precision = hits as f64 / predicted as f64;
    2.0 * precision * recall / (precision + recall)
}

#[derive(Default)]
struct Tally {
    support: u64,
    /// Per K: examples with this gold label ranked within K.
    hits: BTreeMap<usize, u64>,
    /// Per K: examples with this class ranked within K.
    predicted: BTreeMap<usize, u64>,
}

fn slice_metrics<'a>(tallies: impl Iterator<Item = &'a Tally>, ks: &[usize]) -> SliceMetrics {
    let mut classes = 0usize;
    let mut support = 0u64;
    let mut hits: BTreeMap<usize, u64> = BTreeMap::new();
    let mut f1_sum: BTreeMap<usize, f64> = BTreeMap::new();
    for t in tallies.filter(|t| t.support > 0) {
        classes += 1;
        support += t.support;
        for &k in ks {
            let h = t.hits.get(&k).copied().unwrap_or(0);
            *hits.entry(k).or_default() += h;
            *f1_sum.entry(k).or_default() += f1(h, t.support, t.predicted.get(&k).copied().unwrap_or(0));
        }
    }
    let frac = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    SliceMetrics {
        classes,
        support,
        hit_at: ks.iter().map(|&k| (k, frac(hits.get(&k).copied().unwrap_or(0) as f64, support as f64))).collect(),
        macro_f1_at: ks.iter().map(|&k| (k, frac(f1_sum.get(&k).copied().unwrap_or(0.0), classes as f64))).collect(),
    }
}

/// Hit@K and top-k macro F1 over a labeled test set, optionally through the
/// favorites reranker.
pub fn evaluate<F: Scalar>(model: &ClassifierModel<F>, test: &Corpus, opts: &EvalOptions<'_>) -> Result<EvalReport, EvalError> {
    if opts.ks.is_empty() {
        return Err(EvalError::NoCutoffs);
    }
    if opts.ks.contains(&0) {
        return Err(EvalError::ZeroCutoff);
    }
    if test.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let favorites = match (opts.store, &opts.rerank) {
        (Some(store), Some(cfg)) => {
            cfg.validate()?;
            Some((store, cfg))
        }
        (Some(_), None) => return Err(EvalError::MissingRerankConfig),
        (None, _) => None,
    };
    let ks: Vec<usize> = opts.ks.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let depth = *ks.last().expect("non-empty");

    let rankings: Vec<Vec<EmojiId>> = test
        .examples()
        .par_iter()
        .map(|ex| ranked_emoji(model, ex.text(), depth, favorites))
        .collect::<Result<_, _>>()?;

    let mut tallies: BTreeMap<EmojiId, Tally> = BTreeMap::new();
    let mut out_of_candidates = 0;
    for (ex, ranking) in test.examples().iter().zip(&rankings) {
        let gold = ex.label();
        let rankable = model.class_id(gold).is_some() || favorites.is_some_and(|(s, _)| s.count(gold) > 0);
        if !rankable {
            out_of_candidates += 1;
        }
        let gold_pos = ranking.iter().position(|e| e == gold);
        let t = tallies.entry(gold.clone()).or_default();
        t.support += 1;
        for &k in &ks {
            if gold_pos.is_some_and(|p| p < k) {
                *t.hits.entry(k).or_default() += 1;
            }
        }
        for (pos, emoji) in ranking.iter().enumerate() {
            let t = tallies.entry(emoji.clone()).or_default();
            for &k in ks.iter().filter(|&&k| pos < k) {
                *t.predicted.entry(k).or_default() += 1;
            }
        }
    }

    let n = test.len() as u64;
    let overall = slice_metrics(tallies.values(), &ks);
    let per_class = tallies
        .iter()
        .filter(|(_, t)| t.support > 0)
        .map(|(emoji, t)| {
            let hit_at = ks.iter().map(|&k| (k, t.hits.get(&k).copied().unwrap_or(0) as f64 / t.support as f64)).collect();
            let f1_at = ks
                .iter()
                .map(|&k| (k, f1(t.hits.get(&k).copied().unwrap_or(0), t.support, t.predicted.get(&k).copied().unwrap_or(0))))
                .collect();
            (emoji.clone(), ClassMetrics { support: t.support, hit_at, f1_at })
        })
        .collect();

    let reference = opts.tail_reference.unwrap_or(model.class_ids());
    let tail_len = reference.len().div_ceil(4);
    let tail: BTreeSet<&EmojiId> = reference[reference.len() - tail_len..].iter().collect();
    let tail_quartile = slice_metrics(tallies.iter().filter(|(e, _)| tail.contains(e)).map(|(_, t)| t), &ks);

    Ok(EvalReport {
        n_examples: n,
        hit_at: overall.hit_at,
        macro_f1_at: overall.macro_f1_at,
        per_class,
        head_support: n - tail_quartile.support,
        tail_quartile,
        out_of_candidates,
    })
}

/// A simulated keyboard user with a fixed emoji taste.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimUserProfile {
    pub preference: Vec<(EmojiId, f64)>,
    pub sessions: usize,
}

impl SimUserProfile {
    /// Draws `n_favorites` distinct classes and Dirichlet(`concentration`)
    /// weights over them. Small concentrations give skewed tastes.
    pub fn sample(classes: &[EmojiId], n_favorites: usize, concentration: f64, sessions: usize, rng: &mut impl Rng) -> Self {
        let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
        let chosen: Vec<&EmojiId> = classes.choose_multiple(rng, n_favorites.min(classes.len())).collect();
        let mut draws: Vec<f64> = chosen.iter().map(|_| gamma.sample(rng)).collect();
        let sum: f64 = draws.iter().sum();
        if sum > 0.0 {
            draws.iter_mut().for_each(|d| *d /= sum);
        } else {
            let u = 1.0 / draws.len() as f64;
            draws.iter_mut().for_each(|d| *d = u);
        }
        SimUserProfile { preference: chosen.into_iter().cloned().zip(draws).collect(), sessions }
    }

    /// `n_users` profiles from one seed.
    pub fn population(classes: &[EmojiId], n_users: usize, n_favorites: usize, concentration: f64, sessions: usize, seed: u64) -> Vec<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_users).map(|_| Self::sample(classes, n_favorites, concentration, sessions, &mut rng)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    /// Probability that the intended emoji comes from the user's taste
    /// rather than the prompt's gold label.
    pub mix: f64,
    pub panel_size: usize,
    /// Whether emoji inserted from outside the panel feed the favorites.
    pub count_external: bool,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { mix: 0.5, panel_size: PANEL_SIZE, count_external: true, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub hit_at_1: f64,
    pub hit_at_panel: f64,
    pub panel_insertions_per_user: f64,
    pub external_insertions_per_user: f64,
}

#[derive(Default)]
struct UserOutcome {
    sessions: u64,
    hit1: u64,
    hit_panel: u64,
    panel: u64,
    external: u64,
}

fn user_seed(seed: u64, user: usize) -> u64 {
    seed ^ (user as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn simulate_user(
    profile: &SimUserProfile,
    predictions: &[Prediction<f64>],
    gold: &[&EmojiId],
    rerank_cfg: &RerankConfig,
    cfg: &SimConfig,
    user: usize,
) -> Result<UserOutcome, RerankError> {
    // Same stream for every alpha, so alphas see identical intentions.
    let mut rng = ChaCha8Rng::seed_from_u64(user_seed(cfg.seed, user));
    let weights = WeightedIndex::new(profile.preference.iter().map(|(_, w)| *w)).ok();
    let mut store = FavoritesStore::new();
    let mut out = UserOutcome::default();
    for _ in 0..profile.sessions {
        let prompt = rng.random_range(0..predictions.len());
        let from_taste = rng.random::<f64>() < cfg.mix;
        let taste_pick = weights.as_ref().map(|w| w.sample(&mut rng));
        let intended = match (from_taste, taste_pick) {
            (true, Some(i)) => &profile.preference[i].0,
            _ => gold[prompt],
        };
        let ranked = rerank(&predictions[prompt], &store, rerank_cfg)?;
        let pos = ranked.position(intended);
        out.sessions += 1;
        if pos == Some(0) {
            out.hit1 += 1;
        }
        if pos.is_some_and(|p| p < cfg.panel_size) {
            out.hit_panel += 1;
            out.panel += 1;
            store.record_insertion(intended.clone());
        } else {
            out.external += 1;
            if cfg.count_external {
                store.record_insertion(intended.clone());
            }
        }
    }
    Ok(out)
}

/// Replays simulated users against the reranker for each alpha. Every user
/// starts from an empty favorites store; panel hits feed back into it.
pub fn simulate_alpha_sweep<F: Scalar>(
    model: &ClassifierModel<F>,
    profiles: &[SimUserProfile],
    prompts: &Corpus,
    alphas: &[f64],
    cfg: &SimConfig,
) -> Result<Vec<SweepPoint>, EvalError> {
    if prompts.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let rerank_cfgs: Vec<RerankConfig> = alphas
        .iter()
        .map(|&a| {
            let c = RerankConfig::with_alpha(a);
            c.validate().map(|_| c)
        })
        .collect::<Result<_, _>>()?;
    let predictions: Vec<Prediction<f64>> =
        prompts.examples().par_iter().map(|ex| model.predict(ex.text(), model.n_classes()).cast()).collect();
    let gold: Vec<&EmojiId> = prompts.examples().iter().map(|e| e.label()).collect();

    let mut points = Vec::with_capacity(alphas.len());
    for (alpha, rerank_cfg) in alphas.iter().zip(&rerank_cfgs) {
        let outcomes: Vec<UserOutcome> = profiles
            .par_iter()
            .enumerate()
            .map(|(u, p)| simulate_user(p, &predictions, &gold, rerank_cfg, cfg, u))
            .collect::<Result<_, _>>()?;
        let users = profiles.len().max(1) as f64;
        let mean = |f: &dyn Fn(&UserOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / users;
        let rate = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        points.push(SweepPoint {
            alpha: *alpha,
            hit_at_1: mean(&|o| rate(o.hit1, o.sessions)),
            hit_at_panel: mean(&|o| rate(o.hit_panel, o.sessions)),
            panel_insertions_per_user: mean(&|o| o.panel as f64),
            external_insertions_per_user: mean(&|o| o.external as f64),
        });
    }
    Ok(points)
}

/// Monotonic time source.
pub trait Clock {
    fn now(&self) -> Duration;
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchConfig {
    /// Untimed passes over the sentence list.
    pub warmup_iters: usize,
    /// Timed passes over the sentence list.
    pub measured_iters: usize,
    pub sentences: Vec<String>,
}

impl BenchConfig {
    pub fn new(sentences: Vec<String>) -> Self {
        BenchConfig { warmup_iters: 300, measured_iters: 50, sentences }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyStats {
    pub median_ms: f64,
    pub p95_ms: f64,
    pub mean_ms: f64,
    pub samples: usize,
}

impl LatencyStats {
    pub fn from_samples(samples_ms: &[f64]) -> Self {
        let mut sorted = samples_ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        if n == 0 {
            return LatencyStats { median_ms: 0.0, p95_ms: 0.0, mean_ms: 0.0, samples: 0 };
        }
        let median_ms = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
        // Nearest-rank percentile.
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        LatencyStats { median_ms, p95_ms: sorted[rank - 1], mean_ms: sorted.iter().sum::<f64>() / n as f64, samples: n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SentenceLatency {
    pub sentence: String,
    pub stats: LatencyStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub overall: LatencyStats,
    pub per_sentence: Vec<SentenceLatency>,
    pub size: Option<ModelSizeReport>,
}

/// Runs the warmup then times every measured call of `predict`.
pub fn bench_with<C: Clock>(cfg: &BenchConfig, clock: &C, mut predict: impl FnMut(&str)) -> BenchReport {
    for _ in 0..cfg.warmup_iters {
        for s in &cfg.sentences {
            predict(s);
        }
    }
    let mut per_sentence: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.measured_iters); cfg.sentences.len()];
    for _ in 0..cfg.measured_iters {
        for (i, s) in cfg.sentences.iter().enumerate() {
            let start = clock.now();
            predict(s);
            let elapsed = clock.now().saturating_sub(start);
            per_sentence[i].push(elapsed.as_secs_f64() * 1e3);
        }
    }
    let all: Vec<f64> = per_sentence.iter().flatten().copied().collect();
    BenchReport {
        overall: LatencyStats::from_samples(&all),
        per_sentence: cfg
            .sentences
            .iter()
            .zip(&per_sentence)
            .map(|(s, v)| SentenceLatency { sentence: s.clone(), stats: LatencyStats::from_samples(v) })
            .collect(),
        size: None,
    }
}

/// Single-threaded latency of full `predict(text, 24)` calls.
pub fn bench_latency<F: Scalar>(model: &ClassifierModel<F>, cfg: &BenchConfig) -> BenchReport {
    let clock = SystemClock::default();
    let mut report = bench_with(cfg, &clock, |s| {
        std::hint::black_box(model.predict(std::hint::black_box(s), PANEL_SIZE));
    });
    report.size = Some(model_size_report(model));
    report
}
