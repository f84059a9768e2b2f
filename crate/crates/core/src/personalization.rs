//! Per-user favorites and the favorites reranker.
//!
//! The reranked score of a candidate emoji is
//!
//! ```text
//! score = P_model(emoji | m) · P_fav(emoji) ^ (α / (1 − α) · min(s, N_fav) / s)
//! ```
//!
//! where `P_fav` is the emoji's share of the user's insertions and `N_fav`
//! the number of distinct emoji inserted. Candidates are the model classes
//! plus every favorite; favorites the model does not know get a fixed floor
//! probability. `P_fav` is Laplace-smoothed with `β` over the candidate set
//! so non-favorites keep a positive score.
//!
//! Note the exponent grows with α: larger α gives the history *more* weight.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::Prediction;
use crate::corpus::EmojiId;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{}: line {line}: {message}", path.display())]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum RerankError {
    #[error("invalid rerank config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InsertionSource {
    #[default]
    Panel,
    External,
}

/// One emoji insertion, as stored in a user's event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertionEvent {
    pub ts: DateTime<Utc>,
    pub emoji: EmojiId,
    pub source: InsertionSource,
}

impl InsertionEvent {
    pub fn now(emoji: EmojiId, source: InsertionSource) -> Self {
        InsertionEvent { ts: Utc::now(), emoji, source }
    }
}

/// Insertion counts for one user.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FavoritesStore {
    counts: BTreeMap<EmojiId, u64>,
    total: u64,
}

impl FavoritesStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_insertion(&mut self, emoji: EmojiId) {
        *self.counts.entry(emoji).or_insert(0) += 1;
        self.total += 1;
    }

    /// Folds events into a store. External insertions are skipped unless
    /// `count_external` is set.
    pub fn from_events<'a>(events: impl IntoIterator<Item = &'a InsertionEvent>, count_external: bool) -> Self {
        let mut store = Self::new();
        for ev in events {
            if count_external || ev.source == InsertionSource::Panel {
                store.record_insertion(ev.emoji.clone());
            }
        }
        store
    }

    pub fn counts(&self) -> &BTreeMap<EmojiId, u64> {
        &self.counts
    }

    pub fn count(&self, emoji: &EmojiId) -> u64 {
        self.counts.get(emoji).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct emoji inserted.
    pub fn n_favorites(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Unsmoothed share of insertions.
    pub fn probability(&self, emoji: &EmojiId) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(emoji) as f64 / self.total as f64
        }
    }
}

/// Path of a user's event log under a data directory.
pub fn user_log_path(data_dir: impl AsRef<Path>, user_id: &str) -> PathBuf {
    data_dir.as_ref().join("users").join(user_id).join("events.log")
}

/// Append-only, fsynced event log.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| StoreError::Io { path: path.clone(), source };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        trim_torn_tail(&path).map_err(io)?;
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        Ok(EventLog { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends one event and syncs it to disk before returning.
    pub fn append(&mut self, event: &InsertionEvent) -> Result<(), StoreError> {
        let mut line = serde_json::to_string(event).expect("event serializes");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|source| StoreError::Io { path: self.path.clone(), source })
    }
}

/// Drops a partial final line left by an interrupted append, so the next
/// append does not glue onto it.
fn trim_torn_tail(path: &Path) -> std::io::Result<()> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(e),
    };
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    log::warn!("{}: dropping {} bytes of a torn final record", path.display(), bytes.len() - keep);
    let file = OpenOptions::new().write(true).open(path)?;
    file.set_len(keep as u64)?;
    file.sync_data()
}

/// Result of reading an event log.
#[derive(Debug, Clone, Default)]
pub struct Replay {
    pub events: Vec<InsertionEvent>,
    /// A final partial line was skipped.
    pub truncated_tail: bool,
}

/// Reads every complete event. A malformed final line without a trailing
/// newline is a torn append and is skipped; any other malformed line is an
/// error. A missing file reads as empty.
pub fn read_events(path: impl AsRef<Path>) -> Result<Replay, StoreError> {
    let path = path.as_ref();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Replay::default()),
        Err(source) => return Err(StoreError::Io { path: path.to_path_buf(), source }),
    };
    let mut reader = BufReader::new(file);
    let mut replay = Replay::default();
    let mut buf = String::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(|source| StoreError::Io { path: path.to_path_buf(), source })?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let complete = buf.ends_with('\n');
        let text = buf.trim();
        if text.is_empty() {
            continue;
        }
        match serde_json::from_str::<InsertionEvent>(text) {
            Ok(ev) => replay.events.push(ev),
            Err(_) if !complete => {
                log::warn!("{}: ignoring partial trailing line {line_no}", path.display());
                replay.truncated_tail = true;
            }
            Err(e) => {
                return Err(StoreError::Malformed { path: path.to_path_buf(), line: line_no, message: e.to_string() })
            }
        }
    }
    Ok(replay)
}

/// Store from an event log, counting both panel and external insertions.
pub fn load_store(path: impl AsRef<Path>) -> Result<FavoritesStore, StoreError> {
    load_store_with(path, true)
}

pub fn load_store_with(path: impl AsRef<Path>, count_external: bool) -> Result<FavoritesStore, StoreError> {
    let replay = read_events(path)?;
    Ok(FavoritesStore::from_events(&replay.events, count_external))
}

/// Writes a store as a fresh event log, one panel event per insertion.
pub fn save_store(store: &FavoritesStore, path: impl AsRef<Path>) -> Result<(), StoreError> {
    let path = path.as_ref();
    let io = |source| StoreError::Io { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let epoch = Utc.timestamp_opt(0, 0).single().expect("unix epoch");
    let mut out = String::new();
    for (emoji, &count) in &store.counts {
        let ev = InsertionEvent { ts: epoch, emoji: emoji.clone(), source: InsertionSource::Panel };
        let line = serde_json::to_string(&ev).expect("event serializes");
        for _ in 0..count {
            out.push_str(&line);
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(io)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RerankConfig {
    /// Reranking coefficient in [0, 1).
    pub alpha: f64,
    /// History size at which favorites reach full influence.
    pub s: u32,
    /// Model probability assumed for favorites outside the model classes.
    pub floor: f64,
    /// Additive smoothing β on favorites counts.
    pub fav_smoothing: f64,
}

impl Default for RerankConfig {
    fn default() -> Self {
        RerankConfig { alpha: 0.5, s: 4, floor: 1e-4, fav_smoothing: 1.0 }
    }
}

impl RerankConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        RerankConfig { alpha, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), RerankError> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(RerankError::InvalidConfig(format!("alpha must be in [0, 1), got {}", self.alpha)));
        }
        if self.s == 0 {
            return Err(RerankError::InvalidConfig("s must be positive".into()));
        }
        if !(self.floor > 0.0 && self.floor < 1.0) {
            return Err(RerankError::InvalidConfig(format!("floor must be in (0, 1), got {}", self.floor)));
        }
        if !(self.fav_smoothing >= 0.0 && self.fav_smoothing.is_finite()) {
            return Err(RerankError::InvalidConfig("fav_smoothing must be non-negative".into()));
        }
        Ok(())
    }

    /// `α/(1−α) · min(s, n_favorites)/s`.
    pub fn exponent(&self, n_favorites: usize) -> f64 {
        let s = f64::from(self.s);
        let damping = (n_favorites as f64).min(s) / s;
        self.alpha / (1.0 - self.alpha) * damping
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerankedEmoji<F> {
    pub emoji: EmojiId,
    pub final_score: F,
    pub model_prob: F,
    pub favorites_prob: F,
    /// Whether the emoji is one of the model's classes.
    pub in_model: bool,
}

/// Candidates by descending final score, ties by ascending codepoints.
/// Scores are not renormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct RerankedPrediction<F> {
    pub ranked: Vec<RerankedEmoji<F>>,
    pub exponent: F,
}

impl<F: Scalar> RerankedPrediction<F> {
    pub fn top(&self, k: usize) -> &[RerankedEmoji<F>] {
        &self.ranked[..k.min(self.ranked.len())]
    }

    pub fn position(&self, emoji: &EmojiId) -> Option<usize> {
        self.ranked.iter().position(|r| &r.emoji == emoji)
    }

    pub fn get(&self, emoji: &EmojiId) -> Option<&RerankedEmoji<F>> {
        self.ranked.iter().find(|r| &r.emoji == emoji)
    }
}

/// Blends a full model distribution with a user's favorites.
pub fn rerank<F: Scalar>(
    model_pred: &Prediction<F>,
    store: &FavoritesStore,
    cfg: &RerankConfig,
) -> Result<RerankedPrediction<F>, RerankError> {
    cfg.validate()?;
    let mut candidates: BTreeMap<&EmojiId, (F, bool)> =
        model_pred.ranked.iter().map(|s| (&s.emoji, (s.probability, true))).collect();
    for emoji in store.counts.keys() {
        candidates.entry(emoji).or_insert((F::of(cfg.floor), false));
    }

    let exponent = F::of(cfg.exponent(store.n_favorites()));
    let beta = cfg.fav_smoothing;
    let denom = store.total as f64 + beta * candidates.len() as f64;
    let mut ranked: Vec<RerankedEmoji<F>> = candidates
        .into_iter()
        .map(|(emoji, (model_prob, in_model))| {
            let (favorites_prob, final_score) = if store.is_empty() {
                (F::zero(), model_prob)
            } else {
                let p = F::of((store.count(emoji) as f64 + beta) / denom);
                (p, model_prob * p.powf(exponent))
            };
            RerankedEmoji { emoji: emoji.clone(), final_score, model_prob, favorites_prob, in_model }
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.final_score
            .partial_cmp(&a.final_score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.emoji.cmp(&b.emoji))
    });
    Ok(RerankedPrediction { ranked, exponent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::ScoredEmoji;
    use proptest::prelude::*;

    fn id(s: &str) -> EmojiId {
        EmojiId::new(s).unwrap()
    }

    fn prediction(entries: &[(&str, f64)]) -> Prediction<f64> {
        let mut ranked: Vec<ScoredEmoji<f64>> = entries
            .iter()
            .enumerate()
            .map(|(i, (e, p))| ScoredEmoji { emoji: id(e), class_id: i, probability: *p })
            .collect();
        ranked.sort_by(|a, b| b.probability.partial_cmp(&a.probability).unwrap().then(a.class_id.cmp(&b.class_id)));
        Prediction { ranked }
    }

    fn store_of(counts: &[(&str, u64)]) -> FavoritesStore {
        let mut s = FavoritesStore::new();
        for (e, n) in counts {
            for _ in 0..*n {
                s.record_insertion(id(e));
            }
        }
        s
    }

    #[test]
    fn record_insertion_updates_counts() {
        let mut s = FavoritesStore::new();
        s.record_insertion(id("😂"));
        assert_eq!(s.count(&id("😂")), 1);
        assert_eq!(s.total(), 1);
        assert_eq!(s.n_favorites(), 1);

        let s = store_of(&[("😂", 3), ("❤️", 1)]);
        assert_eq!(s.probability(&id("😂")), 0.75);
    }

    #[test]
    fn exponent_damping() {
        let cfg = RerankConfig { alpha: 0.5, ..Default::default() };
        assert_eq!(cfg.exponent(0), 0.0);
        assert_eq!(cfg.exponent(1), 0.25);
        assert_eq!(cfg.exponent(2), 0.5);
        assert_eq!(cfg.exponent(4), 1.0);
        assert_eq!(cfg.exponent(40), 1.0);
        let cfg = RerankConfig { alpha: 0.75, ..Default::default() };
        assert_eq!(cfg.exponent(9), 3.0);
    }

    #[test]
    fn alpha_at_or_above_one_rejected() {
        let pred = prediction(&[("A", 1.0)]);
        for alpha in [1.0, 1.5, -0.1, f64::NAN] {
            let cfg = RerankConfig { alpha, ..Default::default() };
            assert!(matches!(rerank(&pred, &FavoritesStore::new(), &cfg), Err(RerankError::InvalidConfig(_))));
        }
    }

    #[test]
    fn empty_store_passes_model_scores_through() {
        let pred = prediction(&[("A", 0.5), ("B", 0.3), ("C", 0.2)]);
        let out = rerank(&pred, &FavoritesStore::new(), &RerankConfig::with_alpha(0.9)).unwrap();
        let order: Vec<&str> = out.ranked.iter().map(|r| r.emoji.as_str()).collect();
        assert_eq!(order, vec!["A", "B", "C"]);
        assert_eq!(out.ranked[0].final_score, 0.5);
    }

    #[test]
    fn out_of_model_favorite_gets_floor_and_climbs() {
        let classes: Vec<(String, f64)> = (0..30).map(|i| (format!("c{i:02}"), 1.0 / 30.0)).collect();
        let entries: Vec<(&str, f64)> = classes.iter().map(|(e, p)| (e.as_str(), *p)).collect();
        let pred = prediction(&entries);
        let cfg = RerankConfig::with_alpha(0.9);
        let mut store = store_of(&[("c00", 1), ("c01", 1), ("c02", 1), ("c03", 1)]);
        let mut last_pos = usize::MAX;
        for _ in 0..20 {
            store.record_insertion(id("🦖"));
            let out = rerank(&pred, &store, &cfg).unwrap();
            let r = out.get(&id("🦖")).unwrap();
            assert_eq!(r.model_prob, 1e-4);
            assert!(!r.in_model);
            assert!(r.final_score > 0.0);
            let pos = out.position(&id("🦖")).unwrap();
            assert!(pos <= last_pos);
            last_pos = pos;
        }
        assert_eq!(last_pos, 0);
    }

    #[test]
    fn event_log_roundtrip_and_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = user_log_path(dir.path(), "u1");
        let mut log = EventLog::open(&path).unwrap();
        log.append(&InsertionEvent::now(id("😂"), InsertionSource::Panel)).unwrap();
        log.append(&InsertionEvent::now(id("😂"), InsertionSource::External)).unwrap();
        log.append(&InsertionEvent::now(id("❤️"), InsertionSource::Panel)).unwrap();
        drop(log);
        assert_eq!(load_store(&path).unwrap(), store_of(&[("😂", 2), ("❤️", 1)]));
        assert_eq!(load_store_with(&path, false).unwrap(), store_of(&[("😂", 1), ("❤️", 1)]));

        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"ts\":\"2024-01-01T00:00:00Z\",\"emo").unwrap();
        drop(f);
        let replay = read_events(&path).unwrap();
        assert!(replay.truncated_tail);
        assert_eq!(replay.events.len(), 3);

        // Reopening for append discards the torn bytes.
        let mut log = EventLog::open(&path).unwrap();
        log.append(&InsertionEvent::now(id("🔥"), InsertionSource::Panel)).unwrap();
        let replay = read_events(&path).unwrap();
        assert!(!replay.truncated_tail);
        assert_eq!(replay.events.len(), 4);
    }

    #[test]
    fn malformed_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.log");
        let good = serde_json::to_string(&InsertionEvent::now(id("😂"), InsertionSource::Panel)).unwrap();
        fs::write(&path, format!("{good}\nnot json\n{good}\n")).unwrap();
        match load_store(&path) {
            Err(StoreError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_or_missing_log_is_empty_store() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.log");
        assert!(load_store(&path).unwrap().is_empty());
        fs::write(&path, "").unwrap();
        assert!(load_store(&path).unwrap().is_empty());
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/events.log");
        let store = store_of(&[("😂", 3), ("❤️", 1), ("🍕", 2)]);
        save_store(&store, &path).unwrap();
        assert_eq!(load_store(&path).unwrap(), store);
    }

    proptest! {
        #[test]
        fn replay_is_a_fold(seq in prop::collection::vec((0usize..5, any::<bool>()), 0..60)) {
            let emojis = ["😂", "❤️", "🍕", "🔥", "🎉"];
            let events: Vec<InsertionEvent> = seq.iter().map(|&(i, ext)| InsertionEvent {
                ts: Utc.timestamp_opt(1_700_000_000, 0).unwrap(),
                emoji: id(emojis[i]),
                source: if ext { InsertionSource::External } else { InsertionSource::Panel },
            }).collect();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("e.log");
            let mut log = EventLog::open(&path).unwrap();
            let mut live = FavoritesStore::new();
            for ev in &events {
                log.append(ev).unwrap();
                live.record_insertion(ev.emoji.clone());
            }
            let replayed = load_store(&path).unwrap();
            prop_assert_eq!(&replayed, &live);
            prop_assert_eq!(replayed.total(), replayed.counts().values().sum::<u64>());
        }

        #[test]
        fn scores_strictly_positive(
            probs in prop::collection::vec(1e-6f64..1.0, 2..40),
            hist in prop::collection::vec(0usize..60, 0..30),
            alpha in 0.0f64..0.99,
        ) {
            let total: f64 = probs.iter().sum();
            let names: Vec<String> = (0..probs.len()).map(|i| format!("m{i:02}")).collect();
            let entries: Vec<(&str, f64)> = names.iter().zip(&probs).map(|(n, p)| (n.as_str(), p / total)).collect();
            let pred = prediction(&entries);
            let mut store = FavoritesStore::new();
            for h in hist {
                store.record_insertion(id(&format!("m{h:02}")));
            }
            let out = rerank(&pred, &store, &RerankConfig::with_alpha(alpha)).unwrap();
            prop_assert!(out.ranked.iter().all(|r| r.final_score > 0.0));
            prop_assert!(out.ranked.windows(2).all(|w| w[0].final_score >= w[1].final_score));
        }

        #[test]
        fn more_history_never_lowers_rank(
            probs in prop::collection::vec(1e-4f64..1.0, 3..30),
            hist in prop::collection::vec(0usize..30, 1..40),
            target_pick in 0usize..1000,
            alpha in 0.05f64..0.95,
        ) {
            let total: f64 = probs.iter().sum();
            let names: Vec<String> = (0..probs.len()).map(|i| format!("m{i:02}")).collect();
            let entries: Vec<(&str, f64)> = names.iter().zip(&probs).map(|(n, p)| (n.as_str(), p / total)).collect();
            let pred = prediction(&entries);
            let mut store = FavoritesStore::new();
            for h in &hist {
                store.record_insertion(id(&format!("m{:02}", h % probs.len())));
            }
            // An existing favorite: the increment leaves N_favorites and the
            // exponent unchanged.
            let favs: Vec<EmojiId> = store.counts().keys().cloned().collect();
            let target = favs[target_pick % favs.len()].clone();
            let cfg = RerankConfig::with_alpha(alpha);
            let before = rerank(&pred, &store, &cfg).unwrap().position(&target).unwrap();
            store.record_insertion(target.clone());
            let after = rerank(&pred, &store, &cfg).unwrap().position(&target).unwrap();
            prop_assert!(after <= before, "rank fell from {} to {}", before, after);
        }
    }
}
