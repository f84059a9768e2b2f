//! Emoji vocabularies, labeled corpora, coverage analysis and synthetic
//! Zipf-imbalanced corpus generation.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("emoji id must be non-empty")]
    EmptyEmoji,
    #[error("example text is empty")]
    EmptyText,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("label {0} is not in the vocabulary")]
    UnknownLabel(EmojiId),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io { path: path.to_path_buf(), source }
    }
}

/// One emoji class: the exact codepoint sequence, whitespace-trimmed.
///
/// Ordering is lexicographic on codepoints (byte order of UTF-8 agrees).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EmojiId(String);

impl EmojiId {
    pub fn new(s: impl AsRef<str>) -> Result<Self, CorpusError> {
        let trimmed = s.as_ref().trim();
        if trimmed.is_empty() {
            return Err(CorpusError::EmptyEmoji);
        }
        Ok(EmojiId(trimmed.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for EmojiId {
    type Error = CorpusError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        EmojiId::new(s)
    }
}

impl From<EmojiId> for String {
    fn from(id: EmojiId) -> String {
        id.0
    }
}

impl fmt::Display for EmojiId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for EmojiId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EmojiId({})", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    #[default]
    Human,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    text: String,
    label: EmojiId,
    origin: Origin,
}

impl LabeledExample {
    pub fn new(text: impl Into<String>, label: EmojiId, origin: Origin) -> Result<Self, CorpusError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyText);
        }
        Ok(LabeledExample { text, label, origin })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn label(&self) -> &EmojiId {
        &self.label
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VocabEntry {
    emoji: EmojiId,
    count: u64,
}

/// Emoji classes ordered by descending count, ties by codepoints. The
/// position of a class is its class id.
#[derive(Debug, Clone, Default)]
pub struct EmojiVocabulary {
    classes: Vec<EmojiId>,
    counts: Vec<u64>,
    index: HashMap<EmojiId, usize>,
}

impl PartialEq for EmojiVocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.classes == other.classes && self.counts == other.counts
    }
}

impl EmojiVocabulary {
    /// Builds a vocabulary from arbitrary `(emoji, count)` pairs, restoring
    /// the ordering invariant. Duplicate emoji have their counts summed.
    pub fn from_counts(pairs: impl IntoIterator<Item = (EmojiId, u64)>) -> Self {
        let mut merged: HashMap<EmojiId, u64> = HashMap::new();
        for (id, count) in pairs {
            *merged.entry(id).or_default() += count;
        }
        let mut entries: Vec<(EmojiId, u64)> = merged.into_iter().collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_sorted(entries)
    }

    fn from_sorted(entries: Vec<(EmojiId, u64)>) -> Self {
        let index = entries.iter().enumerate().map(|(i, (id, _))| (id.clone(), i)).collect();
        let (classes, counts) = entries.into_iter().unzip();
        EmojiVocabulary { classes, counts, index }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[EmojiId] {
        &self.classes
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn class_id(&self, emoji: &EmojiId) -> Option<usize> {
        self.index.get(emoji).copied()
    }

    pub fn contains(&self, emoji: &EmojiId) -> bool {
        self.index.contains_key(emoji)
    }

    pub fn count_of(&self, emoji: &EmojiId) -> u64 {
        self.class_id(emoji).map_or(0, |i| self.counts[i])
    }

    /// The least frequent ⌈n/4⌉ classes, rarest last.
    pub fn tail_quartile(&self) -> &[EmojiId] {
        let n = self.classes.len();
        &self.classes[n - n.div_ceil(4)..]
    }

    pub fn to_json(&self) -> String {
        let entries: Vec<VocabEntry> = self
            .classes
            .iter()
            .zip(&self.counts)
            .map(|(emoji, &count)| VocabEntry { emoji: emoji.clone(), count })
            .collect();
        serde_json::to_string_pretty(&entries).expect("vocabulary serializes")
    }

    /// Parses a vocabulary file. Order in the file is ignored; the ordering
    /// invariant is re-established.
    pub fn from_json(s: &str) -> Result<Self, CorpusError> {
        let entries: Vec<VocabEntry> =
            serde_json::from_str(s).map_err(|e| CorpusError::Parse { line: e.line(), message: e.to_string() })?;
        Ok(Self::from_counts(entries.into_iter().map(|e| (e.emoji, e.count))))
    }
}

/// Top `max_classes` emoji by label frequency.
pub fn build_vocabulary(examples: &[LabeledExample], max_classes: usize) -> Result<EmojiVocabulary, CorpusError> {
    if examples.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    if max_classes == 0 {
        return Err(CorpusError::InvalidArgument("max_classes must be positive".into()));
    }
    let full = EmojiVocabulary::from_counts(examples.iter().map(|e| (e.label.clone(), 1)));
    let entries = full.classes.into_iter().zip(full.counts).take(max_classes).collect();
    Ok(EmojiVocabulary::from_sorted(entries))
}

/// Cumulative share of examples covered by the top-K classes, for
/// K = 1..=|classes|. The last point is exactly 1.0.
pub fn coverage_curve(vocab: &EmojiVocabulary) -> Result<Vec<(usize, f64)>, CorpusError> {
    let total = vocab.total();
    if total == 0 {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut running = 0u64;
    Ok(vocab
        .counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            running += c;
            (i + 1, running as f64 / total as f64)
        })
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    examples: Vec<LabeledExample>,
    vocabulary: EmojiVocabulary,
}

impl Corpus {
    /// Wraps examples, deriving the vocabulary from their labels. An empty
    /// list gives an empty corpus.
    pub fn from_examples(examples: Vec<LabeledExample>) -> Self {
        let vocabulary = EmojiVocabulary::from_counts(examples.iter().map(|e| (e.label.clone(), 1)));
        Corpus { examples, vocabulary }
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn vocabulary(&self) -> &EmojiVocabulary {
        &self.vocabulary
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn into_examples(self) -> Vec<LabeledExample> {
        self.examples
    }

    /// Line-delimited JSON records, one per example.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for ex in &self.examples {
            let rec = Record { text: ex.text.clone(), emoji: ex.label.to_string(), origin: Some(ex.origin) };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(reader: impl BufRead) -> Result<Self, CorpusError> {
        let mut examples = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| CorpusError::Parse { line: line_no, message: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| CorpusError::Parse { line: line_no, message };
            let rec: Record = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            let label = EmojiId::new(&rec.emoji).map_err(|e| parse_err(e.to_string()))?;
            let ex = LabeledExample::new(rec.text, label, rec.origin.unwrap_or_default())
                .map_err(|e| parse_err(e.to_string()))?;
            examples.push(ex);
        }
        if examples.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        Ok(Corpus::from_examples(examples))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    text: String,
    emoji: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    origin: Option<Origin>,
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    Corpus::from_jsonl(BufReader::new(file))
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(corpus.to_jsonl().as_bytes()).and_then(|_| w.flush()).map_err(|e| CorpusError::io(path, e))
}

pub fn save_vocabulary(vocab: &EmojiVocabulary, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    std::fs::write(path, vocab.to_json() + "\n").map_err(|e| CorpusError::io(path, e))
}

pub fn load_vocabulary(path: impl AsRef<Path>) -> Result<EmojiVocabulary, CorpusError> {
    let path = path.as_ref();
    let s = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    EmojiVocabulary::from_json(&s)
}

fn is_pictographic(c: char) -> bool {
    matches!(u32::from(c),
        0x1F000..=0x1FAFF
        | 0x2600..=0x27BF
        | 0x2300..=0x23FF
        | 0x2B00..=0x2BFF
        | 0x2190..=0x21FF
        | 0x3030 | 0x303D | 0x3297 | 0x3299
        | 0x00A9 | 0x00AE | 0x203C | 0x2049 | 0x2122 | 0x2139)
}

fn is_emoji_continuation(c: char) -> bool {
    matches!(u32::from(c),
        0xFE0F | 0x20E3 | 0x1F3FB..=0x1F3FF | 0xE0020..=0xE007F)
}

/// Splits raw text into the text with emoji removed and the emoji found, in
/// order. ZWJ sequences, modifiers, keycaps and flag pairs stay whole.
pub fn split_emojis(text: &str) -> (String, Vec<EmojiId>) {
    let chars: Vec<char> = text.chars().collect();
    let mut stripped = String::with_capacity(text.len());
    let mut found = Vec::new();
    let mut i = 0;
    let is_regional = |c: char| (0x1F1E6..=0x1F1FF).contains(&u32::from(c));
    while i < chars.len() {
        let c = chars[i];
        if !is_pictographic(c) {
            stripped.push(c);
            i += 1;
            continue;
        }
        let start = i;
        i += 1;
        if is_regional(c) && i < chars.len() && is_regional(chars[i]) {
            i += 1;
        }
        loop {
            if i < chars.len() && is_emoji_continuation(chars[i]) {
                i += 1;
            } else if i + 1 < chars.len() && chars[i] == '\u{200D}' && is_pictographic(chars[i + 1]) {
                i += 2;
            } else {
                break;
            }
        }
        let seq: String = chars[start..i].iter().collect();
        found.push(EmojiId(seq));
    }
    let stripped = stripped.split_whitespace().collect::<Vec<_>>().join(" ");
    (stripped, found)
}

/// Turns one raw message into labeled examples: one per emoji occurrence,
/// each with every emoji stripped from the text. Messages with no emoji or
/// no remaining text yield nothing.
pub fn examples_from_raw(text: &str, origin: Origin) -> Vec<LabeledExample> {
    let (stripped, emojis) = split_emojis(text);
    emojis.into_iter().filter_map(|label| LabeledExample::new(stripped.clone(), label, origin).ok()).collect()
}

const FRAMES: &[&str] = &[
    "{}",
    "so much {} today",
    "can't stop thinking about {}",
    "omg {}",
    "{} again lol",
    "honestly {} is everything",
    "just {} with the crew",
    "we need more {} in here",
    "is it {} time yet",
    "{} all weekend",
    "that was pure {}",
    "sending you {}",
    "{} vibes only",
    "why is everyone talking about {}",
    "feeling {} right now",
    "ok but {} though",
    "me and my {} era",
    "{} {} {}",
    "not me doing {} at 2am",
    "tell me about the {}",
    "remember the {} last year",
    "{} or nothing",
];

const FILLER: &[&str] = &[
    "yeah", "really", "tonight", "babe", "guys", "lmao", "tbh", "again", "now", "pls", "bro", "same",
    "literally", "haha", "today", "soon",
];

/// Synthetic corpus whose class frequencies follow a Zipf law over
/// `n_classes` emoji from [`lexicon::emoji_inventory`].
///
/// Class of rank r (1-based) is drawn with probability ∝ r^(−exponent).
/// Each example fills a sentence frame with one of the class's cue words;
/// some examples mix in a cue from another class, and a few carry no cue
/// of their own, so the task is learnable but not trivially separable.
pub fn generate_zipf_corpus(n_classes: usize, n_examples: usize, zipf_exponent: f64, seed: u64) -> Result<Corpus, CorpusError> {
    if n_classes < 2 {
        return Err(CorpusError::InvalidArgument("n_classes must be at least 2".into()));
    }
    if n_examples == 0 {
        return Err(CorpusError::InvalidArgument("n_examples must be positive".into()));
    }
    if !(zipf_exponent >= 0.0 && zipf_exponent.is_finite()) {
        return Err(CorpusError::InvalidArgument("zipf_exponent must be non-negative".into()));
    }
    let inventory = lexicon::emoji_inventory(n_classes);
    if inventory.len() < n_classes {
        return Err(CorpusError::InvalidArgument(format!("at most {} classes available", inventory.len())));
    }
    let cues: Vec<Vec<String>> = inventory.iter().map(|e| lexicon::cue_words(e, 2)).collect();
    let labels: Vec<EmojiId> = inventory.iter().map(|e| EmojiId(e.clone())).collect();
    let sampler = zipf_sampler(n_classes, zipf_exponent);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut examples = Vec::with_capacity(n_examples);
    for _ in 0..n_examples {
        let class = sampler.sample(&mut rng);
        let frame = FRAMES[rng.random_range(0..FRAMES.len())];
        let own = &cues[class][rng.random_range(0..cues[class].len())];
        let roll: f64 = rng.random();
        let mut text = if roll < 0.12 {
            // no cue of its own; only a distractor
            let other = sampler.sample(&mut rng);
            frame.replace("{}", &cues[other][0])
        } else {
            frame.replace("{}", own)
        };
        if (0.12..0.40).contains(&roll) {
            let other = sampler.sample(&mut rng);
            let distractor = &cues[other][rng.random_range(0..cues[other].len())];
            text = format!("{text} and {distractor}");
        }
        if rng.random_bool(0.5) {
            text.push(' ');
            text.push_str(FILLER[rng.random_range(0..FILLER.len())]);
        }
        examples.push(LabeledExample { text, label: labels[class].clone(), origin: Origin::Human });
    }
    Ok(Corpus::from_examples(examples))
}

/// Probability mass of each Zipf rank, normalized.
pub fn zipf_weights(n_classes: usize, exponent: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=n_classes).map(|r| (r as f64).powf(-exponent)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn zipf_sampler(n_classes: usize, exponent: f64) -> WeightedIndex<f64> {
    WeightedIndex::new(zipf_weights(n_classes, exponent)).expect("zipf weights are positive")
}
