//! Tag-driven synthetic data for rare emoji classes.
//!
//! Pipeline: ask a generator for one-word descriptions of each emoji, write
//! the emoji → tags mapping to a file an operator can review, generate
//! sentences that use each tag, label every sentence with the tag's emoji,
//! and merge the result into the human corpus.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, EmojiId, EmojiVocabulary, LabeledExample, Origin};
use crate::lexicon;

/// Prompt sent to a remote generator for tags; `<emoji>` is substituted.
pub const TAG_PROMPT: &str = "Get me a textual description consisting of only one word for <emoji> separated by comma.";

/// Prompt sent to a remote generator for one sentence; `<tag>` is substituted.
pub const SENTENCE_PROMPT: &str =
    "Write one short, casual chat message that uses the word \"<tag>\". Reply with the message only.";

const MAX_ATTEMPTS: usize = 3;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("generator failed: {0}")]
    Adapter(String),
    #[error("synthetic label {0} is not in the base vocabulary")]
    UnknownLabel(EmojiId),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("environment variable {0} is not set")]
    MissingEnv(&'static str),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

pub fn tag_prompt(emoji: &EmojiId) -> String {
    TAG_PROMPT.replace("<emoji>", emoji.as_str())
}

pub fn sentence_prompt(tag: &str) -> String {
    SENTENCE_PROMPT.replace("<tag>", tag)
}

/// Splits a comma-separated reply into tags: trimmed, lowercased, stripped
/// of surrounding punctuation, deduplicated. Empty and multi-word entries
/// are dropped.
pub fn parse_tag_reply(reply: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    reply
        .split(',')
        .map(|t| t.trim().trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty() && !t.chars().any(char::is_whitespace))
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

/// True if `tag` occurs in `text` as a whole word, ignoring case.
pub fn contains_whole_word(text: &str, tag: &str) -> bool {
    let text = text.to_lowercase();
    let tag = tag.to_lowercase();
    if tag.is_empty() {
        return false;
    }
    text.match_indices(&tag).any(|(start, m)| {
        let before = text[..start].chars().next_back();
        let after = text[start + m.len()..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    })
}

/// A text generator that can describe emoji and write sentences.
pub trait GeneratorAdapter: Send + Sync {
    /// Raw reply to the tag prompt for `emoji`.
    fn tag_reply(&self, emoji: &EmojiId) -> Result<String, AugmentError>;

    fn generate_sentence(&self, tag: &str, style_seed: u64) -> Result<String, AugmentError>;

    fn generate_tags(&self, emoji: &EmojiId) -> Result<Vec<String>, AugmentError> {
        Ok(parse_tag_reply(&self.tag_reply(emoji)?))
    }
}

const TEMPLATES: &[&str] = &[
    "I really want some {tag} tonight",
    "that {tag} was amazing",
    "can we talk about {tag} for a sec",
    "nothing beats {tag} on a friday",
    "{tag} is all I can think about",
    "just saw the best {tag} ever",
    "my whole day was {tag}",
    "who else is into {tag}",
    "send me pics of the {tag}",
    "can't believe the {tag} today",
    "{tag} mood all week",
    "ok {tag} time",
    "so much {tag} in one place",
    "we should get {tag} later",
    "tell me more about your {tag}",
    "this {tag} though",
    "still thinking about that {tag}",
    "feeling very {tag} right now",
    "the {tag} situation is wild",
    "brb {tag}",
    "a little {tag} never hurt anyone",
    "living for the {tag}",
    "{tag} with you is the best",
    "why is {tag} so good",
];
const PREFIXES: &[&str] = &["", "omg ", "lol ", "honestly ", "ngl ", "wait ", "yo ", "hey "];
const SUFFIXES: &[&str] = &["", "!", "!!", " haha", " tbh", " rn", " fr", " 😅"];

/// Deterministic offline generator: tags from the bundled lexicon, sentences
/// from a template bank selected by the style seed.
#[derive(Debug, Clone)]
pub struct OfflineAdapter {
    /// Fall back to the lexicon's pseudo-word for emoji outside the static
    /// table; otherwise such emoji fail and end up unmapped.
    pub pseudo_word_fallback: bool,
}

impl Default for OfflineAdapter {
    fn default() -> Self {
        OfflineAdapter { pseudo_word_fallback: true }
    }
}

impl GeneratorAdapter for OfflineAdapter {
    fn tag_reply(&self, emoji: &EmojiId) -> Result<String, AugmentError> {
        match lexicon::static_tags(emoji.as_str()) {
            Some(tags) => Ok(tags.join(", ")),
            None if self.pseudo_word_fallback => Ok(lexicon::tags_for(emoji.as_str()).join(", ")),
            None => Err(AugmentError::Adapter(format!("no dictionary entry for {emoji}"))),
        }
    }

    fn generate_sentence(&self, tag: &str, style_seed: u64) -> Result<String, AugmentError> {
        let t = TEMPLATES.len() as u64;
        let p = PREFIXES.len() as u64;
        let s = SUFFIXES.len() as u64;
        let template = TEMPLATES[(style_seed % t) as usize];
        let prefix = PREFIXES[(style_seed / t % p) as usize];
        let suffix = SUFFIXES[(style_seed / t / p % s) as usize];
        Ok(format!("{prefix}{}{suffix}", template.replace("{tag}", tag)))
    }
}

/// HTTP generator: `POST {prompt}` → `{text}` at a single endpoint.
#[derive(Debug, Clone)]
pub struct RemoteAdapter {
    url: String,
    token: Option<String>,
    max_retries: u32,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

impl RemoteAdapter {
    pub fn new(url: impl Into<String>, token: Option<String>, timeout: Duration, max_retries: u32) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        RemoteAdapter { url: url.into(), token, max_retries, agent }
    }

    /// Endpoint from `EMOJI_GEN_URL`, bearer token from `EMOJI_GEN_TOKEN`.
    pub fn from_env(timeout: Duration, max_retries: u32) -> Result<Self, AugmentError> {
        let url = std::env::var("EMOJI_GEN_URL").map_err(|_| AugmentError::MissingEnv("EMOJI_GEN_URL"))?;
        let token = std::env::var("EMOJI_GEN_TOKEN").ok().filter(|t| !t.is_empty());
        Ok(Self::new(url, token, timeout, max_retries))
    }

    pub fn complete(&self, prompt: &str) -> Result<String, AugmentError> {
        let mut last_err = String::new();
        for attempt in 0..=self.max_retries {
            let mut req = self.agent.post(&self.url);
            if let Some(token) = &self.token {
                req = req.header("Authorization", &format!("Bearer {token}"));
            }
            match req.send_json(GenerateRequest { prompt }) {
                Ok(mut resp) => match resp.body_mut().read_json::<GenerateResponse>() {
                    Ok(body) => return Ok(body.text),
                    Err(e) => last_err = format!("bad response body: {e}"),
                },
                Err(e) => last_err = e.to_string(),
            }
            log::debug!("generator attempt {} failed: {last_err}", attempt + 1);
        }
        Err(AugmentError::Adapter(last_err))
    }
}

impl GeneratorAdapter for RemoteAdapter {
    fn tag_reply(&self, emoji: &EmojiId) -> Result<String, AugmentError> {
        self.complete(&tag_prompt(emoji))
    }

    fn generate_sentence(&self, tag: &str, _style_seed: u64) -> Result<String, AugmentError> {
        self.complete(&sentence_prompt(tag))
    }
}

/// Emoji → one-word tags.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagMapping {
    entries: BTreeMap<EmojiId, Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TagRecord {
    emoji: EmojiId,
    tags: Vec<String>,
}

impl TagMapping {
    /// Inserts cleaned tags; an emoji with no valid tag is not inserted.
    pub fn insert(&mut self, emoji: EmojiId, tags: Vec<String>) -> bool {
        let tags = parse_tag_reply(&tags.join(","));
        if tags.is_empty() {
            return false;
        }
        self.entries.insert(emoji, tags);
        true
    }

    pub fn tags(&self, emoji: &EmojiId) -> Option<&[String]> {
        self.entries.get(emoji).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EmojiId, &[String])> {
        self.entries.iter().map(|(e, t)| (e, t.as_slice()))
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|(emoji, tags)| {
                let rec = TagRecord { emoji: emoji.clone(), tags: tags.clone() };
                serde_json::to_string(&rec).expect("tag record serializes") + "\n"
            })
            .collect()
    }

    pub fn from_jsonl(reader: impl BufRead) -> Result<Self, AugmentError> {
        let mut mapping = TagMapping::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| AugmentError::Parse { line: i + 1, message: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TagRecord =
                serde_json::from_str(&line).map_err(|e| AugmentError::Parse { line: i + 1, message: e.to_string() })?;
            mapping.insert(rec.emoji, rec.tags);
        }
        Ok(mapping)
    }
}

pub fn save_tag_mapping(mapping: &TagMapping, path: impl AsRef<Path>) -> Result<(), AugmentError> {
    let path = path.as_ref();
    std::fs::write(path, mapping.to_jsonl()).map_err(|source| AugmentError::Io { path: path.to_path_buf(), source })
}

pub fn load_tag_mapping(path: impl AsRef<Path>) -> Result<TagMapping, AugmentError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| AugmentError::Io { path: path.to_path_buf(), source })?;
    TagMapping::from_jsonl(BufReader::new(file))
}

/// Marker file an operator creates once a mapping file has been reviewed.
pub fn review_marker_path(mapping_path: impl AsRef<Path>) -> PathBuf {
    let mut p = mapping_path.as_ref().as_os_str().to_owned();
    p.push(".reviewed");
    PathBuf::from(p)
}

#[derive(Debug, Clone, Default)]
pub struct TagMappingReport {
    pub mapping: TagMapping,
    /// Emoji without any usable tag, with the reason.
    pub unmapped: Vec<(EmojiId, String)>,
}

/// Runs `f` over `items` on up to `max_in_flight` threads; results come
/// back in input order regardless of completion order.
fn ordered_parallel<T: Sync, R: Send>(items: &[T], max_in_flight: usize, f: impl Fn(usize, &T) -> R + Sync) -> Vec<R> {
    let workers = max_in_flight.max(1).min(items.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(i, &items[i]);
                slots.lock().expect("no poisoned workers")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("no poisoned workers").into_iter().map(|r| r.expect("every slot filled")).collect()
}

/// Asks the adapter for tags of every vocabulary emoji. Failures and
/// tag-less replies land in the unmapped report; the pipeline continues.
pub fn build_tag_mapping(vocab: &EmojiVocabulary, adapter: &dyn GeneratorAdapter, max_in_flight: usize) -> TagMappingReport {
    let replies = ordered_parallel(vocab.classes(), max_in_flight, |_, emoji| adapter.generate_tags(emoji));
    let mut report = TagMappingReport::default();
    for (emoji, reply) in vocab.classes().iter().zip(replies) {
        match reply {
            Ok(tags) if !tags.is_empty() => {
                report.mapping.insert(emoji.clone(), tags);
            }
            Ok(_) => report.unmapped.push((emoji.clone(), "no single-word tag in reply".into())),
            Err(e) => report.unmapped.push((emoji.clone(), e.to_string())),
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    /// Each targeted class is topped up to this many examples.
    pub target_count: u64,
    /// Target only the least frequent quarter of classes.
    pub rare_only_quartile: bool,
    pub dedupe: bool,
}

impl AugmentationPlan {
    pub fn new(target_count: u64) -> Self {
        AugmentationPlan { target_count, rare_only_quartile: false, dedupe: true }
    }

    pub fn rare_only(target_count: u64) -> Self {
        AugmentationPlan { target_count, rare_only_quartile: true, dedupe: true }
    }

    /// Classes the plan targets and their synthetic quotas, in vocabulary order.
    pub fn quotas(&self, base: &EmojiVocabulary) -> Vec<(EmojiId, u64)> {
        let targeted: &[EmojiId] = if self.rare_only_quartile { base.tail_quartile() } else { base.classes() };
        targeted
            .iter()
            .map(|e| (e.clone(), self.target_count.saturating_sub(base.count_of(e))))
            .filter(|(_, q)| *q > 0)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shortfall {
    pub emoji: EmojiId,
    pub requested: u64,
    pub produced: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct SyntheticOutcome {
    /// Synthetic examples only.
    pub corpus: Corpus,
    pub shortfall: Vec<Shortfall>,
}

fn class_seed(seed: u64, emoji: &EmojiId) -> u64 {
    seed ^ lexicon::fnv1a64(emoji.as_str().as_bytes())
}

fn generate_for_class(
    emoji: &EmojiId,
    quota: u64,
    tags: &[String],
    dedupe: bool,
    adapter: &dyn GeneratorAdapter,
    seed: u64,
) -> (Vec<LabeledExample>, Option<Shortfall>) {
    let mut rng = ChaCha8Rng::seed_from_u64(class_seed(seed, emoji));
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut cursor = 0usize;
    let mut draws = 0u64;
    let budget = quota.saturating_mul(8).max(16);
    let mut last_problem = String::new();
    while (out.len() as u64) < quota && draws < budget {
        draws += 1;
        let tag = &tags[cursor % tags.len()];
        let mut valid = None;
        for _ in 0..MAX_ATTEMPTS {
            match adapter.generate_sentence(tag, rng.random()) {
                Ok(s) if contains_whole_word(&s, tag) && !s.trim().is_empty() => {
                    valid = Some(s.trim().to_string());
                    break;
                }
                Ok(s) => last_problem = format!("sentence without tag {tag:?}: {s:?}"),
                Err(e) => last_problem = e.to_string(),
            }
        }
        let Some(text) = valid else {
            cursor += 1;
            continue;
        };
        if dedupe && !seen.insert(text.clone()) {
            last_problem = "duplicate sentences".into();
            continue;
        }
        out.push(LabeledExample::new(text, emoji.clone(), Origin::Synthetic).expect("non-empty text"));
        cursor += 1;
    }
    let produced = out.len() as u64;
    let shortfall = (produced < quota).then(|| Shortfall { emoji: emoji.clone(), requested: quota, produced, reason: last_problem });
    (out, shortfall)
}

/// Generates labeled synthetic sentences for every class the plan targets,
/// round-robin over each class's tags. Classes are processed concurrently
/// and assembled in vocabulary order.
pub fn generate_synthetic(
    mapping: &TagMapping,
    plan: &AugmentationPlan,
    base: &Corpus,
    adapter: &dyn GeneratorAdapter,
    seed: u64,
    max_in_flight: usize,
) -> SyntheticOutcome {
    let quotas = plan.quotas(base.vocabulary());
    let results = ordered_parallel(&quotas, max_in_flight, |_, (emoji, quota)| match mapping.tags(emoji) {
        Some(tags) => generate_for_class(emoji, *quota, tags, plan.dedupe, adapter, seed),
        None => (
            Vec::new(),
            Some(Shortfall { emoji: emoji.clone(), requested: *quota, produced: 0, reason: "no tags in mapping".into() }),
        ),
    });
    let mut examples = Vec::new();
    let mut shortfall = Vec::new();
    for (ex, short) in results {
        examples.extend(ex);
        shortfall.extend(short);
    }
    SyntheticOutcome { corpus: Corpus::from_examples(examples), shortfall }
}

/// Concatenates a base corpus and synthetic examples. Every synthetic label
/// must already exist in the base vocabulary.
pub fn merge(base: &Corpus, synthetic: &Corpus) -> Result<Corpus, AugmentError> {
    if let Some(bad) = synthetic.examples().iter().find(|e| !base.vocabulary().contains(e.label())) {
        return Err(AugmentError::UnknownLabel(bad.label().clone()));
    }
    let mut examples = base.examples().to_vec();
    examples.extend_from_slice(synthetic.examples());
    Ok(Corpus::from_examples(examples))
}
