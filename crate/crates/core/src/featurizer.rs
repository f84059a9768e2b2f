//! Text → hashed sparse n-gram features.
//!
//! The pipeline is fixed: lowercase, split on whitespace and punctuation
//! (each punctuation character is its own token), keep the first
//! `max_tokens` tokens, then hash every unigram and adjacent bigram with
//! 64-bit FNV-1a over the UTF-8 bytes. Bigrams join their tokens with a
//! 0x1F unit separator. The bucket is the hash modulo `n_buckets`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::lexicon::fnv1a64;

/// Hash function name recorded in model containers.
pub const HASH_NAME: &str = "fnv1a64";

const MIN_BUCKETS: u32 = 1 << 10;
const BIGRAM_SEPARATOR: u8 = 0x1F;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeaturizerError {
    #[error("n_buckets must be a power of two >= {MIN_BUCKETS}, got {0}")]
    Buckets(u32),
    #[error("max_tokens must be positive")]
    MaxTokens,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    pub n_buckets: u32,
    pub use_bigrams: bool,
    pub max_tokens: usize,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig { n_buckets: 1 << 18, use_bigrams: true, max_tokens: 50 }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<(), FeaturizerError> {
        if self.n_buckets < MIN_BUCKETS || !self.n_buckets.is_power_of_two() {
            return Err(FeaturizerError::Buckets(self.n_buckets));
        }
        if self.max_tokens == 0 {
            return Err(FeaturizerError::MaxTokens);
        }
        Ok(())
    }
}

/// Sparse bag of hashed features: strictly increasing bucket ids with their
/// occurrence counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureVector {
    indices: Vec<u32>,
    counts: Vec<u32>,
}

impl FeatureVector {
    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn total_count(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.indices.iter().copied().zip(self.counts.iter().copied())
    }

    fn from_buckets(mut buckets: Vec<u32>) -> Self {
        buckets.sort_unstable();
        let mut indices: Vec<u32> = Vec::with_capacity(buckets.len());
        let mut counts: Vec<u32> = Vec::with_capacity(buckets.len());
        for b in buckets {
            match indices.last() {
                Some(&last) if last == b => *counts.last_mut().unwrap() += 1,
                _ => {
                    indices.push(b);
                    counts.push(1);
                }
            }
        }
        FeatureVector { indices, counts }
    }
}

fn is_punctuation(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Lowercased tokens, untruncated.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in lower.chars() {
        if c.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if is_punctuation(c) {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(c.to_string());
        } else {
            current.push(c);
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

pub fn featurize(config: &FeaturizerConfig, text: &str) -> FeatureVector {
    let mut tokens = tokenize(text);
    tokens.truncate(config.max_tokens);
    let modulus = u64::from(config.n_buckets);
    let bucket = |bytes: &[u8]| (fnv1a64(bytes) % modulus) as u32;

    let mut buckets: Vec<u32> = tokens.iter().map(|t| bucket(t.as_bytes())).collect();
    if config.use_bigrams {
        let mut joined = Vec::new();
        for pair in tokens.windows(2) {
            joined.clear();
            joined.extend_from_slice(pair[0].as_bytes());
            joined.push(BIGRAM_SEPARATOR);
            joined.extend_from_slice(pair[1].as_bytes());
            buckets.push(bucket(&joined));
        }
    }
    FeatureVector::from_buckets(buckets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text_is_empty_vector() {
        let cfg = FeaturizerConfig::default();
        assert!(featurize(&cfg, "").is_empty());
        assert!(featurize(&cfg, " \t\n ").is_empty());
    }

    #[test]
    fn case_folding_merges_repeated_tokens() {
        let cfg = FeaturizerConfig { use_bigrams: false, ..Default::default() };
        let v = featurize(&cfg, "Pizza pizza");
        assert_eq!(v.indices(), &[83909]);
        assert_eq!(v.counts(), &[2]);
    }

    #[test]
    fn fnv_reference_values() {
        // Reference values from an independent FNV-1a implementation.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"pizza"), 7318146421626587077);
        assert_eq!(fnv1a64(b"time"), 2185518981507421060);
        assert_eq!(fnv1a64(b"pizza\x1ftime"), 5420407891036728615);
    }

    #[test]
    fn two_tokens_give_two_unigrams_and_one_bigram() {
        let v = featurize(&FeaturizerConfig::default(), "pizza time");
        assert_eq!(v.indices(), &[83909, 234372, 257319]);
        assert_eq!(v.counts(), &[1, 1, 1]);
    }

    #[test]
    fn punctuation_is_tokenized_separately() {
        assert_eq!(tokenize("Hey!! you, there"), vec!["hey", "!", "!", "you", ",", "there"]);
        assert_eq!(tokenize("ÉCOLE ünd"), vec!["école", "ünd"]);
    }

    #[test]
    fn config_validation() {
        assert!(FeaturizerConfig::default().validate().is_ok());
        let bad = FeaturizerConfig { n_buckets: 1000, ..Default::default() };
        assert_eq!(bad.validate(), Err(FeaturizerError::Buckets(1000)));
        let small = FeaturizerConfig { n_buckets: 512, ..Default::default() };
        assert!(small.validate().is_err());
        let zero = FeaturizerConfig { max_tokens: 0, ..Default::default() };
        assert_eq!(zero.validate(), Err(FeaturizerError::MaxTokens));
    }

    proptest! {
        #[test]
        fn indices_are_sorted_unique_and_in_range(text in "\\PC{0,80}", shift in 10u32..20) {
            let cfg = FeaturizerConfig { n_buckets: 1 << shift, ..Default::default() };
            let v = featurize(&cfg, &text);
            prop_assert!(v.indices().windows(2).all(|w| w[0] < w[1]));
            prop_assert!(v.indices().iter().all(|&i| i < cfg.n_buckets));
            prop_assert!(v.counts().iter().all(|&c| c >= 1));
            prop_assert_eq!(v.is_empty(), text.trim().is_empty());
        }

        #[test]
        fn truncation_ignores_tail(words in prop::collection::vec("[a-z]{1,6}", 1..12), a in "[a-z]{1,6}", b in "[a-z]{1,6}") {
            let cfg = FeaturizerConfig { max_tokens: words.len(), ..Default::default() };
            let head = words.join(" ");
            let v1 = featurize(&cfg, &format!("{head} {a}"));
            let v2 = featurize(&cfg, &format!("{head} {b} {a}"));
            prop_assert_eq!(v1, v2);
        }
    }
}
