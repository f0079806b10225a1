use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::error::{Error, Result};

/// Reserved id for padding positions.
pub const PAD_ID: u32 = 0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    pub max_len: usize,
    /// Number of hash buckets including the pad id.
    pub vocab_size: usize,
    pub lowercase: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            max_len: 256,
            vocab_size: 1 << 15,
            lowercase: true,
        }
    }
}

impl TokenizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_len == 0 {
            return Err(Error::config("tokenizer.max_len", "must be positive"));
        }
        if self.vocab_size < 2 {
            return Err(Error::config(
                "tokenizer.vocab_size",
                "needs at least one bucket besides the pad id",
            ));
        }
        Ok(())
    }
}

/// 64-bit FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Unicode word segments of `text`, lowercased when requested.
pub fn words(text: &str, lowercase: bool) -> impl Iterator<Item = String> + '_ {
    text.unicode_words().map(move |w| {
        if lowercase {
            w.to_lowercase()
        } else {
            w.to_owned()
        }
    })
}

pub fn token_id(word: &str, config: &TokenizerConfig) -> u32 {
    let buckets = (config.vocab_size - 1) as u64;
    (1 + fnv1a(word.as_bytes()) % buckets) as u32
}

/// Hashes word segments into `[1, V)`, truncating or padding with
/// [`PAD_ID`] to exactly `max_len` ids.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<u32> {
    let mut ids: Vec<u32> = words(text, config.lowercase)
        .take(config.max_len)
        .map(|w| token_id(&w, config))
        .collect();
    ids.resize(config.max_len, PAD_ID);
    ids
}

/// Number of leading non-pad ids.
pub fn content_len(ids: &[u32]) -> usize {
    ids.iter().position(|&t| t == PAD_ID).unwrap_or(ids.len())
}
