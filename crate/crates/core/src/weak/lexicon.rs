use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::encoder::words;
use crate::error::{Error, Result};
use crate::io;

/// Tokens after a negation whose valence is sign-flipped.
pub const NEGATION_WINDOW: usize = 3;

pub const DEFAULT_NEGATIONS: [&str; 10] = [
    "not", "no", "never", "nor", "cannot", "don't", "doesn't", "isn't", "wasn't", "aren't",
];

/// Token valences in `[-1, 1]` plus a negation set. Lookups of unknown
/// tokens yield 0.
///
/// File format, one entry per line:
///
/// ```text
/// # comment
/// great	0.8
/// awful	-0.9
/// not	NEG
/// ```
///
/// A file without any `NEG` line uses [`DEFAULT_NEGATIONS`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Lexicon {
    valence: BTreeMap<String, f64>,
    negations: BTreeSet<String>,
}

impl Lexicon {
    pub fn new(
        entries: impl IntoIterator<Item = (String, f64)>,
        negations: impl IntoIterator<Item = String>,
    ) -> Result<Self> {
        let mut valence = BTreeMap::new();
        for (token, v) in entries {
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::config(format!("lexicon[{token}]"), format!("valence {v} outside [-1, 1]")));
            }
            valence.insert(token.to_lowercase(), v);
        }
        Ok(Lexicon {
            valence,
            negations: negations.into_iter().map(|n| n.to_lowercase()).collect(),
        })
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        let mut negations = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message,
            };
            let (token, value) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected `token<TAB>valence`".into()))?;
            if value.trim() == "NEG" {
                negations.push(token.to_owned());
                continue;
            }
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("bad valence `{value}`: {e}")))?;
            if !(-1.0..=1.0).contains(&v) {
                return Err(parse_err(format!("valence {v} outside [-1, 1]")));
            }
            entries.push((token.to_owned(), v));
        }
        if negations.is_empty() {
            negations = DEFAULT_NEGATIONS.iter().map(|s| s.to_string()).collect();
        }
        Lexicon::new(entries, negations)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Lexicon::parse(&io::read_to_string(path)?, path)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (t, v) in &self.valence {
            out.push_str(&format!("{t}\t{v}\n"));
        }
        for n in &self.negations {
            out.push_str(&format!("{n}\tNEG\n"));
        }
        out
    }

    pub fn valence(&self, token: &str) -> Option<f64> {
        self.valence.get(token).copied()
    }

    pub fn is_negation(&self, token: &str) -> bool {
        self.negations.contains(token)
    }

    pub fn len(&self) -> usize {
        self.valence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valence.is_empty()
    }
}

/// Mean valence of lexicon tokens in `text`. A negation token flips the sign
/// of the next [`NEGATION_WINDOW`] tokens; 0 when nothing matches.
pub fn sentiment_score(text: &str, lexicon: &Lexicon) -> f64 {
    let mut sum = 0.0;
    let mut matched = 0usize;
    let mut flip_left = 0usize;
    for w in words(text, true) {
        if lexicon.is_negation(&w) {
            flip_left = NEGATION_WINDOW;
            continue;
        }
        if let Some(v) = lexicon.valence(&w) {
            sum += if flip_left > 0 { -v } else { v };
            matched += 1;
        }
        flip_left = flip_left.saturating_sub(1);
    }
    if matched == 0 {
        0.0
    } else {
        (sum / matched as f64).clamp(-1.0, 1.0)
    }
}
