//! Reference training modes: clean-only, weak-only, merged clean+weak, and
//! majority-vote aggregation of the weak sources.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::{Sample, TrainData, TrainMode};

/// Strict majority of `votes`; a tie yields `tie_label`.
pub fn majority_vote(votes: &[u8], tie_label: u8) -> Option<u8> {
    if votes.is_empty() {
        return None;
    }
    let ones = votes.iter().filter(|&&v| v == 1).count();
    let zeros = votes.len() - ones;
    Some(match ones.cmp(&zeros) {
        std::cmp::Ordering::Greater => 1,
        std::cmp::Ordering::Less => 0,
        std::cmp::Ordering::Equal => tie_label,
    })
}

/// Training modes; everything except `Mwss` is a baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "mwss")]
    Mwss,
    #[serde(rename = "clean")]
    CleanOnly,
    #[serde(rename = "weak")]
    WeakOnly,
    #[serde(rename = "merged")]
    CleanPlusWeak,
    #[serde(rename = "majority")]
    MajorityVoteMerge,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Mwss,
        Method::CleanOnly,
        Method::WeakOnly,
        Method::CleanPlusWeak,
        Method::MajorityVoteMerge,
    ];

    /// Short name used on the command line and in CSV rows.
    pub fn name(self) -> &'static str {
        match self {
            Method::Mwss => "mwss",
            Method::CleanOnly => "clean",
            Method::WeakOnly => "weak",
            Method::CleanPlusWeak => "merged",
            Method::MajorityVoteMerge => "majority",
        }
    }

    pub fn train_mode(self) -> TrainMode {
        match self {
            Method::Mwss => TrainMode::MWSS,
            _ => TrainMode::UNIT_WEIGHTS,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config("mode", format!("unknown mode `{s}` (mwss, clean, weak, merged, majority)")))
    }
}

/// Collapses several weak sets into one by per-news majority vote over the
/// sources that labeled the item. Output sorted by id.
pub fn merge_by_majority(weak: &[Vec<Sample>], tie_label: u8) -> Vec<Sample> {
    let mut votes: BTreeMap<&str, (Vec<u8>, &Sample)> = BTreeMap::new();
    for set in weak {
        for s in set {
            votes.entry(&s.id).or_insert_with(|| (Vec::new(), s)).0.push(s.label);
        }
    }
    votes
        .into_values()
        .map(|(v, s)| Sample {
            label: majority_vote(&v, tie_label).expect("at least one vote"),
            ..s.clone()
        })
        .collect()
}

/// Training data for `method` from the clean mix, validation set and the
/// per-source weak sets.
pub fn datasets_for(
    method: Method,
    clean: &[Sample],
    val: &[Sample],
    weak: &[Vec<Sample>],
    tie_label: u8,
) -> Result<TrainData> {
    let has_weak = weak.iter().any(|w| !w.is_empty());
    let mismatch = |why: &str| Err(Error::config("mode", format!("{method}: {why}")));
    let data = match method {
        Method::CleanOnly => {
            if clean.is_empty() {
                return mismatch("needs clean training data");
            }
            TrainData {
                clean: clean.to_vec(),
                val: val.to_vec(),
                weak: Vec::new(),
            }
        }
        Method::WeakOnly => {
            if !has_weak {
                return mismatch("needs weak data");
            }
            let mut pooled: Vec<Sample> = weak.iter().flatten().cloned().collect();
            pooled.sort_by(|a, b| a.id.cmp(&b.id).then(a.label.cmp(&b.label)));
            TrainData {
                clean: pooled,
                val: val.to_vec(),
                weak: Vec::new(),
            }
        }
        Method::Mwss | Method::CleanPlusWeak => {
            if !has_weak {
                return mismatch("needs weak data");
            }
            TrainData {
                clean: clean.to_vec(),
                val: val.to_vec(),
                weak: weak.to_vec(),
            }
        }
        Method::MajorityVoteMerge => {
            if !has_weak {
                return mismatch("needs weak data");
            }
            TrainData {
                clean: clean.to_vec(),
                val: val.to_vec(),
                weak: vec![merge_by_majority(weak, tie_label)],
            }
        }
    };
    Ok(data)
}

/// Number of weak heads the model needs for `method` with `k` sources.
pub fn heads_for(method: Method, k: usize) -> usize {
    match method {
        Method::Mwss | Method::CleanPlusWeak => k.max(1),
        _ => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn vote_examples() {
        assert_eq!(majority_vote(&[1, 1, 0], 0), Some(1));
        assert_eq!(majority_vote(&[1, 0], 0), Some(0));
        assert_eq!(majority_vote(&[1, 0], 1), Some(1));
        assert_eq!(majority_vote(&[0, 0, 1], 0), Some(0));
        assert_eq!(majority_vote(&[], 0), None);
    }

    fn s(id: &str, label: u8) -> Sample {
        Sample {
            id: id.into(),
            tokens: vec![1],
            label,
        }
    }

    #[test]
    fn merge_counts_only_labeling_sources() {
        let weak = vec![
            vec![s("a", 1), s("b", 0)],
            vec![s("a", 1), s("b", 1), s("c", 1)],
            vec![s("a", 0)],
        ];
        let merged = merge_by_majority(&weak, 0);
        let got: Vec<(&str, u8)> = merged.iter().map(|m| (m.id.as_str(), m.label)).collect();
        assert_eq!(got, vec![("a", 1), ("b", 0), ("c", 1)]);
    }

    #[test]
    fn mode_dataset_mismatch_rejected() {
        let val = vec![s("v", 0)];
        assert!(datasets_for(Method::CleanOnly, &[], &val, &[], 0).is_err());
        assert!(datasets_for(Method::Mwss, &[s("c", 1)], &val, &[vec![]], 0).is_err());
        let weak_only = datasets_for(Method::WeakOnly, &[], &val, &[vec![s("w", 1)], vec![s("w", 0)]], 0).unwrap();
        assert_eq!(weak_only.clean.len(), 2);
        assert!(weak_only.weak.is_empty());
        assert_eq!("merged".parse::<Method>().unwrap(), Method::CleanPlusWeak);
        assert!("snorkel".parse::<Method>().is_err());
    }

    proptest! {
        #[test]
        fn vote_is_permutation_invariant(mut votes in prop::collection::vec(0u8..2, 1..9), tie in 0u8..2) {
            let a = majority_vote(&votes, tie);
            votes.reverse();
            prop_assert_eq!(a, majority_vote(&votes, tie));
        }
    }
}
