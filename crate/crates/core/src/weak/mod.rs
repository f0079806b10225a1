//! Weak labeling functions over social engagements.
//!
//! Three sources, each mapping a news item's engagements to a weak label or
//! an abstention:
//!
//! - sentiment: population std of per-engagement sentiment > τ1
//! - bias: mean |bias score| of engaging users > τ2
//! - credibility: mean credibility of engaging users < τ3
//!
//! A rule that can be evaluated but does not fire yields label 0; news
//! without engagements abstain.

pub mod bias;
pub mod cluster;
pub mod lexicon;
pub mod threshold;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bias::{bias_score, SeedGroup, SeedInterestSets};
pub use cluster::credibility_scores;
pub use lexicon::{sentiment_score, Lexicon};
pub use threshold::{fit_threshold, Direction, ThresholdFit};

use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::trainer::Confusion;

pub const DEFAULT_TAU_SENTIMENT: f64 = 0.15;
pub const DEFAULT_TAU_BIAS: f64 = 0.5;
pub const DEFAULT_TAU_CREDIBILITY: f64 = 0.125;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Sentiment,
    Bias,
    Credibility,
}

impl Source {
    pub const ALL: [Source; 3] = [Source::Sentiment, Source::Bias, Source::Credibility];

    pub fn name(self) -> &'static str {
        match self {
            Source::Sentiment => "sentiment",
            Source::Bias => "bias",
            Source::Credibility => "credibility",
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            Source::Sentiment | Source::Bias => Direction::Above,
            Source::Credibility => Direction::Below,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Source::ALL
            .into_iter()
            .find(|src| src.name() == s)
            .ok_or_else(|| Error::config("source", format!("unknown weak source `{s}`")))
    }
}

/// Population standard deviation.
pub fn population_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len() as f64;
    xs.sum::<f64>() / n
}

/// `None` (abstain) with fewer than two engagements; otherwise 1 iff the
/// population std of the scores exceeds `tau`.
pub fn sentiment_label(scores: &[f64], tau: f64) -> Option<u8> {
    (scores.len() >= 2).then(|| u8::from(population_std(scores) > tau))
}

/// 1 iff the mean absolute bias exceeds `tau`; abstains without users.
pub fn bias_label(scores: &[f64], tau: f64) -> Option<u8> {
    (!scores.is_empty()).then(|| u8::from(mean(scores.iter().map(|s| s.abs())) > tau))
}

/// 1 iff the mean credibility is strictly below `tau`; abstains without
/// users.
pub fn credibility_label(creds: &[f64], tau: f64) -> Option<u8> {
    (!creds.is_empty()).then(|| u8::from(mean(creds.iter().copied()) < tau))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelingConfig {
    pub tau_sentiment: f64,
    pub tau_bias: f64,
    pub tau_credibility: f64,
    /// Average-linkage distance at which user clustering stops merging.
    pub cluster_cut: f64,
    /// Also emit weak labels for news that carry a clean label.
    pub include_labeled: bool,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        LabelingConfig {
            tau_sentiment: DEFAULT_TAU_SENTIMENT,
            tau_bias: DEFAULT_TAU_BIAS,
            tau_credibility: DEFAULT_TAU_CREDIBILITY,
            cluster_cut: 1.0,
            include_labeled: false,
        }
    }
}

impl LabelingConfig {
    pub fn tau(&self, source: Source) -> f64 {
        match source {
            Source::Sentiment => self.tau_sentiment,
            Source::Bias => self.tau_bias,
            Source::Credibility => self.tau_credibility,
        }
    }

    pub fn set_tau(&mut self, source: Source, tau: f64) {
        match source {
            Source::Sentiment => self.tau_sentiment = tau,
            Source::Bias => self.tau_bias = tau,
            Source::Credibility => self.tau_credibility = tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for s in Source::ALL {
            let t = self.tau(s);
            if !t.is_finite() {
                return Err(Error::config(format!("labeling.tau_{}", s.name()), "must be finite"));
            }
        }
        if !(self.cluster_cut >= 0.0) {
            return Err(Error::config("labeling.cluster_cut", "must be ≥ 0"));
        }
        Ok(())
    }
}

/// Per-news labeling statistics; `None` where the rule cannot be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NewsStats {
    pub sentiment_std: Option<f64>,
    pub bias_mean_abs: Option<f64>,
    pub credibility_mean: Option<f64>,
}

impl NewsStats {
    pub fn get(&self, source: Source) -> Option<f64> {
        match source {
            Source::Sentiment => self.sentiment_std,
            Source::Bias => self.bias_mean_abs,
            Source::Credibility => self.credibility_mean,
        }
    }
}

/// Shared inputs of the three labeling functions.
#[derive(Debug, Clone)]
pub struct LabelingResources {
    pub lexicon: Lexicon,
    pub seeds: SeedInterestSets,
}

/// Statistics for every news item in the corpus, keyed by news id. User
/// bias and credibility are computed once over all users.
pub fn compute_stats(corpus: &Corpus, res: &LabelingResources, config: &LabelingConfig) -> Result<BTreeMap<String, NewsStats>> {
    config.validate()?;
    let by_news = corpus.engagements_by_news();
    let points: Vec<Vec<f64>> = corpus.users.iter().map(|u| u.meta.clone()).collect();
    let creds = credibility_scores(&points, config.cluster_cut)?;
    let mut user_bias = BTreeMap::new();
    let mut user_cred = BTreeMap::new();
    for (u, c) in corpus.users.iter().zip(&creds) {
        user_bias.insert(u.id.as_str(), bias_score(u.history.iter().map(String::as_str), &res.seeds));
        user_cred.insert(u.id.as_str(), *c);
    }
    let mut out = BTreeMap::new();
    let mut silent = 0usize;
    for news in &corpus.news {
        let engagements = by_news.get(news.id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        if engagements.is_empty() {
            silent += 1;
        }
        let scores: Vec<f64> = engagements.iter().map(|e| sentiment_score(&e.text, &res.lexicon)).collect();
        let users: BTreeSet<&str> = engagements.iter().map(|e| e.user_id.as_str()).collect();
        let biases: Vec<f64> = users.iter().map(|u| user_bias[u]).collect();
        let cs: Vec<f64> = users.iter().map(|u| user_cred[u]).collect();
        out.insert(
            news.id.clone(),
            NewsStats {
                sentiment_std: (scores.len() >= 2).then(|| population_std(&scores)),
                bias_mean_abs: (!biases.is_empty()).then(|| mean(biases.iter().map(|b| b.abs()))),
                credibility_mean: (!cs.is_empty()).then(|| mean(cs.iter().copied())),
            },
        );
    }
    if silent > 0 {
        log::warn!("{silent} news items have no engagements; every source abstains on them");
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeakInstance {
    pub news_id: String,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quality {
    /// Number of labeled instances with a known true label.
    pub evaluated: usize,
    pub accuracy: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakLabeledSet {
    pub source: Source,
    pub threshold: f64,
    /// Sorted by news id.
    pub instances: Vec<WeakInstance>,
    pub quality: Option<Quality>,
}

impl WeakLabeledSet {
    pub fn ids(&self) -> Vec<String> {
        self.instances.iter().map(|i| i.news_id.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceReport {
    pub source: Source,
    pub threshold: f64,
    pub positives: usize,
    pub negatives: usize,
    pub abstained: usize,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub evaluated: usize,
}

/// Applies the three rules with the configured thresholds. Sets contain the
/// unlabeled news only unless `include_labeled` is set; quality is measured
/// on every news item with a known label (corpus labels plus `truth`),
/// whether or not it lands in the emitted set.
pub fn apply_labeling(
    corpus: &Corpus,
    stats: &BTreeMap<String, NewsStats>,
    config: &LabelingConfig,
    truth: &BTreeMap<String, u8>,
) -> Result<(Vec<WeakLabeledSet>, Vec<SourceReport>)> {
    config.validate()?;
    if corpus.engagements.is_empty() {
        log::warn!("corpus has no engagements; all weak sets are empty");
    }
    let mut sets = Vec::new();
    let mut reports = Vec::new();
    for source in Source::ALL {
        let tau = config.tau(source);
        let dir = source.direction();
        let mut instances = Vec::new();
        let mut confusion = Confusion::default();
        let (mut pos, mut neg, mut abstained) = (0, 0, 0);
        for news in &corpus.news {
            let st = stats
                .get(&news.id)
                .ok_or_else(|| Error::DanglingIds {
                    what: "labeling statistics".into(),
                    ids: vec![news.id.clone()],
                })?;
            let Some(value) = st.get(source) else {
                abstained += 1;
                continue;
            };
            let label = dir.label(value, tau);
            if label == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
            if let Some(&y) = truth.get(&news.id) {
                match (label, y) {
                    (1, 1) => confusion.tp += 1,
                    (1, _) => confusion.fp += 1,
                    (_, 0) => confusion.tn += 1,
                    _ => confusion.fn_ += 1,
                }
            }
            if config.include_labeled || news.label.is_none() {
                instances.push(WeakInstance {
                    news_id: news.id.clone(),
                    label,
                });
            }
        }
        instances.sort_by(|a, b| a.news_id.cmp(&b.news_id));
        let quality = (confusion.total() > 0).then(|| Quality {
            evaluated: confusion.total(),
            accuracy: confusion.accuracy(),
            f1: confusion.f1(),
        });
        reports.push(SourceReport {
            source,
            threshold: tau,
            positives: pos,
            negatives: neg,
            abstained,
            accuracy: quality.as_ref().map(|q| q.accuracy),
            f1: quality.as_ref().map(|q| q.f1),
            evaluated: confusion.total(),
        });
        sets.push(WeakLabeledSet {
            source,
            threshold: tau,
            instances,
            quality,
        });
    }
    Ok((sets, reports))
}

/// Fits each source's threshold against the given clean labels (typically
/// the clean training split).
pub fn fit_thresholds(
    stats: &BTreeMap<String, NewsStats>,
    labels: &BTreeMap<String, u8>,
) -> Result<Vec<(Source, ThresholdFit)>> {
    Source::ALL
        .into_iter()
        .map(|source| {
            let (xs, ys): (Vec<f64>, Vec<u8>) = labels
                .iter()
                .filter_map(|(id, &y)| stats.get(id).and_then(|s| s.get(source)).map(|x| (x, y)))
                .unzip();
            fit_threshold(&xs, &ys, source.direction()).map(|f| (source, f))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Engagement, NewsArticle, UserProfile};
    use proptest::prelude::*;

    #[test]
    fn sentiment_label_examples() {
        assert_eq!(sentiment_label(&[0.5, -0.5], 0.15), Some(1));
        assert_eq!(sentiment_label(&[0.3, 0.3, 0.3], 0.15), Some(0));
        assert!((population_std(&[0.1, 0.2, 0.3]) - 0.081_649_658_092_772_6).abs() < 1e-12);
        assert_eq!(sentiment_label(&[0.1, 0.2, 0.3], 0.15), Some(0));
        assert_eq!(sentiment_label(&[0.9], 0.15), None);
    }

    #[test]
    fn bias_and_credibility_examples() {
        assert_eq!(bias_label(&[0.9, -0.8], 0.5), Some(1));
        assert_eq!(bias_label(&[0.0, 0.0], 0.5), Some(0));
        assert_eq!(bias_label(&[0.6, -0.3, 0.2], 0.5), Some(0));
        assert_eq!(bias_label(&[], 0.5), None);
        assert_eq!(credibility_label(&[1.0, 1.0], 0.125), Some(0));
        assert_eq!(credibility_label(&[1.0 / 16.0; 5], 0.125), Some(1));
        assert_eq!(credibility_label(&[0.125, 0.125], 0.125), Some(0));
    }

    fn fixture() -> (Corpus, LabelingResources) {
        let lexicon = Lexicon::new(
            [("good".to_owned(), 0.8), ("bad".to_owned(), -0.8), ("fine".to_owned(), 0.1)],
            ["not".to_owned()],
        )
        .unwrap();
        let seeds = SeedInterestSets {
            left: SeedGroup {
                users: vec![],
                profile: bias::profile(["union tax"]),
            },
            right: SeedGroup {
                users: vec![],
                profile: bias::profile(["border church"]),
            },
        };
        let user = |id: &str, hist: &str, meta: [f64; 2]| UserProfile {
            id: id.into(),
            history: vec![hist.into()],
            meta: meta.to_vec(),
        };
        // p1..p10 partisan and coordinated (identical meta), q1..q4 neutral
        // and far apart.
        let mut users: Vec<UserProfile> = (1..=10).map(|i| user(&format!("p{i}"), "border church", [0.0, 0.0])).collect();
        users.extend((1..=4).map(|i| user(&format!("q{i}"), "weather sport", [10.0 * i as f64, 0.0])));
        let news = (1..=8)
            .map(|i| NewsArticle {
                id: format!("n{i}"),
                text: String::new(),
                label: None,
            })
            .collect();
        let e = |n: usize, u: &str, text: &str| Engagement {
            news_id: format!("n{n}"),
            user_id: u.into(),
            text: text.into(),
            timestamp: 0,
        };
        let engagements = vec![
            // n1: polarized sentiment, partisan coordinated users → 1,1,1
            e(1, "p1", "good"),
            e(1, "p2", "bad"),
            // n2: calm, neutral independents → 0,0,0
            e(2, "q1", "fine"),
            e(2, "q2", "fine"),
            // n3: polarized, neutral independents → 1,0,0
            e(3, "q1", "good"),
            e(3, "q3", "not good"),
            // n4: calm, partisan coordinated → 0,1,1
            e(4, "p3", "good"),
            e(4, "p4", "good"),
            // n5: single engagement → sentiment abstains; partisan → 1,1
            e(5, "p1", "bad"),
            // n6: calm, mixed users (2 partisan, 2 neutral) → 0, |b| mean 0.5 → 0, cred mean (0.1+0.1+1+1)/4 → 0
            e(6, "p1", "fine"),
            e(6, "p2", "fine"),
            e(6, "q1", "fine"),
            e(6, "q2", "fine"),
            // n7: no engagements → abstain everywhere
            // n8: one user engaging twice, polarized → 1, 0, 0
            e(8, "q4", "good"),
            e(8, "q4", "bad"),
        ];
        (
            Corpus {
                news,
                engagements,
                users,
            },
            LabelingResources { lexicon, seeds },
        )
    }

    #[test]
    fn hand_labeled_fixture() {
        let (corpus, res) = fixture();
        corpus.validate().unwrap();
        let cfg = LabelingConfig::default();
        let stats = compute_stats(&corpus, &res, &cfg).unwrap();
        let (sets, reports) = apply_labeling(&corpus, &stats, &cfg, &BTreeMap::new()).unwrap();
        let labels = |k: usize| -> Vec<(String, u8)> {
            sets[k].instances.iter().map(|i| (i.news_id.clone(), i.label)).collect()
        };
        let v = |xs: &[(&str, u8)]| xs.iter().map(|(a, b)| (a.to_string(), *b)).collect::<Vec<_>>();
        assert_eq!(labels(0), v(&[("n1", 1), ("n2", 0), ("n3", 1), ("n4", 0), ("n6", 0), ("n8", 1)]));
        assert_eq!(labels(1), v(&[("n1", 1), ("n2", 0), ("n3", 0), ("n4", 1), ("n5", 1), ("n6", 0), ("n8", 0)]));
        assert_eq!(labels(2), v(&[("n1", 1), ("n2", 0), ("n3", 0), ("n4", 1), ("n5", 1), ("n6", 0), ("n8", 0)]));
        assert_eq!(reports[0].abstained, 2);
        assert_eq!(reports[1].abstained, 1);
        assert!(reports.iter().all(|r| r.accuracy.is_none()));
    }

    #[test]
    fn quality_against_truth_and_labeled_exclusion() {
        let (mut corpus, res) = fixture();
        corpus.news[0].label = Some(1);
        let cfg = LabelingConfig::default();
        let stats = compute_stats(&corpus, &res, &cfg).unwrap();
        let truth: BTreeMap<String, u8> = [("n1", 1), ("n2", 0), ("n3", 0)].map(|(a, b)| (a.to_owned(), b)).into();
        let (sets, reports) = apply_labeling(&corpus, &stats, &cfg, &truth).unwrap();
        assert!(sets.iter().all(|s| s.instances.iter().all(|i| i.news_id != "n1")));
        assert_eq!(reports[0].evaluated, 3);
        assert!((reports[0].accuracy.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(reports[1].accuracy, Some(1.0));
    }

    #[test]
    fn no_engagements_gives_empty_sets() {
        let (mut corpus, res) = fixture();
        corpus.engagements.clear();
        let cfg = LabelingConfig::default();
        let stats = compute_stats(&corpus, &res, &cfg).unwrap();
        let (sets, reports) = apply_labeling(&corpus, &stats, &cfg, &BTreeMap::new()).unwrap();
        assert_eq!(sets.len(), 3);
        assert!(sets.iter().all(|s| s.instances.is_empty()));
        assert!(reports.iter().all(|r| r.abstained == 8));
    }

    proptest! {
        #[test]
        fn sentiment_label_order_invariant(mut xs in prop::collection::vec(-1.0f64..1.0, 2..12), tau in 0.0f64..0.6) {
            let a = sentiment_label(&xs, tau);
            xs.reverse();
            prop_assert_eq!(a, sentiment_label(&xs, tau));
        }

        #[test]
        fn adding_the_mean_never_raises_std(xs in prop::collection::vec(-1.0f64..1.0, 1..12)) {
            let before = population_std(&xs);
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let mut more = xs.clone();
            more.push(m);
            prop_assert!(population_std(&more) <= before + 1e-12);
        }
    }
}
