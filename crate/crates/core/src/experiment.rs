//! End-to-end runs: corpus and weak sets in, test metrics out.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use crate::baselines::{datasets_for, heads_for, Method};
use crate::data::{leak_guard, mix_by_clean_ratio, split, Corpus, Split};
use crate::encoder::{tokenize, TokenizerConfig};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::trainer::{evaluate, mean_weights, step_budget, train, MetricsReport, Sample, TrainConfig, TrainData, TrainOutcome};
use crate::weak::{Source, WeakLabeledSet};

/// Tokenized splits for one (corpus, seed, clean ratio) combination.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: Split,
    /// Clean training items after the clean-ratio subsample.
    pub clean: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
    pub sources: Vec<Source>,
    pub weak: Vec<Vec<Sample>>,
}

impl Prepared {
    /// Distinct news items across the weak sets.
    pub fn weak_total(&self) -> usize {
        self.weak.iter().flatten().map(|s| s.id.as_str()).collect::<BTreeSet<_>>().len()
    }

    /// Clean share of the training pool, `|clean| / (|clean| + W)`.
    pub fn clean_ratio(&self) -> f64 {
        let c = self.clean.len() as f64;
        c / (c + self.weak_total() as f64)
    }
}

/// Splits the labeled news, checks that no weak set touches the test split,
/// subsamples the clean training split to `clean_ratio` and tokenizes
/// everything. `sources` picks which weak sets take part, in that order.
pub fn prepare(
    corpus: &Corpus,
    sets: &[WeakLabeledSet],
    sources: &[Source],
    tokenizer: &TokenizerConfig,
    clean_ratio: f64,
    seed: u64,
) -> Result<Prepared> {
    tokenizer.validate()?;
    let labeled: Vec<_> = corpus.labeled().cloned().collect();
    let split = split(&labeled, seed)?;
    let chosen: Vec<&WeakLabeledSet> = sources
        .iter()
        .map(|src| {
            sets.iter()
                .find(|s| s.source == *src)
                .ok_or_else(|| Error::config("sources", format!("no weak set for source `{}`", src.name())))
        })
        .collect::<Result<_>>()?;
    let ids: Vec<Vec<String>> = chosen.iter().map(|s| s.ids()).collect();
    leak_guard(
        &split.test,
        chosen.iter().zip(&ids).map(|(s, i)| (s.source.name(), i.as_slice())),
    )?;
    let text: BTreeMap<&str, &str> = corpus.news.iter().map(|n| (n.id.as_str(), n.text.as_str())).collect();
    let labels: BTreeMap<&str, u8> = labeled.iter().filter_map(|n| n.label.map(|l| (n.id.as_str(), l))).collect();
    let sample = |id: &str, label: u8| -> Result<Sample> {
        let t = text.get(id).ok_or_else(|| Error::DanglingIds {
            what: "weak set".into(),
            ids: vec![id.to_owned()],
        })?;
        Ok(Sample {
            id: id.to_owned(),
            tokens: tokenize(t, tokenizer),
            label,
        })
    };
    let clean_split = |ids: &[String]| ids.iter().map(|id| sample(id, labels[id.as_str()])).collect::<Result<Vec<_>>>();
    let weak: Vec<Vec<Sample>> = chosen
        .iter()
        .map(|s| s.instances.iter().map(|i| sample(&i.news_id, i.label)).collect())
        .collect::<Result<_>>()?;
    let weak_total = weak.iter().flatten().map(|s| s.id.as_str()).collect::<BTreeSet<_>>().len();
    let train_pairs: Vec<(String, u8)> = split.train.iter().map(|id| (id.clone(), labels[id.as_str()])).collect();
    let mixed = mix_by_clean_ratio(&train_pairs, weak_total, clean_ratio, seed)?;
    Ok(Prepared {
        clean: clean_split(&mixed)?,
        val: clean_split(&split.val)?,
        test: clean_split(&split.test)?,
        sources: sources.to_vec(),
        weak,
        split,
    })
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub method: Method,
    pub model: Model,
    pub outcome: TrainOutcome,
    pub budget: usize,
    /// Clean-head metrics on the test split at the selected snapshot.
    pub test: MetricsReport,
}

/// Step budget every method gets: the one MWSS would use on `prepared`.
pub fn shared_budget(config: &TrainConfig, prepared: &Prepared) -> usize {
    let reference = TrainData {
        clean: prepared.clean.clone(),
        val: Vec::new(),
        weak: prepared.weak.clone(),
    };
    step_budget(config, &reference)
}

/// Trains `method` on `prepared` for the shared step budget and scores the
/// best-validation snapshot on the test split.
pub fn run(method: Method, prepared: &Prepared, config: &TrainConfig, tie_label: u8) -> Result<RunResult> {
    let start = Instant::now();
    let data = datasets_for(method, &prepared.clean, &prepared.val, &prepared.weak, tie_label)?;
    let budget = shared_budget(config, prepared);
    let mut cfg = config.clone();
    cfg.model.num_sources = heads_for(method, prepared.weak.len());
    cfg.max_steps = budget;
    cfg.max_epochs = usize::MAX;
    let model = Model::new(cfg.model.clone())?;
    let outcome = train(&model, &data, &cfg, method.train_mode())?;
    let mut test = evaluate(&model, &outcome.best_theta, &prepared.test)?;
    test.mean_omega = match method {
        Method::Mwss => mean_weights(&model, &outcome.best_theta, &outcome.alpha, &data.weak)?,
        Method::CleanPlusWeak | Method::MajorityVoteMerge => vec![Some(1.0); data.weak.len()],
        Method::CleanOnly | Method::WeakOnly => Vec::new(),
    };
    test.runtime_secs = start.elapsed().as_secs_f64();
    Ok(RunResult {
        method,
        model,
        outcome,
        budget,
        test,
    })
}
