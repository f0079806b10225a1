//! Corpus records, loading with referential checks, the stratified
//! train/validation/test split, and the clean-ratio training mix.

pub mod synth;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::nn::{derive_seed, SeededRng};

pub const NEWS_SCHEMA: &str = "mwss.news/1";
pub const ENGAGEMENTS_SCHEMA: &str = "mwss.engagements/1";
pub const USERS_SCHEMA: &str = "mwss.users/1";
pub const TRUTH_SCHEMA: &str = "mwss.truth/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewsArticle {
    pub id: String,
    pub text: String,
    /// Expert label: 0 real, 1 fake. Absent for unlabeled news.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Engagement {
    pub news_id: String,
    pub user_id: String,
    pub text: String,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: String,
    #[serde(default)]
    pub history: Vec<String>,
    /// Clustering features; the synthetic generator writes
    /// `[engagement count, mean sentiment, history length, account age]`.
    #[serde(default)]
    pub meta: Vec<f64>,
}

/// Ground-truth label of a news item that is unlabeled in the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub id: String,
    pub label: u8,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub news: Vec<NewsArticle>,
    pub engagements: Vec<Engagement>,
    pub users: Vec<UserProfile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusCounts {
    pub news: usize,
    pub labeled: usize,
    pub engagements: usize,
    pub users: usize,
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateId(id.to_owned()));
        }
    }
    Ok(())
}

impl Corpus {
    /// Unique ids, valid labels, and engagements that reference existing news
    /// and users.
    pub fn validate(&self) -> Result<CorpusCounts> {
        check_unique(self.news.iter().map(|n| n.id.as_str()))?;
        check_unique(self.users.iter().map(|u| u.id.as_str()))?;
        for n in &self.news {
            if let Some(l) = n.label {
                if l > 1 {
                    return Err(Error::InvalidLabel(l));
                }
            }
        }
        let news: BTreeSet<&str> = self.news.iter().map(|n| n.id.as_str()).collect();
        let users: BTreeSet<&str> = self.users.iter().map(|u| u.id.as_str()).collect();
        let dangling = |pick: fn(&Engagement) -> &str, known: &BTreeSet<&str>| -> Vec<String> {
            self.engagements
                .iter()
                .map(pick)
                .filter(|id| !known.contains(id))
                .collect::<BTreeSet<_>>()
                .into_iter()
                .map(str::to_owned)
                .collect()
        };
        let missing_news = dangling(|e| &e.news_id, &news);
        if !missing_news.is_empty() {
            return Err(Error::DanglingIds {
                what: "engagement news ids".into(),
                ids: missing_news,
            });
        }
        let missing_users = dangling(|e| &e.user_id, &users);
        if !missing_users.is_empty() {
            return Err(Error::DanglingIds {
                what: "engagement user ids".into(),
                ids: missing_users,
            });
        }
        Ok(self.counts())
    }

    pub fn counts(&self) -> CorpusCounts {
        CorpusCounts {
            news: self.news.len(),
            labeled: self.news.iter().filter(|n| n.label.is_some()).count(),
            engagements: self.engagements.len(),
            users: self.users.len(),
        }
    }

    /// Engagements grouped by news id, in file order within each group.
    pub fn engagements_by_news(&self) -> BTreeMap<&str, Vec<&Engagement>> {
        let mut map: BTreeMap<&str, Vec<&Engagement>> = BTreeMap::new();
        for e in &self.engagements {
            map.entry(e.news_id.as_str()).or_default().push(e);
        }
        map
    }

    pub fn user_index(&self) -> HashMap<&str, &UserProfile> {
        self.users.iter().map(|u| (u.id.as_str(), u)).collect()
    }

    pub fn labeled(&self) -> impl Iterator<Item = &NewsArticle> {
        self.news.iter().filter(|n| n.label.is_some())
    }

    pub fn unlabeled(&self) -> impl Iterator<Item = &NewsArticle> {
        self.news.iter().filter(|n| n.label.is_none())
    }
}

/// File locations of a corpus; [`CorpusPaths::in_dir`] gives the layout the
/// command-line tools use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusPaths {
    pub news: PathBuf,
    pub engagements: PathBuf,
    pub users: PathBuf,
}

impl CorpusPaths {
    pub fn in_dir(dir: &Path) -> Self {
        CorpusPaths {
            news: dir.join("news.jsonl"),
            engagements: dir.join("engagements.jsonl"),
            users: dir.join("users.jsonl"),
        }
    }

    /// Truth file sitting next to the news file.
    pub fn truth(&self) -> PathBuf {
        self.news.with_file_name("truth.jsonl")
    }
}

pub fn load_corpus(paths: &CorpusPaths) -> Result<Corpus> {
    let (_, news) = io::read_jsonl(&paths.news, NEWS_SCHEMA)?;
    let (_, engagements) = io::read_jsonl(&paths.engagements, ENGAGEMENTS_SCHEMA)?;
    let (_, users) = io::read_jsonl(&paths.users, USERS_SCHEMA)?;
    let corpus = Corpus {
        news,
        engagements,
        users,
    };
    let c = corpus.validate()?;
    log::info!(
        "loaded corpus: {} news ({} labeled), {} engagements, {} users",
        c.news,
        c.labeled,
        c.engagements,
        c.users
    );
    Ok(corpus)
}

pub fn save_corpus(paths: &CorpusPaths, corpus: &Corpus, manifest: &str) -> Result<()> {
    io::write_jsonl(&paths.news, NEWS_SCHEMA, manifest, &corpus.news)?;
    io::write_jsonl(&paths.engagements, ENGAGEMENTS_SCHEMA, manifest, &corpus.engagements)?;
    io::write_jsonl(&paths.users, USERS_SCHEMA, manifest, &corpus.users)
}

pub fn save_truth(path: &Path, truth: &[TruthRecord], manifest: &str) -> Result<()> {
    io::write_jsonl(path, TRUTH_SCHEMA, manifest, truth)
}

/// Reads a truth file if present; labels of the corpus itself take
/// precedence where both exist.
pub fn load_truth(path: &Path) -> Result<Option<BTreeMap<String, u8>>> {
    if !path.exists() {
        return Ok(None);
    }
    let (_, rows): (_, Vec<TruthRecord>) = io::read_jsonl(path, TRUTH_SCHEMA)?;
    let mut map = BTreeMap::new();
    for r in rows {
        if r.label > 1 {
            return Err(Error::InvalidLabel(r.label));
        }
        if map.insert(r.id.clone(), r.label).is_some() {
            return Err(Error::DuplicateId(r.id));
        }
    }
    Ok(Some(map))
}

/// Every known label: corpus labels plus (optionally) a truth map.
pub fn known_labels(corpus: &Corpus, truth: Option<&BTreeMap<String, u8>>) -> BTreeMap<String, u8> {
    let mut map = truth.cloned().unwrap_or_default();
    for n in corpus.labeled() {
        map.insert(n.id.clone(), n.label.expect("labeled"));
    }
    map
}

pub const SPLIT_FRACTIONS: [f64; 3] = [0.75, 0.15, 0.10];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.val.len(), self.test.len()]
    }
}

/// Integer allocation of `total` proportional to `weights`, rounding by
/// largest remainder; ties go to the earlier entry.
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 || total == 0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut out: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let short = total - out.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        out[i] += 1;
    }
    out
}

pub const MIN_SPLIT_SIZE: usize = 20;

/// Stratified 75/15/10 split of labeled articles. Split sizes come from a
/// largest-remainder allocation of the whole set; the fake class is then
/// allocated within each split the same way and the real class takes the
/// rest, so each split's class counts are within one item of proportional.
pub fn split(clean: &[NewsArticle], seed: u64) -> Result<Split> {
    if clean.len() < MIN_SPLIT_SIZE {
        return Err(Error::InsufficientClean {
            required: MIN_SPLIT_SIZE,
            available: clean.len(),
        });
    }
    let mut by_class: [Vec<&str>; 2] = [Vec::new(), Vec::new()];
    for n in clean {
        match n.label {
            Some(l @ 0..=1) => by_class[l as usize].push(&n.id),
            Some(l) => return Err(Error::InvalidLabel(l)),
            None => return Err(Error::config("split", format!("article `{}` has no clean label", n.id))),
        }
    }
    check_unique(clean.iter().map(|n| n.id.as_str()))?;
    for (c, ids) in by_class.iter().enumerate() {
        if ids.is_empty() {
            return Err(Error::config("split", format!("class {c} is absent from the clean set")));
        }
    }
    let n = clean.len();
    let totals = largest_remainder(n, &SPLIT_FRACTIONS);
    let n_fake = by_class[1].len();
    let fake_targets: Vec<f64> = totals.iter().map(|&t| t as f64 * n_fake as f64 / n as f64).collect();
    let mut fake = largest_remainder(n_fake, &fake_targets);
    // Keep the real-class share non-negative in tiny splits.
    for s in 0..3 {
        while fake[s] > totals[s] {
            fake[s] -= 1;
            let j = (0..3).find(|&j| fake[j] < totals[j]).expect("totals cover n_fake");
            fake[j] += 1;
        }
    }
    let mut rng = SeededRng::seed_from_u64(derive_seed(seed, "split"));
    let mut parts: [Vec<String>; 3] = Default::default();
    for (c, ids) in by_class.iter_mut().enumerate() {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let mut cursor = 0;
        for s in 0..3 {
            let take = if c == 1 { fake[s] } else { totals[s] - fake[s] };
            parts[s].extend(ids[cursor..cursor + take].iter().map(|s| s.to_string()));
            cursor += take;
        }
    }
    for p in &mut parts {
        p.sort();
    }
    let [train, val, test] = parts;
    Ok(Split { train, val, test })
}

/// `round(r·W / (1 − r))`, the clean count that yields clean ratio `r` next
/// to `W` weak instances. `r = 1` means "all clean data".
pub fn clean_count_for_ratio(ratio: f64, weak_total: usize) -> Result<Option<usize>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::config("clean_ratio", format!("{ratio} is outside (0, 1]")));
    }
    if ratio == 1.0 {
        return Ok(None);
    }
    Ok(Some((ratio * weak_total as f64 / (1.0 - ratio)).round() as usize))
}

/// Class-balanced subsample of the clean training articles sized for the
/// requested clean ratio. When one class runs short the other makes up the
/// difference. Returned ids are sorted.
pub fn mix_by_clean_ratio(
    clean_train: &[(String, u8)],
    weak_total: usize,
    ratio: f64,
    seed: u64,
) -> Result<Vec<String>> {
    let Some(want) = clean_count_for_ratio(ratio, weak_total)? else {
        let mut all: Vec<String> = clean_train.iter().map(|(id, _)| id.clone()).collect();
        all.sort();
        return Ok(all);
    };
    if want > clean_train.len() {
        return Err(Error::InsufficientClean {
            required: want,
            available: clean_train.len(),
        });
    }
    let mut by_class: [Vec<&str>; 2] = [Vec::new(), Vec::new()];
    for (id, l) in clean_train {
        if *l > 1 {
            return Err(Error::InvalidLabel(*l));
        }
        by_class[*l as usize].push(id);
    }
    let mut rng = SeededRng::seed_from_u64(derive_seed(seed, "clean-mix"));
    for ids in &mut by_class {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
    }
    let mut take = [want / 2, want - want / 2];
    for c in 0..2 {
        let other = 1 - c;
        if take[c] > by_class[c].len() {
            take[other] += take[c] - by_class[c].len();
            take[c] = by_class[c].len();
        }
    }
    let mut out: Vec<String> = (0..2)
        .flat_map(|c| by_class[c][..take[c]].iter().map(|s| s.to_string()))
        .collect();
    out.sort();
    Ok(out)
}

/// Fails when any weak set contains a test-split id.
pub fn leak_guard<'a>(test: &[String], weak: impl IntoIterator<Item = (&'a str, &'a [String])>) -> Result<()> {
    let test: BTreeSet<&str> = test.iter().map(String::as_str).collect();
    for (name, ids) in weak {
        let leaked: Vec<&String> = ids.iter().filter(|id| test.contains(id.as_str())).collect();
        if let Some(first) = leaked.first() {
            return Err(Error::LeakGuard {
                source_name: name.to_owned(),
                count: leaked.len(),
                first: first.to_string(),
            });
        }
    }
    Ok(())
}
