//! Synthetic corpus with planted weak-label noise.
//!
//! News text mixes class-indicative, topic and background words. For every
//! news item the generator decides a target weak label per source (the true
//! label, flipped for exactly `round(ρ_k · group size)` items in both the
//! clean and the unlabeled group) and then builds engagements whose
//! statistics make the corresponding labeling function output that target:
//!
//! - sentiment: engagement texts built from a generated lexicon, polarized
//!   (std > 0.35) for 1 and near-constant (std ≤ 0.02) for 0;
//! - bias: engaging users drawn from partisan (|bias| ≈ 1) or neutral
//!   (bias 0) pools;
//! - credibility: engaging users drawn from coordinated groups (identical
//!   meta features, credibility 1/16) or independent users (credibility 1).
//!
//! With `noise_focus > 0` the flips concentrate on a shared set of "noisy
//! topics" (half of all topics) where every heuristic is unreliable.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{Corpus, Engagement, NewsArticle, TruthRecord, UserProfile};
use crate::error::{Error, Result};
use crate::nn::{derive_seed, SeededRng};
use crate::weak::{Lexicon, SeedInterestSets, Source};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextConfig {
    pub min_len: usize,
    pub max_len: usize,
    pub topics: usize,
    pub topic_vocab: usize,
    pub class_vocab: usize,
    pub background_vocab: usize,
    /// Probability that a token is class-indicative.
    pub p_class: f64,
    /// Probability that a class-indicative token comes from the article's
    /// own class vocabulary.
    pub class_purity: f64,
    pub p_topic: f64,
}

impl Default for TextConfig {
    fn default() -> Self {
        TextConfig {
            min_len: 20,
            max_len: 40,
            topics: 8,
            topic_vocab: 40,
            class_vocab: 150,
            background_vocab: 600,
            p_class: 0.12,
            class_purity: 0.75,
            p_topic: 0.35,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    /// News items exposed with their clean label.
    pub n_clean: usize,
    /// News items exposed unlabeled (truth kept in a separate file).
    pub n_unlabeled: usize,
    /// Flip rate per source, in [sentiment, bias, credibility] order.
    pub rho: [f64; 3],
    pub fake_share: f64,
    /// Fraction of each source's flips taken from news on the noisy topics.
    pub noise_focus: f64,
    /// Restricts the focused flips to news of this true class.
    pub focus_label: Option<u8>,
    pub min_engagements: usize,
    pub max_engagements: usize,
    pub coordinated_group_size: usize,
    pub coordinated_groups: usize,
    pub independent_users: usize,
    pub seed_users: usize,
    pub text: TextConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_clean: 200,
            n_unlabeled: 3000,
            rho: [0.1, 0.25, 0.45],
            fake_share: 0.5,
            noise_focus: 0.0,
            focus_label: None,
            min_engagements: 3,
            max_engagements: 8,
            coordinated_group_size: 16,
            coordinated_groups: 8,
            independent_users: 150,
            seed_users: 5,
            text: TextConfig::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (k, r) in self.rho.iter().enumerate() {
            if !(0.0..0.5).contains(r) {
                return Err(Error::config(format!("synth.rho[{k}]"), format!("{r} outside [0, 0.5)")));
            }
        }
        if !(0.0..=1.0).contains(&self.fake_share) || !(0.0..=1.0).contains(&self.noise_focus) {
            return Err(Error::config("synth", "fake_share and noise_focus must lie in [0, 1]"));
        }
        if self.focus_label.is_some_and(|c| c > 1) {
            return Err(Error::config("synth.focus_label", "must be 0 or 1"));
        }
        if self.n_clean + self.n_unlabeled == 0 {
            return Err(Error::config("synth", "no news requested"));
        }
        if self.min_engagements < 2 || self.max_engagements < self.min_engagements {
            return Err(Error::config(
                "synth.engagements",
                "need 2 ≤ min_engagements ≤ max_engagements",
            ));
        }
        // One news item draws all its users from a single pool.
        let coordinated = self.coordinated_group_size * self.coordinated_groups;
        if coordinated < self.max_engagements || self.independent_users < self.max_engagements {
            return Err(Error::config("synth.users", "user pools smaller than max_engagements"));
        }
        if self.coordinated_group_size < 9 {
            return Err(Error::config(
                "synth.coordinated_group_size",
                "credibility 1/size must fall below the default τ3 = 0.125",
            ));
        }
        let t = &self.text;
        if t.min_len == 0 || t.max_len < t.min_len || t.topics == 0 || t.topic_vocab == 0 || t.class_vocab == 0 || t.background_vocab == 0 {
            return Err(Error::config("synth.text", "lengths and vocabulary sizes must be positive"));
        }
        for (name, p) in [("p_class", t.p_class), ("class_purity", t.class_purity), ("p_topic", t.p_topic)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("synth.text.{name}"), "must lie in [0, 1]"));
            }
        }
        if t.p_class + t.p_topic > 1.0 {
            return Err(Error::config("synth.text", "p_class + p_topic exceeds 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub corpus: Corpus,
    /// True labels of the unlabeled news.
    pub truth: Vec<TruthRecord>,
    pub lexicon: Lexicon,
    pub seeds: SeedInterestSets,
    /// Planted weak label per news id, in [sentiment, bias, credibility]
    /// order.
    pub planted: BTreeMap<String, [u8; 3]>,
    pub topics: BTreeMap<String, usize>,
    /// Topics whose news attract the focused flips (restricted to `focus_label` when set).
    pub noisy_topics: Vec<usize>,
}

/// Lexicon words `s00..s40` with valence `(j − 20) / 25`.
const LEXICON_WORDS: usize = 41;

fn lexicon_word(j: usize) -> String {
    format!("s{j:02}")
}

fn valence(j: usize) -> f64 {
    (j as f64 - 20.0) / 25.0
}

pub fn synth_lexicon() -> Lexicon {
    Lexicon::new(
        (0..LEXICON_WORDS).map(|j| (lexicon_word(j), valence(j))),
        ["not".to_owned()],
    )
    .expect("valences lie in [-0.8, 0.8]")
}

const PARTY_VOCAB: usize = 30;
const NEUTRAL_VOCAB: usize = 60;

fn history(rng: &mut SeededRng, prefix: &str, vocab: usize) -> Vec<String> {
    (0..5)
        .map(|_| {
            (0..10)
                .map(|_| format!("{prefix}{}", rng.gen_range(0..vocab)))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Leaning {
    Left,
    Right,
    Neutral,
}

struct UserPools {
    users: Vec<UserProfile>,
    /// Indexed by `[partisan][coordinated]`.
    pools: [[Vec<usize>; 2]; 2],
    seeds: SeedInterestSets,
}

/// Distinct lattice points spaced 5 apart in 4-D; far beyond any sensible
/// clustering cut.
fn lattice(i: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(4);
    let mut x = i;
    for _ in 0..4 {
        v.push(5.0 * (x % 16) as f64);
        x /= 16;
    }
    v
}

fn build_users(cfg: &SynthConfig, rng: &mut SeededRng) -> UserPools {
    let mut users = Vec::new();
    let mut pools: [[Vec<usize>; 2]; 2] = Default::default();
    let mut point = 0usize;
    let push = |users: &mut Vec<UserProfile>, id: String, leaning: Leaning, meta: Vec<f64>, rng: &mut SeededRng| {
        let history = match leaning {
            Leaning::Left => history(rng, "lft", PARTY_VOCAB),
            Leaning::Right => history(rng, "rgt", PARTY_VOCAB),
            Leaning::Neutral => history(rng, "nt", NEUTRAL_VOCAB),
        };
        users.push(UserProfile { id, history, meta });
        users.len() - 1
    };
    let mut seeds = SeedInterestSets::default();
    for (leaning, group) in [(Leaning::Left, &mut seeds.left), (Leaning::Right, &mut seeds.right)] {
        for i in 0..cfg.seed_users {
            let tag = if leaning == Leaning::Left { "L" } else { "R" };
            let id = format!("seed{tag}{i:02}");
            push(&mut users, id.clone(), leaning, lattice(point), rng);
            point += 1;
            group.users.push(id);
        }
    }
    for partisan in [0usize, 1] {
        let leaning = |rng: &mut SeededRng| match partisan {
            0 => Leaning::Neutral,
            _ if rng.gen_bool(0.5) => Leaning::Left,
            _ => Leaning::Right,
        };
        for g in 0..cfg.coordinated_groups {
            let meta = lattice(point);
            point += 1;
            for m in 0..cfg.coordinated_group_size {
                let l = leaning(rng);
                let idx = push(&mut users, format!("u{partisan}c{g:02}m{m:02}"), l, meta.clone(), rng);
                pools[partisan][1].push(idx);
            }
        }
        for i in 0..cfg.independent_users {
            let l = leaning(rng);
            let idx = push(&mut users, format!("u{partisan}i{i:03}"), l, lattice(point), rng);
            point += 1;
            pools[partisan][0].push(idx);
        }
    }
    UserPools { users, pools, seeds }
}

fn news_text(rng: &mut SeededRng, t: &TextConfig, label: u8, topic: usize) -> String {
    let len = rng.gen_range(t.min_len..=t.max_len);
    let mut words = Vec::with_capacity(len);
    for _ in 0..len {
        let u: f64 = rng.gen();
        let w = if u < t.p_class {
            let own = rng.gen_bool(t.class_purity);
            let fake_word = (label == 1) == own;
            let prefix = if fake_word { "fk" } else { "rl" };
            format!("{prefix}{}", rng.gen_range(0..t.class_vocab))
        } else if u < t.p_class + t.p_topic {
            format!("t{topic}w{}", rng.gen_range(0..t.topic_vocab))
        } else {
            format!("w{}", rng.gen_range(0..t.background_vocab))
        };
        words.push(w);
    }
    words.join(" ")
}

fn filler(rng: &mut SeededRng) -> String {
    format!("w{} w{}", rng.gen_range(0..50), rng.gen_range(0..50))
}

/// Engagement texts whose sentiment scores have population std above 0.35
/// (`polar`) or at most 0.02.
fn engagement_texts(rng: &mut SeededRng, m: usize, polar: bool) -> Vec<String> {
    let words: Vec<usize> = if polar {
        let mut signs: Vec<bool> = (0..m).map(|i| i % 2 == 0).collect();
        signs.shuffle(rng);
        signs
            .into_iter()
            .map(|pos| if pos { rng.gen_range(30..=40) } else { rng.gen_range(0..=10) })
            .collect()
    } else {
        let j0 = rng.gen_range(0..LEXICON_WORDS - 1);
        (0..m).map(|_| j0 + rng.gen_range(0..=1)).collect()
    };
    words
        .into_iter()
        .map(|j| {
            // Sometimes express the same valence through a negated opposite.
            let mirror = LEXICON_WORDS - 1 - j;
            if j != 20 && rng.gen_bool(0.2) {
                format!("{} not {} {}", filler(rng), lexicon_word(mirror), filler(rng))
            } else {
                format!("{} {} {}", filler(rng), lexicon_word(j), filler(rng))
            }
        })
        .collect()
}

/// Chooses exactly `count` members of `items` to flip, taking
/// `round(focus · count)` of them from `hot` items when possible.
fn choose_flips(
    rng: &mut SeededRng,
    items: &[usize],
    is_hot: impl Fn(usize) -> bool,
    count: usize,
    focus: f64,
) -> Vec<usize> {
    let (mut hot, mut cold): (Vec<usize>, Vec<usize>) = items.iter().partition(|&&i| is_hot(i));
    hot.shuffle(rng);
    cold.shuffle(rng);
    let want_hot = ((focus * count as f64).round() as usize).min(hot.len());
    let mut chosen: Vec<usize> = hot.drain(..want_hot).collect();
    let mut rest: Vec<usize> = cold.into_iter().chain(hot).collect();
    rest.shuffle(rng);
    chosen.extend(rest.into_iter().take(count - chosen.len()));
    chosen
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let stream = |tag: &str| SeededRng::seed_from_u64(derive_seed(cfg.seed, tag));
    let mut label_rng = stream("synth.labels");
    let mut text_rng = stream("synth.text");
    let mut engage_rng = stream("synth.engage");
    let mut user_rng = stream("synth.users");

    let n = cfg.n_clean + cfg.n_unlabeled;
    let groups = [0..cfg.n_clean, cfg.n_clean..n];
    let mut labels = vec![0u8; n];
    for g in &groups {
        let fakes = (cfg.fake_share * g.len() as f64).round() as usize;
        let mut idx: Vec<usize> = g.clone().collect();
        idx.shuffle(&mut label_rng);
        for &i in &idx[..fakes] {
            labels[i] = 1;
        }
    }
    let topics: Vec<usize> = (0..n).map(|_| label_rng.gen_range(0..cfg.text.topics)).collect();

    let mut noisy = vec![false; cfg.text.topics];
    for t in index::sample(&mut stream("synth.noisy"), cfg.text.topics, cfg.text.topics.div_ceil(2)) {
        noisy[t] = true;
    }
    let is_hot = |i: usize| noisy[topics[i]] && cfg.focus_label.map_or(true, |c| labels[i] == c);

    let mut planted: Vec<[u8; 3]> = labels.iter().map(|&y| [y; 3]).collect();
    for (k, rho) in cfg.rho.iter().enumerate() {
        let mut flip_rng = stream(&format!("synth.flip{k}"));
        for g in &groups {
            let items: Vec<usize> = g.clone().collect();
            let count = (rho * items.len() as f64).round() as usize;
            for i in choose_flips(&mut flip_rng, &items, is_hot, count, cfg.noise_focus) {
                planted[i][k] ^= 1;
            }
        }
    }

    let pools = build_users(cfg, &mut user_rng);
    let mut news = Vec::with_capacity(n);
    let mut truth = Vec::new();
    let mut engagements = Vec::new();
    let mut clock = 0i64;
    let mut planted_map = BTreeMap::new();
    let mut topic_map = BTreeMap::new();
    for i in 0..n {
        let id = format!("n{i:05}");
        let clean = i < cfg.n_clean;
        news.push(NewsArticle {
            id: id.clone(),
            text: news_text(&mut text_rng, &cfg.text, labels[i], topics[i]),
            label: clean.then_some(labels[i]),
        });
        if !clean {
            truth.push(TruthRecord {
                id: id.clone(),
                label: labels[i],
            });
        }
        let [ys, yb, yc] = planted[i];
        let m = engage_rng.gen_range(cfg.min_engagements..=cfg.max_engagements);
        let pool = &pools.pools[yb as usize][yc as usize];
        let picked = index::sample(&mut engage_rng, pool.len(), m);
        let texts = engagement_texts(&mut engage_rng, m, ys == 1);
        for (p, text) in picked.into_iter().zip(texts) {
            clock += engage_rng.gen_range(1..600);
            engagements.push(Engagement {
                news_id: id.clone(),
                user_id: pools.users[pool[p]].id.clone(),
                text,
                timestamp: clock,
            });
        }
        planted_map.insert(id.clone(), planted[i]);
        topic_map.insert(id, topics[i]);
    }
    let corpus = Corpus {
        news,
        engagements,
        users: pools.users,
    };
    corpus.validate()?;
    Ok(SynthOutput {
        corpus,
        truth,
        lexicon: synth_lexicon(),
        seeds: pools.seeds,
        planted: planted_map,
        topics: topic_map,
        noisy_topics: (0..cfg.text.topics).filter(|&t| noisy[t]).collect(),
    })
}

impl SynthOutput {
    /// Seed groups with their profiles filled from the corpus.
    pub fn resolved_seeds(&self) -> Result<SeedInterestSets> {
        self.seeds.clone().resolve(&self.corpus)
    }

    pub fn planted_label(&self, id: &str, source: Source) -> Option<u8> {
        let k = Source::ALL.iter().position(|s| *s == source)?;
        self.planted.get(id).map(|p| p[k])
    }
}
