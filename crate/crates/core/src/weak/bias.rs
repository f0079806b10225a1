use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Corpus;
use crate::encoder::words;
use crate::error::{Error, Result};
use crate::io;

/// Sparse token-frequency profile, normalized to unit mass.
pub type Profile = BTreeMap<String, f64>;

pub fn profile<'a>(texts: impl IntoIterator<Item = &'a str>) -> Profile {
    let mut counts = Profile::new();
    let mut total = 0.0;
    for t in texts {
        for w in words(t, true) {
            *counts.entry(w).or_insert(0.0) += 1.0;
            total += 1.0;
        }
    }
    if total > 0.0 {
        counts.values_mut().for_each(|c| *c /= total);
    }
    counts
}

fn norm(p: &Profile) -> f64 {
    p.values().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn cosine(a: &Profile, b: &Profile) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let dot: f64 = small
        .iter()
        .filter_map(|(k, v)| large.get(k).map(|w| v * w))
        .sum();
    dot / (na * nb)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SeedGroup {
    pub users: Vec<String>,
    /// Interest profile; built from the listed users' histories when empty.
    #[serde(default)]
    pub profile: Profile,
}

/// Reference users with known left and right leaning. Stored as JSON:
/// `{"left": {"users": [...], "profile": {...}}, "right": {...}}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SeedInterestSets {
    pub left: SeedGroup,
    pub right: SeedGroup,
}

impl SeedInterestSets {
    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Fills empty profiles from the corpus and checks the invariants:
    /// non-empty profiles and disjoint user groups.
    pub fn resolve(mut self, corpus: &Corpus) -> Result<Self> {
        let users = corpus.user_index();
        for group in [&mut self.left, &mut self.right] {
            if group.profile.is_empty() {
                let mut texts = Vec::new();
                for id in &group.users {
                    let u = users.get(id.as_str()).ok_or_else(|| Error::DanglingIds {
                        what: "seed users".into(),
                        ids: vec![id.clone()],
                    })?;
                    texts.extend(u.history.iter().map(String::as_str));
                }
                group.profile = profile(texts);
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, g) in [("left", &self.left), ("right", &self.right)] {
            if norm(&g.profile) == 0.0 {
                return Err(Error::config(format!("seeds.{name}"), "interest profile is empty"));
            }
        }
        let left: BTreeSet<&String> = self.left.users.iter().collect();
        if let Some(u) = self.right.users.iter().find(|u| left.contains(u)) {
            return Err(Error::config("seeds", format!("user `{u}` is in both seed groups")));
        }
        Ok(())
    }
}

/// `cos(p, right) − cos(p, left)` clipped to `[-1, 1]`; 0 for an empty
/// history.
pub fn bias_score<'a>(history: impl IntoIterator<Item = &'a str>, seeds: &SeedInterestSets) -> f64 {
    let p = profile(history);
    if p.is_empty() {
        return 0.0;
    }
    (cosine(&p, &seeds.right.profile) - cosine(&p, &seeds.left.profile)).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeds(left: &str, right: &str) -> SeedInterestSets {
        SeedInterestSets {
            left: SeedGroup {
                users: vec!["l".into()],
                profile: profile([left]),
            },
            right: SeedGroup {
                users: vec!["r".into()],
                profile: profile([right]),
            },
        }
    }

    #[test]
    fn cosine_extremes() {
        let s = seeds("tax tax union", "border church");
        assert!((bias_score(["border church"], &s) - 1.0).abs() < 1e-12);
        assert!((bias_score(["tax union tax"], &s) + 1.0).abs() < 1e-12);
        assert_eq!(bias_score(["tax border"], &seeds("tax", "border")), 0.0);
        assert_eq!(bias_score(std::iter::empty::<&str>(), &s), 0.0);
    }

    #[test]
    fn hand_computed_fixture() {
        // p = (a:2, b:1, c:1)/4, left = (a:1, b:1)/2, right = (c:1)
        let s = seeds("a b", "c");
        let p = [2.0, 1.0, 1.0];
        let np = (p.iter().map(|x: &f64| x * x).sum::<f64>()).sqrt();
        let cos_left = (2.0 + 1.0) / (np * 2f64.sqrt());
        let cos_right = 1.0 / np;
        let expected = cos_right - cos_left;
        assert!((bias_score(["a b a c"], &s) - expected).abs() < 1e-9);
    }

    #[test]
    fn overlapping_groups_rejected() {
        let mut s = seeds("a", "b");
        s.right.users.push("l".into());
        assert!(s.validate().is_err());
        let mut empty = seeds("a", "b");
        empty.left.profile.clear();
        assert!(empty.validate().is_err());
    }
}
