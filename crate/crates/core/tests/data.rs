use std::fs;

use mwss::data::synth::{synth_generate, SynthConfig};
use mwss::data::{load_corpus, save_corpus, split, CorpusPaths};
use mwss::Error;
use proptest::prelude::*;

fn write_fixture(dir: &std::path::Path, engagement_news: &str) -> CorpusPaths {
    let paths = CorpusPaths::in_dir(dir);
    fs::write(
        &paths.news,
        "{\"schema\":\"mwss.news/1\",\"manifest\":\"m\"}\n{\"id\":\"n1\",\"text\":\"storm hits coast\",\"label\":0}\n",
    )
    .unwrap();
    fs::write(
        &paths.engagements,
        format!(
            "{{\"schema\":\"mwss.engagements/1\",\"manifest\":\"m\"}}\n{{\"news_id\":\"{engagement_news}\",\"user_id\":\"u1\",\"text\":\"wow\",\"timestamp\":5}}\n"
        ),
    )
    .unwrap();
    fs::write(
        &paths.users,
        "{\"schema\":\"mwss.users/1\",\"manifest\":\"m\"}\n{\"id\":\"u1\",\"history\":[\"a b\"],\"meta\":[1.0,2.0]}\n",
    )
    .unwrap();
    paths
}

#[test]
fn loads_three_line_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_fixture(dir.path(), "n1");
    let c = load_corpus(&paths).unwrap();
    assert_eq!((c.news.len(), c.engagements.len(), c.users.len()), (1, 1, 1));
    assert_eq!(c.news[0].label, Some(0));
}

#[test]
fn dangling_news_id_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_fixture(dir.path(), "ghost");
    match load_corpus(&paths) {
        Err(Error::DanglingIds { ids, .. }) => assert_eq!(ids, vec!["ghost".to_owned()]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn malformed_line_reports_number() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_fixture(dir.path(), "n1");
    let mut text = fs::read_to_string(&paths.users).unwrap();
    text.push_str("{\"id\": }\n");
    fs::write(&paths.users, text).unwrap();
    assert!(matches!(load_corpus(&paths), Err(Error::Parse { line: 3, .. })));
}

#[test]
fn save_load_round_trip() {
    let out = synth_generate(&SynthConfig {
        n_clean: 30,
        n_unlabeled: 40,
        ..Default::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = CorpusPaths::in_dir(dir.path());
    save_corpus(&paths, &out.corpus, "abc").unwrap();
    assert_eq!(load_corpus(&paths).unwrap(), out.corpus);
}

#[test]
fn generator_is_deterministic_per_seed() {
    let cfg = SynthConfig {
        n_clean: 20,
        n_unlabeled: 50,
        ..Default::default()
    };
    let a = synth_generate(&cfg).unwrap();
    let b = synth_generate(&cfg).unwrap();
    assert_eq!(a.corpus, b.corpus);
    assert_eq!(a.truth, b.truth);
    let c = synth_generate(&SynthConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a.corpus, c.corpus);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn split_is_disjoint_stratified_and_complete(n_real in 10usize..80, n_fake in 10usize..80, seed in 0u64..1000) {
        let arts: Vec<_> = (0..n_real + n_fake)
            .map(|i| mwss::data::NewsArticle { id: format!("a{i}"), text: String::new(), label: Some(u8::from(i >= n_real)) })
            .collect();
        let s = split(&arts, seed).unwrap();
        let n = arts.len();
        let mut all: Vec<&String> = s.train.iter().chain(&s.val).chain(&s.test).collect();
        all.sort();
        all.dedup();
        prop_assert_eq!(all.len(), n);
        let share = n_fake as f64 / n as f64;
        for part in [&s.train, &s.val, &s.test] {
            let fakes = part.iter().filter(|id| id[1..].parse::<usize>().unwrap() >= n_real).count();
            prop_assert!((fakes as f64 - share * part.len() as f64).abs() <= 1.0);
        }
        let sizes = s.sizes();
        prop_assert!((sizes[1] as f64 - 0.15 * n as f64).abs() <= 1.0);
        prop_assert!((sizes[2] as f64 - 0.10 * n as f64).abs() <= 1.0);
    }
}
