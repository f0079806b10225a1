use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use mwss::baselines::Method;
use mwss::data::{load_corpus, CorpusPaths};
use mwss::harness::{self, HarnessConfig, SweepSpec, QUALITY_FILE};
use mwss::io::{file_digest, read_csv};
use mwss::model::{Checkpoint, Model};
use mwss::nn::{ParamVector, SeededRng};
use mwss::weak::{compute_stats, fit_thresholds, LabelingConfig, LabelingResources, Lexicon, SeedInterestSets};
use mwss::Error;
use rand::SeedableRng;

fn small() -> HarnessConfig {
    let mut cfg = HarnessConfig::desk();
    cfg.synth.n_clean = 400;
    cfg.synth.n_unlabeled = 600;
    cfg.train.max_steps = 60;
    cfg.train.eval_every = 20;
    cfg
}

fn corpus_and_weak(cfg: &HarnessConfig, root: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let corpus = root.join("corpus");
    let weak = root.join("weak");
    harness::cmd_synth(cfg, 3, &corpus).unwrap();
    harness::cmd_weaklabel(cfg, 3, &corpus, false, &weak).unwrap();
    (corpus, weak)
}

fn line_count(p: &Path) -> usize {
    fs::read_to_string(p).unwrap().lines().count()
}

#[test]
fn synth_writes_counts_and_reruns_identically() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    harness::cmd_synth(&cfg, 3, &a).unwrap();
    harness::cmd_synth(&cfg, 3, &b).unwrap();
    // One header line per file.
    assert_eq!(line_count(&a.join("news.jsonl")), 1 + 400 + 600);
    let users = load_corpus(&CorpusPaths::in_dir(&a)).unwrap().users.len();
    assert_eq!(line_count(&a.join("users.jsonl")), 1 + users);
    for f in ["news.jsonl", "engagements.jsonl", "users.jsonl", "truth.jsonl", "lexicon.tsv", "seeds.json"] {
        assert_eq!(file_digest(&a.join(f)).unwrap(), file_digest(&b.join(f)).unwrap(), "{f}");
    }
    let hash = harness::read_manifest_hash(&a).unwrap();
    assert!(fs::read_to_string(a.join("lexicon.tsv")).unwrap().starts_with(&format!("# manifest={hash}")));
    assert!(fs::read_to_string(a.join("news.jsonl")).unwrap().lines().next().unwrap().contains(&hash));
    assert!(fs::read_to_string(a.join("seeds.json")).unwrap().contains(&hash));
}

#[test]
fn synth_rejects_invalid_rho_by_field() {
    let mut cfg = small();
    cfg.synth.rho[0] = 0.6;
    let dir = tempfile::tempdir().unwrap();
    let err = harness::cmd_synth(&cfg, 0, dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("synth.rho[0]"));
}

#[test]
fn weaklabel_noiseless_corpus_is_exact() {
    let mut cfg = small();
    cfg.synth.rho = [0.0; 3];
    let dir = tempfile::tempdir().unwrap();
    let (_, weak) = corpus_and_weak(&cfg, dir.path());
    let (_, rows): (_, Vec<harness::QualityRow>) = read_csv(&weak.join(QUALITY_FILE), harness::QUALITY_SCHEMA).unwrap();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert_eq!(r.accuracy, Some(1.0), "{:?}", r.source);
        assert_eq!(r.coverage, 1.0);
    }
}

#[test]
fn weaklabel_fit_matches_direct_threshold_fit() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let corpus_dir = dir.path().join("corpus");
    harness::cmd_synth(&cfg, 3, &corpus_dir).unwrap();
    let rows = harness::cmd_weaklabel(&cfg, 5, &corpus_dir, true, &dir.path().join("weak")).unwrap();

    let corpus = load_corpus(&CorpusPaths::in_dir(&corpus_dir)).unwrap();
    let res = LabelingResources {
        lexicon: Lexicon::load(&corpus_dir.join("lexicon.tsv")).unwrap(),
        seeds: SeedInterestSets::load(&corpus_dir.join("seeds.json")).unwrap().resolve(&corpus).unwrap(),
    };
    let stats = compute_stats(&corpus, &res, &LabelingConfig::default()).unwrap();
    let labeled: Vec<_> = corpus.labeled().cloned().collect();
    let train: BTreeSet<String> = mwss::data::split(&labeled, 5).unwrap().train.into_iter().collect();
    let labels = labeled
        .iter()
        .filter(|n| train.contains(&n.id))
        .map(|n| (n.id.clone(), n.label.unwrap()))
        .collect();
    let fits = fit_thresholds(&stats, &labels).unwrap();
    for (row, (source, fit)) in rows.iter().zip(fits) {
        assert_eq!(row.source, source);
        assert_eq!(row.threshold, fit.tau);
        assert_eq!(row.fit_accuracy, Some(fit.accuracy));
    }
}

#[test]
fn train_writes_stamped_reproducible_outputs() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let (corpus, weak) = corpus_and_weak(&cfg, dir.path());
    let a = harness::cmd_train(&cfg, 1, &corpus, &weak, Method::CleanOnly, &dir.path().join("a")).unwrap();
    let acc = a.result.test.accuracy;
    assert!((0.0..=1.0).contains(&acc));
    let m = harness::cmd_train(&cfg, 1, &corpus, &weak, Method::Mwss, &dir.path().join("m1")).unwrap();
    harness::cmd_train(&cfg, 1, &corpus, &weak, Method::Mwss, &dir.path().join("m2")).unwrap();
    for f in ["checkpoint.json", "history.csv", "metrics.csv"] {
        let x = fs::read(dir.path().join("m1").join(f)).unwrap();
        let y = fs::read(dir.path().join("m2").join(f)).unwrap();
        assert!(x == y, "{f} differs between reruns");
    }
    let history = fs::read_to_string(dir.path().join("m1/history.csv")).unwrap();
    assert!(history.starts_with(&format!("# schema=mwss.history/1 manifest={}", m.manifest)));
    assert!(history.lines().nth(1).unwrap().ends_with("omega_sentiment,omega_bias,omega_credibility"));
    // Evaluations after step 0 carry a mean weight per source.
    let row: Vec<&str> = history.lines().nth(3).unwrap().split(',').collect();
    assert!(row[4..].iter().all(|c| c.parse::<f64>().is_ok()), "{row:?}");
}

#[test]
fn train_refuses_weak_sets_touching_test_split() {
    let mut cfg = small();
    cfg.labeling.include_labeled = true;
    let dir = tempfile::tempdir().unwrap();
    let (corpus, weak) = corpus_and_weak(&cfg, dir.path());
    let err = harness::cmd_train(&cfg, 0, &corpus, &weak, Method::CleanPlusWeak, &dir.path().join("t")).unwrap_err();
    assert!(matches!(err, Error::LeakGuard { .. }), "{err}");
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn outputs_of_another_schema_are_not_overwritten() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let (corpus, weak) = corpus_and_weak(&cfg, dir.path());
    let out = dir.path().join("t");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("history.csv"), "# schema=mwss.history/0 manifest=x\nstep\n").unwrap();
    let err = harness::cmd_train(&cfg, 0, &corpus, &weak, Method::CleanOnly, &out).unwrap_err();
    assert!(matches!(err, Error::Schema { .. }), "{err}");
}

#[test]
fn sweep_cardinality_skips_and_weak_only_independence() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let (corpus, weak) = corpus_and_weak(&cfg, dir.path());
    let spec = SweepSpec {
        ratios: vec![0.02, 0.1],
        seeds: vec![0, 1, 2],
        methods: vec![Method::CleanOnly, Method::WeakOnly],
        jobs: 2,
    };
    let s = harness::cmd_sweep(&cfg, &spec, &corpus, &weak, &dir.path().join("s")).unwrap();
    assert_eq!(s.rows.len(), 12);
    assert!(s.rows.iter().all(|r| r.status == "ok"));
    for seed in 0..3 {
        let weak_acc: Vec<_> = s
            .rows
            .iter()
            .filter(|r| r.method == Method::WeakOnly && r.seed == seed)
            .map(|r| r.accuracy)
            .collect();
        assert_eq!(weak_acc[0], weak_acc[1]);
    }
    assert_eq!(s.means.len(), 4);

    let serial = SweepSpec { jobs: 1, ..spec.clone() };
    harness::cmd_sweep(&cfg, &serial, &corpus, &weak, &dir.path().join("s1")).unwrap();
    assert_eq!(
        fs::read(dir.path().join("s/sweep.csv")).unwrap(),
        fs::read(dir.path().join("s1/sweep.csv")).unwrap()
    );

    // 300 clean training items cannot give a 0.5 ratio next to 600 weak.
    let too_much = SweepSpec {
        ratios: vec![0.5],
        seeds: vec![0],
        methods: vec![Method::CleanOnly],
        jobs: 1,
    };
    let s = harness::cmd_sweep(&cfg, &too_much, &corpus, &weak, &dir.path().join("s2")).unwrap();
    assert_eq!(s.rows[0].status, "skipped");
    assert!(s.rows[0].reason.contains("insufficient clean data"));
}

#[test]
fn zero_alpha_checkpoint_puts_every_weight_in_the_middle_bin() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let (corpus, weak) = corpus_and_weak(&cfg, dir.path());
    let mc = cfg.train_for_seed(0).model;
    let model = Model::new(mc.clone()).unwrap();
    let theta = model.init_theta(&mut SeededRng::seed_from_u64(9)).unwrap();
    let alpha = ParamVector::zeros(model.alpha_layout().clone());
    let ck = dir.path().join("ck/zero.json");
    fs::create_dir_all(ck.parent().unwrap()).unwrap();
    Checkpoint::new(&model, &theta, &alpha, "test").save(&ck).unwrap();
    let s = harness::cmd_weights(&cfg, 0, &ck, &corpus, &weak, &dir.path().join("w")).unwrap();
    for name in ["sentiment", "bias", "credibility", "clean"] {
        let rows: Vec<_> = s.histogram.iter().filter(|r| r.source == name).collect();
        assert_eq!(rows.len(), 50);
        let occupied: Vec<_> = rows.iter().filter(|r| r.count > 0).collect();
        assert_eq!(occupied.len(), 1, "{name}");
        assert_eq!(occupied[0].bin, 25);
        let mean = s.means.iter().find(|m| m.source == name).unwrap();
        assert_eq!(occupied[0].count, mean.instances);
        assert_eq!(mean.mean, Some(0.5));
    }

    let mut other = mc;
    other.head_hidden += 1;
    let m2 = Model::new(other).unwrap();
    let t2 = m2.init_theta(&mut SeededRng::seed_from_u64(9)).unwrap();
    let a2 = ParamVector::zeros(m2.alpha_layout().clone());
    Checkpoint::new(&m2, &t2, &a2, "test").save(&ck).unwrap();
    let err = harness::cmd_weights(&cfg, 0, &ck, &corpus, &weak, &dir.path().join("w")).unwrap_err();
    assert!(matches!(err, Error::Checkpoint(_)), "{err}");
}

#[test]
fn weights_rejects_baseline_checkpoints() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let (corpus, weak) = corpus_and_weak(&cfg, dir.path());
    let out = dir.path().join("merged");
    harness::cmd_train(&cfg, 0, &corpus, &weak, Method::CleanPlusWeak, &out).unwrap();
    let err = harness::cmd_weights(&cfg, 0, &out.join("checkpoint.json"), &corpus, &weak, &dir.path().join("w")).unwrap_err();
    assert!(err.to_string().contains("mwss"), "{err}");
}

#[test]
fn every_method_gets_the_mwss_step_budget() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let (corpus, weak) = corpus_and_weak(&cfg, dir.path());
    let mut budgets = Vec::new();
    for m in Method::ALL {
        let s = harness::cmd_train(&cfg, 0, &corpus, &weak, m, &dir.path().join(m.name())).unwrap();
        assert_eq!(s.result.outcome.steps, s.result.budget, "{m}");
        budgets.push(s.result.budget);
    }
    assert!(budgets.iter().all(|&b| b == 60), "{budgets:?}");
}
