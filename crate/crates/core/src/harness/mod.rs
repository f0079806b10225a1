//! Reproducible experiment driver behind the `mwss` binary.
//!
//! Every command takes a [`HarnessConfig`], a seed and explicit input/output
//! directories, records a [`RunManifest`] and stamps each output with the
//! manifest hash. Outputs depend only on the manifest, so rerunning a
//! manifest reproduces them byte for byte. Wall-clock timing lives only in
//! `manifest.json`.

mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{ExperimentConfig, HarnessConfig};

use crate::baselines::{heads_for, Method};
use crate::data::synth::synth_generate;
use crate::data::{known_labels, load_corpus, load_truth, save_corpus, save_truth, split, Corpus, CorpusCounts, CorpusPaths};
use crate::error::{Error, Result};
use crate::experiment::{prepare, run, Prepared, RunResult};
use crate::io::{self, sha256_hex};
use crate::model::Checkpoint;
use crate::trainer::Sample;
use crate::weak::{
    apply_labeling, compute_stats, fit_thresholds, LabelingResources, Lexicon, SeedInterestSets, Source, WeakInstance,
    WeakLabeledSet,
};

pub const WEAK_SCHEMA: &str = "mwss.weak/1";
pub const QUALITY_SCHEMA: &str = "mwss.quality/1";
pub const HISTORY_SCHEMA: &str = "mwss.history/1";
pub const METRICS_SCHEMA: &str = "mwss.metrics/1";
pub const SWEEP_SCHEMA: &str = "mwss.sweep/1";
pub const SWEEP_MEAN_SCHEMA: &str = "mwss.sweep-mean/1";
pub const WEIGHTS_SCHEMA: &str = "mwss.weights/1";
pub const WEIGHT_MEANS_SCHEMA: &str = "mwss.weight-means/1";

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "MWSS_OUT";
pub const HISTOGRAM_BINS: usize = 50;

pub const LEXICON_FILE: &str = "lexicon.tsv";
pub const SEEDS_FILE: &str = "seeds.json";
pub const QUALITY_FILE: &str = "quality.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// `<$MWSS_OUT or ./mwss-out>/<command>`.
pub fn default_out_dir(command: &str) -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("mwss-out"))
        .join(command)
}

pub fn weak_file(source: Source) -> String {
    format!("weak_{}.jsonl", source.name())
}

/// Everything an output depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: HarnessConfig,
    pub seed: u64,
    /// Command-specific arguments such as the training mode.
    pub args: BTreeMap<String, String>,
    /// SHA-256 of each input file, keyed by `<role>/<file name>`.
    pub inputs: BTreeMap<String, String>,
    /// Output file names, relative to the output directory.
    pub artifacts: Vec<String>,
}

impl RunManifest {
    fn new(command: &str, config: &HarnessConfig, seed: u64) -> Self {
        RunManifest {
            command: command.into(),
            config: config.clone(),
            seed,
            args: BTreeMap::new(),
            inputs: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("manifest serializes"))
    }

    fn arg(mut self, key: &str, value: impl ToString) -> Self {
        self.args.insert(key.into(), value.to_string());
        self
    }

    fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        self.inputs.insert(format!("{role}/{name}"), io::file_digest(path)?);
        Ok(())
    }

    fn artifacts(mut self, names: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.artifacts = names.into_iter().map(Into::into).collect();
        self
    }
}

#[derive(Serialize)]
struct ManifestFile<'a> {
    hash: String,
    manifest: &'a RunManifest,
    timing: BTreeMap<&'a str, f64>,
}

fn write_manifest(out: &Path, manifest: &RunManifest, start: Instant, mut timing: BTreeMap<&str, f64>) -> Result<()> {
    timing.insert("total_secs", start.elapsed().as_secs_f64());
    let file = ManifestFile {
        hash: manifest.hash(),
        manifest,
        timing,
    };
    io::write_atomic(&out.join(MANIFEST_FILE), serde_json::to_string_pretty(&file)?.as_bytes())
}

/// Reads the `hash` field of a `manifest.json`.
pub fn read_manifest_hash(dir: &Path) -> Result<String> {
    let v: serde_json::Value = serde_json::from_str(&io::read_to_string(&dir.join(MANIFEST_FILE))?)?;
    v["hash"]
        .as_str()
        .map(str::to_owned)
        .ok_or_else(|| Error::Checkpoint(format!("{} has no hash", dir.join(MANIFEST_FILE).display())))
}

fn fmt_f(x: f64) -> String {
    format!("{x}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub counts: CorpusCounts,
    pub manifest: String,
}

#[derive(Serialize)]
struct StampedSeeds<'a> {
    manifest: &'a str,
    #[serde(flatten)]
    seeds: &'a SeedInterestSets,
}

/// Generates the synthetic corpus with `synth.seed = seed` and writes it to
/// `out` with its truth file, lexicon and seed users.
pub fn cmd_synth(config: &HarnessConfig, seed: u64, out: &Path) -> Result<SynthSummary> {
    let start = Instant::now();
    let mut cfg = config.clone();
    cfg.synth.seed = seed;
    cfg.synth.validate()?;
    let paths = CorpusPaths::in_dir(out);
    let manifest = RunManifest::new("synth", &cfg, seed).artifacts([
        "news.jsonl",
        "engagements.jsonl",
        "users.jsonl",
        "truth.jsonl",
        LEXICON_FILE,
        SEEDS_FILE,
    ]);
    let hash = manifest.hash();
    let generated = synth_generate(&cfg.synth)?;
    io::ensure_dir(out)?;
    save_corpus(&paths, &generated.corpus, &hash)?;
    save_truth(&paths.truth(), &generated.truth, &hash)?;
    let lexicon = format!("# manifest={hash}\n{}", generated.lexicon.to_tsv());
    io::write_atomic(&out.join(LEXICON_FILE), lexicon.as_bytes())?;
    let seeds = serde_json::to_string_pretty(&StampedSeeds {
        manifest: &hash,
        seeds: &generated.seeds,
    })?;
    io::write_atomic(&out.join(SEEDS_FILE), seeds.as_bytes())?;
    write_manifest(out, &manifest, start, BTreeMap::new())?;
    Ok(SynthSummary {
        counts: generated.corpus.counts(),
        manifest: hash,
    })
}

// ---------------------------------------------------------------- weaklabel

/// One row of the weak-label quality table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRow {
    pub source: Source,
    pub threshold: f64,
    /// Accuracy of the fitted threshold on the clean training split; empty
    /// when the threshold came from the config.
    pub fit_accuracy: Option<f64>,
    /// Agreement with every known label (clean labels plus the truth file).
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    /// Share of all news the source labels.
    pub coverage: f64,
    pub evaluated: usize,
    pub positives: usize,
    pub negatives: usize,
    pub abstained: usize,
}

struct CorpusInputs {
    corpus: Corpus,
    truth: Option<BTreeMap<String, u8>>,
}

fn load_corpus_dir(dir: &Path, manifest: &mut RunManifest) -> Result<CorpusInputs> {
    let paths = CorpusPaths::in_dir(dir);
    for p in [&paths.news, &paths.engagements, &paths.users] {
        manifest.input("corpus", p)?;
    }
    if paths.truth().exists() {
        manifest.input("corpus", &paths.truth())?;
    }
    let corpus = load_corpus(&paths)?;
    let truth = load_truth(&paths.truth())?;
    Ok(CorpusInputs { corpus, truth })
}

/// Labels the corpus with the three weak sources. With `fit`, thresholds
/// are fitted on the clean training split of `seed` first.
pub fn cmd_weaklabel(config: &HarnessConfig, seed: u64, corpus_dir: &Path, fit: bool, out: &Path) -> Result<Vec<QualityRow>> {
    let start = Instant::now();
    config.labeling.validate()?;
    let mut manifest = RunManifest::new("weaklabel", config, seed).arg("fit", fit);
    let inputs = load_corpus_dir(corpus_dir, &mut manifest)?;
    let lex_path = corpus_dir.join(LEXICON_FILE);
    let seeds_path = corpus_dir.join(SEEDS_FILE);
    manifest.input("corpus", &lex_path)?;
    manifest.input("corpus", &seeds_path)?;
    let resources = LabelingResources {
        lexicon: Lexicon::load(&lex_path)?,
        seeds: SeedInterestSets::load(&seeds_path)?.resolve(&inputs.corpus)?,
    };
    let mut artifacts: Vec<String> = Source::ALL.iter().map(|s| weak_file(*s)).collect();
    artifacts.push(QUALITY_FILE.into());
    let manifest = manifest.artifacts(artifacts);
    let hash = manifest.hash();

    let mut labeling = config.labeling.clone();
    let stats = compute_stats(&inputs.corpus, &resources, &labeling)?;
    let mut fitted = BTreeMap::new();
    if fit {
        let labeled: Vec<_> = inputs.corpus.labeled().cloned().collect();
        let train_ids = split(&labeled, seed)?.train;
        let all = known_labels(&inputs.corpus, None);
        let train_labels: BTreeMap<String, u8> = train_ids.into_iter().map(|id| {
            let y = all[&id];
            (id, y)
        }).collect();
        for (source, f) in fit_thresholds(&stats, &train_labels)? {
            labeling.set_tau(source, f.tau);
            fitted.insert(source, f.accuracy);
        }
    }
    let known = known_labels(&inputs.corpus, inputs.truth.as_ref());
    let (sets, reports) = apply_labeling(&inputs.corpus, &stats, &labeling, &known)?;
    io::ensure_dir(out)?;
    for set in &sets {
        io::write_jsonl(&out.join(weak_file(set.source)), WEAK_SCHEMA, &hash, &set.instances)?;
    }
    let total = inputs.corpus.news.len().max(1) as f64;
    let rows: Vec<QualityRow> = reports
        .iter()
        .map(|r| QualityRow {
            source: r.source,
            threshold: r.threshold,
            fit_accuracy: fitted.get(&r.source).copied(),
            accuracy: r.accuracy,
            f1: r.f1,
            coverage: (r.positives + r.negatives) as f64 / total,
            evaluated: r.evaluated,
            positives: r.positives,
            negatives: r.negatives,
            abstained: r.abstained,
        })
        .collect();
    io::write_csv(&out.join(QUALITY_FILE), QUALITY_SCHEMA, &hash, &rows)?;
    write_manifest(out, &manifest, start, BTreeMap::new())?;
    Ok(rows)
}

/// Reads the weak sets of `sources` written by [`cmd_weaklabel`].
pub fn load_weak_sets(dir: &Path, sources: &[Source]) -> Result<Vec<WeakLabeledSet>> {
    let (_, quality): (_, Vec<QualityRow>) = io::read_csv(&dir.join(QUALITY_FILE), QUALITY_SCHEMA)?;
    sources
        .iter()
        .map(|&source| {
            let (_, instances): (_, Vec<WeakInstance>) = io::read_jsonl(&dir.join(weak_file(source)), WEAK_SCHEMA)?;
            let threshold = quality.iter().find(|q| q.source == source).map_or(f64::NAN, |q| q.threshold);
            Ok(WeakLabeledSet {
                source,
                threshold,
                instances,
                quality: None,
            })
        })
        .collect()
}

fn record_weak_inputs(manifest: &mut RunManifest, dir: &Path, sources: &[Source]) -> Result<()> {
    manifest.input("weak", &dir.join(QUALITY_FILE))?;
    for s in sources {
        manifest.input("weak", &dir.join(weak_file(*s)))?;
    }
    Ok(())
}

fn prepare_from_dirs(
    config: &HarnessConfig,
    seed: u64,
    ratio: f64,
    corpus_dir: &Path,
    weak_dir: &Path,
    manifest: &mut RunManifest,
) -> Result<Prepared> {
    let inputs = load_corpus_dir(corpus_dir, manifest)?;
    let sources = &config.experiment.sources;
    record_weak_inputs(manifest, weak_dir, sources)?;
    let sets = load_weak_sets(weak_dir, sources)?;
    prepare(&inputs.corpus, &sets, sources, &config.train.model.encoder.tokenizer, ratio, seed)
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub result: RunResult,
    pub manifest: String,
}

fn omega_columns(sources: &[Source]) -> Vec<String> {
    sources.iter().map(|s| format!("omega_{}", s.name())).collect()
}

/// Pads per-set weights to one column per configured source.
fn omega_cells(omega: &[Option<f64>], n: usize) -> Vec<String> {
    (0..n).map(|k| fmt_opt(omega.get(k).copied().flatten())).collect()
}

/// Trains one method and writes `checkpoint.json`, `history.csv` and
/// `metrics.csv`.
pub fn cmd_train(
    config: &HarnessConfig,
    seed: u64,
    corpus_dir: &Path,
    weak_dir: &Path,
    mode: Method,
    out: &Path,
) -> Result<TrainSummary> {
    let start = Instant::now();
    config.validate()?;
    let mut manifest = RunManifest::new("train", config, seed).arg("mode", mode);
    let prepared = prepare_from_dirs(config, seed, config.experiment.clean_ratio, corpus_dir, weak_dir, &mut manifest)?;
    let manifest = manifest.artifacts([CHECKPOINT_FILE, "history.csv", "metrics.csv"]);
    let hash = manifest.hash();
    let tc = config.train_for_seed(seed);
    let result = run(mode, &prepared, &tc, config.experiment.tie_label)?;
    io::ensure_dir(out)?;
    Checkpoint::new(&result.model, &result.outcome.best_theta, &result.outcome.alpha, &hash).save(&out.join(CHECKPOINT_FILE))?;

    let sources = &config.experiment.sources;
    let k = sources.len();
    let mut header: Vec<String> = ["step", "train_loss", "val_loss", "val_acc"].map(String::from).to_vec();
    header.extend(omega_columns(sources));
    let records: Vec<Vec<String>> = result
        .outcome
        .history
        .iter()
        .map(|h| {
            let mut r = vec![h.step.to_string(), fmt_opt(h.train_loss), fmt_f(h.val_loss), fmt_f(h.val_acc)];
            r.extend(omega_cells(&h.mean_omega, k));
            r
        })
        .collect();
    io::write_csv_records(&out.join("history.csv"), HISTORY_SCHEMA, &hash, &header, &records)?;

    let t = &result.test;
    let mut header: Vec<String> = [
        "method", "seed", "clean_ratio", "accuracy", "precision", "recall", "f1", "tp", "fp", "tn", "fn", "best_step", "steps",
        "budget",
    ]
    .map(String::from)
    .to_vec();
    header.extend(omega_columns(sources));
    let mut row = vec![
        mode.to_string(),
        seed.to_string(),
        fmt_f(prepared.clean_ratio()),
        fmt_f(t.accuracy),
        fmt_f(t.precision),
        fmt_f(t.recall),
        fmt_f(t.f1),
        t.confusion.tp.to_string(),
        t.confusion.fp.to_string(),
        t.confusion.tn.to_string(),
        t.confusion.fn_.to_string(),
        result.outcome.best_step.to_string(),
        result.outcome.steps.to_string(),
        result.budget.to_string(),
    ];
    row.extend(omega_cells(&t.mean_omega, k));
    io::write_csv_records(&out.join("metrics.csv"), METRICS_SCHEMA, &hash, &header, &[row])?;
    let timing = BTreeMap::from([("train_secs", t.runtime_secs)]);
    write_manifest(out, &manifest, start, timing)?;
    Ok(TrainSummary { result, manifest: hash })
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: Method,
    pub ratio: f64,
    pub seed: u64,
    /// `ok` or `skipped`.
    pub status: String,
    pub reason: String,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMeanRow {
    pub method: Method,
    pub ratio: f64,
    pub runs: usize,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub ratios: Vec<f64>,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    /// Upper bound on concurrently running cells.
    pub jobs: usize,
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    pub means: Vec<SweepMeanRow>,
    pub manifest: String,
}

/// Mean F1 and accuracy over the `ok` rows of each (method, ratio).
pub fn sweep_means(rows: &[SweepRow]) -> Vec<SweepMeanRow> {
    let mut groups: BTreeMap<(Method, u64), (f64, Vec<&SweepRow>)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.status == "ok") {
        groups.entry((r.method, r.ratio.to_bits())).or_insert((r.ratio, Vec::new())).1.push(r);
    }
    let mut out: Vec<SweepMeanRow> = groups
        .into_iter()
        .map(|((method, _), (ratio, rs))| {
            let n = rs.len() as f64;
            SweepMeanRow {
                method,
                ratio,
                runs: rs.len(),
                f1: Some(rs.iter().filter_map(|r| r.f1).sum::<f64>() / n),
                accuracy: Some(rs.iter().filter_map(|r| r.accuracy).sum::<f64>() / n),
            }
        })
        .collect();
    out.sort_by(|a, b| (a.method, a.ratio).partial_cmp(&(b.method, b.ratio)).expect("finite ratios"));
    out
}

/// Runs every (method, ratio, seed) cell. A ratio the clean pool cannot
/// satisfy yields `skipped` rows instead of an error. Rows come back sorted
/// by method, ratio and seed whatever the completion order.
pub fn cmd_sweep(config: &HarnessConfig, spec: &SweepSpec, corpus_dir: &Path, weak_dir: &Path, out: &Path) -> Result<SweepSummary> {
    let start = Instant::now();
    config.validate()?;
    for &r in &spec.ratios {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::config("ratios", format!("{r} is outside (0, 1)")));
        }
    }
    let mut manifest = RunManifest::new("sweep", config, spec.seeds.first().copied().unwrap_or(0))
        .arg("ratios", format!("{:?}", spec.ratios))
        .arg("seeds", format!("{:?}", spec.seeds))
        .arg("methods", spec.methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(","));
    let inputs = load_corpus_dir(corpus_dir, &mut manifest)?;
    let sources = &config.experiment.sources;
    record_weak_inputs(&mut manifest, weak_dir, sources)?;
    let sets = load_weak_sets(weak_dir, sources)?;
    let manifest = manifest.artifacts(["sweep.csv", "sweep_mean.csv"]);
    let hash = manifest.hash();

    let mut cells: Vec<(f64, u64, std::result::Result<Prepared, String>)> = Vec::new();
    for &ratio in &spec.ratios {
        for &seed in &spec.seeds {
            let prepared = prepare(&inputs.corpus, &sets, sources, &config.train.model.encoder.tokenizer, ratio, seed);
            let prepared = match prepared {
                Ok(p) => Ok(p),
                Err(e @ Error::InsufficientClean { .. }) => Err(e.to_string()),
                Err(e) => return Err(e),
            };
            cells.push((ratio, seed, prepared));
        }
    }
    let jobs: Vec<(usize, Method)> = (0..cells.len()).flat_map(|c| spec.methods.iter().map(move |&m| (c, m))).collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Result<SweepRow>>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..spec.jobs.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(c, method)) = jobs.get(i) else { break };
                let (ratio, seed, prepared) = &cells[c];
                let row = match prepared {
                    Err(reason) => Ok(SweepRow {
                        method,
                        ratio: *ratio,
                        seed: *seed,
                        status: "skipped".into(),
                        reason: reason.clone(),
                        f1: None,
                        accuracy: None,
                    }),
                    Ok(p) => run(method, p, &config.train_for_seed(*seed), config.experiment.tie_label).map(|r| SweepRow {
                        method,
                        ratio: *ratio,
                        seed: *seed,
                        status: "ok".into(),
                        reason: String::new(),
                        f1: Some(r.test.f1),
                        accuracy: Some(r.test.accuracy),
                    }),
                };
                results.lock().expect("no job panics while holding the lock").push(row);
            });
        }
    });
    let mut rows = results.into_inner().expect("jobs finished").into_iter().collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| (a.method, a.ratio, a.seed).partial_cmp(&(b.method, b.ratio, b.seed)).expect("finite ratios"));
    let means = sweep_means(&rows);
    io::ensure_dir(out)?;
    io::write_csv(&out.join("sweep.csv"), SWEEP_SCHEMA, &hash, &rows)?;
    io::write_csv(&out.join("sweep_mean.csv"), SWEEP_MEAN_SCHEMA, &hash, &means)?;
    write_manifest(out, &manifest, start, BTreeMap::new())?;
    Ok(SweepSummary { rows, means, manifest: hash })
}

// ---------------------------------------------------------------- weights

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    /// Source name, or `clean`.
    pub source: String,
    pub bin: usize,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// `count / (instances · bin width)`.
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMeanRow {
    pub source: String,
    pub instances: usize,
    pub mean: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct WeightsSummary {
    pub histogram: Vec<HistogramRow>,
    pub means: Vec<WeightMeanRow>,
    pub manifest: String,
}

/// Bin index of `w` among `bins` equal bins on `[0, 1]`; 1 lands in the last.
pub fn bin_of(w: f64, bins: usize) -> usize {
    ((w.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)
}

pub fn histogram(name: &str, weights: &[f64]) -> Vec<HistogramRow> {
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for &w in weights {
        counts[bin_of(w, HISTOGRAM_BINS)] += 1;
    }
    let width = 1.0 / HISTOGRAM_BINS as f64;
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramRow {
            source: name.into(),
            bin: i,
            lo: i as f64 * width,
            hi: (i + 1) as f64 * width,
            count,
            density: if weights.is_empty() {
                0.0
            } else {
                count as f64 / (weights.len() as f64 * width)
            },
        })
        .collect()
}

/// When the checkpoint sits next to the `manifest.json` of the run that
/// wrote it, that run must have trained `mode`.
fn check_trained_mode(checkpoint: &Path, stamp: &str, mode: Method) -> Result<()> {
    let Some(path) = checkpoint.parent().map(|d| d.join(MANIFEST_FILE)).filter(|p| p.exists()) else {
        return Ok(());
    };
    let v: serde_json::Value = serde_json::from_str(&io::read_to_string(&path)?)?;
    if v["hash"].as_str() != Some(stamp) {
        return Err(Error::Checkpoint(format!("{} belongs to a different run", path.display())));
    }
    let trained = v["manifest"]["args"]["mode"].as_str().unwrap_or("");
    if trained != mode.name() {
        return Err(Error::Checkpoint(format!("expected a {mode} checkpoint, got `{trained}`")));
    }
    Ok(())
}

/// LWN weights of an MWSS checkpoint over each source's weak instances, plus
/// a `clean` curve from the clean training items paired with their own
/// labels. The checkpoint must come from the configured model.
pub fn cmd_weights(config: &HarnessConfig, seed: u64, checkpoint: &Path, corpus_dir: &Path, weak_dir: &Path, out: &Path) -> Result<WeightsSummary> {
    let start = Instant::now();
    config.validate()?;
    let mut manifest = RunManifest::new("weights", config, seed);
    manifest.input("checkpoint", checkpoint)?;
    let prepared = prepare_from_dirs(config, seed, config.experiment.clean_ratio, corpus_dir, weak_dir, &mut manifest)?;
    let manifest = manifest.artifacts(["weights.csv", "weight_means.csv"]);
    let hash = manifest.hash();
    let mut expected = config.train_for_seed(seed).model;
    expected.num_sources = heads_for(Method::Mwss, config.experiment.sources.len());
    let (model, theta, alpha, stamp) = Checkpoint::load(checkpoint, Some(&expected))?;
    check_trained_mode(checkpoint, &stamp, Method::Mwss)?;
    let weights = |set: &[Sample]| -> Result<Vec<f64>> {
        set.iter()
            .map(|s| {
                let (h, _) = model.encode(&theta, &s.tokens)?;
                model.lwn_weight(&alpha, &h, s.label)
            })
            .collect()
    };
    let mut curves: Vec<(String, Vec<f64>)> = Vec::new();
    for (source, set) in prepared.sources.iter().zip(&prepared.weak) {
        curves.push((source.name().into(), weights(set)?));
    }
    curves.push(("clean".into(), weights(&prepared.clean)?));
    let histogram: Vec<HistogramRow> = curves.iter().flat_map(|(n, w)| histogram(n, w)).collect();
    let means: Vec<WeightMeanRow> = curves
        .iter()
        .map(|(n, w)| WeightMeanRow {
            source: n.clone(),
            instances: w.len(),
            mean: (!w.is_empty()).then(|| w.iter().sum::<f64>() / w.len() as f64),
        })
        .collect();
    io::ensure_dir(out)?;
    io::write_csv(&out.join("weights.csv"), WEIGHTS_SCHEMA, &hash, &histogram)?;
    io::write_csv(&out.join("weight_means.csv"), WEIGHT_MEANS_SCHEMA, &hash, &means)?;
    write_manifest(out, &manifest, start, BTreeMap::new())?;
    Ok(WeightsSummary {
        histogram,
        means,
        manifest: hash,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bins_cover_closed_unit_interval() {
        assert_eq!(bin_of(0.0, 50), 0);
        assert_eq!(bin_of(0.5, 50), 25);
        assert_eq!(bin_of(1.0, 50), 49);
        assert_eq!(bin_of(0.019_999, 50), 0);
        assert_eq!(bin_of(0.02, 50), 1);
    }

    #[test]
    fn means_skip_skipped_rows() {
        let row = |seed, status: &str, acc| SweepRow {
            method: Method::CleanOnly,
            ratio: 0.1,
            seed,
            status: status.into(),
            reason: String::new(),
            f1: acc,
            accuracy: acc,
        };
        let m = sweep_means(&[row(0, "ok", Some(0.8)), row(1, "ok", Some(0.6)), row(2, "skipped", None)]);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].runs, 2);
        assert!((m[0].accuracy.unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn desk_config_round_trips_through_toml() {
        let cfg = HarnessConfig::desk();
        assert_eq!(HarnessConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        let defaults = HarnessConfig::parse("").unwrap();
        assert_eq!(defaults, HarnessConfig::default());
        assert!(HarnessConfig::parse("[synth]\nrho = [0.6, 0.1, 0.1]\n").is_err());
    }

    proptest! {
        #[test]
        fn histogram_conserves_counts(ws in prop::collection::vec(0.0f64..=1.0, 0..200)) {
            let h = histogram("s", &ws);
            prop_assert_eq!(h.len(), HISTOGRAM_BINS);
            prop_assert_eq!(h.iter().map(|r| r.count).sum::<usize>(), ws.len());
            if !ws.is_empty() {
                let mass: f64 = h.iter().map(|r| r.density * (r.hi - r.lo)).sum();
                prop_assert!((mass - 1.0).abs() < 1e-9);
            }
        }
    }
}
