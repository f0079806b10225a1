//! Bilevel training loop.
//!
//! Each step first updates the LWN parameters `α` with a finite-difference
//! hypergradient of the validation loss through a one-step SGD lookahead of
//! the classifier, then updates the classifier parameters `θ` with the
//! weighted training loss evaluated under the new `α`. Both updates use Adam.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Example, Model, ModelConfig, Need, TrainBatch, Weighting};
use crate::nn::{derive_seed, perturb, sgd_lookahead, AdamConfig, AdamState, ParamVector, SeededRng, Sign};

/// Learning rates searched in the reference experiments.
pub const LEARNING_RATE_GRID: [f64; 4] = [1e-3, 5e-4, 1e-4, 5e-5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    /// Classifier learning rate; also the lookahead step inside the
    /// hypergradient.
    pub lr_theta: f64,
    pub lr_alpha: f64,
    pub batch_clean: usize,
    pub batch_weak: usize,
    pub batch_val: usize,
    /// Epoch budget, counted over the largest weak source (or the clean set
    /// when there is no weak data).
    pub max_epochs: usize,
    pub max_steps: usize,
    /// Full-validation evaluation cadence, in steps.
    pub eval_every: usize,
    /// `ε = fd_scale / max(‖∇L_val(θ')‖, 1e-12)`.
    pub fd_scale: f64,
    /// Stop after this many evaluations without a new best accuracy.
    pub patience: Option<usize>,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            lr_theta: 1e-3,
            lr_alpha: 1e-3,
            batch_clean: 32,
            batch_weak: 32,
            batch_val: 32,
            max_epochs: 30,
            max_steps: 5000,
            eval_every: 50,
            fd_scale: 0.01,
            patience: None,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        for (name, v) in [("lr_theta", self.lr_theta), ("lr_alpha", self.lr_alpha)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!("train.{name}"), "must be finite and ≥ 0"));
            }
        }
        if self.lr_theta == 0.0 {
            return Err(Error::config("train.lr_theta", "must be positive"));
        }
        for (name, v) in [
            ("batch_clean", self.batch_clean),
            ("batch_weak", self.batch_weak),
            ("batch_val", self.batch_val),
            ("eval_every", self.eval_every),
        ] {
            if v == 0 {
                return Err(Error::config(format!("train.{name}"), "must be positive"));
            }
        }
        if !(self.fd_scale > 0.0) {
            return Err(Error::config("train.fd_scale", "must be positive"));
        }
        Ok(())
    }
}

/// A tokenized, labeled news item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub tokens: Vec<u32>,
    pub label: u8,
}

impl Sample {
    pub fn example(&self) -> Example<'_> {
        Example {
            tokens: &self.tokens,
            label: self.label,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainData {
    pub clean: Vec<Sample>,
    pub val: Vec<Sample>,
    /// One set per weak source, in source order.
    pub weak: Vec<Vec<Sample>>,
}

/// How the trainer treats weak instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainMode {
    pub weighting: Weighting,
    /// Run the LWN phase (hypergradient + Adam on `α`) before each classifier
    /// update.
    pub meta_update: bool,
}

impl TrainMode {
    pub const MWSS: TrainMode = TrainMode {
        weighting: Weighting::Learned,
        meta_update: true,
    };

    /// Every weak instance weighted 1 and no LWN phase.
    pub const UNIT_WEIGHTS: TrainMode = TrainMode {
        weighting: Weighting::Pinned(1.0),
        meta_update: false,
    };
}

/// Shuffled pass over `0..len`, reshuffled at each epoch boundary. The last
/// batch of an epoch may be short.
#[derive(Debug, Clone)]
pub struct EpochSampler {
    order: Vec<usize>,
    cursor: usize,
    rng: SeededRng,
}

impl EpochSampler {
    pub fn new(len: usize, seed: u64) -> Self {
        EpochSampler {
            order: (0..len).collect(),
            cursor: len,
            rng: SeededRng::seed_from_u64(seed),
        }
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        if self.order.is_empty() {
            return Vec::new();
        }
        if self.cursor >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let end = (self.cursor + size).min(self.order.len());
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        batch
    }
}

/// Draws one clean batch, one batch per weak source and one validation batch
/// per step.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    clean: EpochSampler,
    val: EpochSampler,
    weak: Vec<EpochSampler>,
}

#[derive(Debug, Clone)]
pub struct BatchIndices {
    pub clean: Vec<usize>,
    pub val: Vec<usize>,
    pub weak: Vec<Vec<usize>>,
}

impl BatchSampler {
    pub fn new(data: &TrainData, seed: u64) -> Self {
        BatchSampler {
            clean: EpochSampler::new(data.clean.len(), derive_seed(seed, "sampler.clean")),
            val: EpochSampler::new(data.val.len(), derive_seed(seed, "sampler.val")),
            weak: data
                .weak
                .iter()
                .enumerate()
                .map(|(k, s)| EpochSampler::new(s.len(), derive_seed(seed, &format!("sampler.weak{k}"))))
                .collect(),
        }
    }

    pub fn next(&mut self, config: &TrainConfig) -> BatchIndices {
        BatchIndices {
            clean: self.clean.next_batch(config.batch_clean),
            weak: self
                .weak
                .iter_mut()
                .map(|s| s.next_batch(config.batch_weak))
                .collect(),
            val: self.val.next_batch(config.batch_val),
        }
    }
}

fn gather<'a>(set: &'a [Sample], idx: &[usize]) -> Vec<Example<'a>> {
    idx.iter().map(|&i| set[i].example()).collect()
}

impl BatchIndices {
    pub fn train_batch<'a>(&self, data: &'a TrainData) -> TrainBatch<'a> {
        TrainBatch {
            clean: gather(&data.clean, &self.clean),
            weak: self
                .weak
                .iter()
                .zip(&data.weak)
                .map(|(idx, set)| gather(set, idx))
                .collect(),
        }
    }

    pub fn val_batch<'a>(&self, data: &'a TrainData) -> Vec<Example<'a>> {
        gather(&data.val, &self.val)
    }
}

#[derive(Debug, Clone)]
pub struct Hypergradient {
    pub grad_alpha: ParamVector,
    pub epsilon: f64,
    pub val_grad_norm: f64,
    /// `‖∇L_val(θ')‖ = 0`: the returned gradient is zero.
    pub degenerate: bool,
}

/// Finite-difference estimate of `∇_α L_val(θ − η∇_θ L_train(α, θ))`:
///
/// 1. `g = ∇_θ L_train(α, θ)`
/// 2. `θ' = θ − η g`
/// 3. `g' = ∇_θ' L_val(θ')` on the validation batch
/// 4. `θ± = θ ± ε g'` with `ε = fd_scale / max(‖g'‖, 1e-12)`
/// 5. `−η/(2ε) [∇_α L_train(α, θ⁺) − ∇_α L_train(α, θ⁻)]`
///
/// The LWN keeps reading the encoder features computed at `θ` in step 5, so
/// the quotient differentiates exactly the `θ`-gradient used in step 1.
/// Nothing passed in is modified.
#[allow(clippy::too_many_arguments)]
pub fn hypergradient(
    model: &Model,
    theta: &ParamVector,
    alpha: &ParamVector,
    batch: &TrainBatch<'_>,
    val_batch: &[Example<'_>],
    weighting: Weighting,
    eta: f64,
    fd_scale: f64,
) -> Result<Hypergradient> {
    let zero = || Hypergradient {
        grad_alpha: alpha.zeros_like(),
        epsilon: 0.0,
        val_grad_norm: 0.0,
        degenerate: false,
    };
    if batch.weak_len() == 0 || matches!(weighting, Weighting::Pinned(_)) {
        return Ok(zero());
    }
    let base = model.train_loss(
        theta,
        alpha,
        batch,
        weighting,
        Need {
            theta: true,
            alpha: false,
        },
    )?;
    let g_theta = base.grad_theta.expect("requested");
    let lookahead = sgd_lookahead(theta, &g_theta, eta)?;
    let (_, g_val) = model.val_loss(&lookahead, val_batch, true)?;
    let g_val = g_val.expect("requested");
    let norm = g_val.norm();
    if norm == 0.0 {
        log::debug!("validation gradient vanished at the lookahead point; zero hypergradient");
        return Ok(Hypergradient {
            degenerate: true,
            ..zero()
        });
    }
    let epsilon = fd_scale / norm.max(1e-12);
    let only_alpha = Need {
        theta: false,
        alpha: true,
    };
    let features = Some(base.weak_features.as_slice());
    let theta_plus = perturb(theta, &g_val, epsilon, Sign::Plus)?;
    let plus = model.train_loss_with_features(&theta_plus, alpha, batch, weighting, only_alpha, features)?;
    drop(theta_plus);
    let theta_minus = perturb(theta, &g_val, epsilon, Sign::Minus)?;
    let minus = model.train_loss_with_features(&theta_minus, alpha, batch, weighting, only_alpha, features)?;

    let mut grad_alpha = plus.grad_alpha.expect("requested");
    grad_alpha.add_scaled(&minus.grad_alpha.expect("requested"), -1.0)?;
    let scale = -eta / (2.0 * epsilon);
    grad_alpha.values_mut().iter_mut().for_each(|v| *v *= scale);
    Ok(Hypergradient {
        grad_alpha,
        epsilon,
        val_grad_norm: norm,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub train_loss: Option<f64>,
    pub val_loss: f64,
    pub val_acc: f64,
    pub mean_omega: Vec<Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub val_acc: f64,
    pub theta: ParamVector,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub theta: ParamVector,
    pub theta_adam: AdamState,
    pub alpha: ParamVector,
    pub alpha_adam: AdamState,
    pub step: usize,
    pub best: Option<Snapshot>,
    pub history: Vec<HistoryRow>,
}

impl TrainState {
    pub fn init(model: &Model, config: &TrainConfig) -> Result<Self> {
        let theta = model.init_theta(&mut SeededRng::seed_from_u64(derive_seed(config.seed, "theta.init")))?;
        let alpha = model.init_alpha(&mut SeededRng::seed_from_u64(derive_seed(config.seed, "alpha.init")))?;
        Ok(TrainState {
            theta_adam: AdamState::new(&theta, config.adam),
            alpha_adam: AdamState::new(&alpha, config.adam),
            theta,
            alpha,
            step: 0,
            best: None,
            history: Vec::new(),
        })
    }
}

/// Statistics from one [`meta_step`].
#[derive(Debug, Clone)]
pub struct StepStats {
    pub train_loss: f64,
    pub mean_omega: Vec<Option<f64>>,
    pub hypergradient_norm: Option<f64>,
}

/// One iteration: LWN update (when enabled) followed by the classifier update
/// recomputed under the fresh `α`.
pub fn meta_step(
    model: &Model,
    state: &mut TrainState,
    config: &TrainConfig,
    mode: TrainMode,
    batch: &TrainBatch<'_>,
    val_batch: &[Example<'_>],
) -> Result<StepStats> {
    let step = state.step + 1;
    let with_step = |e: Error| match e {
        Error::NonFinite(msg) => Error::NonFinite(format!("step {step}: {msg}")),
        other => other,
    };
    let mut hg_norm = None;
    if mode.meta_update {
        let hg = hypergradient(
            model,
            &state.theta,
            &state.alpha,
            batch,
            val_batch,
            mode.weighting,
            config.lr_theta,
            config.fd_scale,
        )
        .map_err(with_step)?;
        hg_norm = Some(hg.grad_alpha.norm());
        state
            .alpha_adam
            .step(&mut state.alpha, &hg.grad_alpha, config.lr_alpha)
            .map_err(with_step)?;
    }
    let tl = model
        .train_loss(
            &state.theta,
            &state.alpha,
            batch,
            mode.weighting,
            Need {
                theta: true,
                alpha: false,
            },
        )
        .map_err(with_step)?;
    state
        .theta_adam
        .step(&mut state.theta, tl.grad_theta.as_ref().expect("requested"), config.lr_theta)
        .map_err(with_step)?;
    state.step = step;
    Ok(StepStats {
        train_loss: tl.loss,
        mean_omega: tl.mean_omega,
        hypergradient_norm: hg_norm,
    })
}

/// Step budget: `min(max_steps, max_epochs · ⌈n / batch⌉)` where `n` is the
/// largest weak source, or the clean set without weak data.
pub fn step_budget(config: &TrainConfig, data: &TrainData) -> usize {
    let (n, b) = match data.weak.iter().map(Vec::len).max().filter(|&n| n > 0) {
        Some(n) => (n, config.batch_weak),
        None => (data.clean.len(), config.batch_clean),
    };
    let per_epoch = n.div_ceil(b).max(1);
    config.max_steps.min(config.max_epochs.saturating_mul(per_epoch))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best_theta: ParamVector,
    pub best_step: usize,
    pub best_val_acc: f64,
    pub final_theta: ParamVector,
    pub alpha: ParamVector,
    pub history: Vec<HistoryRow>,
    pub steps: usize,
}

fn record_eval(
    model: &Model,
    state: &mut TrainState,
    data: &TrainData,
    train_loss: Option<f64>,
    mean_omega: Vec<Option<f64>>,
) -> Result<bool> {
    let val: Vec<Example<'_>> = data.val.iter().map(Sample::example).collect();
    let (val_loss, _) = model.val_loss(&state.theta, &val, false)?;
    let report = evaluate(model, &state.theta, &data.val)?;
    state.history.push(HistoryRow {
        step: state.step,
        train_loss,
        val_loss,
        val_acc: report.accuracy,
        mean_omega,
    });
    let improved = state.best.as_ref().map_or(true, |b| report.accuracy > b.val_acc);
    if improved {
        state.best = Some(Snapshot {
            step: state.step,
            val_acc: report.accuracy,
            theta: state.theta.clone(),
        });
    }
    Ok(improved)
}

/// Runs [`meta_step`] up to the step budget and returns the parameters with
/// the best full-validation accuracy (ties keep the earlier snapshot).
pub fn train(model: &Model, data: &TrainData, config: &TrainConfig, mode: TrainMode) -> Result<TrainOutcome> {
    config.validate()?;
    if data.val.is_empty() {
        return Err(Error::Empty("clean validation set (the outer objective is undefined without it)".into()));
    }
    if data.weak.len() > model.num_sources() {
        return Err(Error::config(
            "weak",
            format!("{} weak sets for a model with {} sources", data.weak.len(), model.num_sources()),
        ));
    }
    let mut state = TrainState::init(model, config)?;
    let mut sampler = BatchSampler::new(data, config.seed);
    let budget = step_budget(config, data);
    let k = data.weak.len();
    record_eval(model, &mut state, data, None, vec![None; k])?;
    let mut stale_evals = 0usize;
    while state.step < budget {
        let idx = sampler.next(config);
        let batch = idx.train_batch(data);
        if batch.is_empty() {
            return Err(Error::Empty("no clean or weak training data".into()));
        }
        let val_batch = idx.val_batch(data);
        let stats = meta_step(model, &mut state, config, mode, &batch, &val_batch)?;
        if state.step % config.eval_every == 0 || state.step == budget {
            let improved = record_eval(model, &mut state, data, Some(stats.train_loss), stats.mean_omega)?;
            stale_evals = if improved { 0 } else { stale_evals + 1 };
            if config.patience.is_some_and(|p| stale_evals >= p) {
                break;
            }
        }
    }
    let best = state.best.expect("initial evaluation always records a snapshot");
    Ok(TrainOutcome {
        best_theta: best.theta,
        best_step: best.step,
        best_val_acc: best.val_acc,
        final_theta: state.theta,
        alpha: state.alpha,
        history: state.history,
        steps: state.step,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// F1 of the fake class; 0 when precision + recall = 0.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
    pub mean_omega: Vec<Option<f64>>,
    pub runtime_secs: f64,
}

impl MetricsReport {
    pub fn from_predictions(probs: &[f64], labels: &[u8]) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("evaluation set".into()));
        }
        if probs.len() != labels.len() {
            return Err(Error::Dimension {
                segment: "labels".into(),
                expected: probs.len(),
                actual: labels.len(),
            });
        }
        let mut c = Confusion::default();
        for (&p, &y) in probs.iter().zip(labels) {
            match (p > 0.5, y) {
                (true, 1) => c.tp += 1,
                (true, 0) => c.fp += 1,
                (false, 0) => c.tn += 1,
                (false, 1) => c.fn_ += 1,
                (_, other) => return Err(Error::InvalidLabel(other)),
            }
        }
        Ok(MetricsReport {
            accuracy: c.accuracy(),
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            confusion: c,
            mean_omega: Vec::new(),
            runtime_secs: 0.0,
        })
    }
}

/// Clean-head metrics with the strict `p > 0.5` decision rule.
pub fn evaluate(model: &Model, theta: &ParamVector, set: &[Sample]) -> Result<MetricsReport> {
    let start = Instant::now();
    if set.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    let probs = set
        .iter()
        .map(|s| model.predict_clean(theta, &s.tokens))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<u8> = set.iter().map(|s| s.label).collect();
    let mut report = MetricsReport::from_predictions(&probs, &labels)?;
    report.runtime_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Mean LWN weight over each weak set, with `h(x)` taken at `theta`.
pub fn mean_weights(model: &Model, theta: &ParamVector, alpha: &ParamVector, weak: &[Vec<Sample>]) -> Result<Vec<Option<f64>>> {
    weak.iter()
        .map(|set| {
            if set.is_empty() {
                return Ok(None);
            }
            let mut sum = 0.0;
            for s in set {
                let (h, _) = model.encode(theta, &s.tokens)?;
                sum += model.lwn_weight(alpha, &h, s.label)?;
            }
            Ok(Some(sum / set.len() as f64))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_examples() {
        let r = MetricsReport::from_predictions(&[0.9, 0.1], &[1, 0]).unwrap();
        assert_eq!((r.accuracy, r.f1), (1.0, 1.0));

        let r = MetricsReport::from_predictions(&[0.9, 0.9], &[1, 0]).unwrap();
        assert_eq!(r.confusion, Confusion { tp: 1, fp: 1, tn: 0, fn_: 0 });
        assert_eq!(r.precision, 0.5);
        assert_eq!(r.recall, 1.0);
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.accuracy, 0.5);

        let r = MetricsReport::from_predictions(&[0.5, 0.5, 0.5, 0.5], &[1, 0, 0, 0]).unwrap();
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.f1, 0.0);

        assert!(MetricsReport::from_predictions(&[], &[]).is_err());
    }

    #[test]
    fn sampler_keeps_partial_batches_and_covers_epoch() {
        let mut s = EpochSampler::new(5, 1);
        let a = s.next_batch(2);
        let b = s.next_batch(2);
        let c = s.next_batch(2);
        assert_eq!((a.len(), b.len(), c.len()), (2, 2, 1));
        let mut all: Vec<usize> = a.into_iter().chain(b).chain(c).collect();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
        assert_eq!(s.next_batch(2).len(), 2);
        assert!(EpochSampler::new(0, 1).next_batch(3).is_empty());
    }

    #[test]
    fn budget_counts_epochs_over_largest_weak_source() {
        let cfg = TrainConfig {
            batch_weak: 10,
            max_epochs: 3,
            max_steps: 1000,
            ..Default::default()
        };
        let s = Sample {
            id: "x".into(),
            tokens: vec![],
            label: 0,
        };
        let data = TrainData {
            clean: vec![s.clone(); 4],
            val: vec![],
            weak: vec![vec![s.clone(); 25], vec![s; 7]],
        };
        assert_eq!(step_budget(&cfg, &data), 9);
        let capped = TrainConfig { max_steps: 5, ..cfg };
        assert_eq!(step_budget(&capped, &data), 5);
    }
}
