//! The multi-head classifier and the label weighting network (LWN).
//!
//! `θ` holds the shared encoder, the clean head and one head per weak source
//! (or a single shared weak head). `α` holds the LWN: a 2-row label embedding
//! and an MLP over `[h(x) ; embed(ỹ)]` ending in a sigmoid.
//!
//! The LWN reads `h(x)` as a detached feature: the weak term's gradient with
//! respect to `θ_E` flows only through the loss, never through `ω`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::encoder::{Encoder, EncoderConfig, EncoderTape};
use crate::error::{Error, Result};
use crate::io::{read_to_string, sha256_hex, write_atomic};
use crate::nn::{
    bce_loss, Activation, Layout, Mlp, MlpSpec, OutputActivation, ParamVector, SeededRng,
};

pub const LABEL_EMBED_SEGMENT: &str = "lwn.label_embed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LwnConfig {
    pub label_embed_dim: usize,
    /// Hidden widths of the weighting MLP; a final width-1 sigmoid layer is
    /// appended.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Initial bias of the output unit; 0 starts every weight near 0.5.
    pub output_bias: f64,
}

impl Default for LwnConfig {
    fn default() -> Self {
        LwnConfig {
            label_embed_dim: 256,
            hidden: vec![768, 768],
            activation: Activation::Relu,
            output_bias: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub head_hidden: usize,
    pub head_activation: Activation,
    pub num_sources: usize,
    /// One weak head serves every source instead of one head per source.
    pub shared_weak_head: bool,
    /// Weak heads start as copies of the clean head.
    pub tied_head_init: bool,
    pub lwn: LwnConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            head_hidden: 300,
            head_activation: Activation::Relu,
            num_sources: 3,
            shared_weak_head: false,
            tied_head_init: false,
            lwn: LwnConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.num_sources == 0 {
            return Err(Error::config("model.num_sources", "need at least one weak source"));
        }
        if self.head_hidden == 0 {
            return Err(Error::config("model.head_hidden", "must be positive"));
        }
        if self.lwn.label_embed_dim == 0 || self.lwn.hidden.contains(&0) {
            return Err(Error::config("model.lwn", "widths must be positive"));
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

/// How weak instances are weighted in the training objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting {
    /// `ω = ω_α(h(x), ỹ)`.
    Learned,
    /// Every weak instance gets this weight; `α` receives no gradient.
    Pinned(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub tokens: &'a [u32],
    pub label: u8,
}

/// One step's worth of data: a clean batch and one batch per weak source.
#[derive(Debug, Clone, Default)]
pub struct TrainBatch<'a> {
    pub clean: Vec<Example<'a>>,
    pub weak: Vec<Vec<Example<'a>>>,
}

impl TrainBatch<'_> {
    pub fn weak_len(&self) -> usize {
        self.weak.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty() && self.weak_len() == 0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Need {
    pub theta: bool,
    pub alpha: bool,
}

/// Result of evaluating the weighted training objective.
#[derive(Debug, Clone)]
pub struct TrainLoss {
    pub loss: f64,
    pub clean_loss: f64,
    pub weak_losses: Vec<f64>,
    pub mean_omega: Vec<Option<f64>>,
    pub grad_theta: Option<ParamVector>,
    pub grad_alpha: Option<ParamVector>,
    /// Encoder outputs of every weak instance, per source, as fed to the LWN.
    pub weak_features: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub clean_head: Mlp,
    pub weak_heads: Vec<Mlp>,
    pub lwn: Mlp,
    theta_layout: Arc<Layout>,
    alpha_layout: Arc<Layout>,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let encoder = Encoder::new(config.encoder.clone())?;
        let h_dim = encoder.output_dim();
        let head_spec = MlpSpec::new(
            vec![h_dim, config.head_hidden, 1],
            config.head_activation,
            OutputActivation::Sigmoid,
        )?;
        let clean_head = Mlp::new("head.clean", head_spec.clone())?;
        let n_heads = if config.shared_weak_head {
            1
        } else {
            config.num_sources
        };
        let weak_heads = (1..=n_heads)
            .map(|k| Mlp::new(format!("head.weak{k}"), head_spec.clone()))
            .collect::<Result<Vec<_>>>()?;

        let mut widths = vec![h_dim + config.lwn.label_embed_dim];
        widths.extend(&config.lwn.hidden);
        widths.push(1);
        let lwn = Mlp::new(
            "lwn.mlp",
            MlpSpec::new(widths, config.lwn.activation, OutputActivation::Sigmoid)?,
        )?;

        let mut tb = Layout::builder();
        encoder.register(&mut tb)?;
        clean_head.register(&mut tb)?;
        for head in &weak_heads {
            head.register(&mut tb)?;
        }
        let mut ab = Layout::builder();
        ab.push(LABEL_EMBED_SEGMENT, &[2, config.lwn.label_embed_dim])?;
        lwn.register(&mut ab)?;

        Ok(Model {
            config,
            encoder,
            clean_head,
            weak_heads,
            lwn,
            theta_layout: Arc::new(tb.build()),
            alpha_layout: Arc::new(ab.build()),
        })
    }

    pub fn num_sources(&self) -> usize {
        self.config.num_sources
    }

    pub fn theta_layout(&self) -> &Arc<Layout> {
        &self.theta_layout
    }

    pub fn alpha_layout(&self) -> &Arc<Layout> {
        &self.alpha_layout
    }

    pub fn init_theta(&self, rng: &mut SeededRng) -> Result<ParamVector> {
        let mut theta = ParamVector::zeros(self.theta_layout.clone());
        self.encoder.init(&mut theta, rng)?;
        let head_rng = rng.clone();
        self.clean_head.init(&mut theta, rng)?;
        for head in &self.weak_heads {
            if self.config.tied_head_init {
                head.init(&mut theta, &mut head_rng.clone())?;
            } else {
                head.init(&mut theta, rng)?;
            }
        }
        Ok(theta)
    }

    pub fn init_alpha(&self, rng: &mut SeededRng) -> Result<ParamVector> {
        use rand::Rng;
        let mut alpha = ParamVector::zeros(self.alpha_layout.clone());
        let e = self.config.lwn.label_embed_dim;
        let limit = (6.0 / (1 + e) as f64).sqrt();
        for v in alpha.segment_mut(LABEL_EMBED_SEGMENT)? {
            *v = rng.gen_range(-limit..limit);
        }
        self.lwn.init(&mut alpha, rng)?;
        let last = self.lwn.spec.widths.len() - 2;
        alpha.segment_mut(&self.lwn.bias_name(last))?[0] = self.config.lwn.output_bias;
        Ok(alpha)
    }

    fn check_theta(&self, theta: &ParamVector) -> Result<()> {
        if theta.layout().as_ref() != self.theta_layout.as_ref() {
            return Err(Error::Layout("θ does not match the model layout".into()));
        }
        Ok(())
    }

    fn check_alpha(&self, alpha: &ParamVector) -> Result<()> {
        if alpha.layout().as_ref() != self.alpha_layout.as_ref() {
            return Err(Error::Layout("α does not match the LWN layout".into()));
        }
        Ok(())
    }

    /// Head used by weak source `source` (0-based).
    pub fn weak_head(&self, source: usize) -> Result<&Mlp> {
        if source >= self.config.num_sources {
            return Err(Error::config(
                "source",
                format!("index {source} out of range for {} sources", self.config.num_sources),
            ));
        }
        Ok(if self.config.shared_weak_head {
            &self.weak_heads[0]
        } else {
            &self.weak_heads[source]
        })
    }

    pub fn encode(&self, theta: &ParamVector, tokens: &[u32]) -> Result<(Vec<f64>, EncoderTape)> {
        self.encoder.encode(theta, tokens)
    }

    /// Probability of "fake" from the clean head; this is the inference path.
    pub fn predict_clean(&self, theta: &ParamVector, tokens: &[u32]) -> Result<f64> {
        self.check_theta(theta)?;
        let (h, _) = self.encoder.encode(theta, tokens)?;
        Ok(self.clean_head.forward(theta, &h)?.0[0])
    }

    pub fn predict_weak(&self, theta: &ParamVector, source: usize, tokens: &[u32]) -> Result<f64> {
        self.check_theta(theta)?;
        let head = self.weak_head(source)?;
        let (h, _) = self.encoder.encode(theta, tokens)?;
        Ok(head.forward(theta, &h)?.0[0])
    }

    /// Clean-head and every weak-head probability from one encoder pass.
    pub fn predict_all(&self, theta: &ParamVector, tokens: &[u32]) -> Result<(f64, Vec<f64>)> {
        self.check_theta(theta)?;
        let (h, _) = self.encoder.encode(theta, tokens)?;
        let clean = self.clean_head.forward(theta, &h)?.0[0];
        let weak = (0..self.config.num_sources)
            .map(|k| Ok(self.weak_head(k)?.forward(theta, &h)?.0[0]))
            .collect::<Result<Vec<_>>>()?;
        Ok((clean, weak))
    }

    fn lwn_input(&self, alpha: &ParamVector, h: &[f64], label: u8) -> Result<Vec<f64>> {
        if label > 1 {
            return Err(Error::InvalidLabel(label));
        }
        let h_dim = self.encoder.output_dim();
        if h.len() != h_dim {
            return Err(Error::Dimension {
                segment: "lwn.input".into(),
                expected: h_dim,
                actual: h.len(),
            });
        }
        let e = self.config.lwn.label_embed_dim;
        let table = alpha.segment(LABEL_EMBED_SEGMENT)?;
        let mut input = Vec::with_capacity(h_dim + e);
        input.extend_from_slice(h);
        input.extend_from_slice(&table[label as usize * e..(label as usize + 1) * e]);
        Ok(input)
    }

    /// `ω_α(h, ỹ) ∈ (0, 1)`.
    pub fn lwn_weight(&self, alpha: &ParamVector, h: &[f64], label: u8) -> Result<f64> {
        self.check_alpha(alpha)?;
        let input = self.lwn_input(alpha, h, label)?;
        Ok(self.lwn.forward(alpha, &input)?.0[0])
    }

    /// Weighted training objective
    /// `mean_clean ℓ(y, f_c(h)) + Σ_k mean_k ω(h, ỹ)·ℓ(ỹ, f_k(h))`
    /// with gradients from a single backward sweep.
    pub fn train_loss(
        &self,
        theta: &ParamVector,
        alpha: &ParamVector,
        batch: &TrainBatch<'_>,
        weighting: Weighting,
        need: Need,
    ) -> Result<TrainLoss> {
        self.train_loss_with_features(theta, alpha, batch, weighting, need, None)
    }

    /// As [`Model::train_loss`], but when `lwn_features` is given the LWN
    /// reads those encoder outputs instead of recomputing `h(x)` at `theta`.
    pub fn train_loss_with_features(
        &self,
        theta: &ParamVector,
        alpha: &ParamVector,
        batch: &TrainBatch<'_>,
        weighting: Weighting,
        need: Need,
        lwn_features: Option<&[Vec<Vec<f64>>]>,
    ) -> Result<TrainLoss> {
        self.check_theta(theta)?;
        self.check_alpha(alpha)?;
        if batch.is_empty() {
            return Err(Error::Empty("training batch has no clean or weak examples".into()));
        }
        if batch.weak.len() > self.config.num_sources {
            return Err(Error::config(
                "batch.weak",
                format!(
                    "{} weak batches for {} sources",
                    batch.weak.len(),
                    self.config.num_sources
                ),
            ));
        }
        let mut grad_theta = need.theta.then(|| theta.zeros_like());
        let mut grad_alpha = need.alpha.then(|| alpha.zeros_like());

        let mut clean_loss = 0.0;
        if !batch.clean.is_empty() {
            let inv = 1.0 / batch.clean.len() as f64;
            for ex in &batch.clean {
                let (h, enc_tape) = self.encoder.encode(theta, ex.tokens)?;
                let (p, head_tape) = self.clean_head.forward(theta, &h)?;
                let (l, dl) = bce_loss(p[0], ex.label)?;
                clean_loss += l * inv;
                if let Some(g) = grad_theta.as_mut() {
                    let dh = self.clean_head.backward(theta, &head_tape, &[dl * inv], g)?;
                    self.encoder.backward(theta, &enc_tape, &dh, g)?;
                }
            }
        }

        let e = self.config.lwn.label_embed_dim;
        let h_dim = self.encoder.output_dim();
        let label_offset = self.alpha_layout.segment(LABEL_EMBED_SEGMENT)?.offset;
        let mut weak_losses = vec![0.0; batch.weak.len()];
        let mut mean_omega = vec![None; batch.weak.len()];
        let mut weak_features = Vec::with_capacity(batch.weak.len());
        for (k, examples) in batch.weak.iter().enumerate() {
            let mut feats = Vec::with_capacity(examples.len());
            if examples.is_empty() {
                weak_features.push(feats);
                continue;
            }
            let head = self.weak_head(k)?;
            let inv = 1.0 / examples.len() as f64;
            let mut omega_sum = 0.0;
            for (i, ex) in examples.iter().enumerate() {
                let (h, enc_tape) = self.encoder.encode(theta, ex.tokens)?;
                let (p, head_tape) = head.forward(theta, &h)?;
                let (l, dl) = bce_loss(p[0], ex.label)?;
                let lwn_h = match lwn_features {
                    Some(f) => f
                        .get(k)
                        .and_then(|src| src.get(i))
                        .ok_or_else(|| Error::Dimension {
                            segment: "lwn_features".into(),
                            expected: examples.len(),
                            actual: f.get(k).map_or(0, Vec::len),
                        })?
                        .as_slice(),
                    None => h.as_slice(),
                };
                let omega = match weighting {
                    Weighting::Pinned(w) => w,
                    Weighting::Learned => {
                        let input = self.lwn_input(alpha, lwn_h, ex.label)?;
                        let (w, lwn_tape) = self.lwn.forward(alpha, &input)?;
                        if let Some(ga) = grad_alpha.as_mut() {
                            let d_in = self.lwn.backward(alpha, &lwn_tape, &[l * inv], ga)?;
                            let row = label_offset + ex.label as usize * e;
                            let gv = ga.values_mut();
                            for (j, d) in d_in[h_dim..].iter().enumerate() {
                                gv[row + j] += d;
                            }
                        }
                        w[0]
                    }
                };
                omega_sum += omega;
                weak_losses[k] += omega * l * inv;
                if let Some(g) = grad_theta.as_mut() {
                    if omega != 0.0 {
                        let dh = head.backward(theta, &head_tape, &[omega * dl * inv], g)?;
                        self.encoder.backward(theta, &enc_tape, &dh, g)?;
                    }
                }
                feats.push(h);
            }
            mean_omega[k] = Some(omega_sum * inv);
            weak_features.push(feats);
        }

        let loss = clean_loss + weak_losses.iter().sum::<f64>();
        if !loss.is_finite() {
            let term = if !clean_loss.is_finite() {
                "clean".to_owned()
            } else {
                let k = weak_losses.iter().position(|l| !l.is_finite()).unwrap_or(0);
                format!("weak source {k}")
            };
            return Err(Error::NonFinite(format!("training loss ({term} term)")));
        }
        Ok(TrainLoss {
            loss,
            clean_loss,
            weak_losses,
            mean_omega,
            grad_theta,
            grad_alpha,
            weak_features,
        })
    }

    /// Mean clean-head BCE over `examples`, with its θ-gradient on request.
    pub fn val_loss(
        &self,
        theta: &ParamVector,
        examples: &[Example<'_>],
        with_grad: bool,
    ) -> Result<(f64, Option<ParamVector>)> {
        self.check_theta(theta)?;
        if examples.is_empty() {
            return Err(Error::Empty("validation batch".into()));
        }
        let inv = 1.0 / examples.len() as f64;
        let mut grad = with_grad.then(|| theta.zeros_like());
        let mut loss = 0.0;
        for ex in examples {
            let (h, enc_tape) = self.encoder.encode(theta, ex.tokens)?;
            let (p, head_tape) = self.clean_head.forward(theta, &h)?;
            let (l, dl) = bce_loss(p[0], ex.label)?;
            loss += l * inv;
            if let Some(g) = grad.as_mut() {
                let dh = self.clean_head.backward(theta, &head_tape, &[dl * inv], g)?;
                self.encoder.backward(theta, &enc_tape, &dh, g)?;
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("validation loss".into()));
        }
        Ok((loss, grad))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredParams {
    segments: Vec<crate::nn::Segment>,
    values: Vec<f64>,
}

impl StoredParams {
    fn from(p: &ParamVector) -> Self {
        StoredParams {
            segments: p.layout().segments().to_vec(),
            values: p.values().to_vec(),
        }
    }

    fn restore(self, expected: &Arc<Layout>, what: &str) -> Result<ParamVector> {
        let layout = Layout::from_segments(self.segments)?;
        if &layout != expected.as_ref() {
            return Err(Error::Checkpoint(format!(
                "{what} layout does not match the configured model"
            )));
        }
        ParamVector::from_values(expected.clone(), self.values)
    }
}

pub const CHECKPOINT_SCHEMA: &str = "mwss.checkpoint/1";

/// Self-describing model dump: config, its digest, and both parameter
/// vectors with their segment layouts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema: String,
    pub manifest: String,
    pub config_hash: String,
    pub config: ModelConfig,
    theta: StoredParams,
    alpha: StoredParams,
}

impl Checkpoint {
    pub fn new(model: &Model, theta: &ParamVector, alpha: &ParamVector, manifest: &str) -> Self {
        Checkpoint {
            schema: CHECKPOINT_SCHEMA.into(),
            manifest: manifest.into(),
            config_hash: model.config.digest(),
            config: model.config.clone(),
            theta: StoredParams::from(theta),
            alpha: StoredParams::from(alpha),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        write_atomic(path, text.as_bytes())
    }

    /// Loads a checkpoint, verifying its schema, its config digest and that
    /// both stored layouts match the model its config describes. When
    /// `expected` is given, the stored config must also equal it.
    pub fn load(
        path: &Path,
        expected: Option<&ModelConfig>,
    ) -> Result<(Model, ParamVector, ParamVector, String)> {
        let text = read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.schema != CHECKPOINT_SCHEMA {
            return Err(Error::Schema {
                path: path.to_owned(),
                found: ck.schema,
                expected: CHECKPOINT_SCHEMA.into(),
            });
        }
        if ck.config.digest() != ck.config_hash {
            return Err(Error::Checkpoint("stored config hash does not match its config".into()));
        }
        if let Some(cfg) = expected {
            if cfg.digest() != ck.config_hash {
                return Err(Error::Checkpoint(
                    "checkpoint was trained with a different model config".into(),
                ));
            }
        }
        let model = Model::new(ck.config)?;
        let theta = ck.theta.restore(model.theta_layout(), "θ")?;
        let alpha = ck.alpha.restore(model.alpha_layout(), "α")?;
        Ok((model, theta, alpha, ck.manifest))
    }
}
