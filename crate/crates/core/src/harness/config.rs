use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::Method;
use crate::data::synth::SynthConfig;
use crate::encoder::{EncoderConfig, EncoderVariant, TokenizerConfig};
use crate::error::{Error, Result};
use crate::io;
use crate::model::{LwnConfig, ModelConfig};
use crate::trainer::TrainConfig;
use crate::weak::{LabelingConfig, Source};

/// Experiment-level knobs shared by `train`, `sweep` and `weights`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub clean_ratio: f64,
    /// Weak sources that take part, in head order.
    pub sources: Vec<Source>,
    /// Label a majority-vote tie resolves to.
    pub tie_label: u8,
    pub seeds: Vec<u64>,
    pub ratios: Vec<f64>,
    pub methods: Vec<Method>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            clean_ratio: 0.0625,
            sources: Source::ALL.to_vec(),
            tie_label: 0,
            seeds: vec![0, 1, 2],
            ratios: vec![0.02, 0.06, 0.1],
            methods: Method::ALL.to_vec(),
        }
    }
}

/// Whole-run configuration, one TOML section per module.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub synth: SynthConfig,
    pub labeling: LabelingConfig,
    pub train: TrainConfig,
    pub experiment: ExperimentConfig,
}

impl HarnessConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: HarnessConfig = toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&io::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.labeling.validate()?;
        self.train.validate()?;
        let e = &self.experiment;
        if e.tie_label > 1 {
            return Err(Error::config("experiment.tie_label", "must be 0 or 1"));
        }
        if e.sources.is_empty() {
            return Err(Error::config("experiment.sources", "need at least one source"));
        }
        for r in std::iter::once(&e.clean_ratio).chain(&e.ratios) {
            if !(*r > 0.0 && *r < 1.0) {
                return Err(Error::config("experiment.ratios", format!("{r} is outside (0, 1)")));
            }
        }
        Ok(())
    }

    /// Small meanpool setup that trains in seconds per run on one CPU core.
    /// The 2000 clean-labeled news leave room for a 200-item clean mix next
    /// to the 3000 unlabeled news, and the weak-label flips land on real
    /// news of half the topics.
    pub fn desk() -> Self {
        let mut synth = SynthConfig {
            n_clean: 2000,
            noise_focus: 1.0,
            focus_label: Some(0),
            ..SynthConfig::default()
        };
        synth.text.p_class = 0.2;
        synth.text.class_purity = 0.8;
        synth.text.class_vocab = 20;
        let tokenizer = TokenizerConfig {
            max_len: 48,
            vocab_size: 4096,
            lowercase: true,
        };
        let model = ModelConfig {
            encoder: EncoderConfig {
                variant: EncoderVariant::Meanpool,
                tokenizer,
                embed_dim: 8,
                ..EncoderConfig::default()
            },
            head_hidden: 16,
            tied_head_init: true,
            lwn: LwnConfig {
                label_embed_dim: 8,
                hidden: vec![16],
                ..LwnConfig::default()
            },
            ..ModelConfig::default()
        };
        HarnessConfig {
            synth,
            labeling: LabelingConfig::default(),
            train: TrainConfig {
                model,
                lr_theta: 1e-3,
                lr_alpha: 1e-4,
                ..TrainConfig::default()
            },
            experiment: ExperimentConfig::default(),
        }
    }

    /// Training config for one seed; the model gets one head per configured
    /// source.
    pub fn train_for_seed(&self, seed: u64) -> TrainConfig {
        let mut t = self.train.clone();
        t.seed = seed;
        t.model.num_sources = self.experiment.sources.len();
        t
    }
}
