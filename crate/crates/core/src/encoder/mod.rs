//! Shared content encoder `h(x)`.
//!
//! Two variants read from a hash-bucket embedding table (`encoder.embed`,
//! shape `V × d`, row 0 is the frozen pad row):
//!
//! - `meanpool`: mean of the non-pad token embeddings (zero for empty text).
//! - `cnn`: one bank of filters per window width, each filter max-pooled over
//!   the windows that lie entirely inside the non-pad prefix, followed by a
//!   relu. A filter with no valid window outputs 0.

pub mod tokenize;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LayoutBuilder, ParamVector};
pub use tokenize::{content_len, tokenize, words, TokenizerConfig, PAD_ID};

pub const EMBED_SEGMENT: &str = "encoder.embed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderVariant {
    Meanpool,
    Cnn,
}

impl std::str::FromStr for EncoderVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "meanpool" => Ok(EncoderVariant::Meanpool),
            "cnn" => Ok(EncoderVariant::Cnn),
            other => Err(Error::config(
                "encoder.variant",
                format!("unknown variant `{other}` (expected meanpool or cnn)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub variant: EncoderVariant,
    pub tokenizer: TokenizerConfig,
    pub embed_dim: usize,
    pub filter_widths: Vec<usize>,
    pub filters_per_width: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            variant: EncoderVariant::Meanpool,
            tokenizer: TokenizerConfig::default(),
            embed_dim: 128,
            filter_widths: vec![3, 4, 5],
            filters_per_width: 100,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        self.tokenizer.validate()?;
        if self.embed_dim == 0 {
            return Err(Error::config("encoder.embed_dim", "must be positive"));
        }
        if self.variant == EncoderVariant::Cnn {
            if self.filter_widths.is_empty() || self.filter_widths.contains(&0) {
                return Err(Error::config(
                    "encoder.filter_widths",
                    "need at least one positive width",
                ));
            }
            if self.filters_per_width == 0 {
                return Err(Error::config("encoder.filters_per_width", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        match self.variant {
            EncoderVariant::Meanpool => self.embed_dim,
            EncoderVariant::Cnn => self.filter_widths.len() * self.filters_per_width,
        }
    }
}

fn conv_weight_name(width: usize) -> String {
    format!("encoder.conv{width}.w")
}

fn conv_bias_name(width: usize) -> String {
    format!("encoder.conv{width}.b")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoder {
    pub config: EncoderConfig,
}

/// Forward cache for [`Encoder::backward`].
#[derive(Debug, Clone)]
pub struct EncoderTape {
    version: u64,
    tokens: Vec<u32>,
    /// cnn only: `(window start, pooled pre-activation)` per output unit, or
    /// `None` when the text is shorter than the filter.
    pooled: Vec<Option<(usize, f64)>>,
}

impl Encoder {
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        Ok(Encoder { config })
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        tokenize(text, &self.config.tokenizer)
    }

    pub fn register(&self, builder: &mut LayoutBuilder) -> Result<()> {
        let d = self.config.embed_dim;
        builder.push(EMBED_SEGMENT, &[self.config.tokenizer.vocab_size, d])?;
        if self.config.variant == EncoderVariant::Cnn {
            for &w in &self.config.filter_widths {
                builder.push(&conv_weight_name(w), &[self.config.filters_per_width, w * d])?;
                builder.push(&conv_bias_name(w), &[self.config.filters_per_width])?;
            }
        }
        Ok(())
    }

    /// Embedding rows use the uniform Glorot bound with fan-in 1 (a row
    /// lookup) and fan-out `d`; conv filters use `(w·d, filters)`.
    pub fn init<R: Rng + ?Sized>(&self, params: &mut ParamVector, rng: &mut R) -> Result<()> {
        let d = self.config.embed_dim;
        let limit = (6.0 / (1 + d) as f64).sqrt();
        {
            let table = params.segment_mut(EMBED_SEGMENT)?;
            for v in table[d..].iter_mut() {
                *v = rng.gen_range(-limit..limit);
            }
            table[..d].iter_mut().for_each(|v| *v = 0.0);
        }
        if self.config.variant == EncoderVariant::Cnn {
            let f = self.config.filters_per_width;
            for &w in &self.config.filter_widths {
                let limit = (6.0 / (w * d + f) as f64).sqrt();
                for v in params.segment_mut(&conv_weight_name(w))? {
                    *v = rng.gen_range(-limit..limit);
                }
                params
                    .segment_mut(&conv_bias_name(w))?
                    .iter_mut()
                    .for_each(|b| *b = 0.0);
            }
        }
        Ok(())
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        let v = self.config.tokenizer.vocab_size;
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= v) {
            return Err(Error::Dimension {
                segment: EMBED_SEGMENT.into(),
                expected: v,
                actual: bad as usize + 1,
            });
        }
        Ok(())
    }

    pub fn encode(&self, params: &ParamVector, tokens: &[u32]) -> Result<(Vec<f64>, EncoderTape)> {
        self.check_tokens(tokens)?;
        let d = self.config.embed_dim;
        let table = params.segment(EMBED_SEGMENT)?;
        let n = content_len(tokens);
        let content = tokens[..n].to_vec();
        match self.config.variant {
            EncoderVariant::Meanpool => {
                let mut h = vec![0.0; d];
                if n > 0 {
                    for &t in &content {
                        let row = &table[t as usize * d..(t as usize + 1) * d];
                        for (hi, &e) in h.iter_mut().zip(row) {
                            *hi += e;
                        }
                    }
                    let inv = 1.0 / n as f64;
                    h.iter_mut().for_each(|v| *v *= inv);
                }
                Ok((
                    h,
                    EncoderTape {
                        version: params.version(),
                        tokens: content,
                        pooled: Vec::new(),
                    },
                ))
            }
            EncoderVariant::Cnn => {
                let f = self.config.filters_per_width;
                let mut h = Vec::with_capacity(self.output_dim());
                let mut pooled = Vec::with_capacity(self.output_dim());
                for &w in &self.config.filter_widths {
                    let weights = params.segment(&conv_weight_name(w))?;
                    let bias = params.segment(&conv_bias_name(w))?;
                    for fi in 0..f {
                        let filt = &weights[fi * w * d..(fi + 1) * w * d];
                        let mut best: Option<(usize, f64)> = None;
                        if n >= w {
                            for p in 0..=n - w {
                                let mut z = bias[fi];
                                for j in 0..w {
                                    let t = content[p + j] as usize;
                                    let row = &table[t * d..(t + 1) * d];
                                    let fw = &filt[j * d..(j + 1) * d];
                                    z += row.iter().zip(fw).map(|(a, b)| a * b).sum::<f64>();
                                }
                                if best.map_or(true, |(_, m)| z > m) {
                                    best = Some((p, z));
                                }
                            }
                        }
                        h.push(best.map_or(0.0, |(_, z)| z.max(0.0)));
                        pooled.push(best);
                    }
                }
                Ok((
                    h,
                    EncoderTape {
                        version: params.version(),
                        tokens: content,
                        pooled,
                    },
                ))
            }
        }
    }

    /// Accumulates `dL/dθ_E` for upstream `dL/dh` into `grads`. The pad row
    /// never receives gradient.
    pub fn backward(
        &self,
        params: &ParamVector,
        tape: &EncoderTape,
        upstream: &[f64],
        grads: &mut ParamVector,
    ) -> Result<()> {
        if tape.version != params.version() {
            return Err(Error::StaleTape(
                "encoder parameters changed since the forward pass".into(),
            ));
        }
        if upstream.len() != self.output_dim() {
            return Err(Error::Dimension {
                segment: "encoder.output".into(),
                expected: self.output_dim(),
                actual: upstream.len(),
            });
        }
        params.ensure_same_layout(grads)?;
        let d = self.config.embed_dim;
        let embed_offset = params.layout().segment(EMBED_SEGMENT)?.offset;
        let n = tape.tokens.len();
        match self.config.variant {
            EncoderVariant::Meanpool => {
                if n == 0 {
                    return Ok(());
                }
                let inv = 1.0 / n as f64;
                let g = grads.values_mut();
                for &t in &tape.tokens {
                    let start = embed_offset + t as usize * d;
                    for (gi, &u) in g[start..start + d].iter_mut().zip(upstream) {
                        *gi += u * inv;
                    }
                }
            }
            EncoderVariant::Cnn => {
                let f = self.config.filters_per_width;
                let values = params.values();
                let mut unit = 0;
                for &w in &self.config.filter_widths {
                    let w_seg = params.layout().segment(&conv_weight_name(w))?.clone();
                    let b_off = params.layout().segment(&conv_bias_name(w))?.offset;
                    for fi in 0..f {
                        let u = upstream[unit];
                        let pooled = tape.pooled[unit];
                        unit += 1;
                        let Some((p, z)) = pooled else { continue };
                        if z <= 0.0 || u == 0.0 {
                            continue;
                        }
                        let g = grads.values_mut();
                        g[b_off + fi] += u;
                        let filt_off = w_seg.offset + fi * w * d;
                        for j in 0..w {
                            let t = tape.tokens[p + j] as usize;
                            let row_off = embed_offset + t * d;
                            for k in 0..d {
                                g[filt_off + j * d + k] += u * values[row_off + k];
                                g[row_off + k] += u * values[filt_off + j * d + k];
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
