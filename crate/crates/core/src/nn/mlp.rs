//! Dense feed-forward networks over [`ParamVector`] segments.
//!
//! Layer `i` of an MLP registered under prefix `p` owns two segments:
//! `p.l{i}.w` with shape `(out, in)` in row-major order and `p.l{i}.b` with
//! shape `(out,)`. Hidden layers use the spec's hidden activation; the last
//! layer uses the output activation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{LayoutBuilder, ParamVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Identity,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub hidden: Activation,
    pub output: OutputActivation,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, hidden: Activation, output: OutputActivation) -> Result<Self> {
        let spec = MlpSpec {
            widths,
            hidden,
            output,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::config("widths", "an MLP needs at least two widths"));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(Error::config("widths", "widths must be positive"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated")
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// An [`MlpSpec`] bound to a segment prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    pub prefix: String,
    pub spec: MlpSpec,
}

/// Activations cached by [`Mlp::forward`].
#[derive(Debug, Clone)]
pub struct MlpTape {
    prefix: String,
    widths: Vec<usize>,
    version: u64,
    /// `inputs[i]` is the input to layer `i`; the final entry is the output.
    activations: Vec<Vec<f64>>,
}

impl MlpTape {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("tape always holds the input")
    }
}

impl Mlp {
    pub fn new(prefix: impl Into<String>, spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Mlp {
            prefix: prefix.into(),
            spec,
        })
    }

    pub fn weight_name(&self, layer: usize) -> String {
        format!("{}.l{}.w", self.prefix, layer)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}.l{}.b", self.prefix, layer)
    }

    pub fn register(&self, builder: &mut LayoutBuilder) -> Result<()> {
        for (i, pair) in self.spec.widths.windows(2).enumerate() {
            builder.push(&self.weight_name(i), &[pair[1], pair[0]])?;
            builder.push(&self.bias_name(i), &[pair[1]])?;
        }
        Ok(())
    }

    /// Uniform Glorot initialization of the weights, zero biases.
    pub fn init<R: Rng + ?Sized>(&self, params: &mut ParamVector, rng: &mut R) -> Result<()> {
        for (i, pair) in self.spec.widths.windows(2).enumerate() {
            let limit = (6.0 / (pair[0] + pair[1]) as f64).sqrt();
            for w in params.segment_mut(&self.weight_name(i))? {
                *w = rng.gen_range(-limit..limit);
            }
            params
                .segment_mut(&self.bias_name(i))?
                .iter_mut()
                .for_each(|b| *b = 0.0);
        }
        Ok(())
    }

    pub fn forward(&self, params: &ParamVector, input: &[f64]) -> Result<(Vec<f64>, MlpTape)> {
        if input.len() != self.spec.input_dim() {
            return Err(Error::Dimension {
                segment: self.weight_name(0),
                expected: self.spec.input_dim(),
                actual: input.len(),
            });
        }
        let n_layers = self.spec.num_layers();
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(input.to_vec());
        for i in 0..n_layers {
            let (n_in, n_out) = (self.spec.widths[i], self.spec.widths[i + 1]);
            let w = params.segment(&self.weight_name(i))?;
            let b = params.segment(&self.bias_name(i))?;
            check_len(&self.weight_name(i), n_in * n_out, w.len())?;
            let x = activations.last().expect("non-empty");
            let last = i + 1 == n_layers;
            let y: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    let z = b[o] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
                    if last {
                        match self.spec.output {
                            OutputActivation::Identity => z,
                            OutputActivation::Sigmoid => sigmoid(z),
                        }
                    } else {
                        match self.spec.hidden {
                            Activation::Relu => z.max(0.0),
                            Activation::Tanh => z.tanh(),
                        }
                    }
                })
                .collect();
            activations.push(y);
        }
        let tape = MlpTape {
            prefix: self.prefix.clone(),
            widths: self.spec.widths.clone(),
            version: params.version(),
            activations,
        };
        Ok((tape.output().to_vec(), tape))
    }

    /// Backpropagates `upstream = dL/d(output)`, accumulating parameter
    /// gradients into `grads` and returning `dL/d(input)`.
    pub fn backward(
        &self,
        params: &ParamVector,
        tape: &MlpTape,
        upstream: &[f64],
        grads: &mut ParamVector,
    ) -> Result<Vec<f64>> {
        if tape.prefix != self.prefix || tape.widths != self.spec.widths {
            return Err(Error::StaleTape(format!(
                "tape recorded for `{}` {:?}, replayed on `{}` {:?}",
                tape.prefix, tape.widths, self.prefix, self.spec.widths
            )));
        }
        if tape.version != params.version() {
            return Err(Error::StaleTape(format!(
                "parameters of `{}` changed since the forward pass",
                self.prefix
            )));
        }
        params.ensure_same_layout(grads)?;
        check_len("upstream", self.spec.output_dim(), upstream.len())?;

        let n_layers = self.spec.num_layers();
        let mut delta = upstream.to_vec();
        for i in (0..n_layers).rev() {
            let (n_in, n_out) = (self.spec.widths[i], self.spec.widths[i + 1]);
            let y = &tape.activations[i + 1];
            // delta := dL/dz for this layer
            if i + 1 == n_layers {
                if self.spec.output == OutputActivation::Sigmoid {
                    for (d, &p) in delta.iter_mut().zip(y) {
                        *d *= p * (1.0 - p);
                    }
                }
            } else {
                match self.spec.hidden {
                    Activation::Relu => {
                        for (d, &a) in delta.iter_mut().zip(y) {
                            if a <= 0.0 {
                                *d = 0.0;
                            }
                        }
                    }
                    Activation::Tanh => {
                        for (d, &a) in delta.iter_mut().zip(y) {
                            *d *= 1.0 - a * a;
                        }
                    }
                }
            }
            let x = &tape.activations[i];
            let w_name = self.weight_name(i);
            let w_range = params.layout().segment(&w_name)?.range();
            let b_range = params.layout().segment(&self.bias_name(i))?.range();
            let w = &params.values()[w_range.clone()];
            let mut dx = vec![0.0; n_in];
            {
                let g = grads.values_mut();
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    g[b_range.start + o] += d;
                    let g_row = &mut g[w_range.start + o * n_in..w_range.start + (o + 1) * n_in];
                    for (gw, &xi) in g_row.iter_mut().zip(x) {
                        *gw += d * xi;
                    }
                    let w_row = &w[o * n_in..(o + 1) * n_in];
                    for (dxi, &wi) in dx.iter_mut().zip(w_row) {
                        *dxi += d * wi;
                    }
                }
            }
            delta = dx;
        }
        Ok(delta)
    }
}

fn check_len(segment: &str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            segment: segment.to_owned(),
            expected,
            actual,
        })
    }
}
