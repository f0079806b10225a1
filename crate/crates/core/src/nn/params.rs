//! Flat parameter vectors with named segments.
//!
//! Every trainable quantity in the crate lives in a [`ParamVector`]: one
//! contiguous `Vec<f64>` plus a shared [`Layout`] mapping segment names to
//! `(offset, shape)`. Gradients, Adam moments, lookahead copies and
//! finite-difference perturbations all reuse the same layout, so the algebra
//! the bilevel trainer needs reduces to elementwise loops.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered, disjoint, covering set of named segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    segments: Vec<Segment>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
    len: usize,
}

impl Layout {
    pub fn builder() -> LayoutBuilder {
        LayoutBuilder::default()
    }

    /// Rebuilds a layout from serialized segments, validating that they are
    /// contiguous, disjoint and uniquely named.
    pub fn from_segments(segments: Vec<Segment>) -> Result<Self> {
        let mut b = LayoutBuilder::default();
        for seg in &segments {
            if seg.offset != b.len {
                return Err(Error::Layout(format!(
                    "segment `{}` starts at {} but previous segments end at {}",
                    seg.name, seg.offset, b.len
                )));
            }
            b.push(&seg.name, &seg.shape)?;
        }
        Ok(b.build())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn get(&self, name: &str) -> Option<&Segment> {
        self.index.get(name).map(|&i| &self.segments[i])
    }

    pub fn segment(&self, name: &str) -> Result<&Segment> {
        self.get(name)
            .ok_or_else(|| Error::Layout(format!("no segment named `{name}`")))
    }

    /// Name of the segment containing flat index `i`.
    pub fn owner_of(&self, i: usize) -> Option<&str> {
        self.segments
            .iter()
            .find(|s| s.range().contains(&i))
            .map(|s| s.name.as_str())
    }
}

#[derive(Debug, Default)]
pub struct LayoutBuilder {
    segments: Vec<Segment>,
    index: BTreeMap<String, usize>,
    len: usize,
}

impl LayoutBuilder {
    pub fn push(&mut self, name: &str, shape: &[usize]) -> Result<&mut Self> {
        if self.index.contains_key(name) {
            return Err(Error::Layout(format!("duplicate segment `{name}`")));
        }
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Layout(format!(
                "segment `{name}` has degenerate shape {shape:?}"
            )));
        }
        let seg = Segment {
            name: name.to_owned(),
            offset: self.len,
            shape: shape.to_vec(),
        };
        self.len += seg.len();
        self.index.insert(name.to_owned(), self.segments.len());
        self.segments.push(seg);
        Ok(self)
    }

    pub fn build(self) -> Layout {
        Layout {
            segments: self.segments,
            index: self.index,
            len: self.len,
        }
    }
}

/// A flat `f64` parameter (or gradient) vector with a named layout.
///
/// Each instance carries a version stamp that changes whenever the values are
/// borrowed mutably; forward tapes record it so a backward pass against
/// modified parameters is rejected.
#[derive(Debug, Clone)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Arc<Layout>,
    version: u64,
}

impl PartialEq for ParamVector {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values && self.layout == other.layout
    }
}

impl ParamVector {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        ParamVector {
            values: vec![0.0; layout.len()],
            layout,
            version: fresh_version(),
        }
    }

    pub fn from_values(layout: Arc<Layout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Dimension {
                segment: "<all>".into(),
                expected: layout.len(),
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "parameter {} in segment `{}`",
                i,
                layout.owner_of(i).unwrap_or("?")
            )));
        }
        Ok(ParamVector {
            values,
            layout,
            version: fresh_version(),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.layout.clone())
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        self.version = fresh_version();
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn segment(&self, name: &str) -> Result<&[f64]> {
        let seg = self.layout.segment(name)?;
        Ok(&self.values[seg.range()])
    }

    pub fn segment_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        let range = self.layout.segment(name)?.range();
        self.version = fresh_version();
        Ok(&mut self.values[range])
    }

    pub fn ensure_same_layout(&self, other: &ParamVector) -> Result<()> {
        if Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout {
            Ok(())
        } else {
            Err(Error::Layout(format!(
                "layouts differ ({} vs {} entries)",
                self.len(),
                other.len()
            )))
        }
    }

    pub fn fill_zero(&mut self) {
        self.values_mut().iter_mut().for_each(|v| *v = 0.0);
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &ParamVector, scale: f64) -> Result<()> {
        self.ensure_same_layout(other)?;
        for (a, b) in self.values_mut().iter_mut().zip(&other.values) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        self.ensure_same_layout(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// First non-finite entry as `(segment name, flat index)`.
    pub fn first_non_finite(&self) -> Option<(String, usize)> {
        self.values.iter().position(|v| !v.is_finite()).map(|i| {
            (
                self.layout.owner_of(i).unwrap_or("?").to_owned(),
                i,
            )
        })
    }
}

/// One-step SGD lookahead: returns `θ − η·∇θ`, leaving `θ` untouched.
pub fn sgd_lookahead(params: &ParamVector, grads: &ParamVector, step: f64) -> Result<ParamVector> {
    params.ensure_same_layout(grads)?;
    let values = params
        .values
        .iter()
        .zip(&grads.values)
        .map(|(p, g)| p - step * g)
        .collect();
    ParamVector::from_values(params.layout.clone(), values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

/// Signed perturbation `θ ± ε·d` used by the finite-difference hypergradient.
pub fn perturb(
    params: &ParamVector,
    direction: &ParamVector,
    epsilon: f64,
    sign: Sign,
) -> Result<ParamVector> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::config("epsilon", format!("must be > 0, got {epsilon}")));
    }
    params.ensure_same_layout(direction)?;
    let s = match sign {
        Sign::Plus => epsilon,
        Sign::Minus => -epsilon,
    };
    let values = params
        .values
        .iter()
        .zip(&direction.values)
        .map(|(p, d)| p + s * d)
        .collect();
    ParamVector::from_values(params.layout.clone(), values)
}
