//! Joint training of a fake-news classifier from a small clean-labeled set
//! and several weakly-labeled sets derived from social-engagement heuristics.
//! A meta-learned label weighting network scores each weak instance, trained
//! through a one-step lookahead and a finite-difference hypergradient.

pub mod baselines;
pub mod data;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod harness;
pub mod io;
pub mod model;
pub mod nn;
pub mod trainer;
pub mod weak;

pub use error::{Error, Result};
