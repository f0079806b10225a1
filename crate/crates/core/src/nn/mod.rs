//! Dense network engine: parameter vectors, MLPs, BCE, Adam.

pub mod adam;
pub mod loss;
pub mod mlp;
pub mod params;
pub mod rng;

pub use adam::{AdamConfig, AdamState};
pub use loss::bce_loss;
pub use mlp::{sigmoid, Activation, Mlp, MlpSpec, MlpTape, OutputActivation};
pub use params::{perturb, sgd_lookahead, Layout, LayoutBuilder, ParamVector, Segment, Sign};
pub use rng::{derive_seed, SeededRng};
