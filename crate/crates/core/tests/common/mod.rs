#![allow(dead_code)]

use mwss::encoder::{EncoderConfig, EncoderVariant, TokenizerConfig};
use mwss::model::{Example, LwnConfig, Model, ModelConfig, Need, TrainBatch, Weighting};
use mwss::nn::{Activation, ParamVector, SeededRng};
use mwss::trainer::hypergradient;
use rand::{Rng, SeedableRng};

pub fn small_config(variant: EncoderVariant, sources: usize, act: Activation, lwn_act: Activation) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            variant,
            tokenizer: TokenizerConfig {
                max_len: 8,
                vocab_size: 30,
                lowercase: true,
            },
            embed_dim: 3,
            filter_widths: vec![2, 3],
            filters_per_width: 2,
        },
        head_hidden: 4,
        head_activation: act,
        num_sources: sources,
        shared_weak_head: false,
        tied_head_init: false,
        lwn: LwnConfig {
            label_embed_dim: 2,
            hidden: vec![3],
            activation: lwn_act,
            output_bias: 0.0,
        },
    }
}

/// Token ids with a random non-pad prefix of length in `[min_len, max_len]`.
pub fn random_tokens(rng: &mut SeededRng, cfg: &ModelConfig, min_len: usize) -> Vec<u32> {
    let t = &cfg.encoder.tokenizer;
    let n = rng.gen_range(min_len..=t.max_len);
    let mut ids: Vec<u32> = (0..n).map(|_| rng.gen_range(1..t.vocab_size as u32)).collect();
    ids.resize(t.max_len, 0);
    ids
}

pub struct Owned {
    pub clean: Vec<(Vec<u32>, u8)>,
    pub weak: Vec<Vec<(Vec<u32>, u8)>>,
    pub val: Vec<(Vec<u32>, u8)>,
}

impl Owned {
    pub fn random(rng: &mut SeededRng, cfg: &ModelConfig, sizes: (usize, usize, usize), min_len: usize) -> Self {
        let draw = |n: usize, rng: &mut SeededRng| -> Vec<(Vec<u32>, u8)> {
            (0..n)
                .map(|_| (random_tokens(rng, cfg, min_len), rng.gen_range(0..2u8)))
                .collect()
        };
        let clean = draw(sizes.0, rng);
        let weak = (0..cfg.num_sources).map(|_| draw(sizes.1, rng)).collect();
        let val = draw(sizes.2, rng);
        Owned { clean, weak, val }
    }

    pub fn batch(&self) -> TrainBatch<'_> {
        TrainBatch {
            clean: examples(&self.clean),
            weak: self.weak.iter().map(|w| examples(w)).collect(),
        }
    }

    pub fn val(&self) -> Vec<Example<'_>> {
        examples(&self.val)
    }
}

pub fn examples(v: &[(Vec<u32>, u8)]) -> Vec<Example<'_>> {
    v.iter().map(|(t, y)| Example { tokens: t, label: *y }).collect()
}

/// Central difference of `f` along every coordinate of `p`.
pub fn numeric_grad(p: &ParamVector, h: f64, mut f: impl FnMut(&ParamVector) -> f64) -> Vec<f64> {
    (0..p.values().len())
        .map(|i| {
            let mut plus = p.clone();
            plus.values_mut()[i] += h;
            let mut minus = p.clone();
            minus.values_mut()[i] -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect()
}

/// Denominator floor for entries whose true gradient is (near) zero.
pub const REL_FLOOR: f64 = 1e-6;

pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> (f64, usize) {
    assert_eq!(analytic.len(), numeric.len());
    let mut worst = (0.0, 0);
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let e = (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR);
        if e > worst.0 {
            worst = (e, i);
        }
    }
    worst
}

pub fn init(model: &Model, seed: u64) -> (ParamVector, ParamVector) {
    let mut rng = SeededRng::seed_from_u64(seed);
    let mut theta = model.init_theta(&mut rng).unwrap();
    let mut alpha = model.init_alpha(&mut rng).unwrap();
    // Zero biases put relu units exactly on their kink; jitter everything but
    // the pad row.
    let pad = model.config.encoder.embed_dim;
    for v in theta.values_mut()[pad..].iter_mut() {
        *v += rng.gen_range(-0.1..0.1);
    }
    // Glorot draws put LWN outputs near 0.5; spread them out a little.
    for v in alpha.values_mut() {
        *v = 2.0 * *v + rng.gen_range(-0.1..0.1);
    }
    (theta, alpha)
}

#[derive(Debug)]
pub struct GradCheck {
    pub theta: (f64, String),
    pub alpha: (f64, String),
    pub val: (f64, String),
}

/// Gradient check of the training objective (θ and α) and the validation
/// loss for one seeded configuration.
pub fn gradient_check(seed: u64) -> GradCheck {
    let mut rng = SeededRng::seed_from_u64(seed);
    let variant = if seed % 2 == 0 { EncoderVariant::Meanpool } else { EncoderVariant::Cnn };
    let act = if seed % 3 == 0 { Activation::Relu } else { Activation::Tanh };
    let lwn_act = if seed % 4 == 1 { Activation::Relu } else { Activation::Tanh };
    let sources = 1 + (seed as usize % 3);
    let mut cfg = small_config(variant, sources, act, lwn_act);
    cfg.shared_weak_head = seed % 5 == 4;
    let model = Model::new(cfg.clone()).unwrap();
    let (theta, alpha) = init(&model, seed ^ 0xabc);
    let data = Owned::random(&mut rng, &cfg, (3, 3, 3), 1);
    let batch = data.batch();
    let val = data.val();
    let h = 1e-5;
    let both = Need { theta: true, alpha: true };
    let tl = model.train_loss(&theta, &alpha, &batch, Weighting::Learned, both).unwrap();

    let loss_at = |t: &ParamVector, a: &ParamVector| {
        model
            .train_loss(t, a, &batch, Weighting::Learned, Need { theta: false, alpha: false })
            .unwrap()
            .loss
    };
    // The LWN sees h(x) as a constant, so θ-gradients flow only through the
    // loss terms; the oracle reproduces that by freezing the LWN features.
    let feats = tl.weak_features.clone();
    let loss_frozen = |t: &ParamVector| {
        model
            .train_loss_with_features(t, &alpha, &batch, Weighting::Learned, Need { theta: false, alpha: false }, Some(&feats))
            .unwrap()
            .loss
    };
    let nt = numeric_grad(&theta, h, loss_frozen);
    let na = numeric_grad(&alpha, h, |a| loss_at(&theta, a));
    let nv = numeric_grad(&theta, h, |t| model.val_loss(t, &val, false).unwrap().0);
    let (_, gv) = model.val_loss(&theta, &val, true).unwrap();

    let name = |p: &ParamVector, i: usize| p.layout().owner_of(i).unwrap_or_default().to_owned();
    let et = max_rel_error(tl.grad_theta.as_ref().unwrap().values(), &nt);
    let ea = max_rel_error(tl.grad_alpha.as_ref().unwrap().values(), &na);
    let ev = max_rel_error(gv.unwrap().values(), &nv);
    GradCheck {
        theta: (et.0, name(&theta, et.1)),
        alpha: (ea.0, name(&alpha, ea.1)),
        val: (ev.0, name(&theta, ev.1)),
    }
}

/// Toy problem for the hypergradient: meanpool encoder with d=2, one weak
/// source, and an LWN with 8 parameters.
pub fn toy_model() -> Model {
    let cfg = ModelConfig {
        encoder: EncoderConfig {
            variant: EncoderVariant::Meanpool,
            tokenizer: TokenizerConfig {
                max_len: 6,
                vocab_size: 12,
                lowercase: true,
            },
            embed_dim: 2,
            filter_widths: vec![2],
            filters_per_width: 1,
        },
        head_hidden: 3,
        head_activation: Activation::Tanh,
        num_sources: 1,
        shared_weak_head: false,
        tied_head_init: false,
        lwn: LwnConfig {
            label_embed_dim: 1,
            hidden: vec![1],
            activation: Activation::Tanh,
            output_bias: 0.0,
        },
    };
    Model::new(cfg).unwrap()
}

pub struct ToyCase {
    pub model: Model,
    pub theta: ParamVector,
    pub alpha: ParamVector,
    pub data: Owned,
}

pub fn toy_case(seed: u64) -> ToyCase {
    let model = toy_model();
    let (theta, alpha) = init(&model, seed);
    let mut rng = SeededRng::seed_from_u64(seed.wrapping_add(1000));
    let data = Owned::random(&mut rng, &model.config, (4, 6, 5), 1);
    ToyCase { model, theta, alpha, data }
}

/// Coordinate-wise central difference of `α ↦ L_val(θ − η∇θ L_train(α, θ))`.
pub fn oracle_hypergradient(case: &ToyCase, eta: f64, h: f64) -> Vec<f64> {
    let batch = case.data.batch();
    let val = case.data.val();
    numeric_grad(&case.alpha, h, |a| {
        let g = case
            .model
            .train_loss(&case.theta, a, &batch, Weighting::Learned, Need { theta: true, alpha: false })
            .unwrap()
            .grad_theta
            .unwrap();
        let mut t = case.theta.clone();
        t.add_scaled(&g, -eta).unwrap();
        case.model.val_loss(&t, &val, false).unwrap().0
    })
}

pub fn fd_hypergradient(case: &ToyCase, eta: f64, fd_scale: f64) -> Vec<f64> {
    hypergradient(
        &case.model,
        &case.theta,
        &case.alpha,
        &case.data.batch(),
        &case.data.val(),
        Weighting::Learned,
        eta,
        fd_scale,
    )
    .unwrap()
    .grad_alpha
    .values()
    .to_vec()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (norm(a) * norm(b))
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `(cosine, |‖fd‖ − ‖oracle‖| / ‖oracle‖)` on the toy problem.
pub fn hypergradient_agreement(seed: u64, eta: f64) -> (f64, f64) {
    let case = toy_case(seed);
    let oracle = oracle_hypergradient(&case, eta, 1e-4);
    let fd = fd_hypergradient(&case, eta, 0.01);
    let no = norm(&oracle);
    (cosine(&fd, &oracle), (norm(&fd) - no).abs() / no)
}
