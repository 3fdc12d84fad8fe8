//! Central finite-difference check of the analytic gradients, and the
//! inverted-dropout expectation check.
//!
//! The numerical side only calls [`forward`] and [`loss`]; it never touches
//! the backpropagation code it checks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    backward, forward, loss, Batch, Dropout, FreezeMask, Layer, Mode, NetConfig, NetShape,
    NetworkParams,
};
use crate::error::Result;

/// Magnitude below which a gradient pair is compared absolutely.
pub const REL_FLOOR: f64 = 1e-8;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central differences of the batch loss for every parameter of `layers`,
/// returned tensor by tensor in [`NetworkParams::tensors`] order (frozen
/// tensors get empty vectors).
pub fn numeric_gradients(
    params: &NetworkParams,
    batch: &Batch,
    mode: Mode,
    layers: FreezeMask,
    eps: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut work = params.clone();
    let eval = |p: &NetworkParams| -> Result<f64> {
        Ok(loss(&forward(p, batch, mode)?.probs(), &batch.labels))
    };
    let meta: Vec<(Layer, usize)> = params
        .tensors()
        .iter()
        .map(|t| (t.layer, t.data.len()))
        .collect();
    let mut out = Vec::with_capacity(meta.len());
    for (ti, (layer, len)) in meta.into_iter().enumerate() {
        if !layers.contains(layer) {
            out.push(Vec::new());
            continue;
        }
        let mut grads = Vec::with_capacity(len);
        for j in 0..len {
            let orig = params.tensors()[ti].data[j];
            work.tensors_mut()[ti].data[j] = orig + eps;
            let plus = eval(&work)?;
            work.tensors_mut()[ti].data[j] = orig - eps;
            let minus = eval(&work)?;
            work.tensors_mut()[ti].data[j] = orig;
            grads.push((plus - minus) / (2.0 * eps));
        }
        out.push(grads);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskCheck {
    pub mask: FreezeMask,
    pub max_rel_error: f64,
    pub worst: String,
    pub checked: usize,
    /// Every gradient entry outside the mask was exactly zero.
    pub frozen_zero: bool,
}

impl MaskCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol && self.frozen_zero
    }
}

/// Compares analytic gradients under `mask` with precomputed numeric ones.
pub fn compare(
    params: &NetworkParams,
    batch: &Batch,
    mode: Mode,
    mask: FreezeMask,
    numeric: &[Vec<f64>],
) -> Result<MaskCheck> {
    let cache = forward(params, batch, mode)?;
    let grads = backward(params, batch, &cache, mask)?;
    let mut check = MaskCheck {
        mask,
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
        frozen_zero: true,
    };
    for (t, num) in grads.tensors().iter().zip(numeric) {
        if !mask.contains(t.layer) {
            check.frozen_zero &= t.data.iter().all(|&v| v == 0.0);
            continue;
        }
        for (j, (&a, &n)) in t.data.iter().zip(num).enumerate() {
            let e = relative_error(a, n);
            check.checked += 1;
            if e > check.max_rel_error {
                check.max_rel_error = e;
                check.worst = format!("{}[{j}] analytic={a:e} numeric={n:e}", t.name);
            }
        }
    }
    Ok(check)
}

/// Small architecture used for exhaustive checks.
pub fn check_shape() -> NetShape {
    let config = NetConfig {
        lstm_units: 3,
        kernel_sizes: vec![3, 4, 5],
        filters: 4,
        dense_units: 4,
        leaky_slope: 0.3,
    };
    NetShape::new(&config, 5, 3, 3)
}

/// Random parameters (biases included) and a random batch whose sequence
/// lengths straddle the largest kernel size.
pub fn random_problem(
    shape: &NetShape,
    samples: usize,
    seed: u64,
) -> Result<(NetworkParams, Batch)> {
    let mut params = NetworkParams::init(shape.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for t in params.tensors_mut() {
        for v in t.data.iter_mut() {
            *v += rng.gen_range(-0.2..0.2);
        }
    }
    let mut inputs = Vec::new();
    let mut clusters = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..samples {
        let len = rng.gen_range(1..=8);
        inputs.push(Array2::from_shape_fn((len, shape.emb_dim), |_| {
            rng.gen_range(-1.0..1.0)
        }));
        clusters.push(
            (0..shape.cluster_width)
                .map(|_| f64::from(rng.gen_range(0..2u8)))
                .collect(),
        );
        labels.push(rng.gen_range(0..shape.n_classes));
    }
    Ok((params, Batch::new(inputs, clusters, labels)?))
}

#[derive(Debug, Clone)]
pub struct GradCheckSummary {
    pub checks: Vec<MaskCheck>,
}

impl GradCheckSummary {
    pub fn max_rel_error(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.checks.iter().all(|c| c.passes(tol))
    }
}

/// Checks each layer group alone and all groups jointly on `batches`
/// random batches of `samples` samples, in train mode with dropout.
pub fn run(seed: u64, batches: usize, samples: usize, eps: f64) -> Result<GradCheckSummary> {
    let shape = check_shape();
    let mut masks: Vec<FreezeMask> = Layer::ALL.iter().map(|&l| FreezeMask::only(l)).collect();
    masks.push(FreezeMask::all());
    let mut checks = Vec::new();
    for b in 0..batches {
        let (params, batch) = random_problem(&shape, samples, seed.wrapping_add(b as u64))?;
        let mode = Mode::Train {
            dropout: Dropout::uniform(0.5),
            seed: seed.wrapping_mul(31).wrapping_add(b as u64),
        };
        let numeric = numeric_gradients(&params, &batch, mode, FreezeMask::all(), eps)?;
        for &mask in &masks {
            checks.push(compare(&params, &batch, mode, mask, &numeric)?);
        }
    }
    Ok(GradCheckSummary { checks })
}

/// Norm-relative distance between seed-averaged train-mode outputs of a
/// dropped layer and its eval-mode outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutCheck {
    /// BiLSTM output sequence, with dropout on that site only.
    pub lstm: f64,
    /// Pooled convolution vectors, with dropout on that site only.
    pub pooled: f64,
}

impl DropoutCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.lstm < tol && self.pooled < tol
    }
}

fn norm_relative(sum: &[f64], n: usize, reference: &[f64]) -> f64 {
    let diff: f64 = sum
        .iter()
        .zip(reference)
        .map(|(s, r)| (s / n as f64 - r).powi(2))
        .sum();
    let norm: f64 = reference.iter().map(|r| r * r).sum();
    (diff / norm.max(f64::MIN_POSITIVE)).sqrt()
}

/// Averages each dropped layer's train-mode output over `seeds` dropout
/// seeds at `rate` and compares it with the eval-mode output. Sites are
/// checked one at a time so that the pooled vectors are not perturbed by
/// dropout upstream.
pub fn dropout_expectation(
    params: &NetworkParams,
    batch: &Batch,
    rate: f64,
    seeds: u64,
) -> Result<DropoutCheck> {
    let flatten_lstm = |c: &super::ForwardCache| -> Vec<f64> {
        (0..c.len())
            .flat_map(|i| c.lstm_output(i).iter().copied().collect::<Vec<_>>())
            .collect()
    };
    let blocks = params.shape.kernel_sizes.len();
    let flatten_pooled = |c: &super::ForwardCache| -> Vec<f64> {
        (0..c.len())
            .flat_map(|i| (0..blocks).flat_map(move |b| c.pooled(i, b).to_vec()))
            .collect()
    };
    let eval = forward(params, batch, Mode::Eval)?;
    let mut check = DropoutCheck {
        lstm: 0.0,
        pooled: 0.0,
    };
    for site in 0..2 {
        let dropout = if site == 0 {
            Dropout {
                lstm: rate,
                pooled: 0.0,
            }
        } else {
            Dropout {
                lstm: 0.0,
                pooled: rate,
            }
        };
        let flatten: &dyn Fn(&super::ForwardCache) -> Vec<f64> = if site == 0 {
            &flatten_lstm
        } else {
            &flatten_pooled
        };
        let reference = flatten(&eval);
        let mut sum = vec![0.0; reference.len()];
        for seed in 0..seeds {
            let cache = forward(params, batch, Mode::Train { dropout, seed })?;
            sum.iter_mut()
                .zip(flatten(&cache))
                .for_each(|(s, v)| *s += v);
        }
        let err = norm_relative(&sum, seeds as usize, &reference);
        if site == 0 {
            check.lstm = err;
        } else {
            check.pooled = err;
        }
    }
    Ok(check)
}
