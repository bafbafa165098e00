//! Central finite-difference verification of [`backward`](super::backward).
//!
//! Runs entirely in f64. The numeric side only evaluates the forward loss,
//! so it shares no code path with the analytic gradient beyond the
//! forward kernels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernels::{self, sigmoid};
use super::{init_params, Architecture, TrainScope};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Worst |analytic − numeric| / max(|analytic|, |numeric|, 1e-12).
    pub max_rel_error: f64,
    /// Parameters compared.
    pub checked: usize,
    /// Parameters whose ±ε perturbation flipped a ReLU sign or pooling
    /// winner; the loss is not smooth there, so they are not compared.
    pub skipped_at_kinks: usize,
}

/// Mean BCE from logits: softplus(z) − y·z.
fn loss_from_logits(logits: &[f64], labels: &[f64]) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z)
        .sum();
    total / logits.len() as f64
}

pub(crate) fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Compares analytic gradients against central differences for every
/// parameter trainable under `scope`, on a random model and batch drawn
/// from `seed`.
pub fn grad_check(
    arch: &Architecture,
    seed: u64,
    batch_size: usize,
    epsilon: f64,
    scope: TrainScope,
) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let specs = arch.tensor_specs();
    let mut params: Vec<Vec<f64>> = init_params(arch, seed)
        .tensors
        .iter()
        .map(|t| t.data.iter().map(|&v| f64::from(v)).collect())
        .collect();
    // non-zero biases so their gradients are exercised off the origin
    for (spec, p) in specs.iter().zip(params.iter_mut()) {
        if spec.is_bias {
            p.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
        }
    }
    let x: Vec<f64> = (0..batch_size * arch.input_dim)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let y: Vec<f64> = (0..batch_size)
        .map(|_| f64::from(rng.random_bool(0.5) as u8))
        .collect();

    let eval = |p: &[Vec<f64>]| {
        let refs: Vec<&[f64]> = p.iter().map(Vec::as_slice).collect();
        let (logits, cache) = kernels::forward(arch, &refs, &x, batch_size, Some(0));
        (loss_from_logits(&logits, &y), cache.expect("cache requested").pattern())
    };

    let first = scope.first_trainable_layer(arch);
    let refs: Vec<&[f64]> = params.iter().map(Vec::as_slice).collect();
    let (logits, cache) = kernels::forward(arch, &refs, &x, batch_size, Some(first));
    let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
    let analytic = match cache {
        Some(c) if first < arch.n_layers() => kernels::backward(arch, &refs, &c, &probs, &y),
        _ => Vec::new(),
    };
    let (_, base_pattern) = eval(&params);

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped_at_kinks: 0,
    };
    let mut work = params.clone();
    for (tensor, grad) in &analytic {
        for (i, &g) in grad.iter().enumerate() {
            let orig = params[*tensor][i];
            work[*tensor][i] = orig + epsilon;
            let (plus, pat_plus) = eval(&work);
            work[*tensor][i] = orig - epsilon;
            let (minus, pat_minus) = eval(&work);
            work[*tensor][i] = orig;
            if pat_plus != base_pattern || pat_minus != base_pattern {
                report.skipped_at_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            report.max_rel_error = report.max_rel_error.max(relative_error(g, numeric));
            report.checked += 1;
        }
    }
    report
}
