//! Fixed-architecture Conv1D + MLP binary classifier with hand-written
//! backpropagation, layer freezing and SGD with momentum.

mod arch;
mod gradcheck;
mod kernels;
mod optim;
mod params;
mod train;

pub use arch::{Architecture, ConvBlock, FcLayer, TensorSpec, TrainScope};
pub use gradcheck::{grad_check, GradCheckReport};
pub use optim::{sgd_momentum_step, OptimizerState};
pub use params::{
    deserialize_params, deserialize_subset, deserialize_tensors, init_params, serialize_params,
    serialize_tensors, ModelParams, Tensor,
};
pub use train::{train, train_with_state, Dataset, FineTuneConfig, TrainStats};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid architecture or config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("malformed parameter blob: {0}")]
    Blob(String),
    #[error("cache does not match this backward call: {0}")]
    CacheMismatch(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
}

/// Probabilities are clamped to [ε, 1 − ε] inside the loss.
pub const PROB_CLAMP: f64 = 1e-7;

/// Activations kept by a forward pass for the matching backward pass.
///
/// Only layers at or after the first trainable layer are stored; for a
/// frozen prefix the cache holds just its final output (the input of the
/// first trainable layer).
#[derive(Debug, Clone)]
pub struct ActivationCache {
    scope: TrainScope,
    inner: kernels::Cache<f32>,
}

impl ActivationCache {
    pub fn scope(&self) -> TrainScope {
        self.scope
    }

    pub fn batch_size(&self) -> usize {
        self.inner.batch
    }

    /// Number of layers with stored activations.
    pub fn cached_layers(&self) -> usize {
        self.inner.layers.len()
    }

    /// Total stored activation elements (inputs, pre-activations, pool indices).
    pub fn stored_elements(&self) -> usize {
        self.inner
            .layers
            .iter()
            .map(|l| match l {
                kernels::LayerCache::Conv { input, pre, argmax } => {
                    input.len() + pre.len() + argmax.len()
                }
                kernels::LayerCache::Fc { input, pre } => input.len() + pre.len(),
            })
            .sum()
    }
}

/// Gradients for the trainable tensors only, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// (tensor index in [`ModelParams::tensors`], gradient values)
    pub entries: Vec<(usize, Vec<f32>)>,
}

impl Gradients {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_abs(&self) -> f32 {
        self.entries
            .iter()
            .flat_map(|(_, g)| g.iter())
            .fold(0.0f32, |m, v| m.max(v.abs()))
    }
}

fn param_slices(params: &ModelParams) -> Vec<&[f32]> {
    params.tensors.iter().map(|t| t.data.as_slice()).collect()
}

/// Runs the network on row-major `inputs` (rows × `arch.input_dim`).
///
/// With `cache_scope` set, returns the activations the matching
/// [`backward`] needs for that scope.
pub fn forward(
    params: &ModelParams,
    arch: &Architecture,
    inputs: &[f32],
    cache_scope: Option<TrainScope>,
) -> Result<(Vec<f32>, Option<ActivationCache>), NnError> {
    let d = arch.input_dim;
    if !inputs.len().is_multiple_of(d) {
        return Err(NnError::Shape(format!(
            "{} input values are not a multiple of input_dim {d}",
            inputs.len()
        )));
    }
    params.check_against(arch)?;
    Ok(forward_unchecked(params, arch, inputs, cache_scope))
}

/// [`forward`] for inputs and parameters already validated against `arch`.
pub(crate) fn forward_unchecked(
    params: &ModelParams,
    arch: &Architecture,
    inputs: &[f32],
    cache_scope: Option<TrainScope>,
) -> (Vec<f32>, Option<ActivationCache>) {
    let batch = inputs.len() / arch.input_dim;
    let keep_from = cache_scope.map(|s| s.first_trainable_layer(arch));
    let (logits, cache) = kernels::forward(arch, &param_slices(params), inputs, batch, keep_from);
    let probs = logits.into_iter().map(kernels::sigmoid).collect();
    let cache = cache_scope.zip(cache).map(|(scope, inner)| ActivationCache { scope, inner });
    (probs, cache)
}

/// Mean binary cross-entropy with probabilities clamped to [1e-7, 1 − 1e-7].
pub fn bce_loss(probs: &[f32], labels: &[f32]) -> Result<f64, NnError> {
    if probs.len() != labels.len() {
        return Err(NnError::Shape(format!(
            "{} probabilities vs {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(NnError::Empty("loss over zero samples"));
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = f64::from(p).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            let y = f64::from(y);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / probs.len() as f64)
}

/// Gradients of mean BCE w.r.t. exactly the tensors trainable under `scope`.
///
/// The output-layer error is taken as (p − y) / B, the derivative of the
/// unclamped loss through the sigmoid.
pub fn backward(
    cache: &ActivationCache,
    params: &ModelParams,
    arch: &Architecture,
    probs: &[f32],
    labels: &[f32],
    scope: TrainScope,
) -> Result<Gradients, NnError> {
    if cache.scope != scope {
        return Err(NnError::CacheMismatch(format!(
            "cache built for {:?}, backward requested for {scope:?}",
            cache.scope
        )));
    }
    let batch = cache.inner.batch;
    if probs.len() != batch || labels.len() != batch {
        return Err(NnError::CacheMismatch(format!(
            "cache holds {batch} rows, got {} probabilities and {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if scope.first_trainable_layer(arch) >= arch.n_layers() {
        return Ok(Gradients { entries: Vec::new() });
    }
    params.check_against(arch)?;
    let entries = kernels::backward(arch, &param_slices(params), &cache.inner, probs, labels);
    Ok(Gradients { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch() -> Architecture {
        Architecture::default_for(20).unwrap()
    }

    #[test]
    fn zero_params_give_half() {
        let a = arch();
        let p = ModelParams::zeros(&a);
        let x: Vec<f32> = (0..60).map(|v| v as f32 - 30.0).collect();
        let (probs, cache) = forward(&p, &a, &x, None).unwrap();
        assert_eq!(probs, vec![0.5; 3]);
        assert!(cache.is_none());
    }

    #[test]
    fn probabilities_strictly_inside_unit_interval() {
        let a = arch();
        let p = init_params(&a, 3);
        let x: Vec<f32> = (0..20).map(|v| (v as f32 * 0.37).sin()).collect();
        let (probs, _) = forward(&p, &a, &x, None).unwrap();
        assert_eq!(probs.len(), 1);
        assert!(probs[0] > 0.0 && probs[0] < 1.0);
    }

    #[test]
    fn input_shape_checked() {
        let a = arch();
        let p = init_params(&a, 3);
        assert!(forward(&p, &a, &[0.0; 21], None).is_err());
    }

    #[test]
    fn frozen_prefix_caches_only_boundary() {
        let a = arch();
        let p = init_params(&a, 3);
        let x = vec![0.1f32; 40];
        let (_, c) = forward(&p, &a, &x, Some(TrainScope::FcTail(1))).unwrap();
        let c = c.unwrap();
        assert_eq!(c.cached_layers(), 1);
        // boundary input (2 × 32) plus the final pre-activation (2 × 1)
        assert_eq!(c.stored_elements(), 66);
        let (_, c) = forward(&p, &a, &x, Some(TrainScope::Full)).unwrap();
        assert_eq!(c.unwrap().cached_layers(), 6);
    }

    #[test]
    fn bce_values() {
        assert!((bce_loss(&[0.5], &[1.0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-9);
        assert!((bce_loss(&[0.9], &[0.0]).unwrap() - std::f64::consts::LN_10).abs() < 1e-5);
        assert!(bce_loss(&[1.0, 0.0], &[1.0, 0.0]).unwrap() <= 1e-6);
        assert!(bce_loss(&[0.5], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn last_layer_gradient_count() {
        let a = arch();
        let p = init_params(&a, 5);
        let x: Vec<f32> = (0..80).map(|v| (v as f32 * 0.13).cos()).collect();
        let y = [1.0, 0.0, 1.0, 0.0];
        let (probs, cache) = forward(&p, &a, &x, Some(TrainScope::FcTail(1))).unwrap();
        let g = backward(&cache.unwrap(), &p, &a, &probs, &y, TrainScope::FcTail(1)).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(
            g.entries.iter().map(|(i, _)| *i).collect::<Vec<_>>(),
            vec![10, 11]
        );
    }

    #[test]
    fn saturated_correct_predictions_have_no_gradient() {
        let a = arch();
        let mut p = init_params(&a, 5);
        let last_w = p.index_of("fc3.weight").unwrap();
        p.tensors[last_w].data.iter_mut().for_each(|w| *w = 0.0);
        p.tensors[last_w + 1].data[0] = 40.0;
        let x: Vec<f32> = (0..80).map(|v| (v as f32 * 0.13).cos()).collect();
        let y = [1.0; 4];
        for scope in [TrainScope::FcTail(1), TrainScope::FcTail(3), TrainScope::Full] {
            let (probs, cache) = forward(&p, &a, &x, Some(scope)).unwrap();
            let g = backward(&cache.unwrap(), &p, &a, &probs, &y, scope).unwrap();
            assert!(g.max_abs() <= 1e-6, "{scope:?}: {}", g.max_abs());
        }
    }

    #[test]
    fn cache_scope_mismatch_errors() {
        let a = arch();
        let p = init_params(&a, 5);
        let x = vec![0.0f32; 20];
        let (probs, cache) = forward(&p, &a, &x, Some(TrainScope::FcTail(1))).unwrap();
        let err = backward(&cache.unwrap(), &p, &a, &probs, &[1.0], TrainScope::Full).unwrap_err();
        assert!(matches!(err, NnError::CacheMismatch(_)));
    }
}
