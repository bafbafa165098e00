use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    backward, bce_loss, forward_unchecked, sgd_momentum_step, Architecture, ModelParams, NnError,
    OptimizerState, TrainScope,
};
use crate::data::{FeatureMatrix, LabelVector};

/// Row-major f32 inputs with 0/1 targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<f32>,
    pub y: Vec<f32>,
    pub dim: usize,
}

impl Dataset {
    pub fn new(x: &FeatureMatrix, y: &LabelVector) -> Result<Self, NnError> {
        if x.n_rows() != y.len() {
            return Err(NnError::Shape(format!(
                "{} rows but {} labels",
                x.n_rows(),
                y.len()
            )));
        }
        Ok(Dataset {
            x: x.to_f32(),
            y: y.to_f32(),
            dim: x.n_cols(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn concat(parts: &[&Dataset]) -> Result<Dataset, NnError> {
        let dim = parts.first().map_or(0, |p| p.dim);
        if parts.iter().any(|p| p.dim != dim) {
            return Err(NnError::Shape("datasets differ in feature width".into()));
        }
        Ok(Dataset {
            x: parts.iter().flat_map(|p| p.x.iter().copied()).collect(),
            y: parts.iter().flat_map(|p| p.y.iter().copied()).collect(),
            dim,
        })
    }
}

/// Which layers train and how.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FineTuneConfig {
    pub scope: TrainScope,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        FineTuneConfig {
            scope: TrainScope::FcTail(3),
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            local_epochs: 5,
        }
    }
}

impl FineTuneConfig {
    pub fn validate(&self, arch: &Architecture) -> Result<(), NnError> {
        self.scope.validate(arch)?;
        if self.batch_size == 0 {
            return Err(NnError::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(NnError::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(NnError::Config("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainStats {
    pub steps: usize,
    /// Sample-weighted mean batch loss over the final epoch.
    pub last_epoch_loss: f64,
}

/// Mini-batch SGD with momentum over `epochs` passes of `data`.
///
/// Batch order comes from a generator seeded with `seed` and advanced
/// across epochs; the last batch of an epoch may be short. Optimizer state
/// starts at zero for each call.
pub fn train(
    params: &mut ModelParams,
    arch: &Architecture,
    data: &Dataset,
    cfg: &FineTuneConfig,
    epochs: usize,
    seed: u64,
) -> Result<TrainStats, NnError> {
    let mut state = OptimizerState::new(arch, cfg.scope);
    train_with_state(params, arch, data, cfg, epochs, seed, &mut state)
}

/// [`train`] continuing from existing velocity buffers, which must have
/// been created for `cfg.scope`.
pub fn train_with_state(
    params: &mut ModelParams,
    arch: &Architecture,
    data: &Dataset,
    cfg: &FineTuneConfig,
    epochs: usize,
    seed: u64,
    state: &mut OptimizerState,
) -> Result<TrainStats, NnError> {
    cfg.validate(arch)?;
    if data.dim != arch.input_dim {
        return Err(NnError::Shape(format!(
            "data has {} features, network expects {}",
            data.dim, arch.input_dim
        )));
    }
    if data.is_empty() {
        return Err(NnError::Empty("training set"));
    }
    if data.y.len() * data.dim != data.x.len() {
        return Err(NnError::Shape("feature buffer does not match label count".into()));
    }
    params.check_against(arch)?;
    if !state.matches(arch, cfg.scope) {
        return Err(NnError::Config(format!(
            "optimizer state was not built for {:?}",
            cfg.scope
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut stats = TrainStats::default();
    let mut xb = Vec::with_capacity(cfg.batch_size * data.dim);
    let mut yb = Vec::with_capacity(cfg.batch_size);

    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            xb.clear();
            yb.clear();
            for &i in chunk {
                xb.extend_from_slice(&data.x[i * data.dim..(i + 1) * data.dim]);
                yb.push(data.y[i]);
            }
            let (probs, cache) = forward_unchecked(params, arch, &xb, Some(cfg.scope));
            let cache = cache.expect("cache requested");
            loss_sum += bce_loss(&probs, &yb)? * chunk.len() as f64;
            let grads = backward(&cache, params, arch, &probs, &yb, cfg.scope)?;
            sgd_momentum_step(params, &grads, state, cfg.learning_rate, cfg.momentum)?;
            stats.steps += 1;
        }
        stats.last_epoch_loss = loss_sum / data.len() as f64;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{forward, init_params};

    /// Deterministic points split by x0 + x1 = 0, each class pushed off the boundary.
    fn separable(n: usize) -> Dataset {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let a = ((i * 37) % 101) as f32 / 50.0 - 1.0;
            let b = ((i * 59) % 103) as f32 / 51.0 - 1.0;
            let label = if a + b > 0.0 { 1.0 } else { 0.0 };
            let shift = if label > 0.5 { 0.5 } else { -0.5 };
            x.extend_from_slice(&[a + shift, b + shift]);
            y.push(label);
        }
        Dataset { x, y, dim: 2 }
    }

    #[test]
    fn full_batch_loss_decreases() {
        let arch = Architecture::new(2, &[], 3, 2, &[8]).unwrap();
        let data = separable(64);
        let mut p = init_params(&arch, 11);
        let cfg = FineTuneConfig {
            scope: TrainScope::Full,
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 64,
            local_epochs: 1,
        };
        let loss = |p: &ModelParams| {
            let (probs, _) = forward(p, &arch, &data.x, None).unwrap();
            bce_loss(&probs, &data.y).unwrap()
        };
        let mut state = OptimizerState::new(&arch, cfg.scope);
        let mut prev = loss(&p);
        let mut decreases = 0;
        for _ in 0..50 {
            let (probs, cache) = forward(&p, &arch, &data.x, Some(cfg.scope)).unwrap();
            let g = backward(&cache.unwrap(), &p, &arch, &probs, &data.y, cfg.scope).unwrap();
            sgd_momentum_step(&mut p, &g, &mut state, cfg.learning_rate, cfg.momentum).unwrap();
            let now = loss(&p);
            if now < prev {
                decreases += 1;
            }
            prev = now;
        }
        assert!(decreases >= 45, "only {decreases} of 50 steps decreased");
    }

    #[test]
    fn frozen_tensors_untouched() {
        let arch = Architecture::default_for(8).unwrap();
        let data = Dataset {
            x: (0..8 * 40).map(|v| ((v * 7) % 13) as f32 / 6.0 - 1.0).collect(),
            y: (0..40).map(|i| (i % 2) as f32).collect(),
            dim: 8,
        };
        let before = init_params(&arch, 2);
        let mut p = before.clone();
        let cfg = FineTuneConfig {
            scope: TrainScope::FcTail(1),
            batch_size: 4,
            ..FineTuneConfig::default()
        };
        train(&mut p, &arch, &data, &cfg, 3, 9).unwrap();
        for (i, (a, b)) in before.tensors.iter().zip(&p.tensors).enumerate() {
            if i < 10 {
                assert!(a.bit_eq(b), "{} changed", a.name);
            }
        }
        assert!(!before.tensors[10].bit_eq(&p.tensors[10]));
    }

    #[test]
    fn deterministic_given_seed() {
        let arch = Architecture::default_for(8).unwrap();
        let data = Dataset {
            x: (0..8 * 30).map(|v| ((v * 5) % 11) as f32 / 5.0 - 1.0).collect(),
            y: (0..30).map(|i| ((i / 3) % 2) as f32).collect(),
            dim: 8,
        };
        let cfg = FineTuneConfig {
            scope: TrainScope::Full,
            batch_size: 7,
            ..FineTuneConfig::default()
        };
        let run = || {
            let mut p = init_params(&arch, 4);
            train(&mut p, &arch, &data, &cfg, 2, 17).unwrap();
            p
        };
        assert!(run().bit_eq(&run()));
    }

    #[test]
    fn zero_epochs_is_identity() {
        let arch = Architecture::default_for(8).unwrap();
        let data = Dataset {
            x: vec![0.5; 16],
            y: vec![1.0, 0.0],
            dim: 8,
        };
        let before = init_params(&arch, 1);
        let mut p = before.clone();
        let stats = train(&mut p, &arch, &data, &FineTuneConfig::default(), 0, 0).unwrap();
        assert_eq!(stats.steps, 0);
        assert!(p.bit_eq(&before));
    }

    #[test]
    fn empty_and_mismatched_data() {
        let arch = Architecture::default_for(8).unwrap();
        let mut p = init_params(&arch, 1);
        let empty = Dataset {
            x: vec![],
            y: vec![],
            dim: 8,
        };
        assert!(train(&mut p, &arch, &empty, &FineTuneConfig::default(), 1, 0).is_err());
        let wide = Dataset {
            x: vec![0.0; 9],
            y: vec![1.0],
            dim: 9,
        };
        assert!(train(&mut p, &arch, &wide, &FineTuneConfig::default(), 1, 0).is_err());
    }
}
