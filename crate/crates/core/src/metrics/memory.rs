use serde::{Deserialize, Serialize};

use crate::nn::{Architecture, TrainScope};

const F32_BYTES: u64 = 4;

/// Closed-form training memory for one client, in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEstimate {
    pub weights_bytes: u64,
    pub grads_bytes: u64,
    pub optimizer_bytes: u64,
    pub activations_bytes: u64,
    pub total_bytes: u64,
}

impl MemoryEstimate {
    /// Gradient plus optimizer-state bytes.
    pub fn trainable_state_bytes(&self) -> u64 {
        self.grads_bytes + self.optimizer_bytes
    }
}

/// Output elements of one layer for a single sample. A conv block counts
/// both its conv/ReLU output and its pooled output.
fn layer_output_elements(arch: &Architecture, layer: usize) -> usize {
    let n_conv = arch.conv.len();
    if layer < n_conv {
        let lens = arch.conv_lengths();
        let c = arch.conv[layer].out_channels;
        c * lens[layer] + c * lens[layer + 1]
    } else {
        arch.fc[layer - n_conv].out_features
    }
}

/// Elements entering layer `layer` (or leaving the network when
/// `layer == n_layers`), per sample.
fn boundary_elements(arch: &Architecture, layer: usize) -> usize {
    let n_conv = arch.conv.len();
    if layer == 0 {
        return arch.input_dim;
    }
    let prev = layer - 1;
    if prev < n_conv {
        let lens = arch.conv_lengths();
        arch.conv[prev].out_channels * lens[prev + 1]
    } else {
        arch.fc[prev - n_conv].out_features
    }
}

/// Per-sample activation elements held for backward under `scope`: the
/// frozen-boundary output plus every output from the first trainable layer on.
pub fn activation_elements(arch: &Architecture, scope: TrainScope) -> usize {
    let first = scope.first_trainable_layer(arch);
    boundary_elements(arch, first)
        + (first..arch.n_layers())
            .map(|l| layer_output_elements(arch, l))
            .sum::<usize>()
}

/// f32 accounting: all weights, one gradient and one velocity buffer per
/// trainable parameter, and `batch_size` copies of the cached activations.
pub fn estimate_memory(arch: &Architecture, scope: TrainScope, batch_size: usize) -> MemoryEstimate {
    let trainable = arch.trainable_param_count(scope) as u64;
    let weights_bytes = F32_BYTES * arch.param_count() as u64;
    let grads_bytes = F32_BYTES * trainable;
    let optimizer_bytes = F32_BYTES * trainable;
    let activations_bytes = F32_BYTES * batch_size as u64 * activation_elements(arch, scope) as u64;
    MemoryEstimate {
        weights_bytes,
        grads_bytes,
        optimizer_bytes,
        activations_bytes,
        total_bytes: weights_bytes + grads_bytes + optimizer_bytes + activations_bytes,
    }
}
