use super::{Architecture, Gradients, ModelParams, NnError, TrainScope};

/// Heavy-ball velocity buffers, one per trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    velocity: Vec<Option<Vec<f32>>>,
}

impl OptimizerState {
    pub fn new(arch: &Architecture, scope: TrainScope) -> Self {
        let specs = arch.tensor_specs();
        let first = scope.first_trainable_layer(arch);
        OptimizerState {
            velocity: specs
                .iter()
                .map(|s| (s.layer >= first).then(|| vec![0.0; s.numel()]))
                .collect(),
        }
    }

    pub fn velocity(&self, tensor: usize) -> Option<&[f32]> {
        self.velocity.get(tensor)?.as_deref()
    }

    pub fn has_velocity(&self, tensor: usize) -> bool {
        self.velocity(tensor).is_some()
    }

    /// True when the buffers are exactly those `new(arch, scope)` would create.
    pub fn matches(&self, arch: &Architecture, scope: TrainScope) -> bool {
        let specs = arch.tensor_specs();
        let first = scope.first_trainable_layer(arch);
        specs.len() == self.velocity.len()
            && specs.iter().zip(&self.velocity).all(|(s, v)| match v {
                Some(v) => s.layer >= first && v.len() == s.numel(),
                None => s.layer < first,
            })
    }
}

/// v ← μ·v + g, w ← w − lr·v for every tensor in `grads`.
pub fn sgd_momentum_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut OptimizerState,
    lr: f64,
    momentum: f64,
) -> Result<(), NnError> {
    for (idx, g) in &grads.entries {
        let numel = params.tensors.get(*idx).map(|t| t.data.len());
        let v = state.velocity.get(*idx).and_then(Option::as_ref);
        if numel != Some(g.len()) || v.map(Vec::len) != Some(g.len()) {
            let name = params
                .tensors
                .get(*idx)
                .map_or("<out of range>", |t| t.name.as_str());
            return Err(NnError::Shape(format!(
                "gradient for {name} does not match its tensor or optimizer state"
            )));
        }
    }
    let (lr, mu) = (lr as f32, momentum as f32);
    for (idx, g) in &grads.entries {
        let v = state.velocity[*idx].as_mut().expect("checked above");
        let w = &mut params.tensors[*idx].data;
        for ((wi, vi), gi) in w.iter_mut().zip(v.iter_mut()).zip(g) {
            *vi = mu * *vi + gi;
            *wi -= lr * *vi;
        }
    }
    Ok(())
}
