use super::FedError;
use crate::nn::{ModelParams, Tensor};

/// A client's fine-tuned trainable tensors for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: u32,
    pub round: u32,
    /// Trainable tensors only, in canonical order.
    pub tensors: Vec<Tensor>,
    pub num_samples: u64,
    pub local_loss: f64,
    pub local_time_ms: u64,
}

fn check_updates(global: &ModelParams, updates: &[ClientUpdate]) -> Result<(), FedError> {
    let first = updates
        .first()
        .ok_or_else(|| FedError::Update("no client updates to aggregate".into()))?;
    for u in updates {
        if u.round != first.round {
            return Err(FedError::Update(format!(
                "client {} sent round {}, expected round {}",
                u.client_id, u.round, first.round
            )));
        }
        if u.num_samples == 0 {
            return Err(FedError::Update(format!("client {} trained on zero samples", u.client_id)));
        }
        let names = u.tensors.iter().map(|t| t.name.as_str());
        if !names.eq(first.tensors.iter().map(|t| t.name.as_str())) {
            return Err(FedError::Update(format!(
                "client {} sent a different tensor set than client {}",
                u.client_id, first.client_id
            )));
        }
        for t in &u.tensors {
            let g = global.get(&t.name).ok_or_else(|| {
                FedError::Update(format!("client {}: unknown tensor {}", u.client_id, t.name))
            })?;
            if g.shape != t.shape || g.data.len() != t.data.len() {
                return Err(FedError::Update(format!(
                    "client {}: tensor {} has shape {:?}, expected {:?}",
                    u.client_id, t.name, t.shape, g.shape
                )));
            }
        }
    }
    Ok(())
}

/// nᵢ / N for each update, in input order.
pub fn aggregation_weights(updates: &[ClientUpdate]) -> Result<Vec<f64>, FedError> {
    if updates.is_empty() {
        return Err(FedError::Update("no client updates to aggregate".into()));
    }
    let total: u64 = updates.iter().map(|u| u.num_samples).sum();
    if total == 0 {
        return Err(FedError::Update("updates carry zero samples in total".into()));
    }
    Ok(updates
        .iter()
        .map(|u| u.num_samples as f64 / total as f64)
        .collect())
}

/// Sample-weighted mean of the updated tensors; every tensor the updates
/// do not carry is copied from `global`.
///
/// Each entry is accumulated as Σ nᵢ·xᵢ in f64 and divided by N once, so
/// identical inputs come back bit-exact.
pub fn fedavg(global: &ModelParams, updates: &[ClientUpdate]) -> Result<ModelParams, FedError> {
    check_updates(global, updates)?;
    let total: f64 = updates.iter().map(|u| u.num_samples as f64).sum();
    let mut out = global.clone();
    for (ti, t) in updates[0].tensors.iter().enumerate() {
        // -0.0 is the additive identity for every f64, +0.0 is not
        let mut acc = vec![-0.0f64; t.data.len()];
        for u in updates {
            let n = u.num_samples as f64;
            for (a, &v) in acc.iter_mut().zip(&u.tensors[ti].data) {
                *a += n * f64::from(v);
            }
        }
        let idx = out.index_of(&t.name).expect("checked above");
        for (dst, a) in out.tensors[idx].data.iter_mut().zip(acc) {
            *dst = (a / total) as f32;
        }
    }
    Ok(out)
}
