use std::sync::{Arc, Mutex, MutexGuard};

use super::{derive_seed, evaluate, ClientUpdate, FedError};
use crate::metrics::time_block;
use crate::nn::{
    deserialize_params, serialize_tensors, train, train_with_state, Architecture, Dataset,
    FineTuneConfig, ModelParams, OptimizerState,
};
use crate::transport::{Channel, Message};

const CLIENT_TAG: u64 = 0x434c_4e54;

/// Fine-tunes a copy of `global` on `shard` and returns it together with
/// the update to send. With `state` given, velocity carries over from the
/// previous call instead of starting at zero.
#[allow(clippy::too_many_arguments)]
pub fn local_train(
    global: &ModelParams,
    arch: &Architecture,
    shard: &Dataset,
    cfg: &FineTuneConfig,
    client_id: u32,
    round: u32,
    shuffle_seed: u64,
    state: Option<&mut OptimizerState>,
) -> Result<(ModelParams, ClientUpdate), FedError> {
    let mut params = global.clone();
    let seed = derive_seed(shuffle_seed, &[CLIENT_TAG, u64::from(client_id), u64::from(round)]);
    let (stats, timing) = time_block("local fine-tune", || match state {
        Some(s) => train_with_state(&mut params, arch, shard, cfg, cfg.local_epochs, seed, s),
        None => train(&mut params, arch, shard, cfg, cfg.local_epochs, seed),
    });
    let stats = stats?;
    let local_loss = if cfg.local_epochs == 0 {
        evaluate(&params, arch, shard, super::DEFAULT_THRESHOLD)?.1
    } else {
        stats.last_epoch_loss
    };
    let tensors = arch
        .trainable_tensors(cfg.scope)
        .into_iter()
        .map(|i| params.tensors[i].clone())
        .collect();
    let update = ClientUpdate {
        client_id,
        round,
        tensors,
        num_samples: shard.len() as u64,
        local_loss,
        local_time_ms: timing.millis(),
    };
    Ok((params, update))
}

/// [`local_train`] with fresh optimizer state, returning only the update.
pub fn local_finetune(
    global: &ModelParams,
    arch: &Architecture,
    shard: &Dataset,
    cfg: &FineTuneConfig,
    client_id: u32,
    round: u32,
    shuffle_seed: u64,
) -> Result<ClientUpdate, FedError> {
    local_train(global, arch, shard, cfg, client_id, round, shuffle_seed, None).map(|(_, u)| u)
}

#[derive(Debug, Clone)]
pub struct ClientOptions {
    pub client_id: u32,
    pub fine_tune: FineTuneConfig,
    pub shuffle_seed: u64,
    pub persist_optimizer: bool,
    pub threshold: f64,
    /// Held while training or evaluating, so clients sharing fewer cores
    /// than there are clients take turns and report undisturbed times.
    pub compute_gate: Option<Arc<Mutex<()>>>,
}

fn hold(gate: &Option<Arc<Mutex<()>>>) -> Option<MutexGuard<'_, ()>> {
    gate.as_ref().map(|g| g.lock().unwrap_or_else(|e| e.into_inner()))
}

#[derive(Debug, Clone, Default)]
pub struct ClientOutcome {
    pub rounds_trained: u32,
    /// The last model the server delivered.
    pub final_params: Option<ModelParams>,
    /// (accuracy, loss) on the local shard from the last evaluation request.
    pub final_eval: Option<(f64, f64)>,
}

/// Client side of the protocol: says hello, then answers server messages
/// until `Shutdown`.
pub fn run_client(
    channel: &mut dyn Channel,
    arch: &Architecture,
    shard: &Dataset,
    opts: &ClientOptions,
) -> Result<ClientOutcome, FedError> {
    opts.fine_tune.validate(arch)?;
    channel.send(&Message::Hello {
        client_id: opts.client_id,
    })?;
    let mut state = opts
        .persist_optimizer
        .then(|| OptimizerState::new(arch, opts.fine_tune.scope));
    let mut outcome = ClientOutcome::default();
    loop {
        match channel.recv()? {
            Message::GlobalParams { round, blob } => {
                let global = deserialize_params(&blob, arch)?;
                if round > 0 {
                    let gate = hold(&opts.compute_gate);
                    let (_, update) = local_train(
                        &global,
                        arch,
                        shard,
                        &opts.fine_tune,
                        opts.client_id,
                        round,
                        opts.shuffle_seed,
                        state.as_mut(),
                    )?;
                    drop(gate);
                    channel.send(&Message::ClientUpdateMsg {
                        round,
                        num_samples: update.num_samples,
                        blob: serialize_tensors(&update.tensors),
                        local_loss: update.local_loss as f32,
                        local_time_ms: update.local_time_ms,
                    })?;
                    outcome.rounds_trained += 1;
                }
                outcome.final_params = Some(global);
            }
            Message::EvalRequest { round } => {
                let params = outcome.final_params.as_ref().ok_or_else(|| {
                    FedError::Protocol("evaluation requested before any model arrived".into())
                })?;
                let gate = hold(&opts.compute_gate);
                let (result, timing) =
                    time_block("local eval", || evaluate(params, arch, shard, opts.threshold));
                drop(gate);
                let (acc, loss) = result?;
                outcome.final_eval = Some((acc, loss));
                channel.send(&Message::ClientUpdateMsg {
                    round,
                    num_samples: shard.len() as u64,
                    blob: Vec::new(),
                    local_loss: loss as f32,
                    local_time_ms: timing.millis(),
                })?;
            }
            Message::Shutdown => return Ok(outcome),
            other => {
                return Err(FedError::Protocol(format!(
                    "client received unexpected {}",
                    other.kind()
                )))
            }
        }
    }
}
