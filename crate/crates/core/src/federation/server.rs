use std::time::Duration;

use super::{derive_seed, fedavg, ClientUpdate, FedError, StageContext};
use crate::metrics::{time_block, RoundReport};
use crate::nn::{
    bce_loss, deserialize_subset, forward, init_params, serialize_params, train, Architecture,
    Dataset, FineTuneConfig, ModelParams, NnError, TrainScope,
};
use crate::transport::{Channel, Listener, Message};

const PRETRAIN_TAG: u64 = 0x5052_4554;
const EVAL_CHUNK: usize = 4096;

/// Trains every layer of a freshly initialized model on the proxy data.
///
/// `cfg.scope` is ignored; batch size, learning rate and momentum apply.
pub fn pretrain(
    arch: &Architecture,
    proxy: &Dataset,
    epochs: usize,
    cfg: &FineTuneConfig,
    init_seed: u64,
    shuffle_seed: u64,
) -> Result<ModelParams, FedError> {
    let cfg = FineTuneConfig {
        scope: TrainScope::Full,
        ..*cfg
    };
    let mut params = init_params(arch, init_seed);
    train(&mut params, arch, proxy, &cfg, epochs, derive_seed(shuffle_seed, &[PRETRAIN_TAG]))?;
    Ok(params)
}

/// Share of samples where `prob ≥ threshold` agrees with the label.
pub fn accuracy_from_probs(probs: &[f32], labels: &[f32], threshold: f64) -> f64 {
    let correct = probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (f64::from(p) >= threshold) == (y > 0.5))
        .count();
    correct as f64 / probs.len().max(1) as f64
}

/// (accuracy, mean BCE) of `params` on `data`.
pub fn evaluate(
    params: &ModelParams,
    arch: &Architecture,
    data: &Dataset,
    threshold: f64,
) -> Result<(f64, f64), FedError> {
    if data.is_empty() {
        return Err(NnError::Empty("evaluation set").into());
    }
    let mut correct = 0.0;
    let mut loss = 0.0;
    for (x, y) in data.x.chunks(EVAL_CHUNK * data.dim).zip(data.y.chunks(EVAL_CHUNK)) {
        let (probs, _) = forward(params, arch, x, None)?;
        correct += accuracy_from_probs(&probs, y, threshold) * y.len() as f64;
        loss += bce_loss(&probs, y)? * y.len() as f64;
    }
    let n = data.len() as f64;
    Ok((correct / n, loss / n))
}

/// Round-loop settings for the server.
#[derive(Debug, Clone)]
pub struct ServerOptions {
    pub n_clients: usize,
    pub rounds: usize,
    /// Tensors clients are expected to send back.
    pub scope: TrainScope,
    pub threshold: f64,
    pub accept_timeout: Duration,
    /// Analytic per-client memory, copied into each round report.
    pub mem_bytes: u64,
}

/// Client channels keyed by the id each client announced.
pub type ClientChannels = Vec<(u32, Box<dyn Channel>)>;

/// Accepts `n` clients, reads their `Hello`, and returns the channels
/// ordered by client id.
pub fn accept_clients(
    listener: &mut dyn Listener,
    n: usize,
    timeout: Duration,
) -> Result<ClientChannels, FedError> {
    let mut clients: ClientChannels = Vec::with_capacity(n);
    for i in 0..n {
        let mut ch = listener
            .accept(timeout)
            .stage(format!("waiting for client {} of {n}", i + 1))?;
        let id = match ch.recv()? {
            Message::Hello { client_id } => client_id,
            other => {
                return Err(FedError::Protocol(format!("expected Hello, got {}", other.kind())));
            }
        };
        if id as usize >= n || clients.iter().any(|(c, _)| *c == id) {
            return Err(FedError::Protocol(format!(
                "client id {id} is out of range or already connected"
            )));
        }
        clients.push((id, ch));
    }
    clients.sort_by_key(|(id, _)| *id);
    Ok(clients)
}

fn receive_update(
    ch: &mut dyn Channel,
    client_id: u32,
    round: u32,
    arch: &Architecture,
    expected: &[usize],
) -> Result<ClientUpdate, FedError> {
    match ch.recv()? {
        Message::ClientUpdateMsg {
            round: r,
            num_samples,
            blob,
            local_loss,
            local_time_ms,
        } => {
            if r != round {
                return Err(FedError::Protocol(format!(
                    "client {client_id} answered round {r} during round {round}"
                )));
            }
            let subset = deserialize_subset(&blob, arch)?;
            if !subset.iter().map(|(i, _)| *i).eq(expected.iter().copied()) {
                return Err(FedError::Update(format!(
                    "client {client_id} did not send exactly the trainable tensors"
                )));
            }
            Ok(ClientUpdate {
                client_id,
                round,
                tensors: subset.into_iter().map(|(_, t)| t).collect(),
                num_samples,
                local_loss: f64::from(local_loss),
                local_time_ms,
            })
        }
        other => Err(FedError::Protocol(format!(
            "client {client_id} sent {} instead of an update",
            other.kind()
        ))),
    }
}

#[derive(Debug, Clone)]
pub struct RoundsOutcome {
    pub rounds: Vec<RoundReport>,
    pub final_params: ModelParams,
    /// Each client's loss on its shard under the final model.
    pub client_final_losses: Vec<f64>,
}

/// Runs `opts.rounds` rounds of distribute → fine-tune → aggregate →
/// evaluate, then hands every client the final model, asks for its local
/// loss, and shuts the clients down.
///
/// `GlobalParams` with round 0 delivers a model without asking for training.
pub fn run_rounds(
    clients: &mut [(u32, Box<dyn Channel>)],
    arch: &Architecture,
    mut global: ModelParams,
    eval: &Dataset,
    opts: &ServerOptions,
) -> Result<RoundsOutcome, FedError> {
    let expected = arch.trainable_tensors(opts.scope);
    let mut rounds = Vec::with_capacity(opts.rounds);
    for r in 1..=opts.rounds as u32 {
        let (result, timing) = time_block("round", || -> Result<_, FedError> {
            let blob = serialize_params(&global);
            for (_, ch) in clients.iter_mut() {
                ch.send(&Message::GlobalParams {
                    round: r,
                    blob: blob.clone(),
                })?;
            }
            let updates = clients
                .iter_mut()
                .map(|(id, ch)| receive_update(ch.as_mut(), *id, r, arch, &expected))
                .collect::<Result<Vec<_>, _>>()?;
            let next = fedavg(&global, &updates)?;
            let (accuracy, loss) = evaluate(&next, arch, eval, opts.threshold)?;
            Ok((next, updates, accuracy, loss))
        });
        let (next, updates, accuracy, loss) = result.stage(format!("round {r}"))?;
        global = next;
        rounds.push(RoundReport {
            round: r,
            accuracy,
            loss,
            client_losses: updates.iter().map(|u| u.local_loss).collect(),
            client_times_ms: updates.iter().map(|u| u.local_time_ms).collect(),
            round_time_ms: timing.millis(),
            mem_bytes: opts.mem_bytes,
        });
    }

    let last = opts.rounds as u32;
    let blob = serialize_params(&global);
    for (_, ch) in clients.iter_mut() {
        ch.send(&Message::GlobalParams {
            round: 0,
            blob: blob.clone(),
        })?;
        ch.send(&Message::EvalRequest { round: last })?;
    }
    let mut client_final_losses = Vec::with_capacity(clients.len());
    for (id, ch) in clients.iter_mut() {
        match ch.recv().stage("final evaluation")? {
            Message::ClientUpdateMsg {
                round, local_loss, blob, ..
            } if round == last && blob.is_empty() => client_final_losses.push(f64::from(local_loss)),
            other => {
                return Err(FedError::Protocol(format!(
                    "client {id} answered the evaluation request with {}",
                    other.kind()
                )))
            }
        }
    }
    for (_, ch) in clients.iter_mut() {
        ch.send(&Message::Shutdown)?;
    }
    Ok(RoundsOutcome {
        rounds,
        final_params: global,
        client_final_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two Gaussian-like blobs on either side of x0 + x1 = 0.
    fn blobs(n: usize) -> Dataset {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = (i % 2) as f32;
            let c = if label > 0.5 { 1.5 } else { -1.5 };
            let a = ((i * 7919) % 997) as f32 / 997.0 - 0.5;
            let b = ((i * 104_729) % 991) as f32 / 991.0 - 0.5;
            x.extend_from_slice(&[c + a, c + b, a * b, 0.5 * a - b]);
            y.push(label);
        }
        Dataset { x, y, dim: 4 }
    }

    fn small_arch() -> Architecture {
        Architecture::new(4, &[4, 8], 3, 2, &[8, 4]).unwrap()
    }

    #[test]
    fn accuracy_rule() {
        assert_eq!(accuracy_from_probs(&[0.9; 3], &[1.0; 3], 0.5), 1.0);
        assert_eq!(accuracy_from_probs(&[0.5 - 1e-6; 3], &[1.0; 3], 0.5), 0.0);
        assert_eq!(accuracy_from_probs(&[0.9, 0.1, 0.9, 0.1], &[1.0, 1.0, 0.0, 0.0], 0.5), 0.5);
        assert_eq!(accuracy_from_probs(&[0.5], &[1.0], 0.5), 1.0);
    }

    #[test]
    fn pretrain_zero_epochs_is_init() {
        let a = small_arch();
        let p = pretrain(&a, &blobs(10), 0, &FineTuneConfig::default(), 3, 4).unwrap();
        assert!(p.bit_eq(&init_params(&a, 3)));
    }

    #[test]
    fn pretrain_empty_proxy_errors() {
        let a = small_arch();
        let empty = Dataset {
            x: vec![],
            y: vec![],
            dim: 4,
        };
        assert!(pretrain(&a, &empty, 1, &FineTuneConfig::default(), 3, 4).is_err());
        assert!(evaluate(&init_params(&a, 1), &a, &empty, 0.5).is_err());
    }

    #[test]
    fn pretrain_separates_blobs() {
        let a = small_arch();
        let data = blobs(200);
        let cfg = FineTuneConfig::default();
        let p = pretrain(&a, &data, 50, &cfg, 1, 2).unwrap();
        let (acc, _) = evaluate(&p, &a, &data, 0.5).unwrap();
        assert!(acc >= 0.95, "training accuracy {acc}");
        assert!(p.bit_eq(&pretrain(&a, &data, 50, &cfg, 1, 2).unwrap()));
    }

    #[test]
    fn evaluate_chunks_agree_with_single_pass() {
        let a = small_arch();
        let data = blobs(EVAL_CHUNK + 37);
        let p = init_params(&a, 9);
        let (acc, loss) = evaluate(&p, &a, &data, 0.5).unwrap();
        let (probs, _) = forward(&p, &a, &data.x, None).unwrap();
        assert!((acc - accuracy_from_probs(&probs, &data.y, 0.5)).abs() < 1e-12);
        assert!((loss - bce_loss(&probs, &data.y).unwrap()).abs() < 1e-9);
    }
}
