use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use super::{
    accept_clients, evaluate, obtain_data, pretrain, run_client, run_rounds, Carrier,
    ClientOptions, ClientOutcome, ExperimentConfig, FedError, Mode, PreparedData, ServerOptions,
    StageContext,
};
use crate::metrics::{estimate_memory, time_block, ExperimentReport, RoundReport, REPORT_SCHEMA_VERSION};
use crate::nn::{init_params, Dataset, ModelParams, TrainScope};
use crate::transport::{connect_tcp_retry, Channel, Listener, LoopbackNetwork, TcpServer, TransportError};

const LOOPBACK_ENDPOINT: &str = "fedft-server";

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub final_params: ModelParams,
    /// The server model before the first round, when the mode pre-trains.
    pub pretrained: Option<ModelParams>,
    /// In-process clients of a simulation, ordered by id.
    pub clients: Vec<ClientOutcome>,
}

/// Prepares (or loads) the data named in `cfg` and runs the experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, FedError> {
    let data = obtain_data(cfg).stage("prepare data")?;
    run_prepared(cfg, &data)
}

/// Centralized mode trains in-process; the federated modes are simulated
/// with every client on its own thread.
pub fn run_prepared(cfg: &ExperimentConfig, data: &PreparedData) -> Result<ExperimentOutcome, FedError> {
    match cfg.federation.mode {
        Mode::Centralized => run_centralized(cfg, data),
        Mode::FedFt | Mode::FedAvgFull => run_simulation(cfg, data),
    }
}

fn config_value(cfg: &ExperimentConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn check_shards(cfg: &ExperimentConfig, data: &PreparedData) -> Result<(), FedError> {
    if data.clients.len() != cfg.federation.n_clients {
        return Err(FedError::Config(format!(
            "prepared data has {} client shards, config asks for {}",
            data.clients.len(),
            cfg.federation.n_clients
        )));
    }
    Ok(())
}

/// All client shards pooled, every layer trained for
/// `training.pretrain_epochs`, evaluated once.
pub fn run_centralized(cfg: &ExperimentConfig, data: &PreparedData) -> Result<ExperimentOutcome, FedError> {
    cfg.validate()?;
    let started = Instant::now();
    let arch = cfg.architecture()?;
    let train = data.central_train.dataset()?;
    let eval = data.central_eval.dataset()?;
    let seeds = cfg.federation.seeds;
    let (params, timing) = time_block("centralized training", || {
        pretrain(&arch, &train, cfg.training.pretrain_epochs, &cfg.pretrain_config(), seeds.init, seeds.shuffle)
    });
    let params = params.stage("centralized training")?;
    let (accuracy, loss) = evaluate(&params, &arch, &eval, cfg.training.threshold)?;
    let (_, train_loss) = evaluate(&params, &arch, &train, cfg.training.threshold)?;
    let memory = estimate_memory(&arch, TrainScope::Full, cfg.training.batch_size);
    let round = RoundReport {
        round: 1,
        accuracy,
        loss,
        client_losses: vec![train_loss],
        client_times_ms: vec![timing.millis()],
        round_time_ms: timing.millis(),
        mem_bytes: memory.total_bytes,
    };
    let report = ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        label: cfg.label(),
        mode: cfg.federation.mode.as_str().into(),
        config: config_value(cfg),
        rounds: vec![round],
        final_accuracy: accuracy,
        final_loss: loss,
        memory,
        mean_client_time_ms: timing.millis_f64(),
        pretrain_time_ms: 0,
        total_time_ms: started.elapsed().as_millis() as u64,
        client_final_losses: Vec::new(),
    };
    Ok(ExperimentOutcome {
        report,
        final_params: params,
        pretrained: None,
        clients: Vec::new(),
    })
}

/// Options a client derives from the shared config.
pub fn client_options(cfg: &ExperimentConfig, client_id: u32) -> ClientOptions {
    ClientOptions {
        client_id,
        fine_tune: cfg.fine_tune(),
        shuffle_seed: cfg.federation.seeds.shuffle,
        persist_optimizer: cfg.training.persist_optimizer,
        threshold: cfg.training.threshold,
        compute_gate: None,
    }
}

/// Server side of a federated run: waits for the clients, builds the
/// starting model (pre-trained on the proxy set for FedFT, freshly
/// initialized for FedAvg-Full), then runs the rounds.
pub fn run_federated_server(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    listener: &mut dyn Listener,
) -> Result<ExperimentOutcome, FedError> {
    cfg.validate()?;
    if cfg.federation.mode == Mode::Centralized {
        return Err(FedError::Config("centralized mode has no server".into()));
    }
    let started = Instant::now();
    let arch = cfg.architecture()?;
    let scope = cfg.client_scope();
    let memory = estimate_memory(&arch, scope, cfg.training.batch_size);
    let eval = data.eval.dataset()?;
    let n = cfg.federation.n_clients;
    let timeout = Duration::from_secs_f64(cfg.transport.accept_timeout_secs);
    let mut clients = accept_clients(listener, n, timeout)?;

    let seeds = cfg.federation.seeds;
    let (initial, pretrain_timing) = time_block("pre-training", || -> Result<_, FedError> {
        match cfg.federation.mode {
            Mode::FedFt => {
                let proxy = data.proxy.dataset()?;
                pretrain(&arch, &proxy, cfg.training.pretrain_epochs, &cfg.pretrain_config(), seeds.init, seeds.shuffle)
            }
            _ => Ok(init_params(&arch, seeds.init)),
        }
    });
    let initial = initial.stage("pre-training")?;

    let opts = ServerOptions {
        n_clients: n,
        rounds: cfg.training.rounds,
        scope,
        threshold: cfg.training.threshold,
        accept_timeout: timeout,
        mem_bytes: memory.total_bytes,
    };
    let outcome = run_rounds(&mut clients, &arch, initial.clone(), &eval, &opts)?;
    let times: Vec<u64> = outcome
        .rounds
        .iter()
        .flat_map(|r| r.client_times_ms.iter().copied())
        .collect();
    let last = outcome.rounds.last().expect("at least one round");
    let report = ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        label: cfg.label(),
        mode: cfg.federation.mode.as_str().into(),
        config: config_value(cfg),
        final_accuracy: last.accuracy,
        final_loss: last.loss,
        memory,
        mean_client_time_ms: times.iter().sum::<u64>() as f64 / times.len().max(1) as f64,
        pretrain_time_ms: pretrain_timing.millis(),
        total_time_ms: started.elapsed().as_millis() as u64,
        client_final_losses: outcome.client_final_losses,
        rounds: outcome.rounds,
    };
    Ok(ExperimentOutcome {
        report,
        final_params: outcome.final_params,
        pretrained: (cfg.federation.mode == Mode::FedFt).then_some(initial),
        clients: Vec::new(),
    })
}

/// Runs the server on the calling thread and one client per shard on
/// scoped threads, connected over the carrier in `transport.mode`. For
/// TCP the server binds `transport.listen` (port 0 picks a free port).
pub fn run_simulation(cfg: &ExperimentConfig, data: &PreparedData) -> Result<ExperimentOutcome, FedError> {
    cfg.validate()?;
    check_shards(cfg, data)?;
    match cfg.transport.mode {
        Carrier::Loopback => {
            let net = LoopbackNetwork::new();
            let listener = net.listen(LOOPBACK_ENDPOINT)?;
            simulate_with(cfg, data, listener, || {
                net.connect(LOOPBACK_ENDPOINT).map(|c| Box::new(c) as Box<dyn Channel>)
            })
        }
        Carrier::Tcp => {
            let listener = TcpServer::bind(&cfg.transport.listen)?;
            let addr = listener.local_addr()?.to_string();
            let timeout = Duration::from_secs_f64(cfg.transport.accept_timeout_secs);
            simulate_with(cfg, data, listener, move || {
                connect_tcp_retry(&addr, timeout).map(|c| Box::new(c) as Box<dyn Channel>)
            })
        }
    }
}

fn simulate_with<L, C>(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    mut listener: L,
    connect: C,
) -> Result<ExperimentOutcome, FedError>
where
    L: Listener,
    C: Fn() -> Result<Box<dyn Channel>, TransportError> + Sync,
{
    let arch = cfg.architecture()?;
    let shards = data
        .clients
        .iter()
        .map(|c| c.dataset())
        .collect::<Result<Vec<Dataset>, _>>()?;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let gate = (cores < shards.len()).then(|| Arc::new(Mutex::new(())));
    std::thread::scope(|s| {
        let handles: Vec<_> = shards
            .iter()
            .enumerate()
            .map(|(i, shard)| {
                let (arch, connect) = (&arch, &connect);
                let opts = ClientOptions {
                    compute_gate: gate.clone(),
                    ..client_options(cfg, i as u32)
                };
                s.spawn(move || -> Result<ClientOutcome, FedError> {
                    let mut ch = connect()?;
                    run_client(ch.as_mut(), arch, shard, &opts).stage(format!("client {i}"))
                })
            })
            .collect();
        let server = run_federated_server(cfg, data, &mut listener);
        // Unblocks clients still waiting to connect if the server gave up.
        drop(listener);
        let clients = handles
            .into_iter()
            .map(|h| h.join().expect("client thread panicked"))
            .collect::<Vec<_>>();
        let mut outcome = server?;
        outcome.clients = clients.into_iter().collect::<Result<_, _>>()?;
        Ok(outcome)
    })
}
