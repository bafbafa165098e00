//! Server pre-training, client fine-tuning, FedAvg aggregation and the
//! round loop that ties them together over a [`transport`](crate::transport)
//! carrier.

mod aggregate;
mod client;
mod config;
mod experiment;
mod prepare;
mod server;

pub use aggregate::{aggregation_weights, fedavg, ClientUpdate};
pub use client::{local_finetune, local_train, run_client, ClientOptions, ClientOutcome};
pub use config::{
    Carrier, DatasetConfig, ExperimentConfig, FederationConfig, Mode, ModelConfig, Pipeline, Seeds,
    TrainingConfig, TransportConfig,
};
pub use experiment::{
    client_options, run_centralized, run_experiment, run_federated_server, run_prepared, run_simulation,
    ExperimentOutcome,
};
pub use prepare::{obtain_data, prepare, prepare_from_records, LabeledData, Manifest, PreparedData};
pub use server::{
    accept_clients, accuracy_from_probs, evaluate, pretrain, run_rounds, RoundsOutcome,
    ServerOptions,
};

pub use crate::metrics::RoundReport;

use std::path::PathBuf;

use thiserror::Error;

use crate::data::DataError;
use crate::metrics::MetricsError;
use crate::nn::NnError;
use crate::transport::TransportError;

/// Decision threshold on the predicted intrusion probability.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum FedError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Config(String),
    #[error("invalid client update: {0}")]
    Update(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<FedError>,
    },
}

impl FedError {
    /// True for problems with user-supplied input (config, files, data)
    /// rather than failures while running.
    pub fn is_input_error(&self) -> bool {
        match self {
            FedError::Data(_) | FedError::Io { .. } | FedError::Config(_) => true,
            FedError::Stage { source, .. } => source.is_input_error(),
            _ => false,
        }
    }

    /// The innermost error, past any stage labels.
    pub fn root(&self) -> &FedError {
        match self {
            FedError::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait StageContext<T> {
    fn stage(self, stage: impl Into<String>) -> Result<T, FedError>;
}

impl<T, E: Into<FedError>> StageContext<T> for Result<T, E> {
    fn stage(self, stage: impl Into<String>) -> Result<T, FedError> {
        self.map_err(|e| FedError::Stage {
            stage: stage.into(),
            source: Box::new(e.into()),
        })
    }
}

/// Mixes `parts` into `base` so that every (base, parts) tuple gets an
/// unrelated generator seed.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}
