use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::FedError;
use crate::nn::{Architecture, FineTuneConfig, TrainScope};

/// How the model is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// One model trained on the union of all client shards.
    #[serde(rename = "centralized")]
    Centralized,
    /// Server pre-training, clients fine-tune the last `fine_tune_k` FC layers.
    #[serde(rename = "fedft")]
    FedFt,
    /// No pre-training; clients train every layer.
    #[serde(rename = "fedavg_full")]
    FedAvgFull,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Centralized => "centralized",
            Mode::FedFt => "fedft",
            Mode::FedAvgFull => "fedavg_full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub init: u64,
    pub partition: u64,
    pub shuffle: u64,
}

impl Seeds {
    /// Seeds derived from one base value, as used by the `FEDFT_SEED` override.
    pub fn from_base(base: u64) -> Self {
        Seeds {
            init: base,
            partition: base.wrapping_add(1),
            shuffle: base.wrapping_add(2),
        }
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::from_base(0)
    }
}

/// Where client shards get their scaler and PCA from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pipeline {
    /// Every client fits its own on its shard.
    #[serde(rename = "local")]
    Local,
    /// Clients apply the one the server fitted on the proxy data.
    #[serde(rename = "server")]
    Server,
}

impl Pipeline {
    pub fn as_str(&self) -> &'static str {
        match self {
            Pipeline::Local => "local",
            Pipeline::Server => "server",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub train_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    /// Output of a previous `prepare`; takes precedence over the raw paths.
    pub prepared_dir: Option<PathBuf>,
    pub pca_k: usize,
    pub eval_fraction: f64,
    pub pipeline: Pipeline,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            train_path: None,
            test_path: None,
            prepared_dir: None,
            pca_k: 20,
            eval_fraction: 0.1,
            pipeline: Pipeline::Local,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub conv_channels: Vec<usize>,
    pub kernel_size: usize,
    pub pool_size: usize,
    /// Hidden FC widths; a final 1-unit layer is always appended.
    pub fc_hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            conv_channels: vec![16, 32, 64],
            kernel_size: 3,
            pool_size: 2,
            fc_hidden: vec![64, 32],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub local_epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Server pre-training epochs; also the epoch count of centralized runs.
    pub pretrain_epochs: usize,
    pub rounds: usize,
    pub fine_tune_k: usize,
    /// Keep client velocity buffers across rounds instead of resetting them.
    pub persist_optimizer: bool,
    pub threshold: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            batch_size: 32,
            local_epochs: 5,
            lr: 0.01,
            momentum: 0.9,
            pretrain_epochs: 10,
            rounds: 10,
            fine_tune_k: 3,
            persist_optimizer: false,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationConfig {
    pub n_clients: usize,
    pub mode: Mode,
    pub seeds: Seeds,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            n_clients: 3,
            mode: Mode::FedFt,
            seeds: Seeds::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Carrier {
    #[serde(rename = "loopback")]
    Loopback,
    #[serde(rename = "tcp")]
    Tcp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportConfig {
    pub mode: Carrier,
    pub listen: String,
    pub server: String,
    /// How long the server waits for each client to connect.
    pub accept_timeout_secs: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            mode: Carrier::Loopback,
            listen: "127.0.0.1:7878".into(),
            server: "127.0.0.1:7878".into(),
            accept_timeout_secs: 60.0,
        }
    }
}

/// The whole run configuration, as read from a JSON file. Every field has
/// a default, so `{}` is a valid configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub federation: FederationConfig,
    pub transport: TransportConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, FedError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| FedError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, FedError> {
        let text = std::fs::read_to_string(path).map_err(|e| FedError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = Self::from_json(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Makes relative dataset paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.dataset.train_path,
            &mut self.dataset.test_path,
            &mut self.dataset.prepared_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn architecture(&self) -> Result<Architecture, FedError> {
        Ok(Architecture::new(
            self.dataset.pca_k,
            &self.model.conv_channels,
            self.model.kernel_size,
            self.model.pool_size,
            &self.model.fc_hidden,
        )?)
    }

    /// Layers clients train. Centralized runs train everything.
    pub fn client_scope(&self) -> TrainScope {
        match self.federation.mode {
            Mode::FedFt => TrainScope::FcTail(self.training.fine_tune_k),
            Mode::FedAvgFull | Mode::Centralized => TrainScope::Full,
        }
    }

    pub fn fine_tune(&self) -> FineTuneConfig {
        FineTuneConfig {
            scope: self.client_scope(),
            learning_rate: self.training.lr,
            momentum: self.training.momentum,
            batch_size: self.training.batch_size,
            local_epochs: self.training.local_epochs,
        }
    }

    /// Same optimizer settings with every layer trainable.
    pub fn pretrain_config(&self) -> FineTuneConfig {
        FineTuneConfig {
            scope: TrainScope::Full,
            ..self.fine_tune()
        }
    }

    pub fn label(&self) -> String {
        match self.federation.mode {
            Mode::Centralized => "Centralized".into(),
            Mode::FedFt => format!("FedFT-{}", self.training.fine_tune_k),
            Mode::FedAvgFull => "FedAvg-Full".into(),
        }
    }

    pub fn validate(&self) -> Result<(), FedError> {
        let bad = |m: String| Err(FedError::Config(m));
        if self.federation.n_clients == 0 {
            return bad("federation.n_clients must be at least 1".into());
        }
        if self.training.rounds == 0 {
            return bad("training.rounds must be at least 1".into());
        }
        if !(self.dataset.eval_fraction > 0.0 && self.dataset.eval_fraction < 1.0) {
            return bad(format!(
                "dataset.eval_fraction {} must lie strictly between 0 and 1",
                self.dataset.eval_fraction
            ));
        }
        if self.dataset.pca_k == 0 {
            return bad("dataset.pca_k must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.training.threshold) {
            return bad("training.threshold must lie in [0, 1]".into());
        }
        if !(self.transport.accept_timeout_secs.is_finite() && self.transport.accept_timeout_secs > 0.0) {
            return bad("transport.accept_timeout_secs must be positive".into());
        }
        let arch = self.architecture()?;
        self.fine_tune().validate(&arch)?;
        Ok(())
    }
}
