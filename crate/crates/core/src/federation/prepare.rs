use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{derive_seed, ExperimentConfig, FedError, Pipeline, StageContext};
use crate::data::{
    binarize_labels, encode_features, load_records, make_proxy_split, partition_iid,
    read_container_file, write_container_file, CategoryVocab, FeatureMatrix, LabelVector,
    Preprocessor, RecordSet,
};
use crate::nn::{Dataset, NnError};

const PROXY_SPLIT_TAG: u64 = 0x5052_4f58;
const MANIFEST: &str = "manifest.json";

/// Preprocessed features with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub x: FeatureMatrix,
    pub y: LabelVector,
}

impl LabeledData {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dataset(&self) -> Result<Dataset, NnError> {
        Dataset::new(&self.x, &self.y)
    }
}

/// Row counts and settings of a prepared directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub n_clients: usize,
    pub pca_k: usize,
    pub eval_fraction: f64,
    pub pipeline: Pipeline,
    pub partition_seed: u64,
    pub train_rows: usize,
    pub train_normal: usize,
    pub test_rows: usize,
    pub client_rows: Vec<usize>,
    pub proxy_rows: usize,
    pub eval_rows: usize,
}

/// Everything a run needs, already scaled and projected.
///
/// The proxy and eval sets go through a scaler and PCA fitted on the proxy
/// rows. Client shards either fit their own or reuse the server's, per
/// `dataset.pipeline`. The centralized pair uses one pipeline fitted on the
/// union of the client shards.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub manifest: Manifest,
    pub clients: Vec<LabeledData>,
    pub proxy: LabeledData,
    pub eval: LabeledData,
    pub central_train: LabeledData,
    pub central_eval: LabeledData,
}

fn load(path: Option<&Path>, what: &str) -> Result<RecordSet, FedError> {
    let path = path.ok_or_else(|| FedError::Config(format!("dataset.{what}_path is not set")))?;
    load_records(path).stage(format!("read {what} file"))
}

/// Parses the raw train/test files named in `cfg` and prepares them.
pub fn prepare(cfg: &ExperimentConfig) -> Result<PreparedData, FedError> {
    let train = load(cfg.dataset.train_path.as_deref(), "train")?;
    let test = load(cfg.dataset.test_path.as_deref(), "test")?;
    prepare_from_records(&train, &test, cfg)
}

fn fit_transform(x: &FeatureMatrix, y: &LabelVector, k: usize, what: &str) -> Result<(Preprocessor, LabeledData), FedError> {
    let pre = Preprocessor::fit(x, k).stage(format!("fit {what} preprocessing"))?;
    let x = pre.transform(x).stage(format!("transform {what}"))?;
    Ok((pre, LabeledData { x, y: y.clone() }))
}

pub fn prepare_from_records(
    train: &RecordSet,
    test: &RecordSet,
    cfg: &ExperimentConfig,
) -> Result<PreparedData, FedError> {
    cfg.validate()?;
    let k = cfg.dataset.pca_k;
    let n_clients = cfg.federation.n_clients;
    let seed = cfg.federation.seeds.partition;
    let vocab = CategoryVocab::nsl_kdd();

    let x = encode_features(train, &vocab);
    let y = binarize_labels(train);
    let shards = partition_iid(&x, &y, n_clients, seed).stage("partition train set")?;

    let (proxy_rec, eval_rec) = make_proxy_split(test, cfg.dataset.eval_fraction, derive_seed(seed, &[PROXY_SPLIT_TAG]))
        .stage("split test set")?;
    let proxy_x = encode_features(&proxy_rec, &vocab);
    let eval_x = encode_features(&eval_rec, &vocab);
    let eval_y = binarize_labels(&eval_rec);
    let (server_pre, proxy) = fit_transform(&proxy_x, &binarize_labels(&proxy_rec), k, "proxy")?;
    let eval = LabeledData {
        x: server_pre.transform(&eval_x).stage("transform eval")?,
        y: eval_y.clone(),
    };
    let clients = shards
        .iter()
        .map(|s| {
            let what = format!("client {}", s.client_id);
            match cfg.dataset.pipeline {
                Pipeline::Local => fit_transform(&s.features, &s.labels, k, &what).map(|r| r.1),
                Pipeline::Server => Ok(LabeledData {
                    x: server_pre.transform(&s.features).stage(format!("transform {what}"))?,
                    y: s.labels.clone(),
                }),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;

    let union_x = FeatureMatrix::vstack(&shards.iter().map(|s| &s.features).collect::<Vec<_>>())?;
    let union_y = LabelVector::concat(&shards.iter().map(|s| &s.labels).collect::<Vec<_>>());
    let (central_pre, central_train) = fit_transform(&union_x, &union_y, k, "centralized")?;
    let central_eval = LabeledData {
        x: central_pre.transform(&eval_x).stage("transform centralized eval")?,
        y: eval_y,
    };

    let manifest = Manifest {
        n_clients,
        pca_k: k,
        eval_fraction: cfg.dataset.eval_fraction,
        pipeline: cfg.dataset.pipeline,
        partition_seed: seed,
        train_rows: train.len(),
        train_normal: y.count_normal(),
        test_rows: test.len(),
        client_rows: clients.iter().map(LabeledData::len).collect(),
        proxy_rows: proxy.len(),
        eval_rows: eval.len(),
    };
    Ok(PreparedData {
        manifest,
        clients,
        proxy,
        eval,
        central_train,
        central_eval,
    })
}

fn client_file(i: usize) -> String {
    format!("client_{i}.fftd")
}

const SERVER_FILES: [&str; 4] = ["proxy.fftd", "eval.fftd", "central_train.fftd", "central_eval.fftd"];

impl PreparedData {
    /// Writes one FFTD container per client, the server and centralized
    /// sets, and `manifest.json`. Returns the written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, FedError> {
        std::fs::create_dir_all(dir).map_err(|source| FedError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut written = Vec::new();
        let named = self
            .clients
            .iter()
            .enumerate()
            .map(|(i, c)| (client_file(i), c))
            .chain(SERVER_FILES.iter().map(|s| s.to_string()).zip([
                &self.proxy,
                &self.eval,
                &self.central_train,
                &self.central_eval,
            ]));
        for (name, data) in named {
            let path = dir.join(name);
            write_container_file(&path, &data.x, &data.y)?;
            written.push(path);
        }
        let path = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|source| FedError::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
        Ok(written)
    }

    pub fn load(dir: &Path) -> Result<PreparedData, FedError> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|source| FedError::Io {
            path: path.clone(),
            source,
        })?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| FedError::Config(format!("{}: {e}", path.display())))?;
        let read = |name: &str| -> Result<LabeledData, FedError> {
            let (x, y) = read_container_file(&dir.join(name))?;
            Ok(LabeledData { x, y })
        };
        let clients = (0..manifest.n_clients)
            .map(|i| read(&client_file(i)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PreparedData {
            manifest,
            clients,
            proxy: read(SERVER_FILES[0])?,
            eval: read(SERVER_FILES[1])?,
            central_train: read(SERVER_FILES[2])?,
            central_eval: read(SERVER_FILES[3])?,
        })
    }
}

/// Loads `dataset.prepared_dir` when set (checking it matches the config),
/// otherwise prepares from the raw files.
pub fn obtain_data(cfg: &ExperimentConfig) -> Result<PreparedData, FedError> {
    let Some(dir) = &cfg.dataset.prepared_dir else {
        return prepare(cfg);
    };
    let data = PreparedData::load(dir).stage("load prepared data")?;
    let m = &data.manifest;
    let want = (cfg.federation.n_clients, cfg.dataset.pca_k, cfg.dataset.pipeline);
    if (m.n_clients, m.pca_k, m.pipeline) != want {
        return Err(FedError::Config(format!(
            "{} was prepared for {} clients, k = {}, {} pipeline; config asks for {}, {}, {}",
            dir.display(),
            m.n_clients,
            m.pca_k,
            m.pipeline.as_str(),
            want.0,
            want.1,
            want.2.as_str()
        )));
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{parse_bytes, synthetic};

    fn records(counts: [usize; 5], seed: u64) -> RecordSet {
        parse_bytes(synthetic::generate(counts, seed).as_bytes(), true).unwrap()
    }

    fn cfg(n_clients: usize, k: usize) -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.federation.n_clients = n_clients;
        c.dataset.pca_k = k;
        c
    }

    #[test]
    fn sizes_and_dimensions() {
        let train = records([60, 40, 10, 3, 1], 1);
        let test = records([30, 20, 10, 8, 2], 2);
        let p = prepare_from_records(&train, &test, &cfg(3, 8)).unwrap();
        assert_eq!(p.manifest.client_rows, vec![38, 38, 38]);
        assert_eq!(p.manifest.train_rows, 114);
        assert_eq!(p.manifest.train_normal, 60);
        assert_eq!(p.eval.len(), 7);
        assert_eq!(p.proxy.len(), 63);
        assert_eq!(p.central_train.len(), 114);
        assert_eq!(p.central_eval.len(), 7);
        assert!(p.clients.iter().all(|c| c.x.n_cols() == 8));
        assert_eq!(p.eval.y, p.central_eval.y);
    }

    #[test]
    fn single_client_centralized_matches_client() {
        let train = records([40, 30, 5, 2, 1], 3);
        let test = records([20, 10, 5, 4, 1], 4);
        let p = prepare_from_records(&train, &test, &cfg(1, 8)).unwrap();
        assert_eq!(p.central_train, p.clients[0]);
    }

    #[test]
    fn server_pipeline_shares_the_proxy_transform() {
        let train = records([40, 30, 5, 2, 1], 7);
        let test = records([20, 10, 5, 4, 1], 8);
        let mut c = cfg(2, 8);
        let local = prepare_from_records(&train, &test, &c).unwrap();
        c.dataset.pipeline = Pipeline::Server;
        let shared = prepare_from_records(&train, &test, &c).unwrap();
        assert_eq!(shared.proxy, local.proxy);
        assert_eq!(shared.eval, local.eval);
        assert_eq!(shared.clients[0].y, local.clients[0].y);
        assert_ne!(shared.clients[0].x, local.clients[0].x);
        assert_eq!(shared.manifest.pipeline, Pipeline::Server);
    }

    #[test]
    fn write_load_round_trip_at_f32() {
        let train = records([40, 30, 5, 2, 1], 5);
        let test = records([20, 10, 5, 4, 1], 6);
        let p = prepare_from_records(&train, &test, &cfg(2, 8)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = p.write(dir.path()).unwrap();
        assert_eq!(files.len(), 2 + 4 + 1);
        let back = PreparedData::load(dir.path()).unwrap();
        assert_eq!(back.manifest, p.manifest);
        for (a, b) in back.clients.iter().zip(&p.clients) {
            assert_eq!(a.dataset().unwrap(), b.dataset().unwrap());
        }
        assert_eq!(back.eval.dataset().unwrap(), p.eval.dataset().unwrap());
    }

    #[test]
    fn prepared_dir_must_match_config() {
        let train = records([40, 30, 5, 2, 1], 5);
        let test = records([20, 10, 5, 4, 1], 6);
        let p = prepare_from_records(&train, &test, &cfg(2, 8)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        p.write(dir.path()).unwrap();
        let mut c = cfg(3, 8);
        c.dataset.prepared_dir = Some(dir.path().to_path_buf());
        assert!(matches!(obtain_data(&c), Err(FedError::Config(_))));
        c.federation.n_clients = 2;
        assert_eq!(obtain_data(&c).unwrap().manifest, p.manifest);
    }

    #[test]
    fn missing_paths_are_input_errors() {
        let e = prepare(&ExperimentConfig::default()).unwrap_err();
        assert!(e.is_input_error());
        let mut c = ExperimentConfig::default();
        c.dataset.train_path = Some("/definitely/missing.txt".into());
        c.dataset.test_path = Some("/definitely/missing.txt".into());
        let e = prepare(&c).unwrap_err();
        assert!(e.is_input_error());
        assert!(e.to_string().contains("missing.txt"));
    }
}
