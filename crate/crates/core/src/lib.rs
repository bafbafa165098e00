//! Federated fine-tuning for network intrusion detection.
//!
//! A server pre-trains a compact Conv1D + MLP binary classifier on proxy
//! data, clients fine-tune only the trailing fully connected layers on their
//! local NSL-KDD shards, and the server merges client updates with
//! sample-weighted federated averaging.

pub mod data;
pub mod federation;
pub mod metrics;
pub mod nn;
pub mod transport;
