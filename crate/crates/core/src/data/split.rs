use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, FeatureMatrix, LabelVector, RecordSet};

/// One client's local shard.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub client_id: u32,
    pub features: FeatureMatrix,
    pub labels: LabelVector,
    /// Row indices into the matrix the shard was cut from.
    pub source_rows: Vec<usize>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Shuffles rows with a seeded generator and cuts `n_clients` shards of
/// exactly ⌊n / n_clients⌋ rows. Remainder rows are dropped.
pub fn partition_iid(
    x: &FeatureMatrix,
    y: &LabelVector,
    n_clients: usize,
    seed: u64,
) -> Result<Vec<Partition>, DataError> {
    if x.n_rows() != y.len() {
        return Err(DataError::InvalidArgument(format!(
            "{} feature rows but {} labels",
            x.n_rows(),
            y.len()
        )));
    }
    if n_clients == 0 || n_clients > x.n_rows() {
        return Err(DataError::InvalidArgument(format!(
            "cannot split {} rows across {n_clients} clients",
            x.n_rows()
        )));
    }
    let order = shuffled_indices(x.n_rows(), seed);
    let size = x.n_rows() / n_clients;
    Ok(order
        .chunks_exact(size)
        .take(n_clients)
        .enumerate()
        .map(|(client, rows)| Partition {
            client_id: client as u32,
            features: x.select_rows(rows),
            labels: y.select(rows),
            source_rows: rows.to_vec(),
        })
        .collect())
}

/// Splits test records into (proxy, eval). After a seeded shuffle the last
/// ⌈eval_fraction · n⌉ rows become the evaluation holdout.
pub fn make_proxy_split(
    test_records: &RecordSet,
    eval_fraction: f64,
    seed: u64,
) -> Result<(RecordSet, RecordSet), DataError> {
    if !(eval_fraction > 0.0 && eval_fraction < 1.0) {
        return Err(DataError::InvalidArgument(format!(
            "eval_fraction {eval_fraction} must lie strictly between 0 and 1"
        )));
    }
    let n = test_records.len();
    let order = shuffled_indices(n, seed);
    let n_eval = ((eval_fraction * n as f64).ceil() as usize).min(n);
    let (proxy, eval) = order.split_at(n - n_eval);
    Ok((test_records.select(proxy), test_records.select(eval)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::records::Record;
    use std::collections::HashSet;

    fn matrix(n: usize) -> (FeatureMatrix, LabelVector) {
        let x = FeatureMatrix::from_vec(n, 2, (0..2 * n).map(|v| v as f64).collect()).unwrap();
        let y = LabelVector::new((0..n).map(|i| (i % 2) as u8).collect());
        (x, y)
    }

    fn records(n: usize) -> RecordSet {
        RecordSet {
            rows: (0..n)
                .map(|i| Record {
                    numeric: [i as f64; 38],
                    protocol: "tcp".into(),
                    service: "http".into(),
                    flag: "SF".into(),
                    label: "normal".into(),
                })
                .collect(),
            source_name: "t".into(),
        }
    }

    #[test]
    fn ten_rows_three_clients() {
        let (x, y) = matrix(10);
        let parts = partition_iid(&x, &y, 3, 1).unwrap();
        assert_eq!(parts.len(), 3);
        assert!(parts.iter().all(|p| p.len() == 3));
        let all: HashSet<usize> = parts.iter().flat_map(|p| p.source_rows.clone()).collect();
        assert_eq!(all.len(), 9);
        assert!(all.iter().all(|&i| i < 10));
    }

    #[test]
    fn rows_follow_source_indices() {
        let (x, y) = matrix(10);
        for p in partition_iid(&x, &y, 2, 5).unwrap() {
            for (r, &src) in p.source_rows.iter().enumerate() {
                assert_eq!(p.features.row(r), x.row(src));
                assert_eq!(p.labels.as_slice()[r], y.as_slice()[src]);
            }
        }
    }

    #[test]
    fn same_seed_same_partitions() {
        let (x, y) = matrix(50);
        assert_eq!(
            partition_iid(&x, &y, 4, 9).unwrap(),
            partition_iid(&x, &y, 4, 9).unwrap()
        );
        assert_ne!(
            partition_iid(&x, &y, 4, 9).unwrap(),
            partition_iid(&x, &y, 4, 10).unwrap()
        );
    }

    #[test]
    fn too_many_clients() {
        let (x, y) = matrix(3);
        assert!(partition_iid(&x, &y, 4, 0).is_err());
        assert!(partition_iid(&x, &y, 0, 0).is_err());
        assert!(partition_iid(&x, &y, 3, 0).is_ok());
    }

    #[test]
    fn proxy_split_sizes() {
        let (p, e) = make_proxy_split(&records(100), 0.1, 3).unwrap();
        assert_eq!((p.len(), e.len()), (90, 10));
        let (p, e) = make_proxy_split(&records(3), 0.5, 3).unwrap();
        assert_eq!((p.len(), e.len()), (1, 2));
    }

    #[test]
    fn proxy_split_disjoint_and_deterministic() {
        let set = records(40);
        let (p, e) = make_proxy_split(&set, 0.25, 11).unwrap();
        let proxy: HashSet<u64> = p.rows.iter().map(|r| r.numeric[0] as u64).collect();
        assert!(e.rows.iter().all(|r| !proxy.contains(&(r.numeric[0] as u64))));
        assert_eq!(make_proxy_split(&set, 0.25, 11).unwrap(), (p, e));
    }

    #[test]
    fn proxy_split_fraction_bounds() {
        let set = records(5);
        for f in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(make_proxy_split(&set, f, 0).is_err(), "{f}");
        }
    }
}
