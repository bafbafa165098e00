use std::collections::HashSet;

use fedft_core::data::{
    apply_pca, apply_scaler, fit_pca, fit_scaler, parse_bytes, partition_iid, synthetic,
    FeatureMatrix, LabelVector,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(n: usize, d: usize, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // column scales spread over orders of magnitude, some columns correlated
    let scales: Vec<f64> = (0..d).map(|j| 10f64.powi(j as i32 % 4 - 1)).collect();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let base: f64 = rng.random_range(-1.0..1.0);
        for (j, s) in scales.iter().enumerate() {
            let v: f64 = rng.random_range(-1.0..1.0);
            data.push(s * if j % 3 == 0 { base + 0.1 * v } else { v });
        }
    }
    FeatureMatrix::from_vec(n, d, data).unwrap()
}

fn column_stats(x: &FeatureMatrix, j: usize) -> (f64, f64) {
    let c = x.column(j);
    let n = c.len() as f64;
    let mean = c.iter().sum::<f64>() / n;
    let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major).
/// Returns eigenvalues and eigenvectors as columns of a row-major matrix.
fn jacobi_eigen(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), v)
}

#[test]
fn pca_matches_jacobi_oracle() {
    let (n, d, k) = (50, 10, 4);
    let x = random_matrix(n, d, 42);
    let p = fit_pca(&x, k).unwrap();

    let mean: Vec<f64> = (0..d).map(|j| x.column(j).iter().sum::<f64>() / n as f64).collect();
    let mut cov = vec![0.0; d * d];
    for row in x.rows() {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += (row[i] - mean[i]) * (row[j] - mean[j]) / (n - 1) as f64;
            }
        }
    }
    let (vals, vecs) = jacobi_eigen(cov, d);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());

    for (j, &src) in order.iter().take(k).enumerate() {
        assert!((p.explained_variance[j] - vals[src]).abs() < 1e-8 * vals[src].max(1.0));
        let mut oracle: Vec<f64> = (0..d).map(|i| vecs[i * d + src]).collect();
        let pivot = oracle.iter().fold(0.0f64, |b, &e| if e.abs() > b.abs() { e } else { b });
        if pivot < 0.0 {
            oracle.iter_mut().for_each(|e| *e = -*e);
        }
        for (a, b) in p.component(j).iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8, "component {j}: {a} vs {b}");
        }
    }
}

#[test]
fn category_mix_round_trips_through_parser() {
    let counts = [40, 30, 10, 5, 2];
    let text = synthetic::generate(counts, 3);
    let recs = parse_bytes(text.as_bytes(), true).unwrap();
    assert_eq!(recs.len(), 87);
    assert_eq!(recs.rows.iter().filter(|r| r.is_normal()).count(), 40);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scaler_standardizes(n in 2usize..60, d in 1usize..8, seed in any::<u64>(), constant in 0usize..8) {
        let mut x = random_matrix(n, d, seed);
        if constant < d {
            let rows: Vec<Vec<f64>> = x.rows().map(|r| {
                let mut r = r.to_vec();
                r[constant] = 3.5;
                r
            }).collect();
            x = FeatureMatrix::from_rows(&rows).unwrap();
        }
        let s = fit_scaler(&x).unwrap();
        prop_assert_eq!(s.mean.len(), d);
        let z = apply_scaler(&x, &s).unwrap();
        for j in 0..d {
            let (mean, std) = column_stats(&z, j);
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!(std == 0.0 || (std - 1.0).abs() < 1e-6, "std {}", std);
        }
    }

    #[test]
    fn pca_is_orthonormal_and_ordered(n in 8usize..60, d in 2usize..10, seed in any::<u64>()) {
        let x = random_matrix(n, d, seed);
        let k = d.min(n) / 2 + 1;
        let p = fit_pca(&x, k).unwrap();
        for a in 0..k {
            for b in 0..k {
                let dot: f64 = p.component(a).iter().zip(p.component(b)).map(|(u, v)| u * v).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() < 1e-6);
            }
        }
        for w in p.explained_variance.windows(2) {
            prop_assert!(w[0] >= w[1] - 1e-12);
        }
    }

    #[test]
    fn full_rank_pca_reconstructs(n in 6usize..40, d in 2usize..6, seed in any::<u64>()) {
        let x = random_matrix(n, d, seed);
        let p = fit_pca(&x, d).unwrap();
        let back = p.inverse_transform(&apply_pca(&x, &p).unwrap()).unwrap();
        for (a, b) in x.as_slice().iter().zip(back.as_slice()) {
            prop_assert!((a - b).abs() < 1e-6 * a.abs().max(1.0));
        }
    }

    #[test]
    fn full_rank_pca_preserves_distances(n in 6usize..20, d in 2usize..6, seed in any::<u64>()) {
        let x = random_matrix(n, d, seed);
        let y = apply_pca(&x, &fit_pca(&x, d).unwrap()).unwrap();
        let dist = |m: &FeatureMatrix, i: usize, j: usize| -> f64 {
            m.row(i).iter().zip(m.row(j)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        };
        for i in 0..n {
            for j in 0..n {
                prop_assert!((dist(&x, i, j) - dist(&y, i, j)).abs() < 1e-6 * dist(&x, i, j).max(1.0));
            }
        }
    }

    #[test]
    fn partitions_are_disjoint_equal_and_seeded(n in 1usize..300, clients in 1usize..9, seed in any::<u64>()) {
        prop_assume!(clients <= n);
        let x = FeatureMatrix::from_vec(n, 1, (0..n).map(|v| v as f64).collect()).unwrap();
        let y = LabelVector::new((0..n).map(|i| (i % 2) as u8).collect());
        let parts = partition_iid(&x, &y, clients, seed).unwrap();
        prop_assert_eq!(parts.len(), clients);
        let mut seen = HashSet::new();
        for (i, p) in parts.iter().enumerate() {
            prop_assert_eq!(p.client_id as usize, i);
            prop_assert_eq!(p.len(), n / clients);
            for (r, &src) in p.source_rows.iter().enumerate() {
                prop_assert!(seen.insert(src));
                prop_assert_eq!(p.features.row(r)[0], src as f64);
                prop_assert_eq!(p.labels.as_slice()[r], (src % 2) as u8);
            }
        }
        prop_assert_eq!(parts, partition_iid(&x, &y, clients, seed).unwrap());
    }
}
