use nalgebra::{DMatrix, SymmetricEigen};

use super::{DataError, FeatureMatrix};

/// Principal directions of a fitted matrix.
///
/// `components` is stored row-major as d × k: column j is the j-th
/// principal direction, ordered by decreasing explained variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub components: Vec<f64>,
    pub k: usize,
    /// Sample-covariance eigenvalues of the retained directions.
    pub explained_variance: Vec<f64>,
    /// Trace of the sample covariance.
    pub total_variance: f64,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Column `j` of the component matrix.
    pub fn component(&self, j: usize) -> Vec<f64> {
        (0..self.dim()).map(|i| self.components[i * self.k + j]).collect()
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        if self.total_variance <= 0.0 {
            return vec![0.0; self.k];
        }
        self.explained_variance
            .iter()
            .map(|v| v / self.total_variance)
            .collect()
    }

    /// Maps projected rows back to the input space: y · Cᵀ + mean.
    pub fn inverse_transform(&self, y: &FeatureMatrix) -> Result<FeatureMatrix, DataError> {
        if y.n_cols() != self.k {
            return Err(DataError::DimensionMismatch {
                expected: self.k,
                actual: y.n_cols(),
            });
        }
        let d = self.dim();
        let mut out = Vec::with_capacity(y.n_rows() * d);
        for row in y.rows() {
            for i in 0..d {
                let c = &self.components[i * self.k..(i + 1) * self.k];
                let v: f64 = c.iter().zip(row).map(|(a, b)| a * b).sum();
                out.push(v + self.mean[i]);
            }
        }
        FeatureMatrix::from_vec(y.n_rows(), d, out)
    }
}

/// Fits the top-`k` eigenvectors of the sample covariance of `x`.
///
/// Each component is sign-normalized so that its largest-magnitude entry
/// is positive.
pub fn fit_pca(x: &FeatureMatrix, k: usize) -> Result<PcaModel, DataError> {
    let (n, d) = (x.n_rows(), x.n_cols());
    if k == 0 || k > n.min(d) {
        return Err(DataError::InvalidArgument(format!(
            "k = {k} must be in 1..=min(n_rows, n_cols) = {}",
            n.min(d)
        )));
    }

    let mut mean = vec![0.0; d];
    for row in x.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, d, |r, c| x.row(r)[c] - mean[c]);
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let cov = centered.tr_mul(&centered) / denom;
    let total_variance = cov.trace();

    // Zero-variance columns are exact zero rows/columns of the covariance.
    // They are eigenvectors with eigenvalue 0 on their own, and leaving them
    // in makes the solver return NaNs, so only the active block is decomposed.
    let active: Vec<usize> = (0..d).filter(|&i| cov[(i, i)] > 0.0).collect();
    let block = DMatrix::from_fn(active.len(), active.len(), |i, j| cov[(active[i], active[j])]);
    let mut candidates: Vec<(f64, Vec<f64>)> = Vec::with_capacity(d);
    if !active.is_empty() {
        let eig = SymmetricEigen::try_new(block, f64::EPSILON, 0).ok_or(DataError::Eigen)?;
        if eig.eigenvalues.iter().chain(eig.eigenvectors.iter()).any(|v| !v.is_finite()) {
            return Err(DataError::Eigen);
        }
        for (c, &lambda) in eig.eigenvalues.iter().enumerate() {
            let mut v = vec![0.0; d];
            for (r, &i) in active.iter().enumerate() {
                v[i] = eig.eigenvectors[(r, c)];
            }
            candidates.push((lambda, v));
        }
    }
    for i in (0..d).filter(|i| !active.contains(i)) {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        candidates.push((0.0, v));
    }
    // stable: ties keep solver order, then inactive columns by index
    candidates.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));

    let mut components = vec![0.0; d * k];
    let mut explained_variance = Vec::with_capacity(k);
    for (j, (lambda, v)) in candidates.iter().take(k).enumerate() {
        let pivot = v.iter().fold(0.0f64, |best, &e| if e.abs() > best.abs() { e } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        let norm = v.iter().map(|e| e * e).sum::<f64>().sqrt();
        for i in 0..d {
            components[i * k + j] = sign * v[i] / norm;
        }
        explained_variance.push(lambda.max(0.0));
    }

    Ok(PcaModel {
        mean,
        components,
        k,
        explained_variance,
        total_variance,
    })
}

/// Projects rows onto the retained components: (x − mean) · C.
pub fn apply_pca(x: &FeatureMatrix, p: &PcaModel) -> Result<FeatureMatrix, DataError> {
    let d = p.dim();
    if x.n_cols() != d {
        return Err(DataError::DimensionMismatch {
            expected: d,
            actual: x.n_cols(),
        });
    }
    let k = p.k;
    let mut out = vec![0.0; x.n_rows() * k];
    let mut centered = vec![0.0; d];
    for (row, dst) in x.rows().zip(out.chunks_exact_mut(k)) {
        for ((c, v), m) in centered.iter_mut().zip(row).zip(&p.mean) {
            *c = v - m;
        }
        for (i, &c) in centered.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let comp = &p.components[i * k..(i + 1) * k];
            for (o, w) in dst.iter_mut().zip(comp) {
                *o += c * w;
            }
        }
    }
    FeatureMatrix::from_vec(x.n_rows(), k, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_on_diagonal() {
        let x = FeatureMatrix::from_rows(&[
            vec![-2.0, -2.0],
            vec![-1.0, -1.0],
            vec![0.5, 0.5],
            vec![3.0, 3.0],
        ])
        .unwrap();
        let p = fit_pca(&x, 1).unwrap();
        let c = p.component(0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((c[0] - h).abs() < 1e-12 && (c[1] - h).abs() < 1e-12, "{c:?}");
        assert!((p.explained_variance_ratio()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_too_large_errors() {
        let x = FeatureMatrix::zeros(3, 5);
        assert!(fit_pca(&x, 4).is_err());
        assert!(fit_pca(&x, 0).is_err());
        assert!(fit_pca(&x, 3).is_ok());
    }

    #[test]
    fn mean_rows_project_to_zero() {
        let x = FeatureMatrix::from_rows(&[
            vec![1.0, 2.0, 0.0],
            vec![3.0, -1.0, 1.0],
            vec![0.0, 4.0, 2.0],
            vec![2.0, 0.0, -3.0],
        ])
        .unwrap();
        let p = fit_pca(&x, 2).unwrap();
        let m = FeatureMatrix::from_rows(&[p.mean.clone(), p.mean.clone()]).unwrap();
        let y = apply_pca(&m, &p).unwrap();
        assert!(y.as_slice().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn axis_aligned_data_is_rotated_copy() {
        // variance 9 on x, 1 on y: the full projection is a signed permutation
        let x = FeatureMatrix::from_rows(&[
            vec![3.0, 1.0],
            vec![-3.0, 1.0],
            vec![3.0, -1.0],
            vec![-3.0, -1.0],
        ])
        .unwrap();
        let p = fit_pca(&x, 2).unwrap();
        let y = apply_pca(&x, &p).unwrap();
        for (a, b) in x.rows().zip(y.rows()) {
            assert!((a[0].abs() - b[0].abs()).abs() < 1e-12);
            assert!((a[1].abs() - b[1].abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let x = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let p = fit_pca(&x, 1).unwrap();
        assert!(apply_pca(&FeatureMatrix::zeros(1, 3), &p).is_err());
    }

    #[test]
    fn constant_columns_stay_finite() {
        // one-hot style: most columns constant, a few active
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|r| {
                let mut v = vec![0.0; 40];
                v[3] = (r as f64 * 0.7).sin();
                v[17] = (r % 3) as f64;
                v[29] = (r as f64).sqrt() - v[3];
                v
            })
            .collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let p = fit_pca(&x, 5).unwrap();
        assert!(p.components.iter().all(|v| v.is_finite()));
        assert!(p.explained_variance[3..].iter().all(|&v| v == 0.0));
        for a in 0..5 {
            for b in 0..5 {
                let dot: f64 = p.component(a).iter().zip(p.component(b)).map(|(x, y)| x * y).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10, "{a} {b} {dot}");
            }
        }
    }
}
