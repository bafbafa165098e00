use super::{DataError, FeatureMatrix};

/// Columns whose standard deviation falls below this map to zero.
pub const STD_EPSILON: f64 = 1e-8;

/// Per-column z-score parameters (population standard deviation).
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn fit_scaler(x: &FeatureMatrix) -> Result<Scaler, DataError> {
    if x.is_empty() {
        return Err(DataError::Empty("cannot fit a scaler on zero rows"));
    }
    let n = x.n_rows() as f64;
    let d = x.n_cols();
    let mut mean = vec![0.0; d];
    for row in x.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    // two-pass variance
    let mut var = vec![0.0; d];
    for row in x.rows() {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let c = v - m;
            *s += c * c;
        }
    }
    let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
    Ok(Scaler { mean, std })
}

pub fn apply_scaler(x: &FeatureMatrix, s: &Scaler) -> Result<FeatureMatrix, DataError> {
    if x.n_cols() != s.mean.len() {
        return Err(DataError::DimensionMismatch {
            expected: s.mean.len(),
            actual: x.n_cols(),
        });
    }
    let mut out = x.clone();
    let d = x.n_cols().max(1);
    for row in out.as_mut_slice().chunks_exact_mut(d) {
        for ((v, m), sd) in row.iter_mut().zip(&s.mean).zip(&s.std) {
            *v = if *sd < STD_EPSILON { 0.0 } else { (*v - m) / sd };
        }
    }
    Ok(out)
}
