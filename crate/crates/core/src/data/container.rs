//! "FFTD" dataset container.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! magic   "FFTD"
//! version u16
//! n_rows  u64
//! n_cols  u64
//! features n_rows * n_cols f32, row-major
//! labels   n_rows u8
//! ```

use std::fs;
use std::path::Path;

use super::{DataError, FeatureMatrix, LabelVector};

const MAGIC: &[u8; 4] = b"FFTD";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 8 + 8;

pub fn write_container(x: &FeatureMatrix, y: &LabelVector) -> Result<Vec<u8>, DataError> {
    if x.n_rows() != y.len() {
        return Err(DataError::InvalidArgument(format!(
            "{} rows but {} labels",
            x.n_rows(),
            y.len()
        )));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + x.as_slice().len() * 4 + y.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(x.n_rows() as u64).to_le_bytes());
    out.extend_from_slice(&(x.n_cols() as u64).to_le_bytes());
    for &v in x.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.extend_from_slice(y.as_slice());
    Ok(out)
}

pub fn read_container(bytes: &[u8]) -> Result<(FeatureMatrix, LabelVector), DataError> {
    if bytes.len() < HEADER_LEN {
        return Err(DataError::Container(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(DataError::Container("bad magic, expected FFTD".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(DataError::Container(format!("unsupported version {version}")));
    }
    let n_rows = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
    let n_cols = u64::from_le_bytes(bytes[14..22].try_into().unwrap());
    let body = n_rows
        .checked_mul(n_cols)
        .and_then(|c| c.checked_mul(4))
        .and_then(|c| c.checked_add(n_rows))
        .and_then(|c| usize::try_from(c).ok())
        .ok_or_else(|| DataError::Container("header sizes overflow".into()))?;
    if bytes.len() != HEADER_LEN + body {
        return Err(DataError::Container(format!(
            "expected {} bytes for {n_rows}x{n_cols}, found {}",
            HEADER_LEN + body,
            bytes.len()
        )));
    }
    let (n_rows, n_cols) = (n_rows as usize, n_cols as usize);
    let feat_end = HEADER_LEN + n_rows * n_cols * 4;
    let data = bytes[HEADER_LEN..feat_end]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    let labels = bytes[feat_end..].to_vec();
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(DataError::Container(format!("label byte {bad} is not 0 or 1")));
    }
    Ok((FeatureMatrix::from_vec(n_rows, n_cols, data)?, LabelVector::new(labels)))
}

pub fn write_container_file(path: &Path, x: &FeatureMatrix, y: &LabelVector) -> Result<(), DataError> {
    let bytes = write_container(x, y)?;
    fs::write(path, bytes).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn read_container_file(path: &Path) -> Result<(FeatureMatrix, LabelVector), DataError> {
    let bytes = fs::read(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    read_container(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_exact() {
        let x = FeatureMatrix::from_rows(&[vec![1.0, -2.5]]).unwrap();
        let y = LabelVector::new(vec![1]);
        let b = write_container(&x, &y).unwrap();
        let mut want = b"FFTD".to_vec();
        want.extend_from_slice(&[1, 0]);
        want.extend_from_slice(&1u64.to_le_bytes());
        want.extend_from_slice(&2u64.to_le_bytes());
        want.extend_from_slice(&1.0f32.to_le_bytes());
        want.extend_from_slice(&(-2.5f32).to_le_bytes());
        want.push(1);
        assert_eq!(b, want);
        assert_eq!(read_container(&b).unwrap(), (x, y));
    }

    #[test]
    fn rejects_truncation_and_magic() {
        let x = FeatureMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let y = LabelVector::new(vec![0, 1]);
        let b = write_container(&x, &y).unwrap();
        assert!(read_container(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(read_container(&bad).is_err());
    }
}
