//! Parameter tensors, initialization and the "FFTP" blob format.
//!
//! Blob layout (integers little-endian):
//!
//! ```text
//! magic   "FFTP"
//! version u16
//! count   u32
//! per tensor:
//!   name_len u16, name (UTF-8)
//!   rank u8, dims u32 × rank
//!   data f32 × Π dims
//! ```

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Architecture, NnError, TensorSpec};

const MAGIC: &[u8; 4] = b"FFTP";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            name: name.into(),
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Bitwise equality, distinguishing -0.0 and NaN payloads.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.name == other.name
            && self.shape == other.shape
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Ordered, named parameter tensors of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub tensors: Vec<Tensor>,
}

impl ModelParams {
    pub fn zeros(arch: &Architecture) -> Self {
        ModelParams {
            tensors: arch
                .tensor_specs()
                .into_iter()
                .map(|s| Tensor::zeros(s.name, s.shape))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|t| t.name == name)
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Checks names and shapes against `arch`, in order.
    pub fn check_against(&self, arch: &Architecture) -> Result<(), NnError> {
        let specs = arch.tensor_specs();
        if specs.len() != self.tensors.len() {
            let offending = specs
                .get(self.tensors.len())
                .map(|s| s.name.clone())
                .or_else(|| self.tensors.get(specs.len()).map(|t| t.name.clone()))
                .unwrap_or_default();
            return Err(NnError::Shape(format!(
                "expected {} tensors, found {} (first mismatch: {offending})",
                specs.len(),
                self.tensors.len()
            )));
        }
        for (spec, t) in specs.iter().zip(&self.tensors) {
            check_tensor(spec, t)?;
        }
        Ok(())
    }

    pub fn bit_eq(&self, other: &ModelParams) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| a.bit_eq(b))
    }
}

pub(crate) fn check_tensor(spec: &TensorSpec, t: &Tensor) -> Result<(), NnError> {
    if spec.name != t.name {
        return Err(NnError::Shape(format!(
            "expected tensor {}, found {}",
            spec.name, t.name
        )));
    }
    if spec.shape != t.shape || t.data.len() != spec.numel() {
        return Err(NnError::Shape(format!(
            "tensor {}: expected shape {:?}, found {:?}",
            t.name, spec.shape, t.shape
        )));
    }
    Ok(())
}

/// Weights uniform in (−√(6/fan_in), √(6/fan_in)), biases zero.
pub fn init_params(arch: &Architecture, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tensors = arch
        .tensor_specs()
        .into_iter()
        .map(|spec| {
            let mut t = Tensor::zeros(spec.name.clone(), spec.shape.clone());
            if !spec.is_bias {
                let bound = (6.0 / spec.fan_in as f64).sqrt() as f32;
                let dist = Uniform::new(-bound, bound).expect("positive bound");
                t.data.iter_mut().for_each(|w| *w = dist.sample(&mut rng));
            }
            t
        })
        .collect();
    ModelParams { tensors }
}

/// Encodes any ordered tensor list as an FFTP blob.
pub fn serialize_tensors(tensors: &[Tensor]) -> Vec<u8> {
    let body: usize = tensors
        .iter()
        .map(|t| 2 + t.name.len() + 1 + 4 * t.shape.len() + 4 * t.data.len())
        .sum();
    let mut out = Vec::with_capacity(10 + body);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn serialize_params(params: &ModelParams) -> Vec<u8> {
    serialize_tensors(&params.tensors)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(NnError::Blob(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            ))),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8, NnError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, NnError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Decodes an FFTP blob without reference to an architecture.
pub fn deserialize_tensors(bytes: &[u8]) -> Result<Vec<Tensor>, NnError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(NnError::Blob("bad magic, expected FFTP".into()));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(NnError::Blob(format!("unsupported version {version}")));
    }
    let count = r.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let name_len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| NnError::Blob(format!("tensor {i}: name is not UTF-8")))?
            .to_string();
        let rank = r.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dimension")? as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| NnError::Blob(format!("tensor {name}: shape overflows")))?;
        let raw = r.take(numel.saturating_mul(4), &format!("data of {name}"))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(NnError::Blob(format!(
            "{} trailing bytes after last tensor",
            bytes.len() - r.pos
        )));
    }
    Ok(tensors)
}

/// Decodes a full parameter set and validates it against `arch`.
pub fn deserialize_params(bytes: &[u8], arch: &Architecture) -> Result<ModelParams, NnError> {
    let params = ModelParams {
        tensors: deserialize_tensors(bytes)?,
    };
    params.check_against(arch)?;
    Ok(params)
}

/// Decodes a subset of tensors (e.g. a client update). Every tensor must
/// name an architecture tensor with the matching shape; order must follow
/// the canonical order. Returns canonical indices alongside tensors.
pub fn deserialize_subset(
    bytes: &[u8],
    arch: &Architecture,
) -> Result<Vec<(usize, Tensor)>, NnError> {
    let specs = arch.tensor_specs();
    let mut last: Option<usize> = None;
    deserialize_tensors(bytes)?
        .into_iter()
        .map(|t| {
            let idx = specs
                .iter()
                .position(|s| s.name == t.name)
                .ok_or_else(|| NnError::Shape(format!("unknown tensor {}", t.name)))?;
            if last.is_some_and(|l| idx <= l) {
                return Err(NnError::Shape(format!(
                    "tensor {} is duplicated or out of order",
                    t.name
                )));
            }
            last = Some(idx);
            check_tensor(&specs[idx], &t)?;
            Ok((idx, t))
        })
        .collect()
}
