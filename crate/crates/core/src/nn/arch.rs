use serde::{Deserialize, Serialize};

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub pool_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FcLayer {
    pub in_features: usize,
    pub out_features: usize,
}

/// Conv1D/ReLU/MaxPool blocks followed by fully connected layers.
///
/// Convolutions use stride 1 and zero "same" padding, pooling uses a
/// window equal to its stride. ReLU follows every conv and every FC layer
/// except the last, whose single output goes through a sigmoid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub conv: Vec<ConvBlock>,
    pub fc: Vec<FcLayer>,
}

/// Name, shape and owning layer of one parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub layer: usize,
    pub fan_in: usize,
    pub is_bias: bool,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Which layers receive gradient updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainScope {
    /// The last `k` FC layers; conv blocks stay frozen. `FcTail(0)` freezes everything.
    FcTail(usize),
    /// Every layer, conv and FC.
    Full,
}

impl TrainScope {
    /// Index (in the conv-then-FC layer sequence) of the first trainable layer.
    /// Equals `arch.n_layers()` when nothing is trainable.
    pub fn first_trainable_layer(&self, arch: &Architecture) -> usize {
        match *self {
            TrainScope::Full => 0,
            TrainScope::FcTail(k) => arch.n_layers() - k.min(arch.fc.len()),
        }
    }

    pub fn is_trainable(&self, arch: &Architecture, layer: usize) -> bool {
        layer >= self.first_trainable_layer(arch)
    }

    pub fn validate(&self, arch: &Architecture) -> Result<(), NnError> {
        match *self {
            TrainScope::FcTail(k) if k == 0 || k > arch.fc.len() => Err(NnError::Config(format!(
                "fine-tune tail k = {k} must be in 1..={}",
                arch.fc.len()
            ))),
            _ => Ok(()),
        }
    }
}

impl Architecture {
    /// Builds a network with one conv block per entry of `channels` and FC
    /// hidden widths `hidden`; the final FC layer always has one output.
    pub fn new(
        input_dim: usize,
        channels: &[usize],
        kernel_size: usize,
        pool_size: usize,
        hidden: &[usize],
    ) -> Result<Self, NnError> {
        let mut conv = Vec::with_capacity(channels.len());
        let mut in_ch = 1;
        for &out_ch in channels {
            conv.push(ConvBlock {
                in_channels: in_ch,
                out_channels: out_ch,
                kernel_size,
                pool_size,
            });
            in_ch = out_ch;
        }
        let mut arch = Architecture {
            input_dim,
            conv,
            fc: Vec::new(),
        };
        let mut width = arch.flatten_size()?;
        for &h in hidden.iter().chain(std::iter::once(&1)) {
            arch.fc.push(FcLayer {
                in_features: width,
                out_features: h,
            });
            width = h;
        }
        arch.validate()?;
        Ok(arch)
    }

    /// Channels 1→16→32→64, kernel 3, pool 2, FC flatten→64→32→1.
    pub fn default_for(input_dim: usize) -> Result<Self, NnError> {
        Self::new(input_dim, &[16, 32, 64], 3, 2, &[64, 32])
    }

    pub fn n_layers(&self) -> usize {
        self.conv.len() + self.fc.len()
    }

    /// Spatial length entering each conv block, followed by the final length.
    pub fn conv_lengths(&self) -> Vec<usize> {
        let mut lens = vec![self.input_dim];
        let mut len = self.input_dim;
        for block in &self.conv {
            len /= block.pool_size.max(1);
            lens.push(len);
        }
        lens
    }

    pub fn flatten_size(&self) -> Result<usize, NnError> {
        let len = *self.conv_lengths().last().unwrap();
        let channels = self.conv.last().map_or(1, |b| b.out_channels);
        if len == 0 {
            return Err(NnError::Config(format!(
                "input_dim {} pools down to zero length",
                self.input_dim
            )));
        }
        Ok(len * channels)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_dim == 0 {
            return Err(NnError::Config("input_dim must be positive".into()));
        }
        let mut in_ch = 1;
        for (i, b) in self.conv.iter().enumerate() {
            if b.in_channels != in_ch {
                return Err(NnError::Config(format!(
                    "conv{} expects {} input channels, previous layer gives {in_ch}",
                    i + 1,
                    b.in_channels
                )));
            }
            if b.kernel_size % 2 == 0 || b.out_channels == 0 || b.pool_size == 0 {
                return Err(NnError::Config(format!(
                    "conv{}: kernel must be odd, channels and pool positive",
                    i + 1
                )));
            }
            in_ch = b.out_channels;
        }
        let mut width = self.flatten_size()?;
        if self.fc.is_empty() {
            return Err(NnError::Config("at least one FC layer is required".into()));
        }
        for (i, l) in self.fc.iter().enumerate() {
            if l.in_features != width || l.out_features == 0 {
                return Err(NnError::Config(format!(
                    "fc{} expects {} inputs, previous layer gives {width}",
                    i + 1,
                    l.in_features
                )));
            }
            width = l.out_features;
        }
        if width != 1 {
            return Err(NnError::Config(format!(
                "final FC layer must have one output, has {width}"
            )));
        }
        Ok(())
    }

    /// Parameter tensors in canonical order: conv blocks then FC layers,
    /// weight before bias.
    pub fn tensor_specs(&self) -> Vec<TensorSpec> {
        let mut specs = Vec::with_capacity(2 * self.n_layers());
        for (i, b) in self.conv.iter().enumerate() {
            let fan_in = b.in_channels * b.kernel_size;
            specs.push(TensorSpec {
                name: format!("conv{}.weight", i + 1),
                shape: vec![b.out_channels, b.in_channels, b.kernel_size],
                layer: i,
                fan_in,
                is_bias: false,
            });
            specs.push(TensorSpec {
                name: format!("conv{}.bias", i + 1),
                shape: vec![b.out_channels],
                layer: i,
                fan_in,
                is_bias: true,
            });
        }
        for (i, l) in self.fc.iter().enumerate() {
            let layer = self.conv.len() + i;
            specs.push(TensorSpec {
                name: format!("fc{}.weight", i + 1),
                shape: vec![l.out_features, l.in_features],
                layer,
                fan_in: l.in_features,
                is_bias: false,
            });
            specs.push(TensorSpec {
                name: format!("fc{}.bias", i + 1),
                shape: vec![l.out_features],
                layer,
                fan_in: l.in_features,
                is_bias: true,
            });
        }
        specs
    }

    pub fn param_count(&self) -> usize {
        self.tensor_specs().iter().map(TensorSpec::numel).sum()
    }

    /// Indices into [`tensor_specs`](Self::tensor_specs) of tensors trained under `scope`.
    pub fn trainable_tensors(&self, scope: TrainScope) -> Vec<usize> {
        let first = scope.first_trainable_layer(self);
        self.tensor_specs()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.layer >= first)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn trainable_param_count(&self, scope: TrainScope) -> usize {
        let specs = self.tensor_specs();
        self.trainable_tensors(scope)
            .into_iter()
            .map(|i| specs[i].numel())
            .sum()
    }
}
