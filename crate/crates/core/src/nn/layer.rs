use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    MaxPool,
    Relu,
    /// Final convolution producing the single face/background logit; the
    /// network squashes it with a logistic function.
    FullyConvHead,
}

impl LayerKind {
    pub fn tag(self) -> u32 {
        match self {
            LayerKind::Conv => 0,
            LayerKind::MaxPool => 1,
            LayerKind::Relu => 2,
            LayerKind::FullyConvHead => 3,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        Some(match tag {
            0 => LayerKind::Conv,
            1 => LayerKind::MaxPool,
            2 => LayerKind::Relu,
            3 => LayerKind::FullyConvHead,
            _ => return None,
        })
    }

    pub fn is_parametric(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::FullyConvHead)
    }
}

/// One layer of a network.
///
/// Convolution weights are laid out as `[ky][kx][in_channel][out_channel]`,
/// i.e. a row-major `(k*k*in) x out` matrix whose rows follow the input
/// tensor's `(y, x, channel)` order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    #[serde(default)]
    pub weights: Vec<f64>,
    #[serde(default)]
    pub biases: Vec<f64>,
}

impl LayerSpec {
    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            kind: LayerKind::Conv,
            kernel,
            stride,
            padding,
            in_channels,
            out_channels,
            weights: vec![0.0; kernel * kernel * in_channels * out_channels],
            biases: vec![0.0; out_channels],
        }
    }

    pub fn max_pool(channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            kind: LayerKind::MaxPool,
            kernel,
            stride,
            padding: 0,
            in_channels: channels,
            out_channels: channels,
            weights: Vec::new(),
            biases: Vec::new(),
        }
    }

    pub fn relu(channels: usize) -> Self {
        Self {
            kind: LayerKind::Relu,
            kernel: 1,
            stride: 1,
            padding: 0,
            in_channels: channels,
            out_channels: channels,
            weights: Vec::new(),
            biases: Vec::new(),
        }
    }

    pub fn head(in_channels: usize, kernel: usize) -> Self {
        Self {
            kind: LayerKind::FullyConvHead,
            ..Self::conv(in_channels, 1, kernel, 1, 0)
        }
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    pub fn expected_weight_len(&self) -> usize {
        if self.kind.is_parametric() {
            self.kernel * self.kernel * self.in_channels * self.out_channels
        } else {
            0
        }
    }

    /// Output spatial size along one axis, `None` when the padded input is
    /// smaller than the kernel.
    pub fn output_len(&self, input: usize) -> Option<usize> {
        let padded = input + 2 * self.padding;
        if padded < self.kernel {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }

    pub fn validate(&self, index: usize) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidLayer { layer: index, reason });
        if self.kernel == 0 {
            return bad("kernel must be >= 1".into());
        }
        if self.stride == 0 {
            return bad("stride must be >= 1".into());
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad("channel counts must be >= 1".into());
        }
        match self.kind {
            LayerKind::Conv | LayerKind::FullyConvHead => {
                if self.weights.len() != self.expected_weight_len() {
                    return bad(format!(
                        "expected {} weights, found {}",
                        self.expected_weight_len(),
                        self.weights.len()
                    ));
                }
                if self.biases.len() != self.out_channels {
                    return bad(format!(
                        "expected {} biases, found {}",
                        self.out_channels,
                        self.biases.len()
                    ));
                }
                if self.kind == LayerKind::FullyConvHead && self.out_channels != 1 {
                    return bad("fully convolutional head must have one output channel".into());
                }
                if self.weights.iter().chain(&self.biases).any(|v| !v.is_finite()) {
                    return bad("non-finite parameter".into());
                }
            }
            LayerKind::MaxPool | LayerKind::Relu => {
                if !self.weights.is_empty() || !self.biases.is_empty() {
                    return bad("parameter-free layer carries parameters".into());
                }
                if self.in_channels != self.out_channels {
                    return bad("pooling/ReLU must preserve channel count".into());
                }
                if self.kind == LayerKind::Relu
                    && (self.kernel != 1 || self.stride != 1 || self.padding != 0)
                {
                    return bad("ReLU is pointwise: kernel 1, stride 1, padding 0".into());
                }
            }
        }
        Ok(())
    }
}

/// An ordered layer stack ending in a [`LayerKind::FullyConvHead`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(name: impl Into<String>, layers: Vec<LayerSpec>) -> Result<Self> {
        let net = Self {
            name: name.into(),
            layers,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(last) = self.layers.last() else {
            return Err(Error::InvalidNetwork("no layers".into()));
        };
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate(i)?;
            if i > 0 {
                let prev = self.layers[i - 1].out_channels;
                if layer.in_channels != prev {
                    return Err(Error::ChannelMismatch {
                        layer: i,
                        expected: prev,
                        found: layer.in_channels,
                    });
                }
            }
            if layer.kind == LayerKind::FullyConvHead && i + 1 != self.layers.len() {
                return Err(Error::InvalidNetwork(format!(
                    "fully convolutional head at layer {i} must be the last layer"
                )));
            }
        }
        if last.kind != LayerKind::FullyConvHead {
            return Err(Error::InvalidNetwork(
                "last layer must be a fully convolutional head".into(),
            ));
        }
        Ok(())
    }

    pub fn input_channels(&self) -> usize {
        self.layers[0].in_channels
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    pub fn has_padding(&self) -> bool {
        self.layers.iter().any(|l| l.padding > 0)
    }

    /// Heatmap size for a `width x height` input, computed layer by layer.
    pub fn heatmap_dims(&self, width: usize, height: usize) -> Result<(usize, usize)> {
        let (mut w, mut h) = (width, height);
        for (i, layer) in self.layers.iter().enumerate() {
            match (layer.output_len(w), layer.output_len(h)) {
                (Some(nw), Some(nh)) => {
                    w = nw;
                    h = nh;
                }
                _ => {
                    return Err(Error::InputTooSmall {
                        layer: i,
                        width: w,
                        height: h,
                    })
                }
            }
        }
        Ok((w, h))
    }
}
