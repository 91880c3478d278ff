//! Declarative architecture descriptions.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::ops::window_out_dim;

/// One entry of a sequential architecture.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
        #[serde(default)]
        bias: bool,
    },
    Maxpool {
        window: usize,
        stride: usize,
    },
    Fc {
        out_features: usize,
        #[serde(default = "yes")]
        bias: bool,
    },
    Relu,
    Flatten,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl LayerSpec {
    pub fn conv(out_channels: usize, kernel: usize, padding: usize) -> Self {
        LayerSpec::Conv {
            out_channels,
            kernel,
            stride: 1,
            padding,
            bias: false,
        }
    }

    pub fn maxpool(window: usize) -> Self {
        LayerSpec::Maxpool {
            window,
            stride: window,
        }
    }

    pub fn fc(out_features: usize) -> Self {
        LayerSpec::Fc {
            out_features,
            bias: true,
        }
    }

    /// Layers that own parameters (conv and fc).
    pub fn is_parametric(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Fc { .. })
    }

    /// Output shape (per sample, without batch axis) for a given input shape.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |reason: String| Error::IncompatibleLayers {
            layer: index,
            reason,
        };
        match *self {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                let [_, h, w] = spatial(input).ok_or_else(|| bad(format!("conv needs [C,H,W], got {input:?}")))?;
                if out_channels == 0 {
                    return Err(bad("conv with zero filters".into()));
                }
                let oh = window_out_dim(h, kernel, stride, padding);
                let ow = window_out_dim(w, kernel, stride, padding);
                match (oh, ow) {
                    (Some(oh), Some(ow)) => Ok(vec![out_channels, oh, ow]),
                    _ => Err(bad(format!("kernel {kernel} does not fit {h}x{w}"))),
                }
            }
            LayerSpec::Maxpool { window, stride } => {
                let [c, h, w] = spatial(input).ok_or_else(|| bad(format!("maxpool needs [C,H,W], got {input:?}")))?;
                let oh = window_out_dim(h, window, stride, 0);
                let ow = window_out_dim(w, window, stride, 0);
                match (oh, ow) {
                    (Some(oh), Some(ow)) => Ok(vec![c, oh, ow]),
                    _ => Err(bad(format!("window {window} does not fit {h}x{w}"))),
                }
            }
            LayerSpec::Fc { out_features, .. } => {
                if input.len() != 1 {
                    return Err(bad(format!("fc needs a flat input, got {input:?}")));
                }
                if out_features == 0 {
                    return Err(bad("fc with zero outputs".into()));
                }
                Ok(vec![out_features])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }
}

fn spatial(shape: &[usize]) -> Option<[usize; 3]> {
    match *shape {
        [c, h, w] => Some([c, h, w]),
        _ => None,
    }
}

/// First 8 bytes of SHA-256 over the JSON encoding of `(input_shape, layers)`.
pub fn layers_digest(input_shape: &[usize], layers: &[LayerSpec]) -> [u8; 8] {
    let json = serde_json::to_vec(&(input_shape, layers)).expect("layer specs serialize");
    let h = Sha256::digest(&json);
    let mut d = [0u8; 8];
    d.copy_from_slice(&h[..8]);
    d
}

/// A sequential CNN: input shape, layers, and class count.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_shape: [usize; 3],
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// Per-layer output shapes; fails on the first incompatible layer.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut cur = self.input_shape.to_vec();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            cur = l.output_shape(i, &cur)?;
            out.push(cur.clone());
        }
        Ok(out)
    }

    /// Checks chain compatibility and that the last layer is the classifier.
    pub fn validate(&self) -> Result<()> {
        let shapes = self.shapes()?;
        match self.layers.last() {
            Some(LayerSpec::Fc { out_features, .. }) if *out_features == self.num_classes => Ok(()),
            _ => Err(Error::IncompatibleLayers {
                layer: self.layers.len().saturating_sub(1),
                reason: format!(
                    "final layer must be fc with {} outputs (shapes {:?})",
                    self.num_classes,
                    shapes.last()
                ),
            }),
        }
    }

    /// Short content hash used to tie checkpoints to their architecture.
    pub fn digest(&self) -> [u8; 8] {
        layers_digest(&self.input_shape, &self.layers)
    }

    /// Toy CNN of the feasibility study: 4 conv + 1 fc on 3×32×32 inputs
    /// with 10 classes. Widths are the undivided base widths from which the
    /// 7/8 and 1/8 submodels are carved.
    pub fn feasibility_base() -> Self {
        Self {
            input_shape: [3, 32, 32],
            num_classes: 10,
            layers: vec![
                LayerSpec::conv(128, 5, 2),
                LayerSpec::Relu,
                LayerSpec::conv(256, 3, 1),
                LayerSpec::Relu,
                LayerSpec::maxpool(2),
                LayerSpec::conv(256, 3, 1),
                LayerSpec::Relu,
                LayerSpec::conv(128, 5, 2),
                LayerSpec::Relu,
                LayerSpec::maxpool(2),
                LayerSpec::Flatten,
                LayerSpec::Fc {
                    out_features: 10,
                    bias: false,
                },
            ],
        }
    }

    /// The same layer sequence at desk scale: one input channel,
    /// `size`×`size` images, 3×3 kernels and base widths `[enc, w, w, w]`.
    /// The last conv stays full width so a 1/8 co-submodel keeps more than
    /// a couple of filters.
    pub fn desk_base(size: usize, enc: usize, width: usize, num_classes: usize) -> Self {
        Self {
            input_shape: [1, size, size],
            num_classes,
            layers: vec![
                LayerSpec::conv(enc, 3, 1),
                LayerSpec::Relu,
                LayerSpec::conv(width, 3, 1),
                LayerSpec::Relu,
                LayerSpec::maxpool(2),
                LayerSpec::conv(width, 3, 1),
                LayerSpec::Relu,
                LayerSpec::conv(width, 3, 1),
                LayerSpec::Relu,
                LayerSpec::maxpool(2),
                LayerSpec::Flatten,
                LayerSpec::fc(num_classes),
            ],
        }
    }
}
