//! Parameter and FLOP accounting.
//!
//! FLOPs are per sample: `2 × MACs` for conv and fc, one comparison per
//! window element for max pooling, nothing for ReLU and flatten.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::spec::LayerSpec;
use crate::model::DecoupledModel;
use crate::nn::Network;
use crate::scalar::Scalar;

/// Parameter and FLOP count of one layer given its per-sample input shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LayerCost {
    pub params: u64,
    pub flops: u64,
}

/// Closed-form cost of every layer in `layers` on inputs of `input_shape`.
pub fn layer_costs(input_shape: &[usize], layers: &[LayerSpec]) -> Result<Vec<LayerCost>> {
    let mut cur = input_shape.to_vec();
    let mut out = Vec::with_capacity(layers.len());
    for (i, l) in layers.iter().enumerate() {
        let next = l.output_shape(i, &cur)?;
        let cost = match *l {
            LayerSpec::Conv {
                out_channels,
                kernel,
                bias,
                ..
            } => {
                let weights = (out_channels * cur[0] * kernel * kernel) as u64;
                let cells = (next[1] * next[2]) as u64;
                LayerCost {
                    params: weights + if bias { out_channels as u64 } else { 0 },
                    flops: 2 * weights * cells,
                }
            }
            LayerSpec::Fc { out_features, bias } => {
                let weights = (cur[0] * out_features) as u64;
                LayerCost {
                    params: weights + if bias { out_features as u64 } else { 0 },
                    flops: 2 * weights,
                }
            }
            LayerSpec::Maxpool { window, .. } => LayerCost {
                params: 0,
                flops: (next.iter().product::<usize>() * window * window) as u64,
            },
            LayerSpec::Relu | LayerSpec::Flatten => LayerCost::default(),
        };
        out.push(cost);
        cur = next;
    }
    Ok(out)
}

pub fn count_params<S: Scalar>(net: &Network<S>) -> u64 {
    net.param_count() as u64
}

pub fn count_flops<S: Scalar>(net: &Network<S>) -> Result<u64> {
    Ok(layer_costs(net.input_shape(), &net.layer_specs())?
        .iter()
        .map(|c| c.flops)
        .sum())
}

/// Sizes of every part of a decoupled model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoupledSizes {
    pub encoder_params: u64,
    pub cloud_params: u64,
    pub co_params: u64,
    pub control_params: u64,
    pub encoder_flops: u64,
    pub cloud_flops: u64,
    pub co_flops: u64,
    pub control_flops: u64,
}

impl DecoupledSizes {
    pub fn of<S: Scalar>(dm: &DecoupledModel<S>) -> Self {
        let flops = |n: &Network<S>| count_flops(n).expect("instantiated networks are chain-compatible");
        Self {
            encoder_params: count_params(&dm.encoder),
            cloud_params: count_params(&dm.cloud),
            co_params: count_params(&dm.co),
            control_params: count_params(&dm.control),
            encoder_flops: flops(&dm.encoder),
            cloud_flops: flops(&dm.cloud),
            co_flops: flops(&dm.co),
            control_flops: flops(&dm.control),
        }
    }

    /// What the device holds: encoder, co-submodel and control model.
    pub fn device_params(&self) -> u64 {
        self.encoder_params + self.co_params + self.control_params
    }

    /// FLOPs of one device-side inference: encoder once, then both heads.
    pub fn device_flops(&self) -> u64 {
        self.encoder_flops + self.co_flops + self.control_flops
    }

    /// What the cloud serves: encoder, cloud submodel and co-submodel.
    pub fn decoupled_params(&self) -> u64 {
        self.encoder_params + self.cloud_params + self.co_params
    }

    pub fn decoupled_flops(&self) -> u64 {
        self.encoder_flops + self.cloud_flops + self.co_flops
    }

    pub fn cloud_side_params(&self) -> u64 {
        self.encoder_params + self.cloud_params
    }
}
