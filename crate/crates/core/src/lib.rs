//! Device-cloud collaborative learning over vertically split CNNs.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] and [`nn`]: a small deterministic tensor engine with
//!   reverse-mode gradients for conv / max-pool / fc / ReLU networks.
//! * [`model`]: declarative architectures, vertical splitting into a shared
//!   encoder, a cloud submodel, a co-submodel and a control model, size and
//!   FLOPs accounting, and checkpoints.
//! * [`data`]: synthetic datasets, the on-disk dataset format, and the
//!   class-skew device/cloud partition.
//! * [`training`]: the four training phases and evaluation.
//! * [`simnet`]: the two-node simulation with byte-exact channel accounting,
//!   plus every baseline and ablation.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what the experiments use.

pub mod data;
pub mod error;
pub mod model;
pub mod nn;
pub mod scalar;
pub mod simnet;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = tensor::Tensor<f64>;
pub type Parameter = tensor::Parameter<f64>;
pub type Network = nn::Network<f64>;
pub type DecoupledModel = model::DecoupledModel<f64>;
pub type LabeledDataset = data::LabeledDataset<f64>;
pub type PartitionedDataset = data::PartitionedDataset<f64>;
