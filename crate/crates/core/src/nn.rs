//! Sequential networks with a recorded forward pass and reverse-mode
//! backward over that record.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::spec::{LayerSpec, ModelSpec};
use crate::scalar::Scalar;
use crate::tensor::ops;
use crate::tensor::{Parameter, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<S> {
    pub weight: Parameter<S>,
    pub bias: Option<Parameter<S>>,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<S> {
    /// `[in_features, out_features]`
    pub weight: Parameter<S>,
    pub bias: Option<Parameter<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<S> {
    Conv2d(Conv2d<S>),
    MaxPool2d { window: usize, stride: usize },
    Linear(Linear<S>),
    Relu,
    Flatten,
}

impl<S: Scalar> Layer<S> {
    fn params(&self) -> Vec<&Parameter<S>> {
        match self {
            Layer::Conv2d(c) => std::iter::once(&c.weight).chain(c.bias.as_ref()).collect(),
            Layer::Linear(l) => std::iter::once(&l.weight).chain(l.bias.as_ref()).collect(),
            _ => Vec::new(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<S>> {
        match self {
            Layer::Conv2d(c) => std::iter::once(&mut c.weight).chain(c.bias.as_mut()).collect(),
            Layer::Linear(l) => std::iter::once(&mut l.weight).chain(l.bias.as_mut()).collect(),
            _ => Vec::new(),
        }
    }

    fn forward(&self, x: &Tensor<S>) -> Result<(Tensor<S>, Saved<S>)> {
        match self {
            Layer::Conv2d(c) => {
                let y = ops::conv2d_forward(
                    x,
                    &c.weight.value,
                    c.bias.as_ref().map(|b| &b.value),
                    c.stride,
                    c.padding,
                )?;
                Ok((y, Saved::Input(x.clone())))
            }
            Layer::MaxPool2d { window, stride } => {
                let (y, arg) = ops::maxpool2d_forward(x, *window, *stride)?;
                Ok((y, Saved::Argmax(x.shape().to_vec(), arg)))
            }
            Layer::Linear(l) => {
                let y = ops::fc_forward(x, &l.weight.value, l.bias.as_ref().map(|b| &b.value))?;
                Ok((y, Saved::Input(x.clone())))
            }
            Layer::Relu => {
                let y = ops::relu_forward(x);
                Ok((y.clone(), Saved::Output(y)))
            }
            Layer::Flatten => {
                let n = x.shape()[0];
                let y = x.clone().reshape(vec![n, x.len() / n])?;
                Ok((y, Saved::Shape(x.shape().to_vec())))
            }
        }
    }

    fn backward(&mut self, saved: Saved<S>, grad: Tensor<S>, need_input: bool) -> Result<Option<Tensor<S>>> {
        match (self, saved) {
            (Layer::Conv2d(c), Saved::Input(x)) => {
                let g = ops::conv2d_backward(
                    &x,
                    &c.weight.value,
                    c.bias.is_some(),
                    c.stride,
                    c.padding,
                    &grad,
                    need_input,
                )?;
                c.weight.accumulate_grad(&g.weight);
                if let (Some(b), Some(gb)) = (c.bias.as_mut(), g.bias) {
                    b.accumulate_grad(&gb);
                }
                Ok(g.input)
            }
            (Layer::Linear(l), Saved::Input(x)) => {
                let g = ops::fc_backward(&x, &l.weight.value, l.bias.is_some(), &grad, need_input)?;
                l.weight.accumulate_grad(&g.weight);
                if let (Some(b), Some(gb)) = (l.bias.as_mut(), g.bias) {
                    b.accumulate_grad(&gb);
                }
                Ok(g.input)
            }
            (Layer::MaxPool2d { .. }, Saved::Argmax(shape, arg)) => {
                Ok(Some(ops::maxpool2d_backward(&shape, &arg, &grad)?))
            }
            (Layer::Relu, Saved::Output(y)) => Ok(Some(ops::relu_backward(&y, &grad))),
            (Layer::Flatten, Saved::Shape(shape)) => Ok(Some(grad.reshape(shape)?)),
            _ => unreachable!("tape entry does not match its layer"),
        }
    }
}

#[derive(Debug, Clone)]
enum Saved<S> {
    Input(Tensor<S>),
    Output(Tensor<S>),
    Argmax(Vec<usize>, Vec<usize>),
    Shape(Vec<usize>),
}

/// A stack of layers. `forward_train` records what backward needs; the
/// record is consumed by exactly one `backward` call.
#[derive(Debug, Clone)]
pub struct Network<S> {
    input_shape: Vec<usize>,
    layers: Vec<Layer<S>>,
    tape: Option<Vec<Saved<S>>>,
}

impl<S: Scalar> PartialEq for Network<S> {
    fn eq(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape && self.layers == other.layers
    }
}

impl<S: Scalar> Network<S> {
    /// Instantiate `layers` for per-sample inputs of `input_shape`. Weights
    /// are uniform in `±sqrt(1/fan_in)`; biases use the same bound.
    pub fn build<R: Rng + ?Sized>(input_shape: &[usize], layers: &[LayerSpec], rng: &mut R) -> Result<Self> {
        let mut cur = input_shape.to_vec();
        let mut out = Vec::with_capacity(layers.len());
        for (i, spec) in layers.iter().enumerate() {
            let next = spec.output_shape(i, &cur)?;
            let layer = match *spec {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    bias,
                } => {
                    let fan_in = cur[0] * kernel * kernel;
                    let bound = (1.0 / fan_in as f64).sqrt();
                    let weight = Tensor::uniform(vec![out_channels, cur[0], kernel, kernel], bound, rng);
                    let bias = bias.then(|| Parameter::new(Tensor::uniform(vec![out_channels], bound, rng)));
                    Layer::Conv2d(Conv2d {
                        weight: Parameter::new(weight),
                        bias,
                        stride,
                        padding,
                    })
                }
                LayerSpec::Fc { out_features, bias } => {
                    let bound = (1.0 / cur[0] as f64).sqrt();
                    let weight = Tensor::uniform(vec![cur[0], out_features], bound, rng);
                    let bias = bias.then(|| Parameter::new(Tensor::uniform(vec![out_features], bound, rng)));
                    Layer::Linear(Linear {
                        weight: Parameter::new(weight),
                        bias,
                    })
                }
                LayerSpec::Maxpool { window, stride } => Layer::MaxPool2d { window, stride },
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Flatten => Layer::Flatten,
            };
            out.push(layer);
            cur = next;
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            layers: out,
            tape: None,
        })
    }

    pub fn from_spec<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        Self::build(&spec.input_shape, &spec.layers, rng)
    }

    /// A network with no layers: forward is the identity.
    pub fn identity(input_shape: &[usize]) -> Self {
        Self {
            input_shape: input_shape.to_vec(),
            layers: Vec::new(),
            tape: None,
        }
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<S>] {
        &mut self.layers
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Split off layers `at..` into a second network, keeping `..at` here.
    pub fn split_off(&mut self, at: usize) -> Result<Network<S>> {
        let mid_shape = self.output_shape_after(at)?;
        let tail = self.layers.split_off(at);
        self.tape = None;
        Ok(Network {
            input_shape: mid_shape,
            layers: tail,
            tape: None,
        })
    }

    fn output_shape_after(&self, count: usize) -> Result<Vec<usize>> {
        let mut x = Tensor::<S>::zeros(
            std::iter::once(1)
                .chain(self.input_shape.iter().copied())
                .collect::<Vec<_>>(),
        );
        for l in &self.layers[..count] {
            x = l.forward(&x)?.0;
        }
        Ok(x.shape()[1..].to_vec())
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        self.output_shape_after(self.layers.len())
    }

    pub fn parameters(&self) -> Vec<&Parameter<S>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<S>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|p| p.numel()).sum()
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        for p in self.parameters_mut() {
            p.frozen = frozen;
            if frozen {
                p.zero_grad();
            }
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.parameters().iter().all(|p| p.frozen)
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    /// Inference: no record is kept.
    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for l in &self.layers {
            cur = l.forward(&cur)?.0;
        }
        Ok(cur)
    }

    /// Inference through the first `end` layers only.
    pub fn forward_until(&self, x: &Tensor<S>, end: usize) -> Result<Tensor<S>> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for l in &self.layers[..end] {
            cur = l.forward(&cur)?.0;
        }
        Ok(cur)
    }

    /// Forward pass that records intermediate values for `backward`.
    pub fn forward_train(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.check_input(x)?;
        let mut tape = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for l in &self.layers {
            let (y, saved) = l.forward(&cur)?;
            tape.push(saved);
            cur = y;
        }
        self.tape = Some(tape);
        Ok(cur)
    }

    /// Reverse pass over the last recorded forward. Gradients accumulate on
    /// trainable parameters; frozen ones are skipped. Returns the gradient
    /// with respect to the network input.
    pub fn backward(&mut self, grad: Tensor<S>) -> Result<Tensor<S>> {
        self.backward_impl(grad, true)
            .map(|g| g.expect("input gradient requested"))
    }

    /// Like `backward` but skips the input gradient of the first layer.
    pub fn backward_params(&mut self, grad: Tensor<S>) -> Result<()> {
        self.backward_impl(grad, false).map(|_| ())
    }

    fn backward_impl(&mut self, grad: Tensor<S>, need_input: bool) -> Result<Option<Tensor<S>>> {
        let tape = self.tape.take().ok_or(Error::NoForwardRecorded)?;
        let mut g = Some(grad);
        for (i, (layer, saved)) in self.layers.iter_mut().zip(tape).enumerate().rev() {
            let want = need_input || i > 0;
            let cur = g.take().expect("gradient flows until the first layer");
            g = layer.backward(saved, cur, want)?;
            if !want {
                break;
            }
        }
        Ok(g)
    }

    fn check_input(&self, x: &Tensor<S>) -> Result<()> {
        if x.shape().len() != self.input_shape.len() + 1 || x.shape()[1..] != self.input_shape[..] {
            return Err(Error::ShapeMismatch {
                op: "network input",
                expected: self.input_shape.clone(),
                got: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Recover the declarative description of this network.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Conv2d(c) => {
                    let s = c.weight.value.shape();
                    LayerSpec::Conv {
                        out_channels: s[0],
                        kernel: s[2],
                        stride: c.stride,
                        padding: c.padding,
                        bias: c.bias.is_some(),
                    }
                }
                Layer::Linear(fc) => LayerSpec::Fc {
                    out_features: fc.weight.value.shape()[1],
                    bias: fc.bias.is_some(),
                },
                Layer::MaxPool2d { window, stride } => LayerSpec::Maxpool {
                    window: *window,
                    stride: *stride,
                },
                Layer::Relu => LayerSpec::Relu,
                Layer::Flatten => LayerSpec::Flatten,
            })
            .collect()
    }

    /// Content hash of the architecture (input shape and layers).
    pub fn digest(&self) -> [u8; 8] {
        crate::model::spec::layers_digest(&self.input_shape, &self.layer_specs())
    }

    /// All parameter values in order, flattened.
    pub fn flat_values(&self) -> Vec<S> {
        self.parameters()
            .iter()
            .flat_map(|p| p.value.data().iter().copied())
            .collect()
    }

    /// Overwrite parameter values from a flat buffer produced by `flat_values`.
    pub fn set_flat_values(&mut self, values: &[S]) -> Result<()> {
        let total = self.param_count();
        if values.len() != total {
            return Err(Error::ShapeMismatch {
                op: "set_flat_values",
                expected: vec![total],
                got: vec![values.len()],
            });
        }
        let mut off = 0;
        for p in self.parameters_mut() {
            let n = p.numel();
            p.value.data_mut().copy_from_slice(&values[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Shapes of every parameter, in order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.parameters()
            .iter()
            .map(|p| p.value.shape().to_vec())
            .collect()
    }

    /// Hash-like fingerprint of all parameter bits, for isolation checks.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over the little-endian bytes of every value.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.flat_values() {
            for b in v.to_f64_lossy().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}
