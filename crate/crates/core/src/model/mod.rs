//! Architecture specs, vertical splitting and the decoupled model.

pub mod checkpoint;
pub mod count;
pub mod spec;

use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Layer, Network};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
pub use spec::{LayerSpec, ModelSpec};

/// Exact fraction used for filter ratios.
pub type Alpha = Ratio<u64>;

/// Deterministic RNG for one named part of a model built from `seed`.
pub fn part_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) mod streams {
    pub const BASE: u64 = 1;
    pub const ENCODER: u64 = 2;
    pub const CLOUD: u64 = 3;
    pub const CO: u64 = 4;
    pub const CONTROL: u64 = 5;
}

/// Instantiate a base model from its spec.
pub fn build_model<S: Scalar>(spec: &ModelSpec, seed: u64) -> Result<Network<S>> {
    Network::from_spec(spec, &mut part_rng(seed, streams::BASE))
}

/// Parse `"7/8"`, `"0.125"` or `"1"` into an exact fraction.
pub fn parse_alpha(text: &str) -> Result<Alpha> {
    let bad = || Error::SplitConstraint(format!("cannot parse {text:?} as a fraction"));
    let t = text.trim();
    if let Some((n, d)) = t.split_once('/') {
        let n: u64 = n.trim().parse().map_err(|_| bad())?;
        let d: u64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Alpha::new(n, d));
    }
    let (int, frac) = t.split_once('.').unwrap_or((t, ""));
    if frac.len() > 18 || (int.is_empty() && frac.is_empty()) {
        return Err(bad());
    }
    let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
    let den = 10u64.pow(frac.len() as u32);
    let num: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
    Ok(Alpha::new(int * den + num, den))
}

/// Serde adapter writing fractions as `"n/d"` and reading strings or numbers.
pub mod alpha_serde {
    use super::{parse_alpha, Alpha};
    use serde::{de, Deserializer, Serializer};

    pub fn serialize<Z: Serializer>(a: &Alpha, s: Z) -> Result<Z::Ok, Z::Error> {
        s.serialize_str(&format!("{}/{}", a.numer(), a.denom()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Alpha, D::Error> {
        struct V;
        impl de::Visitor<'_> for V {
            type Value = Alpha;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a fraction such as \"7/8\" or a number such as 0.125")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Alpha, E> {
                parse_alpha(v).map_err(E::custom)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Alpha, E> {
                Ok(Alpha::from_integer(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Alpha, E> {
                u64::try_from(v)
                    .map(Alpha::from_integer)
                    .map_err(|_| E::custom("fraction must be non-negative"))
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Alpha, E> {
                // The shortest round-trip decimal is what the user wrote.
                parse_alpha(&format!("{v}")).map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(with = "alpha_serde")]
    pub alpha_cl: Alpha,
    #[serde(with = "alpha_serde")]
    pub alpha_co: Alpha,
    /// Number of bottom parametric layers (with their activations and
    /// pooling) shared by all submodels.
    pub shared_prefix_len: usize,
    pub heterogeneous: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            alpha_cl: Alpha::new(7, 8),
            alpha_co: Alpha::new(1, 8),
            shared_prefix_len: 1,
            heterogeneous: false,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, a) in [("alpha_cl", self.alpha_cl), ("alpha_co", self.alpha_co)] {
            if *a.numer() == 0 || a > Alpha::from_integer(1) {
                return Err(Error::SplitConstraint(format!("{name} = {a} must lie in (0, 1]")));
            }
        }
        let budget = self.alpha_cl * self.alpha_cl + self.alpha_co * self.alpha_co;
        if budget > Alpha::from_integer(1) {
            return Err(Error::SplitConstraint(format!(
                "α_cl² + α_co² ≤ 1 violated: ({})² + ({})² = {}",
                self.alpha_cl, self.alpha_co, budget
            )));
        }
        if self.heterogeneous && self.shared_prefix_len != 0 {
            return Err(Error::SplitConstraint(
                "heterogeneous mode shares no encoder (shared_prefix_len must be 0)".into(),
            ));
        }
        Ok(())
    }
}

/// `floor(alpha * n)`, at least 1.
pub fn scaled_width(n: usize, alpha: Alpha) -> usize {
    let w = (Alpha::from_integer(n as u64) * alpha).to_integer() as usize;
    w.max(1)
}

/// Index in `layers` where the shared prefix ends: after the `shared`-th
/// parametric layer and the non-parametric layers that follow it.
pub fn shared_cut(layers: &[LayerSpec], shared: usize) -> usize {
    if shared == 0 {
        return 0;
    }
    let mut seen = 0;
    for (i, l) in layers.iter().enumerate() {
        if l.is_parametric() {
            if seen == shared {
                return i;
            }
            seen += 1;
        }
    }
    layers.len()
}

/// Head layers of one submodel: every conv and hidden fc narrowed by `alpha`,
/// the classifier kept at `num_classes`.
fn scaled_head(head: &[LayerSpec], alpha: Alpha) -> Vec<LayerSpec> {
    let last_fc = head.iter().rposition(|l| matches!(l, LayerSpec::Fc { .. }));
    head.iter()
        .enumerate()
        .map(|(i, l)| match *l {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                padding,
                bias,
            } => LayerSpec::Conv {
                out_channels: scaled_width(out_channels, alpha),
                kernel,
                stride,
                padding,
                bias,
            },
            LayerSpec::Fc { out_features, bias } if Some(i) != last_fc => LayerSpec::Fc {
                out_features: scaled_width(out_features, alpha),
                bias,
            },
            ref other => other.clone(),
        })
        .collect()
}

/// Architecture of a decoupled model, kept alongside the instantiated parts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoupledLayout {
    pub input_shape: [usize; 3],
    pub num_classes: usize,
    pub encoder: Vec<LayerSpec>,
    pub cloud: Vec<LayerSpec>,
    pub co: Vec<LayerSpec>,
    pub heterogeneous: bool,
}

impl DecoupledLayout {
    /// Derive the layout of a vertical split of `base`.
    pub fn split(base: &ModelSpec, cfg: &SplitConfig) -> Result<Self> {
        cfg.validate()?;
        base.validate()?;
        if cfg.heterogeneous {
            return Err(Error::SplitConstraint(
                "heterogeneous layouts come from two specs, see build_heterogeneous".into(),
            ));
        }
        let cut = shared_cut(&base.layers, cfg.shared_prefix_len);
        if cut >= base.layers.len() || !base.layers[cut..].iter().any(|l| l.is_parametric()) {
            return Err(Error::SplitConstraint(format!(
                "shared prefix of {} layers leaves no head to split",
                cfg.shared_prefix_len
            )));
        }
        let head = &base.layers[cut..];
        for (i, l) in head.iter().enumerate() {
            if let LayerSpec::Conv { out_channels, .. } = *l {
                let smallest = cfg.alpha_co.min(cfg.alpha_cl);
                if Alpha::from_integer(out_channels as u64) * smallest < Alpha::from_integer(1) {
                    return Err(Error::SplitConstraint(format!(
                        "layer {} has {out_channels} filters, fewer than 1/{smallest} needed for a non-empty split",
                        cut + i
                    )));
                }
            }
        }
        Ok(Self {
            input_shape: base.input_shape,
            num_classes: base.num_classes,
            encoder: base.layers[..cut].to_vec(),
            cloud: scaled_head(head, cfg.alpha_cl),
            co: scaled_head(head, cfg.alpha_co),
            heterogeneous: false,
        })
    }

    pub fn heterogeneous(cloud: &ModelSpec, co: &ModelSpec) -> Result<Self> {
        cloud.validate()?;
        co.validate()?;
        if cloud.num_classes != co.num_classes {
            return Err(Error::ClassCountMismatch {
                cloud: cloud.num_classes,
                co: co.num_classes,
            });
        }
        if cloud.input_shape != co.input_shape {
            return Err(Error::ShapeMismatch {
                op: "build_heterogeneous",
                expected: cloud.input_shape.to_vec(),
                got: co.input_shape.to_vec(),
            });
        }
        Ok(Self {
            input_shape: cloud.input_shape,
            num_classes: cloud.num_classes,
            encoder: Vec::new(),
            cloud: cloud.layers.clone(),
            co: co.layers.clone(),
            heterogeneous: true,
        })
    }

    /// Per-sample shape of the shared encoder output.
    pub fn encoder_output_shape(&self) -> Result<Vec<usize>> {
        let spec = ModelSpec {
            input_shape: self.input_shape,
            num_classes: self.num_classes,
            layers: self.encoder.clone(),
        };
        Ok(spec.shapes()?.last().cloned().unwrap_or_else(|| self.input_shape.to_vec()))
    }

    /// The small standalone model (encoder followed by the co head).
    pub fn small_spec(&self) -> ModelSpec {
        ModelSpec {
            input_shape: self.input_shape,
            num_classes: self.num_classes,
            layers: self.encoder.iter().chain(&self.co).cloned().collect(),
        }
    }

    pub fn digest(&self) -> [u8; 8] {
        let json = serde_json::to_vec(self).expect("layout serializes");
        let h = <sha2::Sha256 as sha2::Digest>::digest(&json);
        let mut d = [0u8; 8];
        d.copy_from_slice(&h[..8]);
        d
    }
}

/// Training progress of a decoupled model, used to enforce phase order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Initialized,
    CloudTrained,
    Distilled,
}

/// Shared encoder, cloud submodel, co-submodel and control model.
///
/// The cloud and co heads never exchange activations: each reads only the
/// encoder output, and their logits meet only by summation.
#[derive(Debug, Clone)]
pub struct DecoupledModel<S> {
    pub layout: DecoupledLayout,
    pub encoder: Network<S>,
    pub cloud: Network<S>,
    pub co: Network<S>,
    pub control: Network<S>,
    pub stage: Stage,
}

/// Which logits `evaluate` and `logits` combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMode {
    /// cloud + co
    Decoupled,
    /// control + co
    DeviceSide,
    CloudOnly,
    CoOnly,
}

impl<S: Scalar> PartialEq for DecoupledModel<S> {
    fn eq(&self, other: &Self) -> bool {
        self.layout == other.layout
            && self.encoder == other.encoder
            && self.cloud == other.cloud
            && self.co == other.co
            && self.control == other.control
            && self.stage == other.stage
    }
}

impl<S: Scalar> DecoupledModel<S> {
    pub fn from_layout(layout: DecoupledLayout, seed: u64) -> Result<Self> {
        let enc_shape = layout.encoder_output_shape()?;
        let encoder = Network::build(
            &layout.input_shape,
            &layout.encoder,
            &mut part_rng(seed, streams::ENCODER),
        )?;
        let cloud = Network::build(&enc_shape, &layout.cloud, &mut part_rng(seed, streams::CLOUD))?;
        let co = Network::build(&enc_shape, &layout.co, &mut part_rng(seed, streams::CO))?;
        let control = Network::build(&enc_shape, &layout.co, &mut part_rng(seed, streams::CONTROL))?;
        for (name, head) in [("cloud", &cloud), ("co", &co)] {
            if head.output_shape()? != [layout.num_classes] {
                return Err(Error::IncompatibleLayers {
                    layer: head.layers().len().saturating_sub(1),
                    reason: format!("{name} head must end in {} logits", layout.num_classes),
                });
            }
            if !matches!(head.layers().last(), Some(Layer::Linear(_))) {
                return Err(Error::IncompatibleLayers {
                    layer: head.layers().len().saturating_sub(1),
                    reason: format!("{name} head must end in an fc classifier"),
                });
            }
        }
        Ok(Self {
            layout,
            encoder,
            cloud,
            co,
            control,
            stage: Stage::Initialized,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.layout.num_classes
    }

    pub fn features(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.encoder.forward(x)
    }

    pub fn cloud_logits(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.cloud.forward(&self.features(x)?)
    }

    pub fn co_logits(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.co.forward(&self.features(x)?)
    }

    pub fn control_logits(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.control.forward(&self.features(x)?)
    }

    pub fn logits(&self, x: &Tensor<S>, mode: InferenceMode) -> Result<Tensor<S>> {
        let f = self.features(x)?;
        match mode {
            InferenceMode::Decoupled => self.cloud.forward(&f)?.add(&self.co.forward(&f)?),
            InferenceMode::DeviceSide => self.control.forward(&f)?.add(&self.co.forward(&f)?),
            InferenceMode::CloudOnly => self.cloud.forward(&f),
            InferenceMode::CoOnly => self.co.forward(&f),
        }
    }

    /// Index of the co-submodel's final classifier layer.
    pub fn co_classifier_index(&self) -> usize {
        self.co.layers().len() - 1
    }

    /// Output of the co-submodel's high-level encoder (all layers before the
    /// classifier), flattened per sample.
    pub fn co_high_level(&self, features: &Tensor<S>) -> Result<Tensor<S>> {
        let cur = self.co.forward_until(features, self.co_classifier_index())?;
        let n = cur.shape()[0];
        let w = cur.len() / n;
        cur.reshape(vec![n, w])
    }

    /// The co-submodel classifier as a standalone network.
    pub fn co_classifier(&self) -> Result<Network<S>> {
        let mut head = self.co.clone();
        head.split_off(self.co_classifier_index())
    }

    pub fn set_co_classifier(&mut self, classifier: &Network<S>) -> Result<()> {
        let last = self.co_classifier_index();
        match (&mut self.co.layers_mut()[last], classifier.layers()) {
            (Layer::Linear(dst), [Layer::Linear(src)]) if dst.weight.value.shape() == src.weight.value.shape() => {
                *dst = src.clone();
                Ok(())
            }
            _ => Err(Error::ShapeMismatch {
                op: "set_co_classifier",
                expected: self.co.param_shapes().last().cloned().unwrap_or_default(),
                got: classifier.param_shapes().first().cloned().unwrap_or_default(),
            }),
        }
    }

    pub fn sizes(&self) -> count::DecoupledSizes {
        count::DecoupledSizes::of(self)
    }
}

/// Split `base` vertically into a decoupled model.
pub fn split_model<S: Scalar>(base: &ModelSpec, cfg: &SplitConfig, seed: u64) -> Result<DecoupledModel<S>> {
    DecoupledModel::from_layout(DecoupledLayout::split(base, cfg)?, seed)
}

/// Decoupled model whose cloud and co heads follow different backbones and
/// share no encoder.
pub fn build_heterogeneous<S: Scalar>(cloud: &ModelSpec, co: &ModelSpec, seed: u64) -> Result<DecoupledModel<S>> {
    DecoupledModel::from_layout(DecoupledLayout::heterogeneous(cloud, co)?, seed)
}
