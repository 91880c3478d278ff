//! The four training phases as local procedures, plus evaluation.
//!
//! Frozen parts never change once their phase is done, so their outputs are
//! computed once per dataset and cached: encoder features and teacher logits
//! for distillation, encoder features and guide logits for co-submodel
//! training, high-level features for classifier finetuning.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{part_rng, DecoupledModel, InferenceMode, Stage};
use crate::nn::Network;
use crate::scalar::Scalar;
use crate::tensor::loss::{mse_loss, softmax_cross_entropy};
use crate::tensor::optim::{OptimizerKind, OptimizerState};
use crate::tensor::Tensor;

/// Inference is chunked so large sets never materialize one huge batch.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseHyperparams {
    pub learning_rate: f64,
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
}

fn default_batch() -> usize {
    32
}

impl PhaseHyperparams {
    pub fn sgd(learning_rate: f64, epochs: usize) -> Self {
        Self {
            learning_rate,
            epochs,
            batch_size: default_batch(),
            optimizer: OptimizerKind::Sgd,
        }
    }

    pub fn adam(learning_rate: f64, epochs: usize) -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            ..Self::sgd(learning_rate, epochs)
        }
    }

    pub fn validate(&self, phase: &str) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || self.batch_size == 0 {
            return Err(Error::InvalidArgument {
                op: "PhaseHyperparams",
                reason: format!(
                    "{phase}: learning_rate must be positive and batch_size nonzero (got {}, {})",
                    self.learning_rate, self.batch_size
                ),
            });
        }
        Ok(())
    }

    fn optimizer<S: Scalar>(&self) -> OptimizerState<S> {
        OptimizerState::new(self.optimizer, self.learning_rate)
    }
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseReport {
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
}

/// Seeded minibatch order. Every pass over the data is a fresh permutation;
/// the last batch of a pass may be short.
#[derive(Debug, Clone)]
pub struct Batcher {
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl Batcher {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        let mut rng = part_rng(seed, 0x4241_5443);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self {
            order,
            pos: 0,
            batch_size: batch_size.max(1),
            rng,
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.pos >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let b = self.order[self.pos..end].to_vec();
        self.pos = end;
        b
    }
}

/// Rows `idx` of a tensor along its leading axis.
pub fn gather<S: Scalar>(t: &Tensor<S>, idx: &[usize]) -> Tensor<S> {
    let row = t.len() / t.shape()[0];
    let mut data = Vec::with_capacity(idx.len() * row);
    for &i in idx {
        data.extend_from_slice(t.row(i));
    }
    let mut shape = t.shape().to_vec();
    shape[0] = idx.len();
    Tensor::new(shape, data).expect("gathered rows keep their width")
}

/// Apply `f` to the whole dataset in chunks and stack the results.
fn map_dataset<S: Scalar>(
    data: &LabeledDataset<S>,
    mut f: impl FnMut(&Tensor<S>) -> Result<Tensor<S>>,
) -> Result<Tensor<S>> {
    let mut out: Vec<S> = Vec::new();
    let mut tail: Option<Vec<usize>> = None;
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (x, _) = data.batch(chunk);
        let y = f(&x)?;
        tail.get_or_insert_with(|| y.shape()[1..].to_vec());
        out.extend_from_slice(y.data());
    }
    let mut shape = vec![data.len()];
    shape.extend(tail.unwrap_or_default());
    Tensor::new(shape, out)
}

fn require_nonempty<S: Scalar>(data: &LabeledDataset<S>, what: &'static str) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset(what));
    }
    Ok(())
}

fn as_matrix<S: Scalar>(t: Tensor<S>) -> Result<Tensor<S>> {
    let n = t.shape()[0];
    let w = t.len() / n.max(1);
    t.reshape(vec![n, w])
}

/// Cross-entropy on `guide + co` logits. This is the co-submodel loss; with
/// no guide it is plain cross-entropy.
pub fn summed_logit_loss<S: Scalar>(
    guide: Option<&Tensor<S>>,
    co: &Tensor<S>,
    labels: &[usize],
) -> Result<(S, Tensor<S>)> {
    match guide {
        Some(g) => softmax_cross_entropy(&g.add(co)?, labels),
        None => softmax_cross_entropy(co, labels),
    }
}

/// Distillation loss: MSE between teacher and student logits.
pub fn distillation_loss<S: Scalar>(teacher: &Tensor<S>, student: &Tensor<S>) -> Result<(S, Tensor<S>)> {
    mse_loss(student, teacher)
}

/// Plain cross-entropy training of a whole network on raw samples.
pub fn train_network<S: Scalar>(
    net: &mut Network<S>,
    data: &LabeledDataset<S>,
    hp: &PhaseHyperparams,
    seed: u64,
) -> Result<PhaseReport> {
    hp.validate("train_network")?;
    require_nonempty(data, "train_network")?;
    let mut batcher = Batcher::new(data.len(), hp.batch_size, seed);
    let mut opt = hp.optimizer();
    let mut report = PhaseReport::default();
    for _ in 0..hp.epochs {
        let steps = batcher.steps_per_epoch();
        let loss = train_network_steps(net, data, &mut batcher, &mut opt, steps)?;
        report.epoch_losses.push(loss);
        report.steps += steps as u64;
    }
    Ok(report)
}

/// `steps` minibatch steps of plain cross-entropy training; returns the
/// sample-weighted mean loss.
pub fn train_network_steps<S: Scalar>(
    net: &mut Network<S>,
    data: &LabeledDataset<S>,
    batcher: &mut Batcher,
    opt: &mut OptimizerState<S>,
    steps: usize,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut seen = 0usize;
    for _ in 0..steps {
        let idx = batcher.next_batch();
        let (x, y) = data.batch(&idx);
        let logits = net.forward_train(&x)?;
        let (loss, g) = softmax_cross_entropy(&logits, &y)?;
        net.backward_params(g)?;
        opt.step(&mut net.parameters_mut())?;
        sum += loss.to_f64_lossy() * idx.len() as f64;
        seen += idx.len();
    }
    Ok(if seen == 0 { 0.0 } else { sum / seen as f64 })
}

/// Phase 1: train the shared encoder and the cloud submodel with
/// cross-entropy on the cloud logits alone. Both are frozen afterwards.
pub fn train_cloud_submodel<S: Scalar>(
    dm: &mut DecoupledModel<S>,
    cloud_train: &LabeledDataset<S>,
    hp: &PhaseHyperparams,
    seed: u64,
) -> Result<PhaseReport> {
    hp.validate("train_cloud_submodel")?;
    require_nonempty(cloud_train, "train_cloud_submodel")?;
    if dm.stage != Stage::Initialized {
        return Err(Error::PhaseContract(format!(
            "cloud training expects a fresh model, found stage {:?}",
            dm.stage
        )));
    }
    dm.encoder.set_frozen(false);
    dm.cloud.set_frozen(false);
    let mut batcher = Batcher::new(cloud_train.len(), hp.batch_size, seed);
    let mut opt = hp.optimizer();
    let mut report = PhaseReport::default();
    for _ in 0..hp.epochs {
        let (mut sum, mut seen) = (0.0, 0usize);
        for _ in 0..batcher.steps_per_epoch() {
            let idx = batcher.next_batch();
            let (x, y) = cloud_train.batch(&idx);
            let f = dm.encoder.forward_train(&x)?;
            let logits = dm.cloud.forward_train(&f)?;
            let (loss, g) = softmax_cross_entropy(&logits, &y)?;
            let gf = dm.cloud.backward(g)?;
            dm.encoder.backward_params(gf)?;
            let mut params = dm.encoder.parameters_mut();
            params.extend(dm.cloud.parameters_mut());
            opt.step(&mut params)?;
            sum += loss.to_f64_lossy() * idx.len() as f64;
            seen += idx.len();
            report.steps += 1;
        }
        report.epoch_losses.push(sum / seen as f64);
    }
    dm.encoder.set_frozen(true);
    dm.cloud.set_frozen(true);
    dm.stage = Stage::CloudTrained;
    Ok(report)
}

/// Phase 2: fit the control model to the frozen cloud submodel's logits by
/// MSE over the cloud samples. The control model is frozen afterwards.
pub fn distill_control<S: Scalar>(
    dm: &mut DecoupledModel<S>,
    cloud_train: &LabeledDataset<S>,
    hp: &PhaseHyperparams,
    seed: u64,
) -> Result<PhaseReport> {
    hp.validate("distill_control")?;
    require_nonempty(cloud_train, "distill_control")?;
    if dm.stage != Stage::CloudTrained {
        return Err(Error::PhaseContract(format!(
            "distillation requires a cloud-trained model, found stage {:?}",
            dm.stage
        )));
    }
    if !dm.encoder.is_frozen() || !dm.cloud.is_frozen() {
        return Err(Error::PhaseContract(
            "encoder and cloud submodel must be frozen during distillation".into(),
        ));
    }
    let feats = map_dataset(cloud_train, |x| dm.features(x))?;
    let teacher = map_dataset(cloud_train, |x| dm.cloud_logits(x))?;
    dm.control.set_frozen(false);
    let mut batcher = Batcher::new(cloud_train.len(), hp.batch_size, seed);
    let mut opt = hp.optimizer();
    let mut report = PhaseReport::default();
    for _ in 0..hp.epochs {
        let (mut sum, mut seen) = (0.0, 0usize);
        for _ in 0..batcher.steps_per_epoch() {
            let idx = batcher.next_batch();
            let student = dm.control.forward_train(&gather(&feats, &idx))?;
            let (loss, g) = distillation_loss(&gather(&teacher, &idx), &student)?;
            dm.control.backward_params(g)?;
            opt.step(&mut dm.control.parameters_mut())?;
            sum += loss.to_f64_lossy() * idx.len() as f64;
            seen += idx.len();
            report.steps += 1;
        }
        report.epoch_losses.push(sum / seen as f64);
    }
    dm.control.set_frozen(true);
    dm.stage = Stage::Distilled;
    Ok(report)
}

/// Logits added to the co-submodel's output in the co-submodel loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guide {
    /// The distilled control model (DC-CCL).
    Control,
    /// The real cloud submodel (the decoupled-model baselines).
    Cloud,
    /// Nothing: plain cross-entropy on the co logits (control ablation).
    None,
}

/// One party's local data prepared for co-submodel training: frozen encoder
/// features, frozen guide logits, labels and a private batch order.
#[derive(Debug, Clone)]
pub struct CoTrainingSet<S> {
    features: Tensor<S>,
    guide_logits: Option<Tensor<S>>,
    guide: Guide,
    labels: Vec<usize>,
    batcher: Batcher,
}

impl<S: Scalar> CoTrainingSet<S> {
    pub fn new(
        dm: &DecoupledModel<S>,
        data: &LabeledDataset<S>,
        guide: Guide,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self> {
        require_nonempty(data, "co-submodel training")?;
        check_guide_ready(dm, guide)?;
        let features = map_dataset(data, |x| dm.features(x))?;
        let guide_logits = match guide {
            Guide::Control => Some(map_dataset(data, |x| dm.control_logits(x))?),
            Guide::Cloud => Some(map_dataset(data, |x| dm.cloud_logits(x))?),
            Guide::None => None,
        };
        Ok(Self {
            features,
            guide_logits,
            guide,
            labels: data.labels().to_vec(),
            batcher: Batcher::new(data.len(), batch_size, seed),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn guide(&self) -> Guide {
        self.guide
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.batcher.steps_per_epoch()
    }
}

fn check_guide_ready<S: Scalar>(dm: &DecoupledModel<S>, guide: Guide) -> Result<()> {
    if !dm.encoder.is_frozen() {
        return Err(Error::PhaseContract(
            "the shared encoder must be frozen during co-submodel training".into(),
        ));
    }
    match guide {
        Guide::Control if dm.stage < Stage::Distilled => Err(Error::PhaseContract(
            "co-submodel training under the control model requires distillation first".into(),
        )),
        Guide::Control if !dm.control.is_frozen() => Err(Error::PhaseContract(
            "control model is not frozen".into(),
        )),
        Guide::Cloud | Guide::None if dm.stage < Stage::CloudTrained => Err(Error::PhaseContract(
            "co-submodel training requires a cloud-trained model".into(),
        )),
        Guide::Cloud if !dm.cloud.is_frozen() => Err(Error::PhaseContract(
            "cloud submodel is not frozen".into(),
        )),
        _ => Ok(()),
    }
}

/// Result of one party's local co-submodel training.
#[derive(Debug, Clone, PartialEq)]
pub struct CoUpdate<S> {
    /// New minus old co-submodel parameters, flattened.
    pub delta: Vec<S>,
    /// Sample-weighted mean loss over the steps taken.
    pub mean_loss: f64,
    pub steps: usize,
}

/// Phase 3: `steps` minibatch steps on the co-submodel only, with loss
/// `CE(guide_logits + co_logits, y)`. The encoder and guide must be frozen.
pub fn local_train_co<S: Scalar>(
    dm: &mut DecoupledModel<S>,
    local: &mut CoTrainingSet<S>,
    hp: &PhaseHyperparams,
    steps: usize,
) -> Result<CoUpdate<S>> {
    hp.validate("local_train_co")?;
    check_guide_ready(dm, local.guide)?;
    let before = dm.co.flat_values();
    let mut opt = hp.optimizer();
    let (mut sum, mut seen) = (0.0, 0usize);
    for _ in 0..steps {
        let idx = local.batcher.next_batch();
        let y: Vec<usize> = idx.iter().map(|&i| local.labels[i]).collect();
        let co = dm.co.forward_train(&gather(&local.features, &idx))?;
        let guide = local.guide_logits.as_ref().map(|g| gather(g, &idx));
        let (loss, g) = summed_logit_loss(guide.as_ref(), &co, &y)?;
        dm.co.backward_params(g)?;
        opt.step(&mut dm.co.parameters_mut())?;
        sum += loss.to_f64_lossy() * idx.len() as f64;
        seen += idx.len();
    }
    let delta = dm
        .co
        .flat_values()
        .into_iter()
        .zip(before)
        .map(|(a, b)| a - b)
        .collect();
    Ok(CoUpdate {
        delta,
        mean_loss: if seen == 0 { 0.0 } else { sum / seen as f64 },
        steps,
    })
}

/// Output of the co-submodel's high-level encoder for one sample, with the
/// frozen guide logits cached alongside it.
#[derive(Debug, Clone, PartialEq)]
pub struct HighLevelFeature<S> {
    pub vector: Vec<S>,
    pub guide_logits: Option<Vec<S>>,
    pub label: usize,
}

impl<S> HighLevelFeature<S> {
    /// Upload cost under the 64-bit float convention: feature floats, guide
    /// floats, and a u32 label.
    pub fn byte_size(&self) -> u64 {
        let floats = self.vector.len() + self.guide_logits.as_ref().map_or(0, Vec::len);
        8 * floats as u64 + 4
    }
}

/// Split a feature tensor and guide tensor into per-sample records.
fn to_records<S: Scalar>(
    feats: &Tensor<S>,
    guide: Option<&Tensor<S>>,
    labels: &[usize],
) -> Vec<HighLevelFeature<S>> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &label)| HighLevelFeature {
            vector: feats.row(i).to_vec(),
            guide_logits: guide.map(|g| g.row(i).to_vec()),
            label,
        })
        .collect()
}

/// High-level co-submodel features for every sample of `data`.
pub fn high_level_features<S: Scalar>(
    dm: &DecoupledModel<S>,
    data: &LabeledDataset<S>,
    guide: Guide,
) -> Result<Vec<HighLevelFeature<S>>> {
    check_guide_ready(dm, guide)?;
    let feats = map_dataset(data, |x| dm.co_high_level(&dm.features(x)?))?;
    let guide_logits = match guide {
        Guide::Control => Some(map_dataset(data, |x| dm.control_logits(x))?),
        Guide::Cloud => Some(map_dataset(data, |x| dm.cloud_logits(x))?),
        Guide::None => None,
    };
    Ok(to_records(&feats, guide_logits.as_ref(), data.labels()))
}

/// Pre-classifier features of a plain network (all layers but the last).
pub fn network_features<S: Scalar>(net: &Network<S>, data: &LabeledDataset<S>) -> Result<Vec<HighLevelFeature<S>>> {
    let last = net.layers().len().saturating_sub(1);
    let feats = map_dataset(data, |x| as_matrix(net.forward_until(x, last)?))?;
    Ok(to_records(&feats, None, data.labels()))
}

/// Train a single-fc classifier network on cached features, with the cached
/// guide logits added to its output as in phase 3.
pub fn finetune_linear<S: Scalar>(
    classifier: &mut Network<S>,
    features: &[HighLevelFeature<S>],
    hp: &PhaseHyperparams,
    seed: u64,
) -> Result<PhaseReport> {
    hp.validate("finetune_classifier")?;
    if features.is_empty() {
        return Err(Error::EmptyDataset("finetune_classifier"));
    }
    let width = classifier.input_shape().iter().product::<usize>();
    if let Some(bad) = features.iter().find(|f| f.vector.len() != width) {
        return Err(Error::ShapeMismatch {
            op: "finetune_classifier",
            expected: vec![width],
            got: vec![bad.vector.len()],
        });
    }
    let k = classifier.output_shape()?.iter().product::<usize>();
    if features
        .iter()
        .any(|f| f.guide_logits.as_ref().is_some_and(|g| g.len() != k))
    {
        return Err(Error::ShapeMismatch {
            op: "finetune_classifier guide",
            expected: vec![k],
            got: vec![],
        });
    }
    let has_guide = features[0].guide_logits.is_some();
    if features.iter().any(|f| f.guide_logits.is_some() != has_guide) {
        return Err(Error::InvalidArgument {
            op: "finetune_classifier",
            reason: "features mix guided and unguided records".into(),
        });
    }
    let n = features.len();
    let x = Tensor::new(vec![n, width], features.iter().flat_map(|f| f.vector.iter().copied()).collect())?;
    let guide = if has_guide {
        Some(Tensor::new(
            vec![n, k],
            features
                .iter()
                .flat_map(|f| f.guide_logits.as_ref().expect("checked").iter().copied())
                .collect(),
        )?)
    } else {
        None
    };
    let labels: Vec<usize> = features.iter().map(|f| f.label).collect();
    classifier.set_frozen(false);
    let mut batcher = Batcher::new(n, hp.batch_size, seed);
    let mut opt = hp.optimizer();
    let mut report = PhaseReport::default();
    for _ in 0..hp.epochs {
        let (mut sum, mut seen) = (0.0, 0usize);
        for _ in 0..batcher.steps_per_epoch() {
            let idx = batcher.next_batch();
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let out = classifier.forward_train(&gather(&x, &idx))?;
            let g_logits = guide.as_ref().map(|g| gather(g, &idx));
            let (loss, g) = summed_logit_loss(g_logits.as_ref(), &out, &y)?;
            classifier.backward_params(g)?;
            opt.step(&mut classifier.parameters_mut())?;
            sum += loss.to_f64_lossy() * idx.len() as f64;
            seen += idx.len();
            report.steps += 1;
        }
        report.epoch_losses.push(sum / seen as f64);
    }
    Ok(report)
}

/// Phase 4: retrain only the co-submodel's final classifier over high-level
/// features gathered from both sides.
pub fn finetune_classifier<S: Scalar>(
    dm: &mut DecoupledModel<S>,
    features: &[HighLevelFeature<S>],
    hp: &PhaseHyperparams,
    seed: u64,
) -> Result<PhaseReport> {
    let mut head = dm.co_classifier()?;
    let report = finetune_linear(&mut head, features, hp, seed)?;
    dm.set_co_classifier(&head)?;
    Ok(report)
}

/// Replace the final classifier of a plain network.
pub fn set_last_layer<S: Scalar>(net: &mut Network<S>, classifier: &Network<S>) -> Result<()> {
    let at = net.layers().len() - 1;
    let mut tail = net.clone();
    let old = tail.split_off(at)?;
    if old.param_shapes() != classifier.param_shapes() {
        return Err(Error::ShapeMismatch {
            op: "set_last_layer",
            expected: old.param_shapes().concat(),
            got: classifier.param_shapes().concat(),
        });
    }
    net.layers_mut()[at] = classifier.layers()[0].clone();
    Ok(())
}

/// The final classifier of a plain network, as a standalone network.
pub fn last_layer<S: Scalar>(net: &Network<S>) -> Result<Network<S>> {
    let mut n = net.clone();
    n.split_off(net.layers().len() - 1)
}

fn accuracy_of<S: Scalar>(logits: &Tensor<S>, labels: &[usize]) -> usize {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks_exact(k)
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count()
}

/// Index of the first maximal entry.
pub fn argmax<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of `test` whose argmax over the mode's logits is the label.
pub fn evaluate<S: Scalar>(dm: &DecoupledModel<S>, test: &LabeledDataset<S>, mode: InferenceMode) -> Result<f64> {
    require_nonempty(test, "evaluate")?;
    evaluate_with(test, |x| dm.logits(x, mode))
}

pub fn evaluate_network<S: Scalar>(net: &Network<S>, test: &LabeledDataset<S>) -> Result<f64> {
    require_nonempty(test, "evaluate")?;
    evaluate_with(test, |x| net.forward(x))
}

fn evaluate_with<S: Scalar>(
    test: &LabeledDataset<S>,
    mut f: impl FnMut(&Tensor<S>) -> Result<Tensor<S>>,
) -> Result<f64> {
    let idx: Vec<usize> = (0..test.len()).collect();
    let mut correct = 0;
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (x, y) = test.batch(chunk);
        correct += accuracy_of(&f(&x)?, &y);
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Accuracy restricted to samples whose label satisfies `keep`.
pub fn evaluate_subset<S: Scalar>(
    dm: &DecoupledModel<S>,
    test: &LabeledDataset<S>,
    mode: InferenceMode,
    keep: impl Fn(usize) -> bool,
) -> Result<f64> {
    let idx: Vec<usize> = (0..test.len()).filter(|&i| keep(test.label(i))).collect();
    evaluate(dm, &test.subset(&idx, "subset"), mode)
}
