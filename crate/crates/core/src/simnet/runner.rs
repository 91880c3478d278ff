//! Orchestration of DC-CCL, its baselines and its ablations over the
//! simulated channel.
//!
//! Round schedule for every collaborative method: the one-time setup
//! download puts the initial models on the device (round 0); each round
//! both parties train locally, the device uploads its copy, the cloud
//! aggregates and sends the aggregate back down; finetuning traffic is
//! logged under round `R + 1`.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, PartitionedDataset};
use crate::error::{Error, Result};
use crate::model::checkpoint::network_len;
use crate::model::{build_heterogeneous, build_model, split_model, DecoupledModel, InferenceMode, Stage};
use crate::nn::Network;
use crate::scalar::Scalar;
use crate::simnet::aggregate::{aggregate, sample_weights};
use crate::simnet::channel::{Channel, Direction, MessageKind};
use crate::simnet::config::{ExperimentConfig, FinetuneSide, Method};
use crate::tensor::optim::OptimizerState;
use crate::tensor::Tensor;
use crate::training::{
    argmax, distill_control, evaluate, evaluate_network, finetune_classifier, finetune_linear, high_level_features,
    last_layer, local_train_co, network_features, set_last_layer, train_cloud_submodel, train_network,
    train_network_steps, Batcher, CoTrainingSet, Guide, HighLevelFeature,
};

/// Derived seeds for the independent random streams of one run.
mod tags {
    pub const PHASE1: u64 = 1;
    pub const PHASE2: u64 = 2;
    pub const CLOUD_LOCAL: u64 = 3;
    pub const DEVICE_LOCAL: u64 = 4;
    pub const FINETUNE: u64 = 5;
    pub const CENTRAL: u64 = 6;
}

fn sub_seed(seed: u64, tag: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ tag
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub cloud_epochs_done: usize,
    pub device_epochs_done: usize,
    /// Decoupled-mode accuracy after aggregation (full-model accuracy for
    /// the small-model baseline).
    pub accuracy: f64,
    pub device_side_accuracy: Option<f64>,
    pub cloud_loss: f64,
    pub device_loss: f64,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub method: Method,
    pub seed: u64,
    /// The method's reported full-test accuracy.
    pub accuracy: f64,
    pub acc_decoupled: Option<f64>,
    pub acc_device_side: Option<f64>,
    pub acc_cloud_only: Option<f64>,
    pub acc_co_only: Option<f64>,
    /// Accuracy on the test samples of device classes only.
    pub acc_device_classes: f64,
    pub rounds: usize,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
    pub setup_bytes: u64,
    /// Bytes of one collaborative round (both directions), if any ran.
    pub round_bytes: Option<u64>,
    pub finetune_bytes: u64,
    pub wall_seconds: f64,
    pub device_params: u64,
    pub device_flops: u64,
    pub cloud_params: u64,
}

/// The trained artifact of a run.
#[derive(Debug, Clone)]
pub enum TrainedModel<S> {
    Decoupled(DecoupledModel<S>),
    Network(Network<S>),
}

#[derive(Debug, Clone)]
pub struct RunOutput<S> {
    pub metrics: MetricsRecord,
    pub trace: Vec<RoundTrace>,
    pub channel: Channel,
    pub model: TrainedModel<S>,
}

/// Test-set outputs of the frozen parts, so per-round evaluation only runs
/// the co-submodel.
struct EvalCache<S> {
    features: Tensor<S>,
    cloud: Tensor<S>,
    control: Option<Tensor<S>>,
    labels: Vec<usize>,
}

impl<S: Scalar> EvalCache<S> {
    fn new(dm: &DecoupledModel<S>, test: &LabeledDataset<S>) -> Result<Self> {
        let idx: Vec<usize> = (0..test.len()).collect();
        let (x, labels) = test.batch(&idx);
        let features = dm.features(&x)?;
        let cloud = dm.cloud.forward(&features)?;
        let control = if dm.stage >= Stage::Distilled {
            Some(dm.control.forward(&features)?)
        } else {
            None
        };
        Ok(Self {
            features,
            cloud,
            control,
            labels,
        })
    }

    fn accuracy(&self, guide: &Tensor<S>, co: &Tensor<S>) -> Result<f64> {
        let sum = guide.add(co)?;
        let k = sum.shape()[1];
        let hits = sum
            .data()
            .chunks_exact(k)
            .zip(&self.labels)
            .filter(|(row, &y)| argmax(row) == y)
            .count();
        Ok(hits as f64 / self.labels.len() as f64)
    }

    /// Decoupled and (when a control model exists) device-side accuracy.
    fn score(&self, co: &Network<S>) -> Result<(f64, Option<f64>)> {
        let co_logits = co.forward(&self.features)?;
        let dec = self.accuracy(&self.cloud, &co_logits)?;
        let dev = self
            .control
            .as_ref()
            .map(|c| self.accuracy(c, &co_logits))
            .transpose()?;
        Ok((dec, dev))
    }
}

/// Runs experiments, sharing the partition and the phase-1/2 models among
/// runs whose configs agree on everything those artifacts depend on. The
/// cached artifacts are exactly what a fresh run would compute.
pub struct Workbench<S> {
    data: HashMap<String, PartitionedDataset<S>>,
    phase1: HashMap<String, DecoupledModel<S>>,
    phase2: HashMap<String, DecoupledModel<S>>,
}

impl<S: Scalar> Default for Workbench<S> {
    fn default() -> Self {
        Self::new()
    }
}

fn key<T: Serialize>(parts: &T) -> String {
    serde_json::to_string(parts).expect("configs serialize")
}

impl<S: Scalar> Workbench<S> {
    pub fn new() -> Self {
        Self {
            data: HashMap::new(),
            phase1: HashMap::new(),
            phase2: HashMap::new(),
        }
    }

    pub fn partition(&mut self, cfg: &ExperimentConfig) -> Result<PartitionedDataset<S>> {
        let k = key(&(&cfg.data, cfg.seed));
        if let Some(p) = self.data.get(&k) {
            return Ok(p.clone());
        }
        let p = cfg.data.build(cfg.seed)?;
        self.data.insert(k, p.clone());
        Ok(p)
    }

    /// A freshly initialized decoupled model for `cfg`.
    pub fn fresh_model(cfg: &ExperimentConfig) -> Result<DecoupledModel<S>> {
        match &cfg.model.co {
            Some(co) if cfg.model.split.heterogeneous => build_heterogeneous(&cfg.model.base, co, cfg.seed),
            _ => split_model(&cfg.model.base, &cfg.model.split, cfg.seed),
        }
    }

    /// Phase 1 result (encoder and cloud submodel trained and frozen).
    pub fn cloud_trained(&mut self, cfg: &ExperimentConfig) -> Result<DecoupledModel<S>> {
        let k = key(&(&cfg.data, &cfg.model, &cfg.phases.cloud, cfg.seed));
        if let Some(dm) = self.phase1.get(&k) {
            return Ok(dm.clone());
        }
        let part = self.partition(cfg)?;
        let mut dm = Self::fresh_model(cfg)?;
        train_cloud_submodel(&mut dm, &part.cloud_train, &cfg.phases.cloud, sub_seed(cfg.seed, tags::PHASE1))?;
        self.phase1.insert(k, dm.clone());
        Ok(dm)
    }

    /// Phase 2 result (control model distilled and frozen).
    pub fn distilled(&mut self, cfg: &ExperimentConfig) -> Result<DecoupledModel<S>> {
        let k = key(&(&cfg.data, &cfg.model, &cfg.phases.cloud, &cfg.phases.distill, cfg.seed));
        if let Some(dm) = self.phase2.get(&k) {
            return Ok(dm.clone());
        }
        let part = self.partition(cfg)?;
        let mut dm = self.cloud_trained(cfg)?;
        distill_control(&mut dm, &part.cloud_train, &cfg.phases.distill, sub_seed(cfg.seed, tags::PHASE2))?;
        self.phase2.insert(k, dm.clone());
        Ok(dm)
    }

    pub fn run(&mut self, cfg: &ExperimentConfig) -> Result<RunOutput<S>> {
        cfg.validate()?;
        let start = Instant::now();
        let mut out = match cfg.method {
            Method::DcCcl => self.run_decoupled(cfg, Guide::Control, true),
            Method::NoFinetune => self.run_decoupled(cfg, Guide::Control, false),
            Method::NoControl => self.run_decoupled(cfg, Guide::None, true),
            Method::DistrD => self.run_decoupled(cfg, Guide::Cloud, true),
            Method::CentralB | Method::CloudB => self.run_base(cfg),
            Method::CentralD => self.run_central_d(cfg),
            Method::DistrS => self.run_distr_s(cfg),
            Method::IncrS => self.run_incr_s(cfg),
        }?;
        out.metrics.wall_seconds = start.elapsed().as_secs_f64();
        Ok(out)
    }

    /// DC-CCL and the variants that share its round structure.
    ///
    /// * `Guide::Control` — DC-CCL (and no-finetune when `finetune` is off).
    /// * `Guide::None` — the no-control ablation: no distillation, plain
    ///   cross-entropy on the co logits.
    /// * `Guide::Cloud` — Distr-D: the real cloud submodel guides training
    ///   on both sides, so encoder, cloud submodel and co-submodel all live
    ///   on the device and the whole decoupled model is exchanged.
    fn run_decoupled(&mut self, cfg: &ExperimentConfig, guide: Guide, finetune: bool) -> Result<RunOutput<S>> {
        let part = self.partition(cfg)?;
        let mut dm = match guide {
            Guide::Control => self.distilled(cfg)?,
            Guide::Cloud | Guide::None => self.cloud_trained(cfg)?,
        };
        let mut channel = Channel::new();
        // Per round, DC-CCL exchanges only the co-submodel; Distr-D
        // exchanges the whole decoupled model.
        let shipped = |dm: &DecoupledModel<S>, setup: bool| -> Vec<(MessageKind, Network<S>)> {
            let mut v = Vec::new();
            if !dm.encoder.is_empty() && (setup || guide == Guide::Cloud) {
                v.push((MessageKind::Encoder, dm.encoder.clone()));
            }
            if guide == Guide::Cloud {
                v.push((MessageKind::CloudSubmodel, dm.cloud.clone()));
            }
            v.push((MessageKind::CoSubmodel, dm.co.clone()));
            v
        };
        // Setup: everything the device needs, once.
        for (kind, net) in shipped(&dm, true) {
            channel.send_network(Direction::Downlink, kind, &net, 0);
        }
        if guide == Guide::Control {
            channel.send_network(Direction::Downlink, MessageKind::ControlModel, &dm.control, 0);
        }
        let setup_bytes = channel.total_bytes();

        let eval = EvalCache::new(&dm, &part.test)?;
        let bs = cfg.phases.co.batch_size;
        let mut trace = Vec::with_capacity(cfg.rounds);
        if cfg.rounds > 0 {
            let mut cloud_set = CoTrainingSet::new(&dm, &part.cloud_train, guide, bs, sub_seed(cfg.seed, tags::CLOUD_LOCAL))?;
            let mut dev_set = CoTrainingSet::new(&dm, &part.device_train, guide, bs, sub_seed(cfg.seed, tags::DEVICE_LOCAL))?;
            let (wc, wd) = sample_weights(cloud_set.len(), dev_set.len());
            let cloud_steps = cfg.cloud_epochs_per_round * cloud_set.steps_per_epoch();
            let dev_steps = cfg.device_epochs_per_round * dev_set.steps_per_epoch();
            for r in 1..=cfg.rounds {
                let mut cloud_dm = dm.clone();
                let cu = local_train_co(&mut cloud_dm, &mut cloud_set, &cfg.phases.co, cloud_steps)?;
                let mut dev_dm = dm.clone();
                let du = local_train_co(&mut dev_dm, &mut dev_set, &cfg.phases.co, dev_steps)?;
                for (kind, net) in shipped(&dev_dm, false) {
                    channel.send_network(Direction::Uplink, kind, &net, r);
                }
                dm.co = aggregate(&cloud_dm.co, &dev_dm.co, wc, wd)?;
                for (kind, net) in shipped(&dm, false) {
                    channel.send_network(Direction::Downlink, kind, &net, r);
                }
                let (acc, dev_acc) = eval.score(&dm.co)?;
                trace.push(RoundTrace {
                    round: r,
                    cloud_epochs_done: r * cfg.cloud_epochs_per_round,
                    device_epochs_done: r * cfg.device_epochs_per_round,
                    accuracy: acc,
                    device_side_accuracy: dev_acc,
                    cloud_loss: cu.mean_loss,
                    device_loss: du.mean_loss,
                    uplink_bytes: channel.uplink_bytes(),
                    downlink_bytes: channel.downlink_bytes(),
                });
            }
            if finetune {
                finetune_decoupled(cfg, &mut dm, &part, guide, &mut channel)?;
            }
        }
        let sizes = dm.sizes();
        let (device_params, device_flops) = match guide {
            Guide::Control => (sizes.device_params(), sizes.device_flops()),
            Guide::Cloud => (sizes.decoupled_params(), sizes.decoupled_flops()),
            Guide::None => (
                sizes.encoder_params + sizes.co_params,
                sizes.encoder_flops + sizes.co_flops,
            ),
        };
        let metrics = decoupled_metrics(cfg, &dm, &part, &channel, setup_bytes, device_params, device_flops)?;
        Ok(RunOutput {
            metrics,
            trace,
            channel,
            model: TrainedModel::Decoupled(dm),
        })
    }

    fn run_base(&mut self, cfg: &ExperimentConfig) -> Result<RunOutput<S>> {
        let part = self.partition(cfg)?;
        let train = match cfg.method {
            Method::CentralB => part.full_train(),
            _ => part.cloud_train.clone(),
        };
        let mut net = build_model::<S>(&cfg.model.base, cfg.seed)?;
        train_network(&mut net, &train, &cfg.phases.cloud, sub_seed(cfg.seed, tags::PHASE1))?;
        let metrics = network_metrics(cfg, &net, &part, &Channel::new(), 0, 0, 0)?;
        Ok(RunOutput {
            metrics,
            trace: Vec::new(),
            channel: Channel::new(),
            model: TrainedModel::Network(net),
        })
    }

    /// Phase 1, then the co-submodel trained on the pooled data with the
    /// real cloud submodel in the loss, all on one node.
    fn run_central_d(&mut self, cfg: &ExperimentConfig) -> Result<RunOutput<S>> {
        let part = self.partition(cfg)?;
        let mut dm = self.cloud_trained(cfg)?;
        let full = part.full_train();
        let mut set = CoTrainingSet::new(&dm, &full, Guide::Cloud, cfg.phases.co.batch_size, sub_seed(cfg.seed, tags::CENTRAL))?;
        let steps = cfg.phases.co.epochs * set.steps_per_epoch();
        local_train_co(&mut dm, &mut set, &cfg.phases.co, steps)?;
        let channel = Channel::new();
        let metrics = decoupled_metrics(cfg, &dm, &part, &channel, 0, 0, 0)?;
        Ok(RunOutput {
            metrics,
            trace: Vec::new(),
            channel,
            model: TrainedModel::Decoupled(dm),
        })
    }

    fn small_model(cfg: &ExperimentConfig) -> Result<Network<S>> {
        let layout = Self::fresh_model(cfg)?.layout;
        build_model(&layout.small_spec(), cfg.seed)
    }

    /// Encoder + co-submodel as one small model, trained from scratch by
    /// both parties with parameter-server aggregation, then finetuned.
    fn run_distr_s(&mut self, cfg: &ExperimentConfig) -> Result<RunOutput<S>> {
        let part = self.partition(cfg)?;
        let mut net = Self::small_model(cfg)?;
        let mut channel = Channel::new();
        channel.send_network(Direction::Downlink, MessageKind::SmallModel, &net, 0);
        let setup_bytes = channel.total_bytes();
        let bs = cfg.phases.cloud.batch_size;
        let mut cloud_b = Batcher::new(part.cloud_train.len(), bs, sub_seed(cfg.seed, tags::CLOUD_LOCAL));
        let mut dev_b = Batcher::new(part.device_train.len(), bs, sub_seed(cfg.seed, tags::DEVICE_LOCAL));
        let (wc, wd) = sample_weights(part.cloud_train.len(), part.device_train.len());
        let mut trace = Vec::new();
        for r in 1..=cfg.rounds {
            let mut cloud_net = net.clone();
            let mut opt = OptimizerState::new(cfg.phases.cloud.optimizer, cfg.phases.cloud.learning_rate);
            let steps = cfg.cloud_epochs_per_round * cloud_b.steps_per_epoch();
            let cl = train_network_steps(&mut cloud_net, &part.cloud_train, &mut cloud_b, &mut opt, steps)?;
            let mut dev_net = net.clone();
            let mut opt = OptimizerState::new(cfg.phases.cloud.optimizer, cfg.phases.cloud.learning_rate);
            let steps = cfg.device_epochs_per_round * dev_b.steps_per_epoch();
            let dl = train_network_steps(&mut dev_net, &part.device_train, &mut dev_b, &mut opt, steps)?;
            channel.send_network(Direction::Uplink, MessageKind::SmallModel, &dev_net, r);
            net = aggregate(&cloud_net, &dev_net, wc, wd)?;
            channel.send_network(Direction::Downlink, MessageKind::SmallModel, &net, r);
            trace.push(RoundTrace {
                round: r,
                cloud_epochs_done: r * cfg.cloud_epochs_per_round,
                device_epochs_done: r * cfg.device_epochs_per_round,
                accuracy: evaluate_network(&net, &part.test)?,
                device_side_accuracy: None,
                cloud_loss: cl,
                device_loss: dl,
                uplink_bytes: channel.uplink_bytes(),
                downlink_bytes: channel.downlink_bytes(),
            });
        }
        if cfg.rounds > 0 {
            finetune_network(cfg, &mut net, &part, &mut channel, cfg.rounds + 1)?;
        }
        let (p, f) = (net.param_count() as u64, crate::model::count::count_flops(&net)?);
        let metrics = network_metrics(cfg, &net, &part, &channel, setup_bytes, p, f)?;
        Ok(RunOutput {
            metrics,
            trace,
            channel,
            model: TrainedModel::Network(net),
        })
    }

    /// The small model trained on the cloud split, shipped to the device,
    /// trained on the device split, sent back, then finetuned.
    fn run_incr_s(&mut self, cfg: &ExperimentConfig) -> Result<RunOutput<S>> {
        let part = self.partition(cfg)?;
        let mut net = Self::small_model(cfg)?;
        let mut channel = Channel::new();
        train_network(&mut net, &part.cloud_train, &cfg.phases.cloud, sub_seed(cfg.seed, tags::CLOUD_LOCAL))?;
        channel.send_network(Direction::Downlink, MessageKind::SmallModel, &net, 0);
        let setup_bytes = channel.total_bytes();
        let mut device_hp = cfg.phases.cloud;
        device_hp.epochs = cfg.rounds * cfg.device_epochs_per_round;
        if device_hp.epochs > 0 {
            train_network(&mut net, &part.device_train, &device_hp, sub_seed(cfg.seed, tags::DEVICE_LOCAL))?;
            channel.send_network(Direction::Uplink, MessageKind::SmallModel, &net, 1);
            finetune_network(cfg, &mut net, &part, &mut channel, 2)?;
        }
        let (p, f) = (net.param_count() as u64, crate::model::count::count_flops(&net)?);
        let metrics = network_metrics(cfg, &net, &part, &channel, setup_bytes, p, f)?;
        Ok(RunOutput {
            metrics,
            trace: Vec::new(),
            channel,
            model: TrainedModel::Network(net),
        })
    }
}

fn feature_bytes<S>(f: &[HighLevelFeature<S>]) -> u64 {
    f.iter().map(HighLevelFeature::byte_size).sum()
}

/// Ship one side's features to the finetuning node, finetune there, and send
/// the classifier to the other node. Returns the finetuning traffic.
fn finetune_traffic<S: Scalar>(
    cfg: &ExperimentConfig,
    cloud_feats: &[HighLevelFeature<S>],
    dev_feats: &[HighLevelFeature<S>],
    classifier: &Network<S>,
    channel: &mut Channel,
    round: usize,
) {
    let bytes = network_len(classifier) as u64;
    match cfg.finetune_on {
        FinetuneSide::Cloud => {
            channel.send(Direction::Uplink, MessageKind::Features, feature_bytes(dev_feats), round);
            channel.send(Direction::Downlink, MessageKind::Classifier, bytes, round);
        }
        FinetuneSide::Device => {
            channel.send(Direction::Downlink, MessageKind::Features, feature_bytes(cloud_feats), round);
            channel.send(Direction::Uplink, MessageKind::Classifier, bytes, round);
        }
    }
}

fn finetune_decoupled<S: Scalar>(
    cfg: &ExperimentConfig,
    dm: &mut DecoupledModel<S>,
    part: &PartitionedDataset<S>,
    guide: Guide,
    channel: &mut Channel,
) -> Result<()> {
    let cloud_feats = high_level_features(dm, &part.cloud_train, guide)?;
    let dev_feats = high_level_features(dm, &part.device_train, guide)?;
    let mut all = cloud_feats.clone();
    all.extend(dev_feats.iter().cloned());
    finetune_classifier(dm, &all, &cfg.phases.finetune, sub_seed(cfg.seed, tags::FINETUNE))?;
    finetune_traffic(cfg, &cloud_feats, &dev_feats, &dm.co_classifier()?, channel, cfg.rounds + 1);
    Ok(())
}

fn finetune_network<S: Scalar>(
    cfg: &ExperimentConfig,
    net: &mut Network<S>,
    part: &PartitionedDataset<S>,
    channel: &mut Channel,
    round: usize,
) -> Result<()> {
    let cloud_feats = network_features(net, &part.cloud_train)?;
    let dev_feats = network_features(net, &part.device_train)?;
    let mut all = cloud_feats.clone();
    all.extend(dev_feats.iter().cloned());
    let mut head = last_layer(net)?;
    finetune_linear(&mut head, &all, &cfg.phases.finetune, sub_seed(cfg.seed, tags::FINETUNE))?;
    set_last_layer(net, &head)?;
    finetune_traffic(cfg, &cloud_feats, &dev_feats, &head, channel, round);
    Ok(())
}

fn device_class_subset<S: Scalar>(part: &PartitionedDataset<S>) -> LabeledDataset<S> {
    let idx: Vec<usize> = (0..part.test.len())
        .filter(|&i| part.device_classes.contains(&part.test.label(i)))
        .collect();
    part.test.subset(&idx, "device_classes")
}

fn traffic_split(cfg: &ExperimentConfig, channel: &Channel) -> (Option<u64>, u64) {
    let round = (cfg.method.is_collaborative() && cfg.rounds > 0).then(|| channel.round_bytes(1));
    let finetune = channel
        .log()
        .iter()
        .filter(|m| matches!(m.kind, MessageKind::Features | MessageKind::Classifier))
        .map(|m| m.bytes)
        .sum();
    (round, finetune)
}

fn decoupled_metrics<S: Scalar>(
    cfg: &ExperimentConfig,
    dm: &DecoupledModel<S>,
    part: &PartitionedDataset<S>,
    channel: &Channel,
    setup_bytes: u64,
    device_params: u64,
    device_flops: u64,
) -> Result<MetricsRecord> {
    let dec = evaluate(dm, &part.test, InferenceMode::Decoupled)?;
    let dev = if dm.stage >= Stage::Distilled {
        Some(evaluate(dm, &part.test, InferenceMode::DeviceSide)?)
    } else {
        None
    };
    let (round_bytes, finetune_bytes) = traffic_split(cfg, channel);
    Ok(MetricsRecord {
        method: cfg.method,
        seed: cfg.seed,
        accuracy: dec,
        acc_decoupled: Some(dec),
        acc_device_side: dev,
        acc_cloud_only: Some(evaluate(dm, &part.test, InferenceMode::CloudOnly)?),
        acc_co_only: Some(evaluate(dm, &part.test, InferenceMode::CoOnly)?),
        acc_device_classes: evaluate(dm, &device_class_subset(part), InferenceMode::Decoupled)?,
        rounds: cfg.rounds,
        uplink_bytes: channel.uplink_bytes(),
        downlink_bytes: channel.downlink_bytes(),
        setup_bytes,
        round_bytes,
        finetune_bytes,
        wall_seconds: 0.0,
        device_params,
        device_flops,
        cloud_params: dm.sizes().decoupled_params(),
    })
}

fn network_metrics<S: Scalar>(
    cfg: &ExperimentConfig,
    net: &Network<S>,
    part: &PartitionedDataset<S>,
    channel: &Channel,
    setup_bytes: u64,
    device_params: u64,
    device_flops: u64,
) -> Result<MetricsRecord> {
    let (round_bytes, finetune_bytes) = traffic_split(cfg, channel);
    Ok(MetricsRecord {
        method: cfg.method,
        seed: cfg.seed,
        accuracy: evaluate_network(net, &part.test)?,
        acc_decoupled: None,
        acc_device_side: None,
        acc_cloud_only: None,
        acc_co_only: None,
        acc_device_classes: evaluate_network(net, &device_class_subset(part))?,
        rounds: if cfg.method.is_collaborative() || cfg.method == Method::IncrS {
            cfg.rounds
        } else {
            0
        },
        uplink_bytes: channel.uplink_bytes(),
        downlink_bytes: channel.downlink_bytes(),
        setup_bytes,
        round_bytes,
        finetune_bytes,
        wall_seconds: 0.0,
        device_params,
        device_flops,
        cloud_params: net.param_count() as u64,
    })
}

/// Run one experiment from scratch.
pub fn run_experiment<S: Scalar>(cfg: &ExperimentConfig) -> Result<RunOutput<S>> {
    Workbench::new().run(cfg)
}

pub fn run_dc_ccl<S: Scalar>(cfg: &ExperimentConfig) -> Result<RunOutput<S>> {
    if cfg.method != Method::DcCcl {
        return Err(Error::UnknownMethod(format!("run_dc_ccl called with {}", cfg.method)));
    }
    run_experiment(cfg)
}

pub fn run_baseline<S: Scalar>(cfg: &ExperimentConfig) -> Result<RunOutput<S>> {
    if cfg.method == Method::DcCcl || cfg.method.is_ablation() {
        return Err(Error::UnknownMethod(format!("{} is not a baseline", cfg.method)));
    }
    run_experiment(cfg)
}

pub fn run_ablation<S: Scalar>(cfg: &ExperimentConfig) -> Result<RunOutput<S>> {
    if !cfg.method.is_ablation() {
        return Err(Error::UnknownMethod(format!("{} is not an ablation", cfg.method)));
    }
    run_experiment(cfg)
}

/// Outcome of the two-stage decoupling study on one seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub seed: u64,
    /// Base model trained on all samples.
    pub base: f64,
    /// Co-submodel trained on all samples next to the real cloud submodel.
    pub with_cloud: f64,
    /// Co-submodel trained on all samples under the control model.
    pub with_control: f64,
    /// Co-submodel trained on all samples with no guide.
    pub without_control: f64,
    /// Cloud submodel alone after stage one.
    pub cloud_only: f64,
}

/// Stage one trains encoder and cloud submodel on the cloud classes; stage
/// two trains only the co-submodel on the pooled data with the given guide.
/// Decoupled-mode accuracy is reported for every variant.
pub fn run_feasibility<S: Scalar>(wb: &mut Workbench<S>, cfg: &ExperimentConfig) -> Result<FeasibilityReport> {
    cfg.validate()?;
    let part = wb.partition(cfg)?;
    let full = part.full_train();
    let mut base_cfg = cfg.clone();
    base_cfg.method = Method::CentralB;
    let base = wb.run(&base_cfg)?.metrics.accuracy;
    let stage_two = |dm: DecoupledModel<S>, guide: Guide| -> Result<f64> {
        let mut dm = dm;
        let mut set = CoTrainingSet::new(&dm, &full, guide, cfg.phases.co.batch_size, sub_seed(cfg.seed, tags::CENTRAL))?;
        let steps = cfg.phases.co.epochs * set.steps_per_epoch();
        local_train_co(&mut dm, &mut set, &cfg.phases.co, steps)?;
        evaluate(&dm, &part.test, InferenceMode::Decoupled)
    };
    let p1 = wb.cloud_trained(cfg)?;
    let cloud_only = evaluate(&p1, &part.test, InferenceMode::CloudOnly)?;
    let with_cloud = stage_two(p1.clone(), Guide::Cloud)?;
    let without_control = stage_two(p1, Guide::None)?;
    let with_control = stage_two(wb.distilled(cfg)?, Guide::Control)?;
    Ok(FeasibilityReport {
        seed: cfg.seed,
        base,
        with_cloud,
        with_control,
        without_control,
        cloud_only,
    })
}
