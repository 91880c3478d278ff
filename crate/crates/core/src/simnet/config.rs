use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, load_dataset, partition_by_class, PartitionedDataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, SplitConfig};
use crate::scalar::Scalar;
use crate::training::PhaseHyperparams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "dc-ccl")]
    DcCcl,
    #[serde(rename = "central-b")]
    CentralB,
    #[serde(rename = "cloud-b")]
    CloudB,
    #[serde(rename = "central-d")]
    CentralD,
    #[serde(rename = "distr-d")]
    DistrD,
    #[serde(rename = "distr-s")]
    DistrS,
    #[serde(rename = "incr-s")]
    IncrS,
    #[serde(rename = "dc-ccl-no-control")]
    NoControl,
    #[serde(rename = "dc-ccl-no-finetune")]
    NoFinetune,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::DcCcl,
        Method::CentralB,
        Method::CloudB,
        Method::CentralD,
        Method::DistrD,
        Method::DistrS,
        Method::IncrS,
        Method::NoControl,
        Method::NoFinetune,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::DcCcl => "dc-ccl",
            Method::CentralB => "central-b",
            Method::CloudB => "cloud-b",
            Method::CentralD => "central-d",
            Method::DistrD => "distr-d",
            Method::DistrS => "distr-s",
            Method::IncrS => "incr-s",
            Method::NoControl => "dc-ccl-no-control",
            Method::NoFinetune => "dc-ccl-no-finetune",
        }
    }

    /// Methods that exchange models over rounds.
    pub fn is_collaborative(self) -> bool {
        matches!(
            self,
            Method::DcCcl | Method::DistrD | Method::DistrS | Method::NoControl | Method::NoFinetune
        )
    }

    pub fn is_ablation(self) -> bool {
        matches!(self, Method::NoControl | Method::NoFinetune)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// Where the dataset comes from and how it is split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub test_samples_per_class: usize,
    pub image_size: usize,
    pub channels: usize,
    pub noise_std: f64,
    /// Defaults to half the image size.
    pub max_shift: Option<usize>,
    /// Seed of the synthetic generator; the test set uses `data_seed + 1`.
    pub data_seed: u64,
    /// Load the training and test sets from files instead of generating them.
    pub train_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub device_classes: BTreeSet<usize>,
    pub augment_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            num_classes: 10,
            samples_per_class: 200,
            test_samples_per_class: 100,
            image_size: 8,
            channels: 1,
            noise_std: 1.0,
            max_shift: None,
            data_seed: 1,
            train_path: None,
            test_path: None,
            device_classes: BTreeSet::from([8, 9]),
            augment_fraction: 0.1,
        }
    }
}

impl DataConfig {
    fn synthetic(&self, samples_per_class: usize, seed: u64) -> SyntheticSpec {
        let mut s = SyntheticSpec::new(
            self.num_classes,
            samples_per_class,
            self.image_size,
            self.channels,
            self.noise_std,
            seed,
        );
        if let Some(m) = self.max_shift {
            s.max_shift = m;
        }
        s
    }

    /// Build (or load) the data and partition it; `seed` drives the
    /// augmentation draw.
    pub fn build<S: Scalar>(&self, seed: u64) -> Result<PartitionedDataset<S>> {
        let train = match &self.train_path {
            Some(p) => load_dataset(p)?,
            None => generate_synthetic(&self.synthetic(self.samples_per_class, self.data_seed))?,
        };
        let test = match &self.test_path {
            Some(p) => load_dataset(p)?,
            None => generate_synthetic(&self.synthetic(
                self.test_samples_per_class,
                self.data_seed.wrapping_add(1),
            ))?,
        };
        train.validate_full()?;
        test.validate_full()?;
        partition_by_class(&train, &test, &self.device_classes, self.augment_fraction, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// The base model; in heterogeneous mode, the cloud model.
    pub base: ModelSpec,
    /// Co-submodel backbone for heterogeneous mode.
    pub co: Option<ModelSpec>,
    pub split: SplitConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            base: ModelSpec::desk_base(8, 8, 32, 10),
            co: None,
            split: SplitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseSet {
    /// Phase 1, also used for every full-model trainer (the base-model and
    /// small-model baselines).
    pub cloud: PhaseHyperparams,
    /// Phase 2.
    pub distill: PhaseHyperparams,
    /// Phase 3. `epochs` is used only by the centralized co-submodel trainer
    /// and Incr-S's device stage; collaborative runs use the per-round
    /// epoch counts.
    pub co: PhaseHyperparams,
    /// Phase 4.
    pub finetune: PhaseHyperparams,
}

impl Default for PhaseSet {
    fn default() -> Self {
        Self {
            cloud: PhaseHyperparams::adam(0.003, 4),
            distill: PhaseHyperparams::adam(0.002, 30),
            co: PhaseHyperparams::adam(0.01, 20),
            finetune: PhaseHyperparams::adam(0.03, 10),
        }
    }
}

/// Which node runs classifier finetuning; the other node sends it features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinetuneSide {
    #[default]
    Cloud,
    Device,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub phases: PhaseSet,
    pub rounds: usize,
    pub cloud_epochs_per_round: usize,
    pub device_epochs_per_round: usize,
    pub finetune_on: FinetuneSide,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: Method::DcCcl,
            seed: 0,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            phases: PhaseSet::default(),
            rounds: 15,
            cloud_epochs_per_round: 1,
            device_epochs_per_round: 8,
            finetune_on: FinetuneSide::Cloud,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.split.validate()?;
        self.model.base.validate()?;
        if let Some(co) = &self.model.co {
            co.validate()?;
            if !self.model.split.heterogeneous {
                return Err(Error::SplitConstraint(
                    "a separate co backbone requires split.heterogeneous = true".into(),
                ));
            }
        } else if self.model.split.heterogeneous {
            return Err(Error::SplitConstraint(
                "heterogeneous mode needs a co backbone (model.co)".into(),
            ));
        }
        let d = &self.data;
        if d.train_path.is_none() && self.model.base.num_classes != d.num_classes {
            return Err(Error::ClassCountMismatch {
                cloud: self.model.base.num_classes,
                co: d.num_classes,
            });
        }
        if d.train_path.is_none() && self.model.base.input_shape != [d.channels, d.image_size, d.image_size] {
            return Err(Error::InvalidArgument {
                op: "ExperimentConfig",
                reason: format!(
                    "model input {:?} does not match data [{}, {}, {}]",
                    self.model.base.input_shape, d.channels, d.image_size, d.image_size
                ),
            });
        }
        for (name, hp) in [
            ("cloud", &self.phases.cloud),
            ("distill", &self.phases.distill),
            ("co", &self.phases.co),
            ("finetune", &self.phases.finetune),
        ] {
            hp.validate(name)?;
        }
        if self.method.is_collaborative()
            && self.rounds > 0
            && self.cloud_epochs_per_round + self.device_epochs_per_round == 0
        {
            return Err(Error::InvalidArgument {
                op: "ExperimentConfig",
                reason: "collaborative rounds need at least one local epoch".into(),
            });
        }
        Ok(())
    }
}
