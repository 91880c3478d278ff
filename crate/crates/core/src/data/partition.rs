use std::collections::BTreeSet;

use rand::seq::index::sample;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::part_rng;
use crate::scalar::Scalar;

/// Cloud and device training sets split by class, plus the full test set.
#[derive(Debug, Clone)]
pub struct PartitionedDataset<S> {
    pub cloud_train: LabeledDataset<S>,
    /// Device-class samples followed by the cloud-origin augmentation samples.
    pub device_train: LabeledDataset<S>,
    pub test: LabeledDataset<S>,
    pub device_classes: BTreeSet<usize>,
    pub augment_fraction: f64,
    /// Number of samples in `device_train` before augmentation.
    pub device_original_len: usize,
}

impl<S: Scalar> PartitionedDataset<S> {
    /// Identities of the cloud-origin samples copied to the device.
    pub fn augmented_ids(&self) -> &[u64] {
        &self.device_train.ids()[self.device_original_len..]
    }

    /// Union of both training sets without the augmentation duplicates.
    pub fn full_train(&self) -> LabeledDataset<S> {
        let mut all = self.cloud_train.clone();
        let orig: Vec<usize> = (0..self.device_original_len).collect();
        all.extend(&self.device_train.subset(&orig, "device"))
            .expect("both halves come from one dataset");
        all.name = "full_train".into();
        all
    }
}

/// Split `full` by label: samples of `device_classes` go to the device, the
/// rest to the cloud. Then `floor(augment_fraction · |device|)` cloud samples,
/// drawn uniformly without replacement, are copied (not moved) to the device.
pub fn partition_by_class<S: Scalar>(
    full: &LabeledDataset<S>,
    test: &LabeledDataset<S>,
    device_classes: &BTreeSet<usize>,
    augment_fraction: f64,
    seed: u64,
) -> Result<PartitionedDataset<S>> {
    if device_classes.is_empty() {
        return Err(Error::InvalidPartition("device_classes is empty".into()));
    }
    if let Some(&c) = device_classes.iter().find(|&&c| c >= full.num_classes) {
        return Err(Error::InvalidPartition(format!(
            "device class {c} outside 0..{}",
            full.num_classes
        )));
    }
    if device_classes.len() >= full.num_classes {
        return Err(Error::InvalidPartition(
            "device_classes covers every class; the cloud would hold nothing".into(),
        ));
    }
    if !(0.0..=0.1).contains(&augment_fraction) {
        return Err(Error::InvalidPartition(format!(
            "augment_fraction {augment_fraction} outside [0, 0.1]"
        )));
    }
    if test.num_classes != full.num_classes || test.shape() != full.shape() {
        return Err(Error::InvalidPartition("test set does not match training set".into()));
    }
    let (dev_idx, cloud_idx): (Vec<usize>, Vec<usize>) =
        (0..full.len()).partition(|&i| device_classes.contains(&full.label(i)));
    if dev_idx.is_empty() || cloud_idx.is_empty() {
        return Err(Error::InvalidPartition("one side of the split has no samples".into()));
    }
    let cloud_train = full.subset(&cloud_idx, "cloud_train");
    let mut device_train = full.subset(&dev_idx, "device_train");
    let n_aug = ((augment_fraction * dev_idx.len() as f64).floor() as usize).min(cloud_idx.len());
    if n_aug > 0 {
        let mut rng = part_rng(seed, 0x4155_4753);
        let mut picks = sample(&mut rng, cloud_idx.len(), n_aug).into_vec();
        picks.sort_unstable();
        device_train
            .extend(&cloud_train.subset(&picks, "augment"))
            .expect("same source");
    }
    Ok(PartitionedDataset {
        cloud_train,
        device_train,
        test: test.clone(),
        device_classes: device_classes.clone(),
        augment_fraction,
        device_original_len: dev_idx.len(),
    })
}
