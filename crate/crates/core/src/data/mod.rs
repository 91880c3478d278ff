//! Labeled image datasets, the synthetic generator, the on-disk format and
//! the class-skew device/cloud partition.

mod io;
mod partition;
mod synthetic;

pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use partition::{partition_by_class, PartitionedDataset};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Images of one shape with integer labels. Samples are stored contiguously;
/// every sample also carries a stable identity so subsets can be compared
/// against the set they were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<S> {
    pub name: String,
    pub num_classes: usize,
    shape: [usize; 3],
    data: Vec<S>,
    labels: Vec<usize>,
    ids: Vec<u64>,
}

impl<S: Scalar> LabeledDataset<S> {
    pub fn new(name: impl Into<String>, num_classes: usize, shape: [usize; 3]) -> Self {
        Self {
            name: name.into(),
            num_classes,
            shape,
            data: Vec::new(),
            labels: Vec::new(),
            ids: Vec::new(),
        }
    }

    pub fn push(&mut self, image: &[S], label: usize, id: u64) -> Result<()> {
        if image.len() != self.sample_len() {
            return Err(Error::ShapeMismatch {
                op: "LabeledDataset::push",
                expected: self.shape.to_vec(),
                got: vec![image.len()],
            });
        }
        if label >= self.num_classes {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes: self.num_classes,
            });
        }
        self.data.extend_from_slice(image);
        self.labels.push(label);
        self.ids.push(id);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn sample_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn image(&self, i: usize) -> &[S] {
        let n = self.sample_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn id(&self, i: usize) -> u64 {
        self.ids[i]
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    /// Stack the selected samples into a `[N,C,H,W]` batch plus labels.
    pub fn batch(&self, indices: &[usize]) -> (Tensor<S>, Vec<usize>) {
        let n = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * n);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        let shape = vec![indices.len(), self.shape[0], self.shape[1], self.shape[2]];
        (
            Tensor::new(shape, data).expect("batch of non-empty samples"),
            labels,
        )
    }

    /// New dataset holding the selected samples, in the given order.
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Self {
        let mut out = Self::new(name, self.num_classes, self.shape);
        for &i in indices {
            out.data.extend_from_slice(self.image(i));
            out.labels.push(self.labels[i]);
            out.ids.push(self.ids[i]);
        }
        out
    }

    /// Append every sample of `other` (same shape and class count).
    pub fn extend(&mut self, other: &Self) -> Result<()> {
        if other.shape != self.shape || other.num_classes != self.num_classes {
            return Err(Error::ShapeMismatch {
                op: "LabeledDataset::extend",
                expected: self.shape.to_vec(),
                got: other.shape.to_vec(),
            });
        }
        self.data.extend_from_slice(&other.data);
        self.labels.extend_from_slice(&other.labels);
        self.ids.extend_from_slice(&other.ids);
        Ok(())
    }

    /// Number of samples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// Checks the label range and that every class is present.
    pub fn validate_full(&self) -> Result<()> {
        if let Some(&label) = self.labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes: self.num_classes,
            });
        }
        if let Some(c) = self.class_counts().iter().position(|&n| n == 0) {
            return Err(Error::InvalidPartition(format!("class {c} has no samples")));
        }
        Ok(())
    }
}
