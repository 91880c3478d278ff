//! SGD and Adam over a flat list of parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Parameter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Optimizer hyperparameters plus per-parameter Adam moments.
#[derive(Debug, Clone)]
pub struct OptimizerState<S> {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub step_count: u64,
    moments: Vec<(Vec<S>, Vec<S>)>,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            step_count: 0,
            moments: Vec::new(),
        }
    }

    /// First and second moment buffers of parameter `i`, if allocated.
    pub fn moments(&self, i: usize) -> Option<(&[S], &[S])> {
        self.moments
            .get(i)
            .map(|(m, v)| (m.as_slice(), v.as_slice()))
    }

    /// Apply one update to every trainable parameter and clear its gradient.
    /// Frozen parameters are skipped untouched. The parameter list must be
    /// passed in the same order on every call.
    pub fn step(&mut self, params: &mut [&mut Parameter<S>]) -> Result<()> {
        if let Some(i) = params
            .iter()
            .position(|p| !p.frozen && p.grad().is_none())
        {
            return Err(Error::MissingGradient { index: i });
        }
        self.step_count += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                let lr = S::of(self.learning_rate);
                for p in params.iter_mut().filter(|p| !p.frozen) {
                    let g = p.value.grad.take().expect("checked above");
                    for (w, gi) in p.value.data_mut().iter_mut().zip(g) {
                        *w -= lr * gi;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.moments.len() < params.len() {
                    self.moments.resize_with(params.len(), Default::default);
                }
                let t = self.step_count as i32;
                let (b1, b2) = (S::of(self.adam_beta1), S::of(self.adam_beta2));
                let bc1 = S::one() - b1.powi(t);
                let bc2 = S::one() - b2.powi(t);
                let lr = S::of(self.learning_rate);
                let eps = S::of(self.adam_epsilon);
                for (p, (m, v)) in params.iter_mut().zip(self.moments.iter_mut()) {
                    if p.frozen {
                        continue;
                    }
                    let g = p.value.grad.take().expect("checked above");
                    if m.len() != g.len() {
                        *m = vec![S::zero(); g.len()];
                        *v = vec![S::zero(); g.len()];
                    }
                    for (((w, gi), mi), vi) in p
                        .value
                        .data_mut()
                        .iter_mut()
                        .zip(g)
                        .zip(m.iter_mut())
                        .zip(v.iter_mut())
                    {
                        *mi = b1 * *mi + (S::one() - b1) * gi;
                        *vi = b2 * *vi + (S::one() - b2) * gi * gi;
                        let m_hat = *mi / bc1;
                        let v_hat = *vi / bc2;
                        *w -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
