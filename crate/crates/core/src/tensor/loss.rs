//! Loss functions. Each returns the scalar loss together with its gradient
//! with respect to the prediction tensor.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Mean over the batch of `-log softmax(logits)[label]`, computed with
/// log-sum-exp stabilization.
pub fn softmax_cross_entropy<S: Scalar>(
    logits: &Tensor<S>,
    labels: &[usize],
) -> Result<(S, Tensor<S>)> {
    let sh = logits.shape();
    if sh.len() != 2 || sh[0] != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "softmax_cross_entropy",
            expected: vec![labels.len(), sh.last().copied().unwrap_or(0)],
            got: sh.to_vec(),
        });
    }
    let (n, k) = (sh[0], sh[1]);
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: k,
        });
    }
    let inv_n = S::one() / S::of(n as f64);
    let mut grad = vec![S::zero(); n * k];
    let mut total = S::zero();
    for (i, (row, g)) in logits
        .data()
        .chunks_exact(k)
        .zip(grad.chunks_exact_mut(k))
        .enumerate()
    {
        let m = row.iter().copied().fold(S::neg_infinity(), S::max);
        let mut z = S::zero();
        for (gj, &v) in g.iter_mut().zip(row) {
            let e = (v - m).exp();
            *gj = e;
            z += e;
        }
        let log_z = z.ln() + m;
        total += log_z - row[labels[i]];
        for gj in g.iter_mut() {
            *gj = *gj / z * inv_n;
        }
        g[labels[i]] -= inv_n;
    }
    Ok((total * inv_n, Tensor::new(vec![n, k], grad)?))
}

/// Mean over all elements of the squared difference.
pub fn mse_loss<S: Scalar>(pred: &Tensor<S>, target: &Tensor<S>) -> Result<(S, Tensor<S>)> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            op: "mse_loss",
            expected: target.shape().to_vec(),
            got: pred.shape().to_vec(),
        });
    }
    let count = S::of(pred.len() as f64);
    let two = S::of(2.0);
    let mut total = S::zero();
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            total += d * d;
            two * d / count
        })
        .collect();
    Ok((total / count, Tensor::new(pred.shape().to_vec(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_give_log_k() {
        let logits = Tensor::<f64>::full(vec![3, 4], 0.7);
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 1, 3]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((loss - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn large_logit_is_stable() {
        let logits = Tensor::<f64>::from_f64(vec![1, 4], &[1000.0, 0.0, 0.0, 0.0]).unwrap();
        let (loss, g) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!(loss.is_finite() && loss.abs() < 1e-12);
        assert!(g.all_finite());
    }

    #[test]
    fn rejects_out_of_range_label() {
        let logits = Tensor::<f64>::zeros(vec![2, 3]);
        assert!(matches!(
            softmax_cross_entropy(&logits, &[0, 3]),
            Err(Error::LabelOutOfRange { label: 3, .. })
        ));
    }

    #[test]
    fn mse_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = Tensor::<f64>::uniform(vec![2, 3], 1.0, &mut rng);
        assert_eq!(mse_loss(&t, &t).unwrap().0, 0.0);
        let mut p = t.clone();
        p.data_mut().iter_mut().for_each(|v| *v += 2.0);
        assert!((mse_loss(&p, &t).unwrap().0 - 4.0).abs() < 1e-12);
        assert!(mse_loss(&p, &Tensor::zeros(vec![3, 2])).is_err());
    }
}
