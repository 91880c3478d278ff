use crate::error::{Error, Result};
use crate::nn::Network;
use crate::scalar::Scalar;

/// Elementwise `w_cloud · a + w_device · b` over all parameters. A zero
/// weight contributes nothing, so weights `(1, 0)` return `a` exactly, and
/// equal entries are returned as-is so averaging is idempotent.
pub fn aggregate<S: Scalar>(a: &Network<S>, b: &Network<S>, w_cloud: f64, w_device: f64) -> Result<Network<S>> {
    if a.param_shapes() != b.param_shapes() || a.layer_specs() != b.layer_specs() {
        return Err(Error::ShapeMismatch {
            op: "aggregate",
            expected: a.param_shapes().concat(),
            got: b.param_shapes().concat(),
        });
    }
    if !(w_cloud >= 0.0 && w_device >= 0.0) || ((w_cloud + w_device) - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument {
            op: "aggregate",
            reason: format!("weights ({w_cloud}, {w_device}) must be non-negative and sum to 1"),
        });
    }
    let (wa, wb) = (S::of(w_cloud), S::of(w_device));
    let values: Vec<S> = a
        .flat_values()
        .into_iter()
        .zip(b.flat_values())
        .map(|(x, y)| match (w_cloud == 0.0, w_device == 0.0) {
            (false, true) => x,
            (true, false) => y,
            _ if x == y => x,
            _ => wa * x + wb * y,
        })
        .collect();
    let mut out = a.clone();
    out.set_flat_values(&values)?;
    Ok(out)
}

/// Weights proportional to the two parties' sample counts.
pub fn sample_weights(n_cloud: usize, n_device: usize) -> (f64, f64) {
    let total = (n_cloud + n_device) as f64;
    (n_cloud as f64 / total, n_device as f64 / total)
}
