//! Reverse-mode gradients against central finite differences.
//!
//! Relative error is `|analytic − numeric| / max(|analytic|, |numeric|, 1e-4)`:
//! the floor keeps entries whose true gradient is ~0 from dividing
//! roundoff by roundoff.

use std::time::Instant;

use dccl_core::model::{build_model, part_rng, split_model, LayerSpec, ModelSpec, SplitConfig};
use dccl_core::tensor::loss::softmax_cross_entropy;
use dccl_core::training::summed_logit_loss;
use dccl_core::{Network, Tensor};
use rand::Rng;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = part_rng(seed, 99);
    Tensor::uniform(shape.to_vec(), 1.0, &mut rng)
}

/// Scalar objective: a fixed random projection of the network output, so
/// every output element carries gradient.
fn projection_loss(net: &Network, x: &Tensor, r: &Tensor) -> f64 {
    let y = net.forward(x).unwrap();
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

/// Compare every parameter and input gradient (or `per_tensor` sampled
/// entries of each when set) under the projection loss.
fn check_network(net: &mut Network, x: &Tensor, seed: u64, per_tensor: Option<usize>) -> f64 {
    let out_shape = net.forward(x).unwrap().shape().to_vec();
    let r = random_tensor(&out_shape, seed ^ 0xabc);
    net.zero_grad();
    net.forward_train(x).unwrap();
    let gx = net.backward(r.clone()).unwrap();
    let analytic: Vec<Vec<f64>> = net.parameters().iter().map(|p| p.grad().unwrap().to_vec()).collect();

    let mut rng = part_rng(seed, 7);
    let pick = |n: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<usize> {
        match per_tensor {
            Some(k) if k < n => (0..k).map(|_| rng.random_range(0..n)).collect(),
            _ => (0..n).collect(),
        }
    };
    let mut worst: f64 = 0.0;
    let base = net.flat_values();
    let mut offset = 0;
    for grads in &analytic {
        for j in pick(grads.len(), &mut rng) {
            let mut v = base.clone();
            v[offset + j] += EPS;
            net.set_flat_values(&v).unwrap();
            let up = projection_loss(net, x, &r);
            v[offset + j] -= 2.0 * EPS;
            net.set_flat_values(&v).unwrap();
            let down = projection_loss(net, x, &r);
            worst = worst.max(rel_err(grads[j], (up - down) / (2.0 * EPS)));
        }
        offset += grads.len();
    }
    net.set_flat_values(&base).unwrap();
    for j in pick(x.len(), &mut rng) {
        let mut xp = x.clone();
        xp.data_mut()[j] += EPS;
        let up = projection_loss(net, &xp, &r);
        xp.data_mut()[j] -= 2.0 * EPS;
        let down = projection_loss(net, &xp, &r);
        worst = worst.max(rel_err(gx.data()[j], (up - down) / (2.0 * EPS)));
    }
    worst
}

fn single(input: &[usize], layers: Vec<LayerSpec>, seed: u64) -> Network {
    let mut rng = part_rng(seed, 1);
    Network::build(input, &layers, &mut rng).unwrap()
}

#[test]
fn conv_gradients() {
    for (stride, padding, bias) in [(1, 0, false), (1, 1, true), (2, 1, true), (2, 2, false)] {
        let layer = LayerSpec::Conv {
            out_channels: 3,
            kernel: 3,
            stride,
            padding,
            bias,
        };
        let mut net = single(&[2, 6, 7], vec![layer], 11);
        let x = random_tensor(&[2, 2, 6, 7], 12);
        let e = check_network(&mut net, &x, 13, None);
        assert!(e < TOL, "conv stride {stride} pad {padding}: {e}");
    }
}

#[test]
fn maxpool_gradients() {
    for (window, stride) in [(2, 2), (3, 1), (2, 1)] {
        let mut net = single(&[2, 6, 6], vec![LayerSpec::Maxpool { window, stride }], 21);
        let x = random_tensor(&[3, 2, 6, 6], 22);
        let e = check_network(&mut net, &x, 23, None);
        assert!(e < TOL, "maxpool {window}/{stride}: {e}");
    }
}

#[test]
fn fc_gradients() {
    for bias in [false, true] {
        let mut net = single(&[5], vec![LayerSpec::Fc { out_features: 4, bias }], 31);
        let x = random_tensor(&[3, 5], 32);
        let e = check_network(&mut net, &x, 33, None);
        assert!(e < TOL, "fc bias {bias}: {e}");
    }
}

#[test]
fn relu_and_flatten_gradients() {
    let mut net = single(&[2, 3, 3], vec![LayerSpec::Relu, LayerSpec::Flatten], 41);
    let x = random_tensor(&[4, 2, 3, 3], 42);
    let e = check_network(&mut net, &x, 43, None);
    assert!(e < TOL, "relu/flatten: {e}");
}

#[test]
fn desk_cnn_gradients_every_parameter() {
    let spec = ModelSpec::desk_base(8, 4, 8, 10);
    let mut net = build_model::<f64>(&spec, 51).unwrap();
    let x = random_tensor(&[2, 1, 8, 8], 52);
    let e = check_network(&mut net, &x, 53, None);
    assert!(e < TOL, "desk CNN: {e}");
}

#[test]
fn feasibility_cnn_gradients_sampled() {
    let start = Instant::now();
    let spec = ModelSpec::feasibility_base();
    let mut net = build_model::<f64>(&spec, 61).unwrap();
    let x = random_tensor(&[1, 3, 32, 32], 62);
    let e = check_network(&mut net, &x, 63, Some(3));
    assert!(e < TOL, "feasibility CNN: {e}");
    assert!(start.elapsed().as_secs() < 60, "took {:?}", start.elapsed());
}

#[test]
fn cross_entropy_gradient_matches_differences() {
    let logits = random_tensor(&[4, 3], 71);
    let labels = [0, 2, 1, 2];
    let (_, g) = softmax_cross_entropy(&logits, &labels).unwrap();
    for j in 0..logits.len() {
        let mut p = logits.clone();
        p.data_mut()[j] += EPS;
        let up = softmax_cross_entropy(&p, &labels).unwrap().0;
        p.data_mut()[j] -= 2.0 * EPS;
        let down = softmax_cross_entropy(&p, &labels).unwrap().0;
        let e = rel_err(g.data()[j], (up - down) / (2.0 * EPS));
        assert!(e < 1e-6, "entry {j}: {e}");
    }
}

#[test]
fn mse_gradient_matches_differences() {
    use dccl_core::tensor::loss::mse_loss;
    let pred = random_tensor(&[3, 4], 81);
    let target = random_tensor(&[3, 4], 82);
    let (_, g) = mse_loss(&pred, &target).unwrap();
    for j in 0..pred.len() {
        let mut p = pred.clone();
        p.data_mut()[j] += EPS;
        let up = mse_loss(&p, &target).unwrap().0;
        p.data_mut()[j] -= 2.0 * EPS;
        let down = mse_loss(&p, &target).unwrap().0;
        let e = rel_err(g.data()[j], (up - down) / (2.0 * EPS));
        assert!(e < 1e-6, "entry {j}: {e}");
    }
}

/// The co-submodel loss `CE(guide + co, y)` differentiated through the co
/// parameters only, with the guide held fixed.
#[test]
fn summed_logit_loss_gradient_wrt_co() {
    let base = ModelSpec::desk_base(8, 4, 16, 10);
    let mut dm = split_model::<f64>(&base, &SplitConfig::default(), 91).unwrap();
    let x = random_tensor(&[3, 1, 8, 8], 92);
    let labels = [1, 8, 9];
    let feats = dm.features(&x).unwrap();
    let guide = dm.control.forward(&feats).unwrap();
    let loss_at = |co: &Network| {
        let logits = co.forward(&feats).unwrap();
        summed_logit_loss(Some(&guide), &logits, &labels).unwrap().0
    };
    dm.co.zero_grad();
    let logits = dm.co.forward_train(&feats).unwrap();
    let (_, g) = summed_logit_loss(Some(&guide), &logits, &labels).unwrap();
    dm.co.backward_params(g).unwrap();
    let analytic: Vec<f64> = dm.co.parameters().iter().flat_map(|p| p.grad().unwrap().to_vec()).collect();
    let values = dm.co.flat_values();
    let mut co = dm.co.clone();
    let mut worst: f64 = 0.0;
    for j in 0..values.len() {
        let mut v = values.clone();
        v[j] += EPS;
        co.set_flat_values(&v).unwrap();
        let up = loss_at(&co);
        v[j] -= 2.0 * EPS;
        co.set_flat_values(&v).unwrap();
        let down = loss_at(&co);
        worst = worst.max(rel_err(analytic[j], (up - down) / (2.0 * EPS)));
    }
    assert!(worst < TOL, "summed-logit loss: {worst}");
}
