use dccl_core::model::{build_heterogeneous, part_rng, split_model, InferenceMode, LayerSpec, ModelSpec, SplitConfig};
use dccl_core::tensor::loss::softmax_cross_entropy;
use dccl_core::training::summed_logit_loss;
use dccl_core::{DecoupledModel, Tensor};
use proptest::prelude::*;

fn model(seed: u64) -> DecoupledModel {
    split_model(&ModelSpec::desk_base(8, 8, 32, 10), &SplitConfig::default(), seed).unwrap()
}

fn inputs(n: usize, seed: u64) -> Tensor {
    Tensor::uniform(vec![n, 1, 8, 8], 2.0, &mut part_rng(seed, 3))
}

#[test]
fn logits_are_sums_of_heads_on_100_inputs() {
    let dm = model(1);
    let x = inputs(100, 2);
    let cloud = dm.cloud_logits(&x).unwrap();
    let co = dm.co_logits(&x).unwrap();
    let control = dm.control_logits(&x).unwrap();
    let dec = dm.logits(&x, InferenceMode::Decoupled).unwrap();
    let dev = dm.logits(&x, InferenceMode::DeviceSide).unwrap();
    for i in 0..dec.len() {
        assert!((dec.data()[i] - (cloud.data()[i] + co.data()[i])).abs() < 1e-12);
        assert!((dev.data()[i] - (control.data()[i] + co.data()[i])).abs() < 1e-12);
    }
    assert_eq!(dm.logits(&x, InferenceMode::CloudOnly).unwrap(), cloud);
    assert_eq!(dm.logits(&x, InferenceMode::CoOnly).unwrap(), co);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    /// No parameter of the cloud submodel reaches the co logits.
    #[test]
    fn cloud_perturbation_leaves_co_logits_unchanged(
        seed in 0u64..1000,
        pick in any::<prop::sample::Index>(),
        delta in -5.0f64..5.0,
    ) {
        let mut dm = model(seed);
        let x = inputs(100, seed + 1);
        let co_before = dm.co_logits(&x).unwrap();
        let mut v = dm.cloud.flat_values();
        let j = pick.index(v.len());
        v[j] += delta;
        dm.cloud.set_flat_values(&v).unwrap();
        let after = dm.co_logits(&x).unwrap();
        prop_assert_eq!(after.data(), co_before.data());
    }

    /// Symmetrically, co parameters never reach the cloud logits.
    #[test]
    fn co_perturbation_leaves_cloud_logits_unchanged(seed in 0u64..1000, pick in any::<prop::sample::Index>()) {
        let mut dm = model(seed);
        let x = inputs(20, seed + 7);
        let before = dm.cloud_logits(&x).unwrap();
        let mut v = dm.co.flat_values();
        let j = pick.index(v.len());
        v[j] += 1.0;
        dm.co.set_flat_values(&v).unwrap();
        let after = dm.cloud_logits(&x).unwrap();
        prop_assert_eq!(after.data(), before.data());
    }
}

#[test]
fn heterogeneous_heads_drive_the_same_loss_as_summed_logits() {
    let cloud = ModelSpec {
        input_shape: [1, 8, 8],
        num_classes: 10,
        layers: vec![
            LayerSpec::conv(8, 3, 1),
            LayerSpec::Relu,
            LayerSpec::conv(8, 3, 1),
            LayerSpec::Relu,
            LayerSpec::maxpool(2),
            LayerSpec::conv(8, 3, 1),
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::fc(10),
        ],
    };
    let co = ModelSpec {
        input_shape: [1, 8, 8],
        num_classes: 10,
        layers: vec![
            LayerSpec::conv(4, 3, 1),
            LayerSpec::Relu,
            LayerSpec::maxpool(2),
            LayerSpec::conv(4, 3, 1),
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::fc(10),
        ],
    };
    let dm: DecoupledModel = build_heterogeneous(&cloud, &co, 5).unwrap();
    assert!(dm.encoder.is_empty());
    let x = inputs(16, 6);
    let labels: Vec<usize> = (0..16).map(|i| i % 10).collect();
    let (cl, co_l) = (dm.cloud_logits(&x).unwrap(), dm.co_logits(&x).unwrap());
    assert_eq!(cl.shape(), [16, 10]);
    assert_eq!(co_l.shape(), [16, 10]);
    let (a, ga) = summed_logit_loss(Some(&cl), &co_l, &labels).unwrap();
    let (b, gb) = softmax_cross_entropy(&dm.logits(&x, InferenceMode::Decoupled).unwrap(), &labels).unwrap();
    assert_eq!(a, b);
    assert_eq!(ga, gb);
}
