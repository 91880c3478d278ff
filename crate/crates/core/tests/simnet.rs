use dccl_core::model::checkpoint::network_len;
use dccl_core::model::{build_model, InferenceMode, LayerSpec, ModelSpec};
use dccl_core::simnet::{aggregate, sample_weights, Direction, ExperimentConfig, MessageKind, Method, TrainedModel, Workbench};
use dccl_core::training::{evaluate, high_level_features, Guide};
use dccl_core::Network;
use proptest::prelude::*;

fn short(method: Method, rounds: usize) -> ExperimentConfig {
    ExperimentConfig {
        method,
        rounds,
        device_epochs_per_round: 2,
        ..ExperimentConfig::default()
    }
}

#[test]
fn dc_ccl_follows_the_round_schedule_byte_for_byte() {
    let mut wb = Workbench::<f64>::new();
    let cfg = short(Method::DcCcl, 3);
    let out = wb.run(&cfg).unwrap();
    let TrainedModel::Decoupled(dm) = &out.model else { panic!("decoupled model expected") };
    let ch = &out.channel;
    let co = network_len(&dm.co) as u64;

    // Round 0: encoder, co-submodel and control model go down once.
    let setup: Vec<_> = ch.log().iter().filter(|m| m.round == 0).collect();
    assert!(setup.iter().all(|m| m.direction == Direction::Downlink));
    let kinds: Vec<_> = setup.iter().map(|m| m.kind).collect();
    assert_eq!(kinds, [MessageKind::Encoder, MessageKind::CoSubmodel, MessageKind::ControlModel]);
    let setup_bytes = (network_len(&dm.encoder) + network_len(&dm.co) + network_len(&dm.control)) as u64;
    assert_eq!(out.metrics.setup_bytes, setup_bytes);

    // Rounds 1..=R: one co-submodel up, one down.
    for r in 1..=3 {
        let msgs: Vec<_> = ch.log().iter().filter(|m| m.round == r).collect();
        assert_eq!(msgs.len(), 2);
        assert_eq!((msgs[0].direction, msgs[0].kind, msgs[0].bytes), (Direction::Uplink, MessageKind::CoSubmodel, co));
        assert_eq!((msgs[1].direction, msgs[1].kind, msgs[1].bytes), (Direction::Downlink, MessageKind::CoSubmodel, co));
        assert_eq!(ch.round_bytes(r), 2 * co);
    }
    assert_eq!(out.metrics.round_bytes, Some(2 * co));

    // Round R+1: device features up, finetuned classifier down.
    let part = wb.partition(&cfg).unwrap();
    let feats = high_level_features(dm, &part.device_train, Guide::Control).unwrap();
    let feat_bytes: u64 = feats.iter().map(|f| f.byte_size()).sum();
    let fin: Vec<_> = ch.log().iter().filter(|m| m.round == 4).collect();
    assert_eq!(fin.len(), 2);
    assert_eq!((fin[0].direction, fin[0].kind, fin[0].bytes), (Direction::Uplink, MessageKind::Features, feat_bytes));
    let classifier = network_len(&dm.co_classifier().unwrap()) as u64;
    assert_eq!((fin[1].direction, fin[1].kind, fin[1].bytes), (Direction::Downlink, MessageKind::Classifier, classifier));
    assert_eq!(out.metrics.finetune_bytes, feat_bytes + classifier);

    assert_eq!(ch.recount(), (ch.uplink_bytes(), ch.downlink_bytes()));
    assert_eq!(ch.total_bytes(), setup_bytes + 6 * co + feat_bytes + classifier);
    assert_eq!(out.trace.len(), 3);
    assert_eq!(out.trace.last().unwrap().uplink_bytes, 3 * co);
}

#[test]
fn distr_d_to_dc_ccl_round_ratio_is_the_size_ratio() {
    let mut wb = Workbench::<f64>::new();
    let dc = wb.run(&short(Method::DcCcl, 1)).unwrap();
    let dd = wb.run(&short(Method::DistrD, 1)).unwrap();
    let TrainedModel::Decoupled(dm) = &dc.model else { panic!() };
    let co = network_len(&dm.co) as u64;
    let whole = (network_len(&dm.encoder) + network_len(&dm.cloud) + network_len(&dm.co)) as u64;
    let (rd, rc) = (dd.metrics.round_bytes.unwrap(), dc.metrics.round_bytes.unwrap());
    assert_eq!(rc, 2 * co);
    assert_eq!(rd * co, rc * whole);
}

#[test]
fn zero_rounds_is_setup_only() {
    let mut wb = Workbench::<f64>::new();
    let cfg = short(Method::DcCcl, 0);
    let out = wb.run(&cfg).unwrap();
    let distilled = wb.distilled(&cfg).unwrap();
    let part = wb.partition(&cfg).unwrap();
    let expect = evaluate(&distilled, &part.test, InferenceMode::Decoupled).unwrap();
    assert_eq!(out.metrics.accuracy, expect);
    let setup = (network_len(&distilled.encoder) + network_len(&distilled.co) + network_len(&distilled.control)) as u64;
    assert_eq!(out.channel.total_bytes(), setup);
    assert_eq!(out.metrics.round_bytes, None);
    assert!(out.trace.is_empty());
}

#[test]
fn reruns_are_identical() {
    let cfg = short(Method::DcCcl, 2);
    let mut a = Workbench::<f64>::new().run(&cfg).unwrap().metrics;
    let mut b = Workbench::<f64>::new().run(&cfg).unwrap().metrics;
    a.wall_seconds = 0.0;
    b.wall_seconds = 0.0;
    assert_eq!(a, b);
}

/// Mean over three seeds of the default skewed scenario.
#[test]
fn method_orderings_on_the_skewed_scenario() {
    let mut wb = Workbench::<f64>::new();
    let mut mean = |m: Method| {
        (0..3)
            .map(|seed| {
                let cfg = ExperimentConfig {
                    method: m,
                    seed,
                    ..ExperimentConfig::default()
                };
                wb.run(&cfg).unwrap().metrics.accuracy
            })
            .sum::<f64>()
            / 3.0
    };
    let dc = mean(Method::DcCcl);
    let cloud_b = mean(Method::CloudB);
    let central_b = mean(Method::CentralB);
    let incr_s = mean(Method::IncrS);
    let no_control = mean(Method::NoControl);
    let no_finetune = mean(Method::NoFinetune);
    println!("dc-ccl {dc:.4} cloud-b {cloud_b:.4} central-b {central_b:.4} incr-s {incr_s:.4} no-control {no_control:.4} no-finetune {no_finetune:.4}");
    assert!(dc - cloud_b >= 0.10);
    assert!(central_b >= cloud_b);
    assert!(incr_s < dc);
    assert!(no_control < dc);
    assert!(no_finetune < dc);
}

fn tiny(seed: u64) -> Network {
    let spec = ModelSpec {
        input_shape: [1, 1, 3],
        num_classes: 2,
        layers: vec![LayerSpec::Flatten, LayerSpec::fc(2)],
    };
    build_model(&spec, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn aggregation_is_a_convex_combination(sa in any::<u64>(), sb in any::<u64>(), nc in 1usize..1000, nd in 1usize..1000) {
        let (a, b) = (tiny(sa), tiny(sb));
        let (wc, wd) = sample_weights(nc, nd);
        prop_assert!((wc + wd - 1.0).abs() < 1e-12);
        prop_assert!((wc * nd as f64 - wd * nc as f64).abs() < 1e-9);
        let m = aggregate(&a, &b, wc, wd).unwrap();
        for ((x, y), z) in a.flat_values().iter().zip(b.flat_values()).zip(m.flat_values()) {
            prop_assert!((z - (wc * x + wd * y)).abs() < 1e-12);
            prop_assert!(z >= x.min(y) - 1e-12 && z <= x.max(y) + 1e-12);
        }
        // Swapping the parties and their weights gives the same average.
        let swapped = aggregate(&b, &a, wd, wc).unwrap();
        for (p, q) in m.flat_values().iter().zip(swapped.flat_values()) {
            prop_assert!((p - q).abs() < 1e-12);
        }
        // Idempotent, and a zero weight selects the other party exactly.
        prop_assert_eq!(aggregate(&a, &a, wc, wd).unwrap(), a.clone());
        prop_assert_eq!(aggregate(&a, &b, 1.0, 0.0).unwrap(), a.clone());
        prop_assert_eq!(aggregate(&a, &b, 0.0, 1.0).unwrap(), b);
    }
}
