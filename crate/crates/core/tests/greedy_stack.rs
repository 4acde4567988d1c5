mod common;

use beliefnet_core::data::{synth_dataset, ClusterSpec};
use beliefnet_core::dbn::{
    features, greedy_pretrain, greedy_pretrain_with, propagate_up, transpose_init, DbnStack, PropagationMode,
};
use beliefnet_core::eval::argmax;
use beliefnet_core::head::{predict_proba_batch, train_head, SoftmaxHead};
use beliefnet_core::oracle::ExactOracle;
use beliefnet_core::rbm::{train_rbm, RbmParams, INIT_STD};
use beliefnet_core::TrainConfig;
use common::*;
use ndarray::{array, Array1, Array2, ArrayView2};

#[test]
fn single_layer_equals_train_rbm() {
    let data = bars_and_stripes();
    let cfg = TrainConfig {
        epochs: 30,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let stack = greedy_pretrain(data.view(), &[4, 5], &cfg, &mut rng(3)).unwrap();
    let mut r = rng(3);
    let init = RbmParams::random(4, 5, INIT_STD, &mut r);
    let alone = train_rbm(data.view(), init, &cfg, &mut r).unwrap();
    assert_eq!(stack.layers, vec![alone.params]);
}

#[test]
fn paper_small_architecture_shapes() {
    let mut r = rng(1);
    let data = Array2::from_shape_fn((60, 12), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 10.0);
    let cfg = TrainConfig {
        epochs: 25,
        ..TrainConfig::default()
    };
    let stack = greedy_pretrain(data.view(), &[12, 50, 50, 10], &cfg, &mut r).unwrap();
    let shapes: Vec<_> = stack.layers.iter().map(|l| l.w.dim()).collect();
    assert_eq!(shapes, vec![(12, 50), (50, 50), (50, 10)]);
    assert_eq!(stack.layer_sizes(), vec![12, 50, 50, 10]);
}

#[test]
fn pretraining_is_reproducible_and_freezes_lower_layers() {
    let data = bars_and_stripes();
    let cfg = TrainConfig {
        epochs: 10,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let a = greedy_pretrain(data.view(), &[4, 3, 2], &cfg, &mut rng(5)).unwrap();
    let b = greedy_pretrain(data.view(), &[4, 3, 2], &cfg, &mut rng(5)).unwrap();
    assert_eq!(a, b);

    // The first layer of a deeper run is exactly the single-layer result.
    let shallow = greedy_pretrain(data.view(), &[4, 3], &cfg, &mut rng(5)).unwrap();
    assert_eq!(a.layers[0], shallow.layers[0]);
}

#[test]
fn second_layer_training_does_not_lower_dbn_likelihood() {
    // Six visible units, a four-unit first hidden layer, and a transpose
    // initialized top layer: the two-layer model starts out identical to the
    // base RBM and greedy training of the top layer should not make it worse.
    let data = array![
        [1.0, 1.0, 1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0, 1.0, 1.0],
        [1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0, 1.0],
        [1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
        [1.0, 1.0, 1.0, 0.0, 0.0, 0.0]
    ];
    let oracle = ExactOracle::default();
    let cfg = TrainConfig {
        epochs: 300,
        learning_rate: 0.05,
        batch_size: 6,
        ..TrainConfig::default()
    };
    for seed in 0..5 {
        let mut r = rng(seed);
        let init = RbmParams::random(6, 4, INIT_STD, &mut r);
        let bottom = train_rbm(data.view(), init, &cfg, &mut r).unwrap().params;
        let start = DbnStack::new(vec![bottom.clone(), transpose_init(&bottom)]).unwrap();
        let baseline = oracle.dbn_loglik(&start, data.view()).unwrap();
        let rbm_ll = oracle.loglik(data.view(), &bottom).unwrap();
        assert!((baseline - rbm_ll).abs() < 1e-9);

        let top_data = beliefnet_core::dbn::propagate_batch(
            data.view(),
            std::slice::from_ref(&bottom),
            PropagationMode::MeanField,
        )
        .unwrap();
        let top_cfg = TrainConfig {
            learning_rate: 0.01,
            epochs: 100,
            ..cfg.clone()
        };
        let top = train_rbm(top_data.view(), transpose_init(&bottom), &top_cfg, &mut r)
            .unwrap()
            .params;
        let trained = DbnStack::new(vec![bottom, top]).unwrap();
        let after = oracle.dbn_loglik(&trained, data.view()).unwrap();
        assert!(after >= baseline - 1e-9, "seed {seed}: {baseline} -> {after}");
    }
}

#[test]
fn sampled_propagation_agrees_with_mean_field_for_one_layer() {
    let layer = random_machine(5, 4, 1.0, 8);
    let stack = DbnStack::new(vec![layer]).unwrap();
    let v = array![0.2, 0.9, 0.5, 1.0, 0.0];
    let mf = propagate_up(v.view(), &stack, PropagationMode::MeanField).unwrap();
    let again = propagate_up(v.view(), &stack, PropagationMode::MeanField).unwrap();
    assert_eq!(mf, again);
    let n = 20_000;
    let mut mean = Array1::<f64>::zeros(4);
    for seed in 0..n {
        mean += &propagate_up(v.view(), &stack, PropagationMode::Sampled(seed)).unwrap();
    }
    mean /= n as f64;
    for (m, p) in mean.iter().zip(mf.iter()) {
        assert!((m - p).abs() < 0.015, "{m} vs {p}");
    }
}

#[test]
fn sampled_pretraining_runs() {
    let data = bars_and_stripes();
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let out = greedy_pretrain_with(data.view(), &[4, 3, 4], &cfg, PropagationMode::Sampled(11), &mut rng(0)).unwrap();
    assert_eq!(out.recon_traces.len(), 2);
    assert_eq!(out.stack.layer_sizes(), vec![4, 3, 4]);
}

fn head_accuracy(x: ArrayView2<f64>, labels: &[usize], seed: u64) -> f64 {
    let cfg = TrainConfig {
        head_epochs: 60,
        ..TrainConfig::default()
    };
    let head = train_head(x, labels, SoftmaxHead::zeros(x.ncols(), 2), &cfg, &mut rng(seed))
        .unwrap()
        .head;
    let probs = predict_proba_batch(x, &head).unwrap();
    let correct = probs
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(p, &l)| argmax(*p) == l)
        .count();
    correct as f64 / labels.len() as f64
}

#[test]
fn pretrained_features_stay_separable() {
    let spec = ClusterSpec {
        n_classes: 2,
        dim: 8,
        separation: 0.4,
        noise: 0.1,
        n_train: 2000,
        n_test: 10,
    };
    for seed in 0..5 {
        let (train, _) = synth_dataset(&spec, &mut rng(seed)).unwrap();
        let binary = train.features.mapv(|x| if x > 0.5 { 1.0 } else { 0.0 });
        let cfg = TrainConfig {
            epochs: 20,
            ..TrainConfig::default()
        };
        let stack = greedy_pretrain(binary.view(), &[8, 6, 4], &cfg, &mut rng(seed)).unwrap();
        let top = features(binary.view(), &stack).unwrap();
        let raw_acc = head_accuracy(binary.view(), &train.labels, seed);
        let top_acc = head_accuracy(top.view(), &train.labels, seed);
        assert!(top_acc >= raw_acc - 0.01, "seed {seed}: raw {raw_acc} top {top_acc}");
    }
}
