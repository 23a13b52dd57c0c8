mod common;

use aufuse_core::losses::LossWeights;
use aufuse_core::model::{backward, init_model, ModelConfig};
use aufuse_core::nn::{grad_check, Activation, Params};
use common::*;
use proptest::prelude::*;

fn check(cfg: &ModelConfig, batch_seed: u64, n: usize, sw: Option<&[f64]>, w: &LossWeights) -> f64 {
    let params = init_model(cfg).unwrap();
    let batch = toy_batch(batch_seed, cfg, n);
    let (_, grads) = backward(&params, &batch, sw, w).unwrap();
    let report = grad_check(&params, &grads, |p| backward(p, &batch, sw, w).unwrap().0, 1e-5, 1e-4);
    assert!(report.passed, "worst tensor {:?}", report.worst());
    report.max_rel_error
}

#[test]
fn full_model_gradient_default_weights() {
    check(&toy_config(11), 1, 4, None, &LossWeights::default());
}

#[test]
fn full_model_gradient_identity_head_and_sample_weights() {
    let cfg = ModelConfig {
        activation: Activation::Identity,
        ..toy_config(12)
    };
    check(&cfg, 2, 3, Some(&[0.5, 2.0, 1.0]), &LossWeights::unit());
}

#[test]
fn single_frame_sequences() {
    let cfg = toy_config(13);
    let params = init_model(&cfg).unwrap();
    let mut r = rng(5);
    let batch = vec![aufuse_core::FusionSample {
        input: toy_input(&mut r, &cfg, [1, 1, 1]),
        label: [1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0],
    }];
    let w = LossWeights::default();
    let (_, grads) = backward(&params, &batch, None, &w).unwrap();
    let report = grad_check(&params, &grads, |p| backward(p, &batch, None, &w).unwrap().0, 1e-5, 1e-4);
    assert!(report.passed, "{:?}", report.worst());
}

#[test]
fn corrupted_gradient_is_caught() {
    let cfg = toy_config(14);
    let params = init_model(&cfg).unwrap();
    let batch = toy_batch(3, &cfg, 2);
    let w = LossWeights::default();
    let (_, mut grads) = backward(&params, &batch, None, &w).unwrap();
    grads.gru_t.backward.u_z.as_mut_slice()[1] += 1e-3;
    let report = grad_check(&params, &grads, |p| backward(p, &batch, None, &w).unwrap().0, 1e-5, 1e-4);
    assert!(!report.passed);
    assert_eq!(report.worst().unwrap().name, "gru_t.bwd.u_z");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn random_toy_models_pass(seed in 0u64..10_000, n in 1usize..=4) {
        let cfg = toy_config(seed);
        prop_assert!(check(&cfg, seed ^ 0xabc, n, None, &LossWeights::default()) < 1e-4);
    }
}

#[test]
fn gradient_has_parameter_layout() {
    let cfg = toy_config(0);
    let params = init_model(&cfg).unwrap();
    let (_, g) = backward(&params, &toy_batch(0, &cfg, 2), None, &LossWeights::default()).unwrap();
    assert!(params.congruent(&g));
}
