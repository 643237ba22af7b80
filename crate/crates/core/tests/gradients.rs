use evsnn::events::SpikeTensor;
use evsnn::snn::{
    backward, check_gradients, forward, softmax_cross_entropy, InputTiming, ModelKind,
    NetworkConfig, NetworkParams, Plan, ResetMode, SewFunction, SpikeFn,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{random_input, small_net};

fn check(cfg: &NetworkConfig, kind: ModelKind, seed: u64) -> f64 {
    let plan = Plan::new(cfg, kind).unwrap();
    let mut params = NetworkParams::<f64>::init(&plan, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // nonzero biases keep ReLU pre-activations off the kink at exactly 0,
    // which sparse binary inputs would otherwise hit
    for t in params
        .tensors
        .iter_mut()
        .filter(|t| t.name.ends_with("bias"))
    {
        t.data
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-0.3..0.3));
    }
    let g = cfg.input;
    let a = random_input(&mut rng, g.time_bins, g.height, g.width, 0.3);
    let b = random_input(&mut rng, g.time_bins, g.height, g.width, 0.3);
    let r = check_gradients(&plan, &params, &[&a, &b], &[2, 0], 1e-5, 1e-6).unwrap();
    assert!(r.checked > 500);
    assert!(r.max_rel_error < 1e-4, "{kind:?}: {r:?}");
    r.max_rel_error
}

#[test]
fn relaxed_bptt_matches_finite_differences() {
    for f in [SewFunction::Add, SewFunction::And, SewFunction::Iand] {
        check(&small_net(f), ModelKind::Spiking, 5);
    }
}

#[test]
fn relaxed_bptt_matches_for_hard_reset_and_delayed_input() {
    let mut cfg = small_net(SewFunction::Add);
    cfg.reset = ResetMode::Hard;
    check(&cfg, ModelKind::Spiking, 6);
    let mut cfg = small_net(SewFunction::Add);
    cfg.input_timing = InputTiming::Delayed;
    check(&cfg, ModelKind::Spiking, 7);
}

#[test]
fn dense_gradients_match_finite_differences() {
    check(&small_net(SewFunction::Add), ModelKind::Dense, 8);
}

#[test]
fn silent_input_still_produces_surrogate_gradients() {
    // zero input, no biases: every IF sees V = 0, so gradients reach the first
    // layer only through σ'(0 − θ)
    let cfg = small_net(SewFunction::Add);
    let plan = Plan::new(&cfg, ModelKind::Spiking).unwrap();
    let mut params = NetworkParams::<f64>::init(&plan, 2);
    params
        .get_mut("classifier.weight")
        .unwrap()
        .data
        .iter_mut()
        .for_each(|v| *v = 0.3);
    let x = SpikeTensor::zeros(4, 8, 8);
    let tr = forward(&plan, &params, &[&x], SpikeFn::Heaviside).unwrap();
    assert!(tr.logits.iter().all(|&v| v == 0.0));
    let (_, gl) = softmax_cross_entropy(&tr.logits, 3, &[1]);
    for (c, g) in gl.iter().enumerate() {
        let want = 1.0 / 3.0 - if c == 1 { 1.0 } else { 0.0 };
        assert_eq!(*g, want);
    }
    let grads = backward(&plan, &params, &tr, &gl);
    // classifier input 𝓕 is zero, so only the bias moves
    assert!(grads
        .get("classifier.weight")
        .unwrap()
        .data
        .iter()
        .all(|&v| v == 0.0));
    assert_eq!(grads.get("classifier.bias").unwrap().data, gl);
    // the first conv sees zero input: weight gradients vanish, bias gradients do not
    assert!(grads
        .get("conv0.weight")
        .unwrap()
        .data
        .iter()
        .all(|&v| v == 0.0));
    let gb = &grads.get("conv0.bias").unwrap().data;
    assert!(gb.iter().any(|&v| v != 0.0));
    assert!(gb.iter().all(|v| v.abs() < 1.0));
}

#[test]
fn forward_is_bitwise_deterministic() {
    let cfg = NetworkConfig::sew_tiny(4, 6, 32, 32);
    let plan = Plan::new(&cfg, ModelKind::Spiking).unwrap();
    let params = NetworkParams::<f32>::init(&plan, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_input(&mut rng, 6, 32, 32, 0.05);
    let a = forward(&plan, &params, &[&x], SpikeFn::Heaviside).unwrap();
    let b = forward(&plan, &params, &[&x], SpikeFn::Heaviside).unwrap();
    let bits = |v: &[f32]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.logits), bits(&b.logits));
}
