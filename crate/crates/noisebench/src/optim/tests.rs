use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::rng::RngStream;

fn cfg(kind: OptimizerKind, alpha: f64) -> OptimizerConfig {
    OptimizerConfig::new(kind, alpha).unwrap()
}

fn single<S: Scalar>(value: &[S]) -> BTreeMap<String, Tensor<S>> {
    let mut m = BTreeMap::new();
    m.insert("w".to_string(), Tensor::from_slice(&[value.len()], value).unwrap());
    m.into_iter().collect()
}

/// Runs `kind` over a fixed gradient trace on one flat parameter.
fn run_trace<S: Scalar>(
    config: &OptimizerConfig,
    w0: &[S],
    grads: &[Vec<S>],
) -> Vec<Vec<S>> {
    let mut params = single(w0);
    let mut state = OptimizerState::new();
    let mut out = Vec::new();
    for g in grads {
        let gmap = single(g.as_slice());
        step(config, &mut state, &mut params, &gmap).unwrap();
        out.push(params["w"].data().to_vec());
    }
    out
}

#[test]
fn sgd_quadratic_recurrence() {
    // f(w) = w^2, g = 2w, alpha = 0.1: w shrinks by factor 0.8 per step.
    let c = cfg(OptimizerKind::Sgd, 0.1);
    let mut params = single(&[1.0f64]);
    let mut state = OptimizerState::new();
    for expected in [0.8, 0.64] {
        let g = single(&[2.0 * params["w"].data()[0]]);
        step(&c, &mut state, &mut params, &g).unwrap();
        assert!((params["w"].data()[0] - expected).abs() < 1e-15);
    }
    assert_eq!(state.step_count(), 2);
}

proptest! {
    #[test]
    fn zero_momentum_matches_sgd_bitwise(
        w0 in proptest::collection::vec(-100.0f32..100.0, 1..8),
        trace in proptest::collection::vec(
            proptest::collection::vec(-100.0f32..100.0, 8), 1..5),
        alpha in 1e-6f64..1.0,
    ) {
        let grads: Vec<Vec<f32>> = trace.iter().map(|g| g[..w0.len()].to_vec()).collect();
        let plain = cfg(OptimizerKind::Sgd, alpha);
        for kind in [OptimizerKind::SgdMomentum, OptimizerKind::SgdNesterov] {
            let mut degen = cfg(kind, alpha);
            degen.momentum = 0.0;
            let a = run_trace(&plain, &w0, &grads);
            let b = run_trace(&degen, &w0, &grads);
            for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn sgd_learning_rate_homogeneity(
        w0 in proptest::collection::vec(-100.0f32..100.0, 1..8),
        trace in proptest::collection::vec(
            proptest::collection::vec(-100.0f32..100.0, 8), 1..5),
        alpha in 1e-6f64..1.0,
    ) {
        // alpha on {g} vs alpha/2 on {2g}: both scalings are exact in
        // binary floating point, so trajectories agree bitwise.
        let grads: Vec<Vec<f32>> = trace.iter().map(|g| g[..w0.len()].to_vec()).collect();
        let doubled: Vec<Vec<f32>> =
            grads.iter().map(|g| g.iter().map(|x| 2.0 * x).collect()).collect();
        let a = run_trace(&cfg(OptimizerKind::Sgd, alpha), &w0, &grads);
        let b = run_trace(&cfg(OptimizerKind::Sgd, alpha / 2.0), &w0, &doubled);
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn adam_first_step_is_nearly_sign_descent(g0 in -50.0f64..50.0, alpha in 1e-4f64..0.1) {
        prop_assume!(g0.abs() > 1e-6);
        let c = cfg(OptimizerKind::Adam, alpha);
        let w0 = 0.37f64;
        let got = run_trace(&c, &[w0], &[vec![g0]])[0][0];
        let ideal = w0 - alpha * g0.signum();
        prop_assert!((got - ideal).abs() <= 2.0 * c.epsilon * alpha / g0.abs());
    }
}

/// Independent scalar recurrences, written straight from the update rules.
fn scalar_oracle(config: &OptimizerConfig, w0: f64, grads: &[f64]) -> Vec<f64> {
    let (a, mu, b1, b2, eps) =
        (config.alpha, config.momentum, config.beta1, config.beta2, config.epsilon);
    let (mut w, mut v, mut m, mut u) = (w0, 0.0, 0.0, 0.0);
    let mut out = Vec::new();
    for (i, &g) in grads.iter().enumerate() {
        let t = (i + 1) as i32;
        match config.kind {
            OptimizerKind::Sgd => w -= a * g,
            OptimizerKind::SgdMomentum => {
                v = mu * v + g;
                w -= a * v;
            }
            OptimizerKind::SgdNesterov => {
                v = mu * v + g;
                w -= a * (mu * v + g);
            }
            OptimizerKind::Adam => {
                m = b1 * m + (1.0 - b1) * g;
                v = b2 * v + (1.0 - b2) * g * g;
                w -= a * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
            }
            OptimizerKind::Nadam => {
                m = b1 * m + (1.0 - b1) * g;
                v = b2 * v + (1.0 - b2) * g * g;
                let mbar = b1 * m / (1.0 - b1.powi(t)) + (1.0 - b1) * g / (1.0 - b1.powi(t));
                w -= a * mbar / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
            }
            OptimizerKind::Adamax => {
                m = b1 * m + (1.0 - b1) * g;
                u = (b2 * u).max(g.abs());
                w -= a / (1.0 - b1.powi(t)) * m / (u + eps);
            }
        }
        out.push(w);
    }
    out
}

fn gaussian_trace(seed: u64, steps: usize) -> Vec<f64> {
    let mut rng = RngStream::new(seed);
    (0..steps).map(|_| rng.next_gaussian_pair().0).collect()
}

#[test]
fn all_kinds_match_scalar_oracle_at_defaults() {
    let grads = gaussian_trace(41, 10);
    let packed: Vec<Vec<f64>> = grads.iter().map(|&g| vec![g]).collect();
    for kind in OptimizerKind::ALL {
        let c = cfg(kind, 0.05);
        let got = run_trace(&c, &[1.25f64], &packed);
        let want = scalar_oracle(&c, 1.25, &grads);
        for (step_idx, (g, w)) in got.iter().zip(&want).enumerate() {
            assert!(
                (g[0] - w).abs() < 1e-12,
                "{} diverges from oracle at step {step_idx}: {} vs {}",
                kind.name(),
                g[0],
                w
            );
        }
    }
}

#[test]
fn zero_beta_adaptive_variants_reduce_to_sign_scaled_sgd() {
    // With beta1 = beta2 = 0 both nadam and adamax step by
    // -alpha * g / (|g| + eps); check the 64-bit trajectory against the
    // scalar oracle and against that closed form.
    let grads = gaussian_trace(42, 10);
    let packed: Vec<Vec<f64>> = grads.iter().map(|&g| vec![g]).collect();
    for kind in [OptimizerKind::Nadam, OptimizerKind::Adamax] {
        let mut c = cfg(kind, 0.03);
        c.beta1 = 0.0;
        c.beta2 = 0.0;
        let got = run_trace(&c, &[0.5f64], &packed);
        let oracle = scalar_oracle(&c, 0.5, &grads);
        let mut w = 0.5;
        for (step_idx, (g, o)) in got.iter().zip(&oracle).enumerate() {
            assert!((g[0] - o).abs() <= 1e-10, "{} step {step_idx}", kind.name());
            w -= c.alpha * grads[step_idx] / (grads[step_idx].abs() + c.epsilon);
            assert!((g[0] - w).abs() <= 1e-10, "{} closed form step {step_idx}", kind.name());
        }
    }
}

#[test]
fn convergence_smoke_on_sphere() {
    // f(w) = ||w||^2 from w0 = ones(10); every optimizer gets f below
    // 1e-3 within 500 steps at alpha = 1e-2.
    for kind in OptimizerKind::ALL {
        let c = cfg(kind, 1e-2);
        let mut params = single(&[1.0f64; 10]);
        let mut state = OptimizerState::new();
        let mut best = f64::INFINITY;
        for _ in 0..500 {
            let g: Vec<f64> = params["w"].data().iter().map(|w| 2.0 * w).collect();
            let gmap = single(&g);
            step(&c, &mut state, &mut params, &gmap).unwrap();
            let f: f64 = params["w"].data().iter().map(|w| w * w).sum();
            best = best.min(f);
        }
        assert!(best < 1e-3, "{} only reached f = {best:.3e}", kind.name());
        assert_eq!(state.step_count(), 500);
    }
}

#[test]
fn params_without_gradients_stay_untouched() {
    let c = cfg(OptimizerKind::Adam, 0.01);
    let mut params = single(&[1.0f32, 2.0]);
    params.insert("running_mean".into(), Tensor::from_slice(&[2], &[0.5f32, -0.5]).unwrap());
    let frozen = params["running_mean"].clone();
    let grads = single(&[0.3f32, -0.7]);
    let mut state = OptimizerState::new();
    step(&c, &mut state, &mut params, &grads).unwrap();
    assert!(params["running_mean"].bits_eq(&frozen));
    assert!(!params["w"].bits_eq(&single(&[1.0f32, 2.0])["w"]));
    assert!(state.slots().contains_key("w"));
    assert!(!state.slots().contains_key("running_mean"));
}

#[test]
fn slot_shapes_track_parameters() {
    let c = cfg(OptimizerKind::SgdMomentum, 0.01);
    let mut params = single(&[1.0f32, 2.0, 3.0]);
    let grads = single(&[0.1f32, 0.2, 0.3]);
    let mut state = OptimizerState::new();
    for expected in 1..=3u64 {
        step(&c, &mut state, &mut params, &grads).unwrap();
        assert_eq!(state.step_count(), expected);
        assert_eq!(state.slots()["w"].len(), 1);
        assert_eq!(state.slots()["w"][0].shape(), &[3]);
    }
}

#[test]
fn mismatches_are_rejected() {
    let c = cfg(OptimizerKind::Sgd, 0.01);
    let mut state = OptimizerState::new();
    let mut params = single(&[1.0f32, 2.0]);

    let mut unknown = BTreeMap::new();
    unknown.insert("ghost".to_string(), Tensor::from_slice(&[2], &[0.0f32, 0.0]).unwrap());
    assert!(matches!(
        step(&c, &mut state, &mut params, &unknown),
        Err(Error::InvalidArgument(_))
    ));

    let mut bad_shape = BTreeMap::new();
    bad_shape.insert("w".to_string(), Tensor::from_slice(&[3], &[0.0f32; 3]).unwrap());
    assert!(matches!(
        step(&c, &mut state, &mut params, &bad_shape),
        Err(Error::InvalidArgument(_))
    ));
    // Failed calls leave the counter alone.
    assert_eq!(state.step_count(), 0);
}

#[test]
fn config_validation_bounds() {
    assert!(OptimizerConfig::new(OptimizerKind::Sgd, 0.0).is_err());
    assert!(OptimizerConfig::new(OptimizerKind::Sgd, -0.5).is_err());
    assert!(OptimizerConfig::new(OptimizerKind::Sgd, f64::NAN).is_err());
    let mut c = cfg(OptimizerKind::Adam, 0.01);
    c.beta1 = 1.0;
    assert!(c.validate().is_err());
    c.beta1 = 0.9;
    c.momentum = -0.1;
    assert!(c.validate().is_err());
    c.momentum = 0.9;
    c.epsilon = 0.0;
    assert!(c.validate().is_err());
}

#[test]
fn kind_names_round_trip() {
    for kind in OptimizerKind::ALL {
        assert_eq!(OptimizerKind::parse(kind.name()).unwrap(), kind);
    }
    let err = OptimizerKind::parse("adagrad").unwrap_err();
    assert!(err.to_string().contains("sgd_nesterov"), "error should list valid kinds: {err}");
}
