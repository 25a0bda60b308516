use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triplace_core::aggregation::{NeXtVlad, NeXtVladConfig};
use triplace_core::attention::{AttentionConfig, CrossAttention, FeatureFusion, InternalTransformer, SequenceInteraction};
use triplace_core::gradcheck::{check_block, CheckOptions};
use triplace_core::layers::Ctx;
use triplace_core::metric::triplet_loss;
use triplace_core::network::{Branches, Network};
use triplace_core::{Gradients, ParameterTable, Tensor};

mod common;
use common::toy_model;

const TOL: f64 = 1e-4;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Moves every trainable parameter off its initialization. Zero biases
/// otherwise leave ReLU pre-activations exactly on the kink.
fn jitter(p: &mut ParameterTable<f64>, rng: &mut ChaCha8Rng) {
    for (_, param) in p.iter_mut() {
        if param.trainable {
            for v in param.value.data_mut() {
                *v += rng.random_range(-0.1..0.1);
            }
        }
    }
}

fn toy_attention() -> AttentionConfig {
    AttentionConfig {
        heads: 2,
        model_dim: 8,
        dropout: 0.0,
        ffn_hidden: 12,
        depth: 2,
    }
}

fn assert_ok(what: &str, report: triplace_core::gradcheck::CheckReport) {
    assert!(
        report.max_relative_error < TOL,
        "{what}: max relative error {:.3e} at {}",
        report.max_relative_error,
        report.worst
    );
    assert!(report.coords_checked > 0);
}

#[test]
fn internal_transformer() {
    let cfg = toy_attention();
    let m = InternalTransformer::new("itm", &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut p = ParameterTable::<f64>::new();
    m.register(&mut p, &mut rng).unwrap();
    jitter(&mut p, &mut rng);
    let mut inputs = vec![uniform(&mut rng, &[5, 8], 1.0)];
    let report = check_block(
        &mut inputs,
        &[true],
        &mut p,
        |x, p| Ok(m.forward(p, &x[0])?.0),
        |x, p, gy| {
            let (_, c) = m.forward(p, &x[0])?;
            let mut g = Gradients::new();
            let gx = m.backward(p, &c, gy, &mut g)?;
            Ok((vec![Some(gx)], g))
        },
        &CheckOptions::default(),
    )
    .unwrap();
    assert_ok("internal transformer", report);
}

#[test]
fn cross_attention() {
    let cfg = toy_attention();
    let m = CrossAttention::new("cross", &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut p = ParameterTable::<f64>::new();
    m.register(&mut p, &mut rng).unwrap();
    jitter(&mut p, &mut rng);
    let mut inputs = vec![uniform(&mut rng, &[3, 8], 1.0), uniform(&mut rng, &[4, 8], 1.0)];
    let report = check_block(
        &mut inputs,
        &[true, true],
        &mut p,
        |x, p| Ok(m.forward(p, &x[0], &x[1])?.0),
        |x, p, gy| {
            let (_, c) = m.forward(p, &x[0], &x[1])?;
            let mut g = Gradients::new();
            let (gq, gkv) = m.backward(p, &c, gy, &mut g)?;
            Ok((vec![Some(gq), Some(gkv)], g))
        },
        &CheckOptions::default(),
    )
    .unwrap();
    assert_ok("cross attention", report);
}

#[test]
fn sequence_interaction() {
    let cfg = toy_attention();
    let m = SequenceInteraction::new("sis", &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut p = ParameterTable::<f64>::new();
    m.register(&mut p, &mut rng).unwrap();
    jitter(&mut p, &mut rng);
    let mut inputs = vec![uniform(&mut rng, &[3, 8], 1.0), uniform(&mut rng, &[4, 8], 1.0)];
    let report = check_block(
        &mut inputs,
        &[true, true],
        &mut p,
        |x, p| {
            let ((i2, p2), _) = m.forward(p, &x[0], &x[1])?;
            triplace_core::ops::concat(&[&i2, &p2], 0)
        },
        |x, p, gy| {
            let (_, c) = m.forward(p, &x[0], &x[1])?;
            let halves = triplace_core::ops::split(gy, 0, &[3, 4]);
            let mut g = Gradients::new();
            let (gi, gp) = m.backward(p, &c, &halves[0], &halves[1], &mut g)?;
            Ok((vec![Some(gi), Some(gp)], g))
        },
        &CheckOptions::default(),
    )
    .unwrap();
    assert_ok("sequence interaction", report);
}

#[test]
fn feature_fusion() {
    let m = FeatureFusion::new("ffs", 8, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut p = ParameterTable::<f64>::new();
    m.register(&mut p, &mut rng).unwrap();
    jitter(&mut p, &mut rng);
    let mut inputs = vec![uniform(&mut rng, &[8, 8], 1.0)];
    let report = check_block(
        &mut inputs,
        &[true],
        &mut p,
        |x, p| Ok(m.forward(p, &x[0])?.0),
        |x, p, gy| {
            let (_, c) = m.forward(p, &x[0])?;
            let mut g = Gradients::new();
            let gx = m.backward(p, &c, gy, &mut g)?;
            Ok((vec![Some(gx)], g))
        },
        &CheckOptions::default(),
    )
    .unwrap();
    assert_ok("feature fusion", report);
}

#[test]
fn nextvlad() {
    let cfg = NeXtVladConfig {
        clusters: 4,
        groups: 2,
        expansion: 2,
        output_dim: 6,
        proj_init_std: None,
    };
    let m = NeXtVlad::new("vlad", 8, &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut p = ParameterTable::<f64>::new();
    m.register(&mut p, &mut rng).unwrap();
    jitter(&mut p, &mut rng);
    let mut inputs = vec![uniform(&mut rng, &[5, 8], 1.0)];
    let report = check_block(
        &mut inputs,
        &[true],
        &mut p,
        |x, p| Ok(m.forward(p, &x[0])?.0),
        |x, p, gy| {
            let (_, c) = m.forward(p, &x[0])?;
            let mut g = Gradients::new();
            let gx = m.backward(p, &c, gy, &mut g)?;
            Ok((vec![Some(gx)], g))
        },
        &CheckOptions::default(),
    )
    .unwrap();
    assert_ok("nextvlad", report);
}

/// Triplet loss of one (query, positive, negative) batch through the whole
/// network with batch statistics, as a one-element output.
fn full_network_triplet(seed: u64, branches: Branches) {
    let cfg = toy_model(branches);
    let net = Network::new(cfg.clone()).unwrap();
    let mut p = net.init_params::<f64>(seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    jitter(&mut p, &mut rng);
    let e = &cfg.embedding;
    let images: Vec<Tensor<f64>> = (0..3)
        .map(|_| uniform(&mut rng, &[e.image_height, e.image_width, 3], 0.5).map(|v| v + 0.5))
        .collect();
    let clouds: Vec<Tensor<f64>> = (0..3).map(|_| uniform(&mut rng, &[e.num_points, 3], 5.0)).collect();
    // A large margin keeps the hinge active.
    let margin = 10.0;
    let forward = |p: &ParameterTable<f64>| -> triplace_core::Result<(f64, [Tensor<f64>; 3], _)> {
        let mut ctx = Ctx::train();
        let (d, cache) = net.forward(
            p,
            &images.iter().collect::<Vec<_>>(),
            &clouds.iter().collect::<Vec<_>>(),
            &mut ctx,
        )?;
        let out = triplet_loss(&d[0], &d[1], &d[2], margin);
        Ok((out.loss, out.grads, cache))
    };
    let mut none: Vec<Tensor<f64>> = Vec::new();
    let report = check_block(
        &mut none,
        &[],
        &mut p,
        |_, p| Ok(Tensor::from_vec(vec![forward(p)?.0])),
        |_, p, gy| {
            let (_, mut g_desc, cache) = forward(p)?;
            for g in g_desc.iter_mut() {
                g.scale(gy.data()[0]);
            }
            let mut g = Gradients::new();
            net.backward(p, &cache, &g_desc.iter().collect::<Vec<_>>(), &mut g)?;
            Ok((vec![], g))
        },
        &CheckOptions {
            max_coords_per_tensor: Some(6),
            ..CheckOptions::default()
        },
    )
    .unwrap();
    assert_ok(&format!("full network ({branches})"), report);
}

// ReLU and max-pool kinks make some random instances non-differentiable
// within one step; these seeds keep every checked coordinate on a smooth piece.
#[test]
fn triplet_loss_through_full_network() {
    full_network_triplet(8, Branches::ALL);
}

#[test]
fn triplet_loss_through_masked_networks() {
    full_network_triplet(8, Branches::FUSION);
    full_network_triplet(9, Branches::IMAGE);
}
