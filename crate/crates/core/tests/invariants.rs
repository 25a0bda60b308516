use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triplace_core::aggregation::{NeXtVlad, NeXtVladConfig};
use triplace_core::attention::{AttentionConfig, CrossAttention, SelfAttention};
use triplace_core::embedding::SetAbstraction;
use triplace_core::layers::Ctx;
use triplace_core::network::{Branches, Network};
use triplace_core::ops;
use triplace_core::pointops::{farthest_point_sample, group, knn, FpsStart, PointSet};
use triplace_core::{ParameterTable, Tensor};

mod common;
use common::toy_model;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Coordinates on a 1/64 grid; sums and differences of such values are exact.
fn dyadic(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| f64::from(rng.random_range(-640i32..640)) / 64.0).collect()).unwrap()
}

fn permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        p.swap(i, rng.random_range(0..=i));
    }
    p
}

fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn attention_cfg() -> AttentionConfig {
    AttentionConfig {
        heads: 2,
        model_dim: 8,
        dropout: 0.0,
        ffn_hidden: 16,
        depth: 1,
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn softmax_rows_sum_to_one(seed in any::<u64>(), scale in 0.1f64..60.0, shift in -50.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, c) = (rng.random_range(1..8), rng.random_range(1..40));
        let x64 = uniform(&mut rng, &[r, c], scale);
        let x = x64.cast::<f32>();
        let y = ops::softmax_rows(&x);
        for i in 0..r {
            let row = y.row(i);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            let s: f64 = row.iter().map(|&v| f64::from(v)).sum();
            prop_assert!((s - 1.0).abs() <= 1e-6, "row {i} sums to {s}");
        }
        // Shift invariance in f64, where adding the constant is itself exact enough.
        let y64 = ops::softmax_rows(&x64);
        let shifted = ops::softmax_rows(&x64.map(|v| v + shift));
        for (a, b) in y64.data().iter().zip(shifted.data()) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn self_attention_is_permutation_equivariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = SelfAttention::new("msa", &attention_cfg());
        let mut p = ParameterTable::<f64>::new();
        m.register(&mut p, &mut rng).unwrap();
        let n = 6;
        let x = uniform(&mut rng, &[n, 8], 2.0);
        let perm = permutation(&mut rng, n);
        let (y, _) = m.forward(&p, &x).unwrap();
        let (yp, _) = m.forward(&p, &x.gather_rows(&perm)).unwrap();
        prop_assert!(max_abs_diff(&yp, &y.gather_rows(&perm)) <= 1e-12);
    }

    #[test]
    fn cross_attention_ignores_key_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = CrossAttention::new("cross", &attention_cfg());
        let mut p = ParameterTable::<f64>::new();
        m.register(&mut p, &mut rng).unwrap();
        let q = uniform(&mut rng, &[4, 8], 2.0);
        let kv = uniform(&mut rng, &[7, 8], 2.0);
        let (y, _) = m.forward(&p, &q, &kv).unwrap();
        let (y_kv, _) = m.forward(&p, &q, &kv.gather_rows(&permutation(&mut rng, 7))).unwrap();
        prop_assert!(max_abs_diff(&y, &y_kv) <= 1e-12);
        let qperm = permutation(&mut rng, 4);
        let (y_q, _) = m.forward(&p, &q.gather_rows(&qperm), &kv).unwrap();
        prop_assert!(max_abs_diff(&y_q, &y.gather_rows(&qperm)) <= 1e-12);
    }

    #[test]
    fn nextvlad_ignores_token_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = NeXtVladConfig { clusters: 4, groups: 2, expansion: 2, output_dim: 6, proj_init_std: None };
        let m = NeXtVlad::new("vlad", 8, &cfg);
        let mut p = ParameterTable::<f64>::new();
        m.register(&mut p, &mut rng).unwrap();
        let x = uniform(&mut rng, &[9, 8], 2.0);
        let (y, _) = m.forward(&p, &x).unwrap();
        let (yp, _) = m.forward(&p, &x.gather_rows(&permutation(&mut rng, 9))).unwrap();
        prop_assert!(max_abs_diff(&y, &yp) <= 1e-12);
    }

    /// Shared MLP and max-pool over `[m, k, D + 3]` groups give identical
    /// outputs when each group's rows are reordered.
    #[test]
    fn set_abstraction_ignores_neighbor_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, k, d) = (5, 6, 4);
        let sa = SetAbstraction::new("sa", d, 8, m, k);
        let mut p = ParameterTable::<f64>::new();
        sa.register(&mut p, &mut rng).unwrap();
        for (_, param) in p.iter_mut() {
            if param.trainable {
                for v in param.value.data_mut() {
                    *v += rng.random_range(-0.2..0.2);
                }
            }
        }
        let grouped = uniform(&mut rng, &[m * k, d + 3], 1.0);
        let mut order = Vec::new();
        for g in 0..m {
            order.extend(permutation(&mut rng, k).into_iter().map(|j| g * k + j));
        }
        let shuffled = grouped.gather_rows(&order);
        let run = |x: &Tensor<f64>| {
            let mut ctx = Ctx::eval();
            let (a, _) = sa.h1.forward(&p, x, &mut ctx).unwrap();
            let (b, _) = sa.h2.forward(&p, &a, &mut ctx).unwrap();
            ops::max_pool_set(&b.reshape(vec![m, k, 8]).unwrap()).unwrap().0
        };
        prop_assert_eq!(run(&grouped), run(&shuffled));
    }

    #[test]
    fn grouping_is_translation_invariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(8..64);
        let coords = dyadic(&mut rng, &[n, 3]);
        let feats = uniform(&mut rng, &[n, 5], 1.0);
        let t = dyadic(&mut rng, &[1, 3]);
        let mut moved = coords.clone();
        for (i, v) in moved.data_mut().iter_mut().enumerate() {
            *v += t.data()[i % 3];
        }
        let (m, k) = (rng.random_range(1..=n.min(8)), rng.random_range(1..=n.min(6)));
        let run = |c: &Tensor<f64>| {
            let centers = farthest_point_sample(c, m, FpsStart::default()).unwrap();
            let nbrs = knn(&c.gather_rows(&centers), c, k).unwrap();
            let set = PointSet::new(c.clone(), Some(feats.clone())).unwrap();
            (centers.clone(), nbrs.clone(), group(&set, &centers, &nbrs, k).unwrap())
        };
        let (c0, n0, g0) = run(&coords);
        let (c1, n1, g1) = run(&moved);
        prop_assert_eq!(c0, c1);
        prop_assert_eq!(n0, n1);
        prop_assert_eq!(g0, g1);
    }
}

/// Squared descriptor distance equals the sum of per-block squared distances,
/// and for unit-norm blocks each term is `2 - 2 cos`.
#[test]
fn descriptor_block_distance_identity() {
    for (seed, branches) in [(1, Branches::ALL), (2, Branches::ALL), (3, Branches::IMAGE), (4, Branches::FUSION)] {
        let cfg = toy_model(branches);
        let net = Network::new(cfg.clone()).unwrap();
        let p = net.init_params::<f32>(seed).unwrap();
        let e = &cfg.embedding;
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 50);
        let descs: Vec<Tensor<f32>> = (0..4)
            .map(|_| {
                let img = uniform(&mut rng, &[e.image_height, e.image_width, 3], 0.5).map(|v| v + 0.5).cast();
                let cloud = uniform(&mut rng, &[e.num_points, 3], 8.0).cast();
                net.embed(&p, &img, &cloud).unwrap()
            })
            .collect();
        let block = cfg.vlad.output_dim;
        let enabled = [branches.image, branches.point, branches.fusion];
        for a in &descs {
            for b in &descs {
                let full: f64 = a
                    .data()
                    .iter()
                    .zip(b.data())
                    .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
                    .sum();
                let mut by_blocks = 0.0;
                for (i, &on) in enabled.iter().enumerate() {
                    let (xa, xb) = (&a.data()[i * block..(i + 1) * block], &b.data()[i * block..(i + 1) * block]);
                    if !on {
                        assert!(xa.iter().chain(xb).all(|&v| v == 0.0));
                        continue;
                    }
                    let dot: f64 = xa.iter().zip(xb).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
                    by_blocks += 2.0 - 2.0 * dot;
                }
                assert!((full - by_blocks).abs() <= 1e-6, "{full} vs {by_blocks}");
            }
        }
    }
}
