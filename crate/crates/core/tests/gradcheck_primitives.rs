use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triplace_core::ops::{finite_difference_check, Mode, PrimitiveKind};
use triplace_core::Tensor;

const TOL: f64 = 1e-4;
const EPS: f64 = 1e-5;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Values bounded away from zero so that no central difference straddles
/// the ReLU kink.
fn off_kink(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    uniform(rng, shape, 1.0).map(|v| if v >= 0.0 { v + 0.05 } else { v - 0.05 })
}

fn check(kind: PrimitiveKind, inputs: Vec<Tensor<f64>>, params: Vec<Tensor<f64>>, mode: Mode) -> f64 {
    finite_difference_check(kind, &inputs, &params, mode, EPS).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn linear(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, i, o) = (rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..6));
        let err = check(
            PrimitiveKind::Linear,
            vec![uniform(&mut rng, &[n, i], 1.0)],
            vec![uniform(&mut rng, &[o, i], 1.0), uniform(&mut rng, &[o], 1.0)],
            Mode::Train,
        );
        prop_assert!(err < TOL, "{err}");
    }

    #[test]
    fn conv2d(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let groups = rng.random_range(1..3);
        let (cin, cout) = (2 * groups, 2 * groups);
        let stride = rng.random_range(1..3);
        let err = check(
            PrimitiveKind::Conv2d { stride, padding: 1, groups },
            vec![uniform(&mut rng, &[5, 6, cin], 1.0)],
            vec![uniform(&mut rng, &[cout, 3, 3, cin / groups], 0.5), uniform(&mut rng, &[cout], 0.5)],
            Mode::Train,
        );
        prop_assert!(err < TOL, "{err}");
    }

    #[test]
    fn pointwise_mlp_with_batch_statistics(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, i, o) = (rng.random_range(4..9), rng.random_range(2..5), rng.random_range(2..5));
        let params = vec![
            uniform(&mut rng, &[o, i], 1.0),
            uniform(&mut rng, &[o], 0.5),
            uniform(&mut rng, &[o], 1.0).map(|v| v + 1.5),
            uniform(&mut rng, &[o], 0.5),
            Tensor::zeros(&[o]),
            Tensor::full(&[o], 1.0),
        ];
        let err = check(PrimitiveKind::PointwiseMlp, vec![uniform(&mut rng, &[n, i], 1.0)], params, Mode::Train);
        prop_assert!(err < TOL, "{err}");
    }

    #[test]
    fn relu(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let err = check(PrimitiveKind::Relu, vec![off_kink(&mut rng, &[4, 5])], vec![], Mode::Train);
        prop_assert!(err < TOL, "{err}");
    }

    #[test]
    fn sigmoid(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let err = check(PrimitiveKind::Sigmoid, vec![uniform(&mut rng, &[3, 5], 4.0)], vec![], Mode::Train);
        prop_assert!(err < TOL, "{err}");
    }

    #[test]
    fn softmax_rows(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let err = check(PrimitiveKind::SoftmaxRows, vec![uniform(&mut rng, &[3, 6], 3.0)], vec![], Mode::Train);
        prop_assert!(err < TOL, "{err}");
    }

    #[test]
    fn layer_norm(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(2..8);
        let err = check(
            PrimitiveKind::LayerNorm,
            vec![uniform(&mut rng, &[3, d], 2.0)],
            vec![uniform(&mut rng, &[d], 1.0).map(|v| v + 1.5), uniform(&mut rng, &[d], 1.0)],
            Mode::Train,
        );
        prop_assert!(err < TOL, "{err}");
    }

    #[test]
    fn max_pool_over_set(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Distinct values spaced far beyond the step size keep the argmax fixed.
        let mut vals: Vec<f64> = (0..3 * 4 * 5).map(|i| i as f64 * 0.01).collect();
        for i in (1..vals.len()).rev() {
            vals.swap(i, rng.random_range(0..=i));
        }
        let x = Tensor::new(vec![3, 4, 5], vals).unwrap();
        let err = check(PrimitiveKind::MaxPoolOverSet, vec![x], vec![], Mode::Train);
        prop_assert!(err < TOL, "{err}");
    }

    #[test]
    fn l2_normalize(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let err = check(PrimitiveKind::L2Normalize, vec![off_kink(&mut rng, &[3, 7])], vec![], Mode::Train);
        prop_assert!(err < TOL, "{err}");
    }

    #[test]
    fn concat_and_add(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let axis = rng.random_range(0..2);
        let (a, b) = if axis == 0 {
            (uniform(&mut rng, &[2, 3], 1.0), uniform(&mut rng, &[4, 3], 1.0))
        } else {
            (uniform(&mut rng, &[2, 3], 1.0), uniform(&mut rng, &[2, 5], 1.0))
        };
        let err = check(PrimitiveKind::Concat { axis }, vec![a.clone(), b], vec![], Mode::Train);
        prop_assert!(err < TOL, "{err}");
        let c = uniform(&mut rng, &[2, 3], 1.0);
        let err = check(PrimitiveKind::Add, vec![a, c], vec![], Mode::Train);
        prop_assert!(err < TOL, "{err}");
    }
}
