//! SGD with momentum and L2 weight decay.

use crate::error::{ensure, Error, Result};
use crate::params::{Gradients, ParameterTable};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            lr: 1e-4,
            momentum: 0.5,
            weight_decay: 5e-4,
        }
    }
}

/// One update of every trainable parameter:
/// `v = momentum * v + grad + weight_decay * param; param -= lr * v`.
/// Momentum buffers start at zero and persist in the table.
pub fn sgd_momentum_step<T: Scalar>(
    params: &mut ParameterTable<T>,
    grads: &Gradients<T>,
    cfg: SgdConfig,
) -> Result<()> {
    ensure!(cfg.lr > 0.0, "diffcore", "learning rate must be positive, got {}", cfg.lr);
    ensure!(
        (0.0..1.0).contains(&cfg.momentum),
        "diffcore",
        "momentum must lie in [0, 1), got {}",
        cfg.momentum
    );
    ensure!(cfg.weight_decay >= 0.0, "diffcore", "weight decay must be non-negative");
    for (path, p) in params.iter() {
        if !p.trainable {
            continue;
        }
        let g = grads.get(path).ok_or_else(|| {
            Error::contract("diffcore", format!("missing gradient for trainable parameter `{path}`"))
        })?;
        ensure!(
            g.shape() == p.value.shape(),
            "diffcore",
            "gradient for `{path}` has shape {:?}, parameter has {:?}",
            g.shape(),
            p.value.shape()
        );
    }
    let (lr, mu, wd) = (T::of(cfg.lr), T::of(cfg.momentum), T::of(cfg.weight_decay));
    for (path, p) in params.iter_mut() {
        if !p.trainable {
            continue;
        }
        let g = grads.get(path).expect("validated above");
        let v = p
            .momentum
            .get_or_insert_with(|| Tensor::zeros(p.value.shape()));
        for ((vi, &gi), pi) in v.data_mut().iter_mut().zip(g.data()).zip(p.value.data_mut()) {
            *vi = mu * *vi + gi + wd * *pi;
            *pi -= lr * *vi;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(v: f32) -> ParameterTable<f32> {
        let mut t = ParameterTable::new();
        t.insert("w", Tensor::from_vec(vec![v])).unwrap();
        t
    }

    fn grad(v: f32) -> Gradients<f32> {
        let mut g = Gradients::new();
        g.accumulate("w", Tensor::from_vec(vec![v]));
        g
    }

    #[test]
    fn vanilla_sgd_step() {
        let mut p = table(1.0);
        let cfg = SgdConfig {
            lr: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
        };
        sgd_momentum_step(&mut p, &grad(2.0), cfg).unwrap();
        assert!((p.get("w").unwrap().data()[0] - 0.8).abs() < 1e-7);
    }

    #[test]
    fn momentum_two_step_recurrence() {
        let mut p = table(0.0);
        let cfg = SgdConfig {
            lr: 1.0,
            momentum: 0.5,
            weight_decay: 0.0,
        };
        sgd_momentum_step(&mut p, &grad(1.0), cfg).unwrap();
        assert_eq!(p.get("w").unwrap().data()[0], -1.0);
        sgd_momentum_step(&mut p, &grad(1.0), cfg).unwrap();
        assert_eq!(p.get("w").unwrap().data()[0], -2.5);
    }

    #[test]
    fn canonical_configuration_is_accepted() {
        let cfg = SgdConfig::default();
        assert_eq!((cfg.lr, cfg.momentum, cfg.weight_decay), (1e-4, 0.5, 5e-4));
        let mut p = table(1.0);
        sgd_momentum_step(&mut p, &grad(0.0), cfg).unwrap();
        assert!(p.get("w").unwrap().data()[0] < 1.0);
    }

    #[test]
    fn missing_gradient_is_a_contract_error() {
        let mut p = table(1.0);
        let err = sgd_momentum_step(&mut p, &Gradients::new(), SgdConfig::default()).unwrap_err();
        assert!(err.to_string().contains("`w`"));
    }

    #[test]
    fn buffers_are_skipped() {
        let mut p = table(1.0);
        p.insert("bn.running_mean", Tensor::from_vec(vec![3.0])).unwrap();
        sgd_momentum_step(&mut p, &grad(1.0), SgdConfig::default()).unwrap();
        assert_eq!(p.get("bn.running_mean").unwrap().data()[0], 3.0);
    }
}
