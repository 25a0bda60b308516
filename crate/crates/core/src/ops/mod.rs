//! The fixed set of differentiable primitives the network is assembled from.
//!
//! Each primitive has a forward kernel and a hand-written backward kernel.
//! Composite blocks call the kernels directly; [`primitive_forward`] and
//! [`primitive_backward`] expose them behind a single kind-dispatched
//! interface so that every kind can be verified uniformly against central
//! differences.

pub mod activation;
pub mod conv;
pub mod linear;
pub mod norm;
pub mod shape;

use std::str::FromStr;

use crate::error::{ensure, Error, Result};
use crate::gradcheck::{fd_max_relative_error, objective_weights};
use crate::tensor::{Scalar, Tensor};

pub use activation::*;
pub use conv::{conv2d_backward, conv2d_forward, ConvGeometry};
pub use linear::{linear_backward, linear_forward};
pub use norm::{
    batch_norm_backward, batch_norm_forward, fold_running, layer_norm_backward,
    layer_norm_forward, BatchStats, Mode,
};
pub use shape::{add, concat, max_pool_set, max_pool_set_backward, split};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrimitiveKind {
    /// inputs `[x]` (rows × in); params `[weight (out × in), bias (out)?]`
    Linear,
    /// inputs `[x]` (H × W × Cin); params `[kernel (Cout × kh × kw × Cin/groups), bias?]`.
    /// `groups == Cin` is a depth-wise convolution.
    Conv2d {
        stride: usize,
        padding: usize,
        groups: usize,
    },
    /// 1×1 convolution + batch-norm + relu over rows.
    /// params `[weight, bias, gamma, beta, running_mean, running_var]`
    PointwiseMlp,
    Relu,
    Sigmoid,
    SoftmaxRows,
    /// params `[gamma, beta]`
    LayerNorm,
    /// inputs `[x]` (m × k × C) → m × C
    MaxPoolOverSet,
    L2Normalize,
    Concat { axis: usize },
    Add,
}

impl PrimitiveKind {
    pub fn name(&self) -> &'static str {
        match self {
            PrimitiveKind::Linear => "linear",
            PrimitiveKind::Conv2d { .. } => "conv2d",
            PrimitiveKind::PointwiseMlp => "pointwise-mlp",
            PrimitiveKind::Relu => "relu",
            PrimitiveKind::Sigmoid => "sigmoid",
            PrimitiveKind::SoftmaxRows => "softmax-rows",
            PrimitiveKind::LayerNorm => "layer-norm",
            PrimitiveKind::MaxPoolOverSet => "max-pool-over-set",
            PrimitiveKind::L2Normalize => "l2-normalize",
            PrimitiveKind::Concat { .. } => "concat",
            PrimitiveKind::Add => "add",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            PrimitiveKind::Concat { .. } => None,
            PrimitiveKind::Add => Some(2),
            _ => Some(1),
        }
    }

    /// Parameter slots that receive gradients.
    fn trainable_params(&self, supplied: usize) -> usize {
        match self {
            PrimitiveKind::PointwiseMlp => 4,
            PrimitiveKind::Linear | PrimitiveKind::Conv2d { .. } | PrimitiveKind::LayerNorm => {
                supplied
            }
            _ => 0,
        }
    }
}

impl FromStr for PrimitiveKind {
    type Err = Error;

    /// Parses parameterless kind names; `conv2d` defaults to stride 1,
    /// padding 0, one group and `concat` to axis 0.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "linear" => PrimitiveKind::Linear,
            "conv2d" => PrimitiveKind::Conv2d {
                stride: 1,
                padding: 0,
                groups: 1,
            },
            "pointwise-mlp" => PrimitiveKind::PointwiseMlp,
            "relu" => PrimitiveKind::Relu,
            "sigmoid" => PrimitiveKind::Sigmoid,
            "softmax-rows" => PrimitiveKind::SoftmaxRows,
            "layer-norm" => PrimitiveKind::LayerNorm,
            "max-pool-over-set" => PrimitiveKind::MaxPoolOverSet,
            "l2-normalize" => PrimitiveKind::L2Normalize,
            "concat" => PrimitiveKind::Concat { axis: 0 },
            "add" => PrimitiveKind::Add,
            other => {
                return Err(Error::contract(
                    "diffcore",
                    format!("unknown primitive kind `{other}`"),
                ))
            }
        })
    }
}

fn check_arity<T: Scalar>(kind: PrimitiveKind, inputs: &[&Tensor<T>], params: &[&Tensor<T>]) -> Result<()> {
    if let Some(n) = kind.arity() {
        ensure!(
            inputs.len() == n,
            "diffcore",
            "{}: expected {n} input(s), got {}",
            kind.name(),
            inputs.len()
        );
    }
    let (lo, hi) = match kind {
        PrimitiveKind::Linear | PrimitiveKind::Conv2d { .. } => (1, 2),
        PrimitiveKind::PointwiseMlp => (6, 6),
        PrimitiveKind::LayerNorm => (2, 2),
        _ => (0, 0),
    };
    ensure!(
        (lo..=hi).contains(&params.len()),
        "diffcore",
        "{}: expected {lo}..={hi} parameter tensors, got {}",
        kind.name(),
        params.len()
    );
    for (i, t) in inputs.iter().enumerate() {
        if !t.is_finite() {
            return Err(Error::NonFinite {
                module: "diffcore",
                what: format!("{} input {i}", kind.name()),
            });
        }
    }
    Ok(())
}

/// Forward evaluation of one primitive.
pub fn primitive_forward<T: Scalar>(
    kind: PrimitiveKind,
    inputs: &[&Tensor<T>],
    params: &[&Tensor<T>],
    mode: Mode,
) -> Result<Tensor<T>> {
    check_arity(kind, inputs, params)?;
    let x = inputs[0];
    match kind {
        PrimitiveKind::Linear => linear_forward(x, params[0], params.get(1).copied()),
        PrimitiveKind::Conv2d {
            stride,
            padding,
            groups,
        } => conv2d_forward(
            x,
            params[0],
            params.get(1).copied(),
            ConvGeometry {
                stride,
                padding,
                groups,
            },
        ),
        PrimitiveKind::PointwiseMlp => {
            let h = linear_forward(x, params[0], Some(params[1]))?;
            let bn = batch_norm_forward(&h, params[2], params[3], params[4], params[5], mode)?;
            Ok(relu(&bn.y))
        }
        PrimitiveKind::Relu => Ok(relu(x)),
        PrimitiveKind::Sigmoid => Ok(sigmoid(x)),
        PrimitiveKind::SoftmaxRows => Ok(softmax_rows(x)),
        PrimitiveKind::LayerNorm => Ok(layer_norm_forward(x, params[0], params[1])?.0),
        PrimitiveKind::MaxPoolOverSet => Ok(max_pool_set(x)?.0),
        PrimitiveKind::L2Normalize => Ok(l2_normalize_rows(x)),
        PrimitiveKind::Concat { axis } => concat(inputs, axis),
        PrimitiveKind::Add => add(inputs[0], inputs[1]),
    }
}

#[derive(Clone, Debug)]
pub struct PrimitiveGrads<T> {
    pub inputs: Vec<Tensor<T>>,
    /// Gradients for the trainable parameter slots, in slot order.
    pub params: Vec<Tensor<T>>,
}

/// Backward pass of one primitive; the forward is re-evaluated internally.
pub fn primitive_backward<T: Scalar>(
    kind: PrimitiveKind,
    inputs: &[&Tensor<T>],
    params: &[&Tensor<T>],
    upstream: &Tensor<T>,
    mode: Mode,
) -> Result<PrimitiveGrads<T>> {
    let y = primitive_forward(kind, inputs, params, mode)?;
    ensure!(
        upstream.shape() == y.shape(),
        "diffcore",
        "{}: upstream gradient {:?} does not match output {:?}",
        kind.name(),
        upstream.shape(),
        y.shape()
    );
    let x = inputs[0];
    let grads = match kind {
        PrimitiveKind::Linear => {
            let g = linear_backward(x, params[0], upstream, params.len() == 2);
            let mut p = vec![g.weight];
            p.extend(g.bias);
            PrimitiveGrads {
                inputs: vec![g.input],
                params: p,
            }
        }
        PrimitiveKind::Conv2d {
            stride,
            padding,
            groups,
        } => {
            let g = conv2d_backward(
                x,
                params[0],
                upstream,
                params.len() == 2,
                ConvGeometry {
                    stride,
                    padding,
                    groups,
                },
            )?;
            let mut p = vec![g.kernel];
            p.extend(g.bias);
            PrimitiveGrads {
                inputs: vec![g.input],
                params: p,
            }
        }
        PrimitiveKind::PointwiseMlp => {
            let h = linear_forward(x, params[0], Some(params[1]))?;
            let bn = batch_norm_forward(&h, params[2], params[3], params[4], params[5], mode)?;
            let g_bn = relu_backward(&bn.y, upstream);
            let gn = batch_norm_backward(&bn.cache, params[2], &g_bn, mode);
            let gl = linear_backward(x, params[0], &gn.input, true);
            PrimitiveGrads {
                inputs: vec![gl.input],
                params: vec![gl.weight, gl.bias.unwrap(), gn.gamma, gn.beta],
            }
        }
        PrimitiveKind::Relu => PrimitiveGrads {
            inputs: vec![relu_backward(x, upstream)],
            params: vec![],
        },
        PrimitiveKind::Sigmoid => PrimitiveGrads {
            inputs: vec![sigmoid_backward(&y, upstream)],
            params: vec![],
        },
        PrimitiveKind::SoftmaxRows => PrimitiveGrads {
            inputs: vec![softmax_rows_backward(&y, upstream)],
            params: vec![],
        },
        PrimitiveKind::LayerNorm => {
            let (_, cache) = layer_norm_forward(x, params[0], params[1])?;
            let g = layer_norm_backward(&cache, params[0], upstream);
            PrimitiveGrads {
                inputs: vec![g.input],
                params: vec![g.gamma, g.beta],
            }
        }
        PrimitiveKind::MaxPoolOverSet => {
            let (_, arg) = max_pool_set(x)?;
            PrimitiveGrads {
                inputs: vec![max_pool_set_backward(x.shape(), &arg, upstream)],
                params: vec![],
            }
        }
        PrimitiveKind::L2Normalize => PrimitiveGrads {
            inputs: vec![l2_normalize_rows_backward(x, upstream)],
            params: vec![],
        },
        PrimitiveKind::Concat { axis } => {
            let sizes: Vec<usize> = inputs.iter().map(|t| t.shape()[axis]).collect();
            PrimitiveGrads {
                inputs: split(upstream, axis, &sizes),
                params: vec![],
            }
        }
        PrimitiveKind::Add => PrimitiveGrads {
            inputs: vec![upstream.clone(), upstream.clone()],
            params: vec![],
        },
    };
    Ok(grads)
}

/// Largest relative disagreement between the analytic gradient and central
/// differences, over every input coordinate and every trainable parameter
/// coordinate. Both sides are evaluated in 64-bit arithmetic; the scalar
/// objective is a fixed pseudo-random weighting of the output.
pub fn finite_difference_check<T: Scalar>(
    kind: PrimitiveKind,
    inputs: &[Tensor<T>],
    params: &[Tensor<T>],
    mode: Mode,
    eps: f64,
) -> Result<f64> {
    ensure!(eps > 0.0, "diffcore", "finite-difference step must be positive, got {eps}");
    let mut targets: Vec<Tensor<f64>> = inputs.iter().map(|t| t.cast()).collect();
    let n_in = targets.len();
    targets.extend(params.iter().map(|t| t.cast::<f64>()));
    let n_trainable = kind.trainable_params(params.len());

    let eval = |ts: &[Tensor<f64>]| -> Result<Tensor<f64>> {
        let ins: Vec<&Tensor<f64>> = ts[..n_in].iter().collect();
        let ps: Vec<&Tensor<f64>> = ts[n_in..].iter().collect();
        primitive_forward(kind, &ins, &ps, mode)
    };
    let y = eval(&targets)?;
    let weights = objective_weights(y.shape(), 0x5eed);
    let analytic = {
        let ins: Vec<&Tensor<f64>> = targets[..n_in].iter().collect();
        let ps: Vec<&Tensor<f64>> = targets[n_in..].iter().collect();
        primitive_backward(kind, &ins, &ps, &weights, mode)?
    };
    let mut grads: Vec<Option<Tensor<f64>>> = analytic.inputs.into_iter().map(Some).collect();
    grads.extend(analytic.params.into_iter().map(Some));
    grads.resize(n_in + params.len(), None);
    let checked: Vec<bool> = (0..targets.len()).map(|i| i < n_in + n_trainable).collect();

    let objective = |ts: &[Tensor<f64>]| -> Result<f64> {
        let y = eval(ts)?;
        Ok(y.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum())
    };
    fd_max_relative_error(&mut targets, &grads, &checked, objective, eps)
}
