//! Parameterized building blocks addressed by path inside a
//! [`ParameterTable`]. Each layer knows its parameter paths, how to
//! initialize them, and how to run forward and backward.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::ops::{self, BatchStats, ConvGeometry, Mode};
use crate::params::{Gradients, Init, ParameterTable};
use crate::tensor::{Scalar, Tensor};

/// Per-forward context: batch-norm mode plus the batch statistics observed
/// in training mode, applied to the running averages by the caller.
#[derive(Debug)]
pub struct Ctx<T = f32> {
    pub mode: Mode,
    pub bn_updates: Vec<(String, BatchStats<T>)>,
}

impl<T: Scalar> Ctx<T> {
    pub fn new(mode: Mode) -> Self {
        Ctx {
            mode,
            bn_updates: Vec::new(),
        }
    }

    pub fn train() -> Self {
        Ctx::new(Mode::Train)
    }

    pub fn eval() -> Self {
        Ctx::new(Mode::Eval)
    }
}

/// Fold collected batch statistics into the running averages.
pub fn apply_bn_updates<T: Scalar>(params: &mut ParameterTable<T>, updates: &[(String, BatchStats<T>)]) -> Result<()> {
    for (prefix, stats) in updates {
        ops::fold_running(params.get_mut(&format!("{prefix}.running_mean"))?, &stats.mean);
        ops::fold_running(params.get_mut(&format!("{prefix}.running_var"))?, &stats.var);
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: String,
    pub bias: Option<String>,
    pub in_dim: usize,
    pub out_dim: usize,
    pub init: Init,
}

impl Linear {
    pub fn new(path: &str, in_dim: usize, out_dim: usize, bias: bool) -> Self {
        Linear {
            weight: format!("{path}.weight"),
            bias: bias.then(|| format!("{path}.bias")),
            in_dim,
            out_dim,
            init: Init::fan_in(in_dim),
        }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn register<T: Scalar>(&self, p: &mut ParameterTable<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        p.insert(self.weight.clone(), self.init.sample(&[self.out_dim, self.in_dim], rng))?;
        if let Some(b) = &self.bias {
            p.insert(b.clone(), Tensor::zeros(&[self.out_dim]))?;
        }
        Ok(())
    }

    pub fn forward<T: Scalar>(&self, p: &ParameterTable<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let b = match &self.bias {
            Some(b) => Some(p.get(b)?),
            None => None,
        };
        ops::linear_forward(x, p.get(&self.weight)?, b)
    }

    /// Returns the input gradient and accumulates parameter gradients.
    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        x: &Tensor<T>,
        gy: &Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Result<Tensor<T>> {
        let g = ops::linear_backward(x, p.get(&self.weight)?, gy, self.bias.is_some());
        grads.accumulate(&self.weight, g.weight);
        if let (Some(path), Some(gb)) = (&self.bias, g.bias) {
            grads.accumulate(path, gb);
        }
        Ok(g.input)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: String,
    pub beta: String,
    pub dim: usize,
}

pub struct LayerNormCache<T> {
    inner: ops::norm::NormCache<T>,
}

impl LayerNorm {
    pub fn new(path: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: format!("{path}.gamma"),
            beta: format!("{path}.beta"),
            dim,
        }
    }

    pub fn register<T: Scalar>(&self, p: &mut ParameterTable<T>) -> Result<()> {
        p.insert(self.gamma.clone(), Tensor::full(&[self.dim], T::one()))?;
        p.insert(self.beta.clone(), Tensor::zeros(&[self.dim]))
    }

    pub fn forward<T: Scalar>(&self, p: &ParameterTable<T>, x: &Tensor<T>) -> Result<(Tensor<T>, LayerNormCache<T>)> {
        let (y, inner) = ops::layer_norm_forward(x, p.get(&self.gamma)?, p.get(&self.beta)?)?;
        Ok((y, LayerNormCache { inner }))
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        cache: &LayerNormCache<T>,
        gy: &Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Result<Tensor<T>> {
        let g = ops::layer_norm_backward(&cache.inner, p.get(&self.gamma)?, gy);
        grads.accumulate(&self.gamma, g.gamma);
        grads.accumulate(&self.beta, g.beta);
        Ok(g.input)
    }
}

/// 1×1 convolution (a row-wise linear map), batch-norm over rows, relu.
#[derive(Clone, Debug)]
pub struct PointwiseMlp {
    pub prefix: String,
    pub linear: Linear,
    gamma: String,
    beta: String,
    running_mean: String,
    running_var: String,
}

pub struct PointwiseMlpCache<T> {
    input: Tensor<T>,
    bn: ops::norm::NormCache<T>,
    pre_relu: Tensor<T>,
    mode: Mode,
}

impl PointwiseMlp {
    pub fn new(path: &str, in_dim: usize, out_dim: usize) -> Self {
        PointwiseMlp {
            prefix: format!("{path}.bn"),
            linear: Linear::new(&format!("{path}.conv"), in_dim, out_dim, true),
            gamma: format!("{path}.bn.gamma"),
            beta: format!("{path}.bn.beta"),
            running_mean: format!("{path}.bn.running_mean"),
            running_var: format!("{path}.bn.running_var"),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.linear.out_dim
    }

    pub fn register<T: Scalar>(&self, p: &mut ParameterTable<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        self.linear.register(p, rng)?;
        let d = self.linear.out_dim;
        p.insert(self.gamma.clone(), Tensor::full(&[d], T::one()))?;
        p.insert(self.beta.clone(), Tensor::zeros(&[d]))?;
        p.insert(self.running_mean.clone(), Tensor::zeros(&[d]))?;
        p.insert(self.running_var.clone(), Tensor::full(&[d], T::one()))
    }

    pub fn forward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        x: &Tensor<T>,
        ctx: &mut Ctx<T>,
    ) -> Result<(Tensor<T>, PointwiseMlpCache<T>)> {
        let h = self.linear.forward(p, x)?;
        let bn = ops::batch_norm_forward(
            &h,
            p.get(&self.gamma)?,
            p.get(&self.beta)?,
            p.get(&self.running_mean)?,
            p.get(&self.running_var)?,
            ctx.mode,
        )?;
        if let Some(stats) = bn.stats {
            ctx.bn_updates.push((self.prefix.clone(), stats));
        }
        let y = ops::relu(&bn.y);
        Ok((
            y,
            PointwiseMlpCache {
                input: x.clone(),
                bn: bn.cache,
                pre_relu: bn.y,
                mode: ctx.mode,
            },
        ))
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        cache: &PointwiseMlpCache<T>,
        gy: &Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Result<Tensor<T>> {
        let g = ops::relu_backward(&cache.pre_relu, gy);
        let gn = ops::batch_norm_backward(&cache.bn, p.get(&self.gamma)?, &g, cache.mode);
        grads.accumulate(&self.gamma, gn.gamma);
        grads.accumulate(&self.beta, gn.beta);
        self.linear.backward(p, &cache.input, &gn.input, grads)
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub kernel: String,
    pub bias: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub size: usize,
    pub geometry: ConvGeometry,
    pub relu_init: bool,
}

impl Conv2d {
    pub fn new(path: &str, in_ch: usize, out_ch: usize, size: usize, geometry: ConvGeometry) -> Self {
        Conv2d {
            kernel: format!("{path}.kernel"),
            bias: format!("{path}.bias"),
            in_ch,
            out_ch,
            size,
            geometry,
            relu_init: false,
        }
    }

    /// Initialize for a following ReLU.
    pub fn for_relu(mut self) -> Self {
        self.relu_init = true;
        self
    }

    pub fn register<T: Scalar>(&self, p: &mut ParameterTable<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        let cin_g = self.in_ch / self.geometry.groups;
        let fan_in = self.size * self.size * cin_g;
        p.insert(
            self.kernel.clone(),
            if self.relu_init { Init::he(fan_in) } else { Init::fan_in(fan_in) }
                .sample(&[self.out_ch, self.size, self.size, cin_g], rng),
        )?;
        p.insert(self.bias.clone(), Tensor::zeros(&[self.out_ch]))
    }

    pub fn forward<T: Scalar>(&self, p: &ParameterTable<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        ops::conv2d_forward(x, p.get(&self.kernel)?, Some(p.get(&self.bias)?), self.geometry)
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        x: &Tensor<T>,
        gy: &Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Result<Tensor<T>> {
        let g = ops::conv2d_backward(x, p.get(&self.kernel)?, gy, true, self.geometry)?;
        grads.accumulate(&self.kernel, g.kernel);
        grads.accumulate(&self.bias, g.bias.expect("bias requested"));
        Ok(g.input)
    }
}

/// Two-layer feed-forward network `W2 relu(W1 x + b1) + b2`.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub fc1: Linear,
    pub fc2: Linear,
}

pub struct FeedForwardCache<T> {
    input: Tensor<T>,
    pre_relu: Tensor<T>,
    hidden: Tensor<T>,
}

impl FeedForward {
    pub fn new(path: &str, dim: usize, hidden: usize) -> Self {
        FeedForward {
            fc1: Linear::new(&format!("{path}.fc1"), dim, hidden, true),
            fc2: Linear::new(&format!("{path}.fc2"), hidden, dim, true),
        }
    }

    pub fn register<T: Scalar>(&self, p: &mut ParameterTable<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        self.fc1.register(p, rng)?;
        self.fc2.register(p, rng)
    }

    pub fn forward<T: Scalar>(&self, p: &ParameterTable<T>, x: &Tensor<T>) -> Result<(Tensor<T>, FeedForwardCache<T>)> {
        let pre = self.fc1.forward(p, x)?;
        let hidden = ops::relu(&pre);
        let y = self.fc2.forward(p, &hidden)?;
        Ok((
            y,
            FeedForwardCache {
                input: x.clone(),
                pre_relu: pre,
                hidden,
            },
        ))
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        cache: &FeedForwardCache<T>,
        gy: &Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Result<Tensor<T>> {
        let gh = self.fc2.backward(p, &cache.hidden, gy, grads)?;
        let gpre = ops::relu_backward(&cache.pre_relu, &gh);
        self.fc1.backward(p, &cache.input, &gpre, grads)
    }
}
