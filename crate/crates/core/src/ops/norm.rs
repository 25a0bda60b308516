use crate::error::{ensure, Result};
use crate::tensor::{Scalar, Tensor};

pub const NORM_EPS: f64 = 1e-5;
/// Weight kept by running statistics at each training update.
pub const BN_RUNNING_DECAY: f64 = 0.9;

/// Batch-norm statistics policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Per-batch statistics (rows of the input form the batch).
    Train,
    /// Running averages.
    Eval,
}

pub struct NormCache<T> {
    pub xhat: Tensor<T>,
    /// `1 / sqrt(var + eps)` per normalized group.
    pub rstd: Vec<T>,
}

/// Layer normalization over the last axis.
pub fn layer_norm_forward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
) -> Result<(Tensor<T>, NormCache<T>)> {
    let c = x.cols();
    ensure!(
        gamma.len() == c && beta.len() == c,
        "diffcore",
        "layer-norm: affine parameters have {} / {} entries, input has {c} features",
        gamma.len(),
        beta.len()
    );
    let eps = T::of(NORM_EPS);
    let n = T::of(c as f64);
    let mut xhat = x.clone();
    let mut y = x.clone();
    let mut rstd = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let rs = T::one() / (var + eps).sqrt();
        rstd.push(rs);
        let xh = xhat.row_mut(r);
        for (o, &v) in xh.iter_mut().zip(row) {
            *o = (v - mean) * rs;
        }
        let yr = y.row_mut(r);
        for j in 0..c {
            yr[j] = xhat.data()[r * c + j] * gamma.data()[j] + beta.data()[j];
        }
    }
    Ok((y, NormCache { xhat, rstd }))
}

pub struct AffineGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

pub fn layer_norm_backward<T: Scalar>(
    cache: &NormCache<T>,
    gamma: &Tensor<T>,
    gy: &Tensor<T>,
) -> AffineGrads<T> {
    let c = gy.cols();
    let n = T::of(c as f64);
    let mut gx = Tensor::zeros(gy.shape());
    let mut gg = vec![T::zero(); c];
    let mut gb = vec![T::zero(); c];
    let mut dxhat = vec![T::zero(); c];
    for r in 0..gy.rows() {
        let g = gy.row(r);
        let xh = cache.xhat.row(r);
        for j in 0..c {
            gg[j] += g[j] * xh[j];
            gb[j] += g[j];
            dxhat[j] = g[j] * gamma.data()[j];
        }
        let sum_d: T = dxhat.iter().copied().sum();
        let sum_dx: T = dxhat.iter().zip(xh).map(|(&a, &b)| a * b).sum();
        let rs = cache.rstd[r];
        for (j, o) in gx.row_mut(r).iter_mut().enumerate() {
            *o = rs / n * (n * dxhat[j] - sum_d - xh[j] * sum_dx);
        }
    }
    AffineGrads {
        input: gx,
        gamma: Tensor::from_vec(gg),
        beta: Tensor::from_vec(gb),
    }
}

/// Statistics observed by a training-mode batch-norm call, to be folded into
/// the running averages by the caller.
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub mean: Tensor<T>,
    /// Unbiased variance estimate.
    pub var: Tensor<T>,
}

pub struct BatchNormOutput<T> {
    pub y: Tensor<T>,
    pub cache: NormCache<T>,
    pub stats: Option<BatchStats<T>>,
}

/// Batch normalization over rows; channels are the last axis.
pub fn batch_norm_forward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    mode: Mode,
) -> Result<BatchNormOutput<T>> {
    let (rows, c) = (x.rows(), x.cols());
    ensure!(
        gamma.len() == c && beta.len() == c && running_mean.len() == c && running_var.len() == c,
        "diffcore",
        "batch-norm: parameters must have {c} entries"
    );
    let eps = T::of(NORM_EPS);
    let (mean, var, stats) = match mode {
        Mode::Train => {
            let n = T::of(rows as f64);
            let mut mean = vec![T::zero(); c];
            for r in 0..rows {
                for (m, &v) in mean.iter_mut().zip(x.row(r)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            let mut var = vec![T::zero(); c];
            for r in 0..rows {
                for ((s, &v), &m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            let unbiased_scale = if rows > 1 {
                n / T::of((rows - 1) as f64)
            } else {
                T::one()
            };
            var.iter_mut().for_each(|s| *s /= n);
            let stats = BatchStats {
                mean: Tensor::from_vec(mean.clone()),
                var: Tensor::from_vec(var.iter().map(|&v| v * unbiased_scale).collect()),
            };
            (mean, var, Some(stats))
        }
        Mode::Eval => (
            running_mean.data().to_vec(),
            running_var.data().to_vec(),
            None,
        ),
    };
    let rstd: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = x.clone();
    let mut y = x.clone();
    for r in 0..rows {
        let xr = x.row(r);
        let xh = xhat.row_mut(r);
        for j in 0..c {
            xh[j] = (xr[j] - mean[j]) * rstd[j];
        }
        let yr = y.row_mut(r);
        for j in 0..c {
            yr[j] = (xr[j] - mean[j]) * rstd[j] * gamma.data()[j] + beta.data()[j];
        }
    }
    Ok(BatchNormOutput {
        y,
        cache: NormCache { xhat, rstd },
        stats,
    })
}

pub fn batch_norm_backward<T: Scalar>(
    cache: &NormCache<T>,
    gamma: &Tensor<T>,
    gy: &Tensor<T>,
    mode: Mode,
) -> AffineGrads<T> {
    let (rows, c) = (gy.rows(), gy.cols());
    let mut gg = vec![T::zero(); c];
    let mut gb = vec![T::zero(); c];
    for r in 0..rows {
        let (g, xh) = (gy.row(r), cache.xhat.row(r));
        for j in 0..c {
            gg[j] += g[j] * xh[j];
            gb[j] += g[j];
        }
    }
    let mut gx = Tensor::zeros(gy.shape());
    let n = T::of(rows as f64);
    for r in 0..rows {
        let (g, xh) = (gy.row(r), cache.xhat.row(r));
        let o = gx.row_mut(r);
        for j in 0..c {
            let scale = gamma.data()[j] * cache.rstd[j];
            o[j] = match mode {
                Mode::Train => scale / n * (n * g[j] - gb[j] - xh[j] * gg[j]),
                Mode::Eval => scale * g[j],
            };
        }
    }
    AffineGrads {
        input: gx,
        gamma: Tensor::from_vec(gg),
        beta: Tensor::from_vec(gb),
    }
}

/// `running = decay * running + (1 - decay) * observed`.
pub fn fold_running<T: Scalar>(running: &mut Tensor<T>, observed: &Tensor<T>) {
    let d = T::of(BN_RUNNING_DECAY);
    for (r, &o) in running.data_mut().iter_mut().zip(observed.data()) {
        *r = d * *r + (T::one() - d) * o;
    }
}
