use crate::error::{ensure, Result};
use crate::tensor::{gemm, MatLayout, Scalar, Tensor};

/// `y = x Wᵀ + b` applied to every row of `x`; `w` is `[out, in]`.
pub fn linear_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    ensure!(w.rank() == 2, "diffcore", "linear: weight must be rank 2, got {:?}", w.shape());
    let (out_dim, in_dim) = (w.shape()[0], w.shape()[1]);
    ensure!(
        x.cols() == in_dim,
        "diffcore",
        "linear: input has {} features, weight expects {in_dim}",
        x.cols()
    );
    if let Some(b) = b {
        ensure!(
            b.len() == out_dim,
            "diffcore",
            "linear: bias has {} entries, expected {out_dim}",
            b.len()
        );
    }
    let n = x.rows();
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = out_dim;
    let mut out = Tensor::zeros(&shape);
    if let Some(b) = b {
        for r in 0..n {
            out.row_mut(r).copy_from_slice(b.data());
        }
    }
    let beta = if b.is_some() { T::one() } else { T::zero() };
    gemm(
        T::one(),
        x.data(),
        MatLayout::dense(n, in_dim),
        w.data(),
        MatLayout::dense(out_dim, in_dim).t(),
        beta,
        out.data_mut(),
        MatLayout::dense(n, out_dim),
    );
    Ok(out)
}

pub struct LinearGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

pub fn linear_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gy: &Tensor<T>,
    with_bias: bool,
) -> LinearGrads<T> {
    let (out_dim, in_dim) = (w.shape()[0], w.shape()[1]);
    let n = x.rows();
    assert_eq!(gy.rows(), n, "linear backward rows");
    assert_eq!(gy.cols(), out_dim, "linear backward cols");
    let mut gx = Tensor::zeros(x.shape());
    gemm(
        T::one(),
        gy.data(),
        MatLayout::dense(n, out_dim),
        w.data(),
        MatLayout::dense(out_dim, in_dim),
        T::zero(),
        gx.data_mut(),
        MatLayout::dense(n, in_dim),
    );
    let mut gw = Tensor::zeros(&[out_dim, in_dim]);
    gemm(
        T::one(),
        gy.data(),
        MatLayout::dense(n, out_dim).t(),
        x.data(),
        MatLayout::dense(n, in_dim),
        T::zero(),
        gw.data_mut(),
        MatLayout::dense(out_dim, in_dim),
    );
    let gb = with_bias.then(|| {
        let mut gb = vec![T::zero(); out_dim];
        for r in 0..n {
            for (acc, &g) in gb.iter_mut().zip(gy.row(r)) {
                *acc += g;
            }
        }
        Tensor::from_vec(gb)
    });
    LinearGrads {
        input: gx,
        weight: gw,
        bias: gb,
    }
}
