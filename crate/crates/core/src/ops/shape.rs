use crate::error::{ensure, Result};
use crate::tensor::{Scalar, Tensor};

/// Max over the set axis of a `[m, k, C]` tensor. Returns the pooled
/// `[m, C]` tensor and, per output entry, the winning set index (lowest
/// index on ties).
pub fn max_pool_set<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    ensure!(
        x.rank() == 3,
        "diffcore",
        "max-pool-over-set: input must be [m, k, C], got {:?}",
        x.shape()
    );
    let (m, k, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut out = vec![T::zero(); m * c];
    let mut arg = vec![0u32; m * c];
    for i in 0..m {
        let base = i * k * c;
        out[i * c..(i + 1) * c].copy_from_slice(&x.data()[base..base + c]);
        for j in 1..k {
            let row = &x.data()[base + j * c..base + (j + 1) * c];
            for ch in 0..c {
                if row[ch] > out[i * c + ch] {
                    out[i * c + ch] = row[ch];
                    arg[i * c + ch] = j as u32;
                }
            }
        }
    }
    Ok((Tensor::from_parts(vec![m, c], out), arg))
}

pub fn max_pool_set_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[u32],
    gy: &Tensor<T>,
) -> Tensor<T> {
    let (m, k, c) = (input_shape[0], input_shape[1], input_shape[2]);
    let mut gx = Tensor::zeros(input_shape);
    let d = gx.data_mut();
    for i in 0..m {
        for ch in 0..c {
            let j = argmax[i * c + ch] as usize;
            d[(i * k + j) * c + ch] += gy.data()[i * c + ch];
        }
    }
    gx
}

/// Concatenate along `axis`; all other dimensions must agree.
pub fn concat<T: Scalar>(inputs: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
    ensure!(!inputs.is_empty(), "diffcore", "concat: no inputs");
    let rank = inputs[0].rank();
    ensure!(axis < rank, "diffcore", "concat: axis {axis} out of range for rank {rank}");
    for t in inputs {
        ensure!(
            t.rank() == rank
                && t.shape()
                    .iter()
                    .zip(inputs[0].shape())
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b),
            "diffcore",
            "concat(axis={axis}): shape {:?} incompatible with {:?}",
            t.shape(),
            inputs[0].shape()
        );
    }
    let outer: usize = inputs[0].shape()[..axis].iter().product();
    let inner: usize = inputs[0].shape()[axis + 1..].iter().product();
    let total_axis: usize = inputs.iter().map(|t| t.shape()[axis]).sum();
    let mut shape = inputs[0].shape().to_vec();
    shape[axis] = total_axis;
    let mut data = Vec::with_capacity(outer * total_axis * inner);
    for o in 0..outer {
        for t in inputs {
            let chunk = t.shape()[axis] * inner;
            data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
        }
    }
    Ok(Tensor::from_parts(shape, data))
}

/// Inverse of [`concat`]: split `gy` into pieces of the given axis sizes.
pub fn split<T: Scalar>(gy: &Tensor<T>, axis: usize, sizes: &[usize]) -> Vec<Tensor<T>> {
    let outer: usize = gy.shape()[..axis].iter().product();
    let inner: usize = gy.shape()[axis + 1..].iter().product();
    let total: usize = sizes.iter().sum();
    assert_eq!(total, gy.shape()[axis], "split sizes");
    let mut parts: Vec<Vec<T>> = sizes
        .iter()
        .map(|s| Vec::with_capacity(outer * s * inner))
        .collect();
    for o in 0..outer {
        let mut off = o * total * inner;
        for (p, &s) in parts.iter_mut().zip(sizes) {
            p.extend_from_slice(&gy.data()[off..off + s * inner]);
            off += s * inner;
        }
    }
    parts
        .into_iter()
        .zip(sizes)
        .map(|(p, &s)| {
            let mut shape = gy.shape().to_vec();
            shape[axis] = s;
            Tensor::from_parts(shape, p)
        })
        .collect()
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    ensure!(
        a.shape() == b.shape(),
        "diffcore",
        "add: shapes {:?} and {:?} differ",
        a.shape(),
        b.shape()
    );
    let mut out = a.clone();
    out.add_assign(b);
    Ok(out)
}
