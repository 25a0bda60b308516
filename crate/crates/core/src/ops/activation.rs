use crate::tensor::{Scalar, Tensor};

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of relu given its forward input; zero on the flat side and at 0.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, gy: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .zip(gy.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| T::one() / (T::one() + (-v).exp()))
}

pub fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, gy: &Tensor<T>) -> Tensor<T> {
    let data = y
        .data()
        .iter()
        .zip(gy.data())
        .map(|(&s, &g)| g * s * (T::one() - s))
        .collect();
    Tensor::from_parts(y.shape().to_vec(), data)
}

/// Softmax over the last axis; the row max is subtracted first.
pub fn softmax_rows<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    for r in 0..x.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub fn softmax_rows_backward<T: Scalar>(y: &Tensor<T>, gy: &Tensor<T>) -> Tensor<T> {
    let mut gx = Tensor::zeros(y.shape());
    for r in 0..y.rows() {
        softmax_row_backward(y.row(r), gy.row(r), gx.row_mut(r));
    }
    gx
}

pub(crate) fn softmax_row_backward<T: Scalar>(y: &[T], gy: &[T], gx: &mut [T]) {
    let dot: T = y.iter().zip(gy).map(|(&a, &b)| a * b).sum();
    for ((o, &s), &g) in gx.iter_mut().zip(y).zip(gy) {
        *o = s * (g - dot);
    }
}

/// Row-wise L2 normalization. A zero row stays zero.
pub fn l2_normalize_rows<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    for r in 0..x.rows() {
        l2_normalize_in_place(out.row_mut(r));
    }
    out
}

pub(crate) fn l2_normalize_in_place<T: Scalar>(row: &mut [T]) -> T {
    let norm = row.iter().map(|&v| v * v).sum::<T>().sqrt();
    if norm > T::zero() {
        for v in row.iter_mut() {
            *v /= norm;
        }
    }
    norm
}

pub fn l2_normalize_rows_backward<T: Scalar>(x: &Tensor<T>, gy: &Tensor<T>) -> Tensor<T> {
    let mut gx = Tensor::zeros(x.shape());
    for r in 0..x.rows() {
        l2_normalize_row_backward(x.row(r), gy.row(r), gx.row_mut(r));
    }
    gx
}

/// `d(x/|x|) = (g - y (y·g)) / |x|`; zero gradient at the zero vector.
pub(crate) fn l2_normalize_row_backward<T: Scalar>(x: &[T], gy: &[T], gx: &mut [T]) {
    let norm = x.iter().map(|&v| v * v).sum::<T>().sqrt();
    if norm == T::zero() {
        gx.iter_mut().for_each(|v| *v = T::zero());
        return;
    }
    let dot: T = x.iter().zip(gy).map(|(&a, &b)| a * b).sum::<T>() / norm;
    for ((o, &xv), &g) in gx.iter_mut().zip(x).zip(gy) {
        *o = (g - xv / norm * dot) / norm;
    }
}
