//! Exact geometric kernels on point sets: farthest point sampling,
//! k-nearest-neighbor search and neighborhood grouping.
//!
//! Distances are squared Euclidean evaluated in `f64`; every selection
//! breaks ties towards the lowest index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Result};
use crate::tensor::{Scalar, Tensor};

const MODULE: &str = "pointops";

#[derive(Clone, Debug, PartialEq)]
pub struct PointSet<T = f32> {
    /// `N x 3`, meters.
    pub coords: Tensor<T>,
    /// Optional `N x D` per-point features.
    pub feats: Option<Tensor<T>>,
}

impl<T: Scalar> PointSet<T> {
    pub fn new(coords: Tensor<T>, feats: Option<Tensor<T>>) -> Result<Self> {
        ensure!(
            coords.rank() == 2 && coords.cols() == 3,
            MODULE,
            "coordinates must be N x 3, got {:?}",
            coords.shape()
        );
        coords.check_finite(MODULE, "point coordinates")?;
        if let Some(f) = &feats {
            ensure!(
                f.rows() == coords.rows(),
                MODULE,
                "feature rows ({}) differ from point count ({})",
                f.rows(),
                coords.rows()
            );
        }
        Ok(PointSet { coords, feats })
    }

    pub fn len(&self) -> usize {
        self.coords.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.feats.as_ref().map_or(0, |f| f.cols())
    }
}

#[inline]
pub fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    let dx = a[0].as_f64() - b[0].as_f64();
    let dy = a[1].as_f64() - b[1].as_f64();
    let dz = a[2].as_f64() - b[2].as_f64();
    dx * dx + dy * dy + dz * dz
}

/// How the first farthest-point sample is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FpsStart {
    Index(usize),
    /// Uniformly random start drawn from a seeded generator.
    Seeded(u64),
}

impl Default for FpsStart {
    fn default() -> Self {
        FpsStart::Index(0)
    }
}

/// Iteratively pick the point whose distance to the already selected set is
/// largest.
pub fn farthest_point_sample<T: Scalar>(points: &Tensor<T>, m: usize, start: FpsStart) -> Result<Vec<usize>> {
    let n = points.rows();
    ensure!(points.cols() == 3, MODULE, "fps expects N x 3 coordinates, got {:?}", points.shape());
    ensure!(m >= 1 && m <= n, MODULE, "fps: cannot sample m={m} from N={n} points");
    let start = match start {
        FpsStart::Index(i) => i,
        FpsStart::Seeded(seed) => ChaCha8Rng::seed_from_u64(seed).random_range(0..n),
    };
    ensure!(start < n, MODULE, "fps: start index {start} out of range for N={n}");

    let mut min_d = vec![f64::INFINITY; n];
    let mut taken = vec![false; n];
    let mut out = Vec::with_capacity(m);
    let mut current = start;
    loop {
        out.push(current);
        taken[current] = true;
        if out.len() == m {
            break;
        }
        let c = points.row(current);
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let d = squared_distance(points.row(i), c);
            if d < min_d[i] {
                min_d[i] = d;
            }
            if min_d[i] > best_d {
                best_d = min_d[i];
                best = i;
            }
        }
        current = best;
    }
    Ok(out)
}

/// Row `i` of the result holds the `k` reference indices closest to query
/// `i`, ascending by distance. Returned flat, `m * k` entries.
pub fn knn<T: Scalar>(queries: &Tensor<T>, refs: &Tensor<T>, k: usize) -> Result<Vec<usize>> {
    let n = refs.rows();
    ensure!(
        queries.cols() == 3 && refs.cols() == 3,
        MODULE,
        "knn expects 3-D coordinates, got {:?} and {:?}",
        queries.shape(),
        refs.shape()
    );
    ensure!(k >= 1 && k <= n, MODULE, "knn: k={k} must lie in 1..={n}");
    let mut out = Vec::with_capacity(queries.rows() * k);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    for q in 0..queries.rows() {
        let qp = queries.row(q);
        cand.clear();
        cand.extend((0..n).map(|i| (squared_distance(refs.row(i), qp), i)));
        if k < n {
            cand.select_nth_unstable_by(k - 1, by_dist);
        }
        let head = &mut cand[..k];
        head.sort_unstable_by(by_dist);
        out.extend(head.iter().map(|&(_, i)| i));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Neighborhood<T = f32> {
    pub center_index: usize,
    pub neighbor_indices: Vec<usize>,
    /// `k x (D + 3)`; row `j` is `[f_q - f_s ; p_q - p_s]` for neighbor `j`.
    pub grouped: Tensor<T>,
}

/// Batched grouping: `[m, k, D + 3]` with feature deltas first, coordinate
/// deltas last. `neighbors` is the flat `m * k` output of [`knn`].
pub fn group<T: Scalar>(points: &PointSet<T>, centers: &[usize], neighbors: &[usize], k: usize) -> Result<Tensor<T>> {
    let feats = points
        .feats
        .as_ref()
        .ok_or_else(|| crate::Error::contract(MODULE, "grouping requires per-point features"))?;
    ensure!(
        neighbors.len() == centers.len() * k,
        MODULE,
        "grouping: {} neighbor indices for {} centers with k={k}",
        neighbors.len(),
        centers.len()
    );
    let n = points.len();
    ensure!(
        centers.iter().chain(neighbors).all(|&i| i < n),
        MODULE,
        "grouping: index out of range for {n} points"
    );
    let d = feats.cols();
    let width = d + 3;
    let mut data = Vec::with_capacity(centers.len() * k * width);
    for (ci, &s) in centers.iter().enumerate() {
        let (fs, ps) = (feats.row(s), points.coords.row(s));
        for &q in &neighbors[ci * k..(ci + 1) * k] {
            data.extend(feats.row(q).iter().zip(fs).map(|(&a, &b)| a - b));
            data.extend(points.coords.row(q).iter().zip(ps).map(|(&a, &b)| a - b));
        }
    }
    Ok(Tensor::from_parts(vec![centers.len(), k, width], data))
}

/// Gradient of [`group`] with respect to the source features.
pub fn group_backward_features<T: Scalar>(
    n_points: usize,
    feat_dim: usize,
    centers: &[usize],
    neighbors: &[usize],
    k: usize,
    grad_grouped: &Tensor<T>,
) -> Tensor<T> {
    let width = feat_dim + 3;
    let mut gf = Tensor::zeros(&[n_points, feat_dim]);
    let g = grad_grouped.data();
    let out = gf.data_mut();
    for (ci, &s) in centers.iter().enumerate() {
        for (j, &q) in neighbors[ci * k..(ci + 1) * k].iter().enumerate() {
            let row = &g[(ci * k + j) * width..(ci * k + j) * width + feat_dim];
            for (c, &v) in row.iter().enumerate() {
                out[q * feat_dim + c] += v;
                out[s * feat_dim + c] -= v;
            }
        }
    }
    gf
}

/// Per-center neighborhoods `N_i` for sampled centers drawn from `refs`.
pub fn group_neighborhood<T: Scalar>(refs: &PointSet<T>, centers: &[usize], k: usize) -> Result<Vec<Neighborhood<T>>> {
    ensure!(refs.feats.is_some(), MODULE, "grouping requires per-point features");
    let centers_xyz = refs.coords.gather_rows(centers);
    let nbrs = knn(&centers_xyz, &refs.coords, k)?;
    let grouped = group(refs, centers, &nbrs, k)?;
    let width = grouped.shape()[2];
    Ok(centers
        .iter()
        .enumerate()
        .map(|(i, &c)| Neighborhood {
            center_index: c,
            neighbor_indices: nbrs[i * k..(i + 1) * k].to_vec(),
            grouped: Tensor::from_parts(
                vec![k, width],
                grouped.data()[i * k * width..(i + 1) * k * width].to_vec(),
            ),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[[f32; 3]]) -> Tensor<f32> {
        Tensor::new(vec![v.len(), 3], v.iter().flatten().copied().collect()).unwrap()
    }

    fn square() -> Tensor<f32> {
        pts(&[[0., 0., 0.], [1., 0., 0.], [0., 1., 0.], [1., 1., 0.]])
    }

    #[test]
    fn fps_on_unit_square() {
        assert_eq!(farthest_point_sample(&square(), 2, FpsStart::Index(0)).unwrap(), vec![0, 3]);
        assert_eq!(farthest_point_sample(&square(), 3, FpsStart::Index(0)).unwrap(), vec![0, 3, 1]);
    }

    #[test]
    fn fps_exhaustion_is_a_permutation() {
        let mut idx = farthest_point_sample(&square(), 4, FpsStart::Index(2)).unwrap();
        assert_eq!(idx[0], 2);
        idx.sort();
        assert_eq!(idx, vec![0, 1, 2, 3]);
    }

    #[test]
    fn fps_handles_duplicate_points() {
        let p = pts(&[[0., 0., 0.], [0., 0., 0.], [0., 0., 0.]]);
        assert_eq!(farthest_point_sample(&p, 3, FpsStart::Index(1)).unwrap(), vec![1, 0, 2]);
    }

    #[test]
    fn fps_rejects_oversampling() {
        assert!(farthest_point_sample(&square(), 5, FpsStart::Index(0)).is_err());
        assert!(farthest_point_sample(&square(), 2, FpsStart::Index(4)).is_err());
    }

    #[test]
    fn fps_seeded_start_is_reproducible() {
        let a = farthest_point_sample(&square(), 3, FpsStart::Seeded(9)).unwrap();
        let b = farthest_point_sample(&square(), 3, FpsStart::Seeded(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn knn_on_a_line() {
        let q = pts(&[[0., 0., 0.]]);
        let r = pts(&[[0., 0., 0.], [1., 0., 0.], [2., 0., 0.]]);
        assert_eq!(knn(&q, &r, 2).unwrap(), vec![0, 1]);
        assert!(knn(&q, &r, 4).is_err());
    }

    #[test]
    fn knn_self_query_returns_self() {
        let p = square();
        assert_eq!(knn(&p, &p, 1).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn grouped_row_is_feature_delta_then_coordinate_delta() {
        let coords = pts(&[[0., 0., 0.], [1., 0., 0.]]);
        let feats = Tensor::matrix(2, 1, vec![1.0f32, 3.0]).unwrap();
        let set = PointSet::new(coords, Some(feats)).unwrap();
        let g = group(&set, &[0], &[0, 1], 2).unwrap();
        assert_eq!(g.shape(), &[1, 2, 4]);
        assert_eq!(&g.data()[..4], &[0.0, 0.0, 0.0, 0.0]);
        assert_eq!(&g.data()[4..], &[2.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn grouping_without_features_fails() {
        let set = PointSet::new(square(), None).unwrap();
        assert!(group_neighborhood(&set, &[0], 2).is_err());
    }
}
