//! Canonical preprocessing: bilinear image resize and seeded uniform point
//! subsampling (or padding by resampling) to a fixed count.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triplace_core::{Result, Tensor};

use crate::sample::Sample;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PreprocessTarget {
    pub height: usize,
    pub width: usize,
    pub num_points: usize,
}

impl Default for PreprocessTarget {
    fn default() -> Self {
        PreprocessTarget {
            height: 96,
            width: 320,
            num_points: 8192,
        }
    }
}

/// Per-sample seed used by every pipeline stage, so that a sample is
/// preprocessed identically for training and for embedding.
pub fn sample_seed(id: u64) -> u64 {
    id.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x5eed_0f_c10d
}

/// Bilinear resize of `[H, W, C]` with half-pixel centers and edge clamping.
/// Same-size input is returned unchanged.
pub fn resize_bilinear(img: &Tensor<f32>, height: usize, width: usize) -> Tensor<f32> {
    let (h, w, c) = (img.shape()[0], img.shape()[1], img.shape()[2]);
    if h == height && w == width {
        return img.clone();
    }
    let src = |len: usize, out: usize, i: usize| -> (usize, usize, f32) {
        let s = ((i as f64 + 0.5) * len as f64 / out as f64 - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, (s - i0 as f64) as f32)
    };
    let d = img.data();
    let mut out = Vec::with_capacity(height * width * c);
    for y in 0..height {
        let (y0, y1, fy) = src(h, height, y);
        for x in 0..width {
            let (x0, x1, fx) = src(w, width, x);
            for ch in 0..c {
                let at = |yy: usize, xx: usize| d[(yy * w + xx) * c + ch];
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Tensor::new(vec![height, width, c], out).expect("consistent shape")
}

/// Uniform subsample without replacement to `n` points; a cloud with fewer
/// points keeps all of them and is padded by draws with replacement.
pub fn resample_cloud(cloud: &Tensor<f32>, n: usize, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = cloud.rows();
    let idx: Vec<usize> = if total >= n {
        index::sample(&mut rng, total, n).into_vec()
    } else {
        let mut v = index::sample(&mut rng, total, total).into_vec();
        v.extend((0..n - total).map(|_| rng.random_range(0..total)));
        v
    };
    cloud.gather_rows(&idx)
}

pub fn preprocess(sample: &Sample, target: PreprocessTarget, seed: u64) -> Result<Sample> {
    Ok(Sample {
        image: resize_bilinear(&sample.image, target.height, target.width),
        cloud: resample_cloud(&sample.cloud, target.num_points, seed),
        ..sample.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(n: usize) -> Tensor<f32> {
        Tensor::new(vec![n, 3], (0..n * 3).map(|v| v as f32).collect()).unwrap()
    }

    #[test]
    fn exact_count_is_a_permutation() {
        let c = cloud(50);
        let r = resample_cloud(&c, 50, 4);
        let mut firsts: Vec<i64> = (0..50).map(|i| r.row(i)[0] as i64).collect();
        firsts.sort();
        assert_eq!(firsts, (0..50).map(|i| 3 * i).collect::<Vec<_>>());
    }

    #[test]
    fn downsample_is_distinct_and_padding_keeps_everything() {
        let c = cloud(1000);
        let r = resample_cloud(&c, 100, 1);
        let mut rows: Vec<i64> = (0..100).map(|i| r.row(i)[0] as i64).collect();
        rows.sort();
        rows.dedup();
        assert_eq!(rows.len(), 100);
        let small = resample_cloud(&cloud(10), 25, 2);
        let mut seen: Vec<i64> = (0..25).map(|i| small.row(i)[0] as i64).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 10);
    }

    #[test]
    fn identity_resize_and_constant_image() {
        let img = Tensor::new(vec![4, 6, 3], (0..72).map(|v| v as f32 / 72.0).collect()).unwrap();
        assert_eq!(resize_bilinear(&img, 4, 6), img);
        let flat = Tensor::full(&[8, 8, 3], 0.25f32);
        assert!(resize_bilinear(&flat, 3, 5).data().iter().all(|&v| v == 0.25));
    }
}
