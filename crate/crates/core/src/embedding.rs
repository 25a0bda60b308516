//! Token embedding for both modalities: a convolutional patch embedding for
//! images and a two-stage set-abstraction network for point clouds.

use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Result};
use crate::layers::{Conv2d, Ctx, Linear, PointwiseMlp, PointwiseMlpCache};
use crate::ops::{self, ConvGeometry};
use crate::params::{Gradients, Init, ParameterTable};
use crate::pointops::{self, FpsStart, PointSet};
use crate::tensor::{Scalar, Tensor};

const MODULE: &str = "embedding";

/// Fixed input standardization of `[0, 1]` pixel values.
const PIXEL_MEAN: f64 = 0.5;
const PIXEL_STD: f64 = 0.25;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingConfig {
    pub image_height: usize,
    pub image_width: usize,
    pub conv_channels: usize,
    pub patch_size: usize,
    pub num_points: usize,
    pub stem_dim: usize,
    /// Centers kept by each set-abstraction stage.
    pub sa_points: Vec<usize>,
    /// Output feature width of each set-abstraction stage. The last one is
    /// the token width.
    pub sa_dims: Vec<usize>,
    pub neighbors: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            image_height: 96,
            image_width: 320,
            conv_channels: 16,
            patch_size: 8,
            num_points: 8192,
            stem_dim: 64,
            sa_points: vec![512, 256],
            sa_dims: vec![128, 256],
            neighbors: 16,
        }
    }
}

impl EmbeddingConfig {
    pub fn patch_grid(&self) -> (usize, usize) {
        let s = 2 * self.patch_size;
        (self.image_height / s, self.image_width / s)
    }

    pub fn num_patches(&self) -> usize {
        let (r, c) = self.patch_grid();
        r * c
    }

    pub fn num_point_tokens(&self) -> usize {
        *self.sa_points.last().unwrap_or(&0)
    }

    pub fn validate(&self, model_dim: usize) -> Result<()> {
        let s = 2 * self.patch_size;
        ensure!(self.patch_size > 0, MODULE, "patch size must be positive");
        ensure!(
            self.image_height % s == 0 && self.image_width % s == 0 && self.image_height > 0 && self.image_width > 0,
            MODULE,
            "image {}x{} is not divisible by 2 x patch size {}",
            self.image_height,
            self.image_width,
            self.patch_size
        );
        ensure!(self.conv_channels > 0 && self.stem_dim > 0, MODULE, "channel widths must be positive");
        ensure!(
            !self.sa_points.is_empty() && self.sa_points.len() == self.sa_dims.len(),
            MODULE,
            "set-abstraction points {:?} and dims {:?} must be non-empty and equally long",
            self.sa_points,
            self.sa_dims
        );
        let mut prev = self.num_points;
        for &m in &self.sa_points {
            ensure!(m >= 1 && m <= prev, MODULE, "set-abstraction stage cannot keep {m} of {prev} points");
            prev = m;
        }
        ensure!(
            self.neighbors >= 1 && self.neighbors <= self.num_points,
            MODULE,
            "neighbor count {} must lie in 1..={}",
            self.neighbors,
            self.num_points
        );
        for w in self.sa_points.windows(2) {
            ensure!(self.neighbors <= w[0], MODULE, "neighbor count {} exceeds stage size {}", self.neighbors, w[0]);
        }
        ensure!(
            self.sa_dims.last() == Some(&model_dim),
            MODULE,
            "last set-abstraction width {:?} must equal model dim {model_dim}",
            self.sa_dims.last()
        );
        Ok(())
    }
}

/// `[H, W, C]` to `[rows * cols, P * P * C]`; tokens in row-major grid
/// order, each flattened as (dy, dx, channel).
pub fn patchify<T: Scalar>(x: &Tensor<T>, p: usize) -> Tensor<T> {
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (rows, cols) = (h / p, w / p);
    let mut out = Vec::with_capacity(rows * cols * p * p * c);
    for r in 0..rows {
        for q in 0..cols {
            for dy in 0..p {
                let start = ((r * p + dy) * w + q * p) * c;
                out.extend_from_slice(&x.data()[start..start + p * c]);
            }
        }
    }
    Tensor::from_parts(vec![rows * cols, p * p * c], out)
}

pub fn unpatchify<T: Scalar>(g: &Tensor<T>, p: usize, shape: &[usize]) -> Tensor<T> {
    let (w, c) = (shape[1], shape[2]);
    let cols = w / p;
    let mut out = Tensor::zeros(shape);
    for (t, row) in g.data().chunks(p * p * c).enumerate() {
        let (r, q) = (t / cols, t % cols);
        for dy in 0..p {
            let start = ((r * p + dy) * w + q * p) * c;
            out.data_mut()[start..start + p * c].copy_from_slice(&row[dy * p * c..(dy + 1) * p * c]);
        }
    }
    out
}

/// Three 3×3 convolutions (the first with stride 2) followed by
/// non-overlapping `P×P` patches projected linearly to the model width.
#[derive(Clone, Debug)]
pub struct ImageEmbedder {
    pub convs: [Conv2d; 3],
    pub patch: Linear,
    pub patch_size: usize,
    pub height: usize,
    pub width: usize,
}

pub struct ImageEmbedCache<T> {
    conv_in: Vec<Tensor<T>>,
    conv_pre: Vec<Tensor<T>>,
    patches: Tensor<T>,
}

impl ImageEmbedder {
    pub fn new(path: &str, cfg: &EmbeddingConfig, model_dim: usize) -> Self {
        let c = cfg.conv_channels;
        let geom = |stride| ConvGeometry {
            stride,
            padding: 1,
            groups: 1,
        };
        ImageEmbedder {
            convs: [
                Conv2d::new(&format!("{path}.stem.conv1"), 3, c, 3, geom(2)).for_relu(),
                Conv2d::new(&format!("{path}.stem.conv2"), c, c, 3, geom(1)).for_relu(),
                Conv2d::new(&format!("{path}.stem.conv3"), c, c, 3, geom(1)).for_relu(),
            ],
            patch: Linear::new(&format!("{path}.patch.linear"), cfg.patch_size * cfg.patch_size * c, model_dim, true),
            patch_size: cfg.patch_size,
            height: cfg.image_height,
            width: cfg.image_width,
        }
    }

    pub fn register<T: Scalar>(&self, p: &mut ParameterTable<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        for c in &self.convs {
            c.register(p, rng)?;
        }
        self.patch.register(p, rng)
    }

    /// `image` is `[H, W, 3]`; returns `[num_patches, d]` tokens.
    pub fn forward<T: Scalar>(&self, p: &ParameterTable<T>, image: &Tensor<T>) -> Result<(Tensor<T>, ImageEmbedCache<T>)> {
        ensure!(
            image.shape() == [self.height, self.width, 3],
            MODULE,
            "image must be [{}, {}, 3], got {:?}",
            self.height,
            self.width,
            image.shape()
        );
        image.check_finite(MODULE, "image")?;
        let mut h = image.map(|v| (v - T::of(PIXEL_MEAN)) * T::of(1.0 / PIXEL_STD));
        let mut conv_in = Vec::with_capacity(3);
        let mut conv_pre = Vec::with_capacity(3);
        for conv in &self.convs {
            let pre = conv.forward(p, &h)?;
            conv_in.push(h);
            h = ops::relu(&pre);
            conv_pre.push(pre);
        }
        let patches = patchify(&h, self.patch_size);
        let tokens = self.patch.forward(p, &patches)?;
        Ok((
            tokens,
            ImageEmbedCache {
                conv_in,
                conv_pre,
                patches,
            },
        ))
    }

    /// Returns the gradient with respect to the image.
    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        c: &ImageEmbedCache<T>,
        gy: &Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Result<Tensor<T>> {
        let g_patches = self.patch.backward(p, &c.patches, gy, grads)?;
        let mut g = unpatchify(&g_patches, self.patch_size, c.conv_pre[2].shape());
        for i in (0..3).rev() {
            let g_pre = ops::relu_backward(&c.conv_pre[i], &g);
            g = self.convs[i].backward(p, &c.conv_in[i], &g_pre, grads)?;
        }
        g.scale(T::of(1.0 / PIXEL_STD));
        Ok(g)
    }
}

/// Result of one set-abstraction stage.
pub struct SetAbstractionOutput<T> {
    /// Sampled center coordinates `[m, 3]`, a subset of the input coordinates.
    pub coords: Tensor<T>,
    /// `[m, d_out]`.
    pub feats: Tensor<T>,
}

/// Farthest-point sampling, kNN grouping of `[f_q - f_s ; p_q - p_s]`, a
/// two-layer shared MLP and max-pooling over each neighborhood. A batch of
/// point sets shares one pass through the MLP, so batch-norm statistics
/// span every neighborhood of every set.
#[derive(Clone, Debug)]
pub struct SetAbstraction {
    pub centers: usize,
    pub neighbors: usize,
    pub h1: PointwiseMlp,
    pub h2: PointwiseMlp,
}

/// Sampling and grouping indices of one point set.
pub struct Grouping {
    pub n_points: usize,
    pub center_idx: Vec<usize>,
    pub neighbor_idx: Vec<usize>,
}

pub struct SetAbstractionCache<T> {
    feat_dim: usize,
    pub groupings: Vec<Grouping>,
    h1: PointwiseMlpCache<T>,
    h2: PointwiseMlpCache<T>,
    pool_shape: Vec<usize>,
    argmax: Vec<u32>,
}

impl SetAbstraction {
    pub fn new(path: &str, in_dim: usize, out_dim: usize, centers: usize, neighbors: usize) -> Self {
        SetAbstraction {
            centers,
            neighbors,
            h1: PointwiseMlp::new(&format!("{path}.htheta.1"), in_dim + 3, out_dim),
            h2: PointwiseMlp::new(&format!("{path}.htheta.2"), out_dim, out_dim),
        }
    }

    pub fn register<T: Scalar>(&self, p: &mut ParameterTable<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        self.h1.register(p, rng)?;
        self.h2.register(p, rng)
    }

    pub fn forward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        inputs: &[PointSet<T>],
        ctx: &mut Ctx<T>,
    ) -> Result<(Vec<SetAbstractionOutput<T>>, SetAbstractionCache<T>)> {
        ensure!(!inputs.is_empty(), MODULE, "set abstraction needs at least one point set");
        let feat_dim = inputs[0].feature_dim();
        ensure!(
            feat_dim + 3 == self.h1.linear.in_dim,
            MODULE,
            "set abstraction expects {} input features, got {feat_dim}",
            self.h1.linear.in_dim - 3
        );
        let (m, k) = (self.centers, self.neighbors);
        let mut groupings = Vec::with_capacity(inputs.len());
        let mut grouped = Vec::with_capacity(inputs.len());
        let mut centers = Vec::with_capacity(inputs.len());
        for input in inputs {
            ensure!(
                input.feature_dim() == feat_dim,
                MODULE,
                "point sets in one batch must share a feature width"
            );
            let center_idx = pointops::farthest_point_sample(&input.coords, m, FpsStart::default())?;
            let centers_xyz = input.coords.gather_rows(&center_idx);
            let neighbor_idx = pointops::knn(&centers_xyz, &input.coords, k)?;
            grouped.push(pointops::group(input, &center_idx, &neighbor_idx, k)?.reshape(vec![m * k, feat_dim + 3])?);
            centers.push(centers_xyz);
            groupings.push(Grouping {
                n_points: input.len(),
                center_idx,
                neighbor_idx,
            });
        }
        let flat = ops::concat(&grouped.iter().collect::<Vec<_>>(), 0)?;
        let (a, h1) = self.h1.forward(p, &flat, ctx)?;
        let (b, h2) = self.h2.forward(p, &a, ctx)?;
        let d = self.h2.out_dim();
        let pool_shape = vec![inputs.len() * m, k, d];
        let (pooled, argmax) = ops::max_pool_set(&b.reshape(pool_shape.clone())?)?;
        let outputs = ops::split(&pooled, 0, &vec![m; inputs.len()])
            .into_iter()
            .zip(centers)
            .map(|(feats, coords)| SetAbstractionOutput { coords, feats })
            .collect();
        Ok((
            outputs,
            SetAbstractionCache {
                feat_dim,
                groupings,
                h1,
                h2,
                pool_shape,
                argmax,
            },
        ))
    }

    /// Gradients with respect to each set's input features `[N, D]`.
    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        c: &SetAbstractionCache<T>,
        gys: &[&Tensor<T>],
        grads: &mut Gradients<T>,
    ) -> Result<Vec<Tensor<T>>> {
        ensure!(gys.len() == c.groupings.len(), MODULE, "one output gradient per point set");
        let gy = ops::concat(gys, 0)?;
        let g_pool = ops::max_pool_set_backward(&c.pool_shape, &c.argmax, &gy);
        let (bm, k, d) = (c.pool_shape[0], c.pool_shape[1], c.pool_shape[2]);
        let g_b = g_pool.reshape(vec![bm * k, d])?;
        let g_a = self.h2.backward(p, &c.h2, &g_b, grads)?;
        let g_flat = self.h1.backward(p, &c.h1, &g_a, grads)?;
        let m = bm / c.groupings.len();
        ops::split(&g_flat, 0, &vec![m * k; c.groupings.len()])
            .into_iter()
            .zip(&c.groupings)
            .map(|(g, gr)| {
                let g = g.reshape(vec![m, k, c.feat_dim + 3])?;
                Ok(pointops::group_backward_features(
                    gr.n_points,
                    c.feat_dim,
                    &gr.center_idx,
                    &gr.neighbor_idx,
                    k,
                    &g,
                ))
            })
            .collect()
    }
}

/// Per-point stem, stacked set-abstraction stages and a zero-initialized
/// positional projection of the surviving center coordinates.
#[derive(Clone, Debug)]
pub struct PointEmbedder {
    pub stem: [PointwiseMlp; 2],
    pub stages: Vec<SetAbstraction>,
    pub pos: Linear,
    pub num_points: usize,
}

pub struct PointEmbedCache<T> {
    batch: usize,
    stem: Vec<PointwiseMlpCache<T>>,
    pub stages: Vec<SetAbstractionCache<T>>,
    token_coords: Vec<Tensor<T>>,
}

impl PointEmbedder {
    pub fn new(path: &str, cfg: &EmbeddingConfig, model_dim: usize) -> Self {
        let s = cfg.stem_dim;
        let mut stages = Vec::new();
        let mut prev = s;
        for (i, (&m, &d)) in cfg.sa_points.iter().zip(&cfg.sa_dims).enumerate() {
            stages.push(SetAbstraction::new(&format!("{path}.sa{}", i + 1), prev, d, m, cfg.neighbors));
            prev = d;
        }
        PointEmbedder {
            stem: [
                PointwiseMlp::new(&format!("{path}.stem.mlp1"), 3, s),
                PointwiseMlp::new(&format!("{path}.stem.mlp2"), s, s),
            ],
            stages,
            pos: Linear::new(&format!("{path}.pos.linear"), 3, model_dim, false).with_init(Init::Zeros),
            num_points: cfg.num_points,
        }
    }

    pub fn register<T: Scalar>(&self, p: &mut ParameterTable<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        for m in &self.stem {
            m.register(p, rng)?;
        }
        for s in &self.stages {
            s.register(p, rng)?;
        }
        self.pos.register(p, rng)
    }

    /// Each cloud is `[N, 3]`; returns per-cloud tokens `[N', d]` and their
    /// coordinates. Clouds of one call share batch-norm statistics.
    pub fn forward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        clouds: &[&Tensor<T>],
        ctx: &mut Ctx<T>,
    ) -> Result<(Vec<(Tensor<T>, Tensor<T>)>, PointEmbedCache<T>)> {
        ensure!(!clouds.is_empty(), MODULE, "no point clouds to embed");
        for c in clouds {
            ensure!(
                c.shape() == [self.num_points, 3],
                MODULE,
                "point cloud must be [{}, 3], got {:?}",
                self.num_points,
                c.shape()
            );
            c.check_finite(MODULE, "point coordinates")?;
        }
        let batch = clouds.len();
        let mut stem = Vec::with_capacity(2);
        let mut f = ops::concat(clouds, 0)?;
        for m in &self.stem {
            let (y, c) = m.forward(p, &f, ctx)?;
            stem.push(c);
            f = y;
        }
        let mut sets = ops::split(&f, 0, &vec![self.num_points; batch])
            .into_iter()
            .zip(clouds)
            .map(|(f, &c)| PointSet::new(c.clone(), Some(f)))
            .collect::<Result<Vec<_>>>()?;
        let mut stages = Vec::with_capacity(self.stages.len());
        for s in &self.stages {
            let (outs, c) = s.forward(p, &sets, ctx)?;
            stages.push(c);
            sets = outs
                .into_iter()
                .map(|o| PointSet::new(o.coords, Some(o.feats)))
                .collect::<Result<Vec<_>>>()?;
        }
        let mut out = Vec::with_capacity(batch);
        let mut token_coords = Vec::with_capacity(batch);
        for mut set in sets {
            let mut tokens = set.feats.take().expect("stage output carries features");
            tokens.add_assign(&self.pos.forward(p, &set.coords)?);
            token_coords.push(set.coords.clone());
            out.push((tokens, set.coords));
        }
        Ok((
            out,
            PointEmbedCache {
                batch,
                stem,
                stages,
                token_coords,
            },
        ))
    }

    /// Backpropagates per-cloud token gradients into all point-branch
    /// parameters.
    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        c: &PointEmbedCache<T>,
        gys: &[&Tensor<T>],
        grads: &mut Gradients<T>,
    ) -> Result<()> {
        ensure!(gys.len() == c.batch, MODULE, "one token gradient per cloud");
        for (g, coords) in gys.iter().zip(&c.token_coords) {
            self.pos.backward(p, coords, g, grads)?;
        }
        let mut g: Vec<Tensor<T>> = gys.iter().map(|&g| g.clone()).collect();
        for (s, sc) in self.stages.iter().zip(&c.stages).rev() {
            g = s.backward(p, sc, &g.iter().collect::<Vec<_>>(), grads)?;
        }
        let mut g = ops::concat(&g.iter().collect::<Vec<_>>(), 0)?;
        for (m, mc) in self.stem.iter().zip(&c.stem).rev() {
            g = m.backward(p, mc, &g, grads)?;
        }
        Ok(())
    }
}
