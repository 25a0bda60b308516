//! The full three-branch network: embeddings, per-modality transformers,
//! cross-modal interaction and fusion, and one NeXtVLAD head per branch.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::aggregation::{assemble_global_descriptor, NeXtVlad, NeXtVladCache, NeXtVladConfig};
use crate::attention::{
    AttentionConfig, FeatureFusion, FeatureFusionCache, InternalTransformer, SequenceInteraction,
    SequenceInteractionCache, TransformerBlockCache,
};
use crate::embedding::{EmbeddingConfig, ImageEmbedCache, ImageEmbedder, PointEmbedCache, PointEmbedder};
use crate::error::{ensure, Result};
use crate::layers::Ctx;
use crate::ops;
use crate::params::{Gradients, ParameterTable};
use crate::tensor::{Scalar, Tensor};

const MODULE: &str = "network";

/// Which sub-descriptors contribute to the global descriptor. Disabled
/// blocks are emitted as zeros, so distances reduce to the enabled blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Branches {
    pub image: bool,
    pub point: bool,
    pub fusion: bool,
}

impl Branches {
    pub const ALL: Branches = Branches {
        image: true,
        point: true,
        fusion: true,
    };
    pub const IMAGE: Branches = Branches {
        image: true,
        point: false,
        fusion: false,
    };
    pub const POINT: Branches = Branches {
        image: false,
        point: true,
        fusion: false,
    };
    pub const FUSION: Branches = Branches {
        image: false,
        point: false,
        fusion: true,
    };
    pub const CONCAT: Branches = Branches {
        image: true,
        point: true,
        fusion: false,
    };

    fn needs_image(&self) -> bool {
        self.image || self.fusion
    }

    fn needs_point(&self) -> bool {
        self.point || self.fusion
    }
}

impl std::str::FromStr for Branches {
    type Err = crate::Error;

    /// Comma-separated subset of `image`, `point`, `fusion`, or `all`.
    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "all" {
            return Ok(Branches::ALL);
        }
        let mut b = Branches {
            image: false,
            point: false,
            fusion: false,
        };
        for part in s.split(',').map(str::trim) {
            match part {
                "image" => b.image = true,
                "point" => b.point = true,
                "fusion" => b.fusion = true,
                other => {
                    return Err(crate::Error::contract(MODULE, format!("unknown branch `{other}`")));
                }
            }
        }
        ensure!(b.image || b.point || b.fusion, MODULE, "at least one branch must be enabled");
        Ok(b)
    }
}

impl std::fmt::Display for Branches {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<&str> = [(self.image, "image"), (self.point, "point"), (self.fusion, "fusion")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| *n)
            .collect();
        f.write_str(&names.join(","))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub embedding: EmbeddingConfig,
    pub attention: AttentionConfig,
    pub vlad: NeXtVladConfig,
    pub use_sis: bool,
    pub use_ffs: bool,
    pub ffs_expansion: usize,
    pub branches: Branches,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embedding: EmbeddingConfig::default(),
            attention: AttentionConfig::default(),
            vlad: NeXtVladConfig::default(),
            use_sis: true,
            use_ffs: true,
            ffs_expansion: 2,
            branches: Branches::ALL,
        }
    }
}

impl ModelConfig {
    /// Reduced input sizes and widths for single-core experiments; the
    /// descriptor layout (3 x 256) is unchanged.
    pub fn desk() -> Self {
        ModelConfig {
            embedding: EmbeddingConfig {
                image_height: 16,
                image_width: 64,
                conv_channels: 8,
                patch_size: 4,
                num_points: 1024,
                stem_dim: 16,
                sa_points: vec![128, 64],
                sa_dims: vec![32, 32],
                neighbors: 8,
            },
            attention: AttentionConfig {
                heads: 4,
                model_dim: 32,
                dropout: 0.0,
                ffn_hidden: 64,
                depth: 1,
            },
            vlad: NeXtVladConfig {
                clusters: 16,
                groups: 4,
                expansion: 2,
                output_dim: 256,
                proj_init_std: Some(1e-3),
            },
            ..ModelConfig::default()
        }
    }

    pub fn model_dim(&self) -> usize {
        self.attention.model_dim
    }

    pub fn descriptor_dim(&self) -> usize {
        3 * self.vlad.output_dim
    }

    pub fn validate(&self) -> Result<()> {
        self.attention.validate()?;
        self.embedding.validate(self.model_dim())?;
        self.vlad.validate(self.model_dim())?;
        ensure!(self.ffs_expansion > 0, MODULE, "FFS expansion must be positive");
        ensure!(
            self.branches.image || self.branches.point || self.branches.fusion,
            MODULE,
            "at least one branch must be enabled"
        );
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Network {
    pub config: ModelConfig,
    pub img_embed: ImageEmbedder,
    pub pc_embed: PointEmbedder,
    pub itm_img: InternalTransformer,
    pub itm_pc: InternalTransformer,
    pub sis: SequenceInteraction,
    pub ffs: FeatureFusion,
    pub vlad_img: NeXtVlad,
    pub vlad_pc: NeXtVlad,
    pub vlad_fusion: NeXtVlad,
}

struct FusionCache<T> {
    sis: Option<SequenceInteractionCache<T>>,
    ffs: Option<FeatureFusionCache<T>>,
    vlad: NeXtVladCache<T>,
    n_img: usize,
    n_pc: usize,
}

struct SampleCache<T> {
    img_embed: Option<ImageEmbedCache<T>>,
    itm_img: Vec<TransformerBlockCache<T>>,
    vlad_img: Option<NeXtVladCache<T>>,
    itm_pc: Vec<TransformerBlockCache<T>>,
    vlad_pc: Option<NeXtVladCache<T>>,
    fusion: Option<FusionCache<T>>,
    token_coords: Option<Tensor<T>>,
}

/// Intermediate state of one batched forward pass, consumed by
/// [`Network::backward`].
pub struct NetworkCache<T> {
    pc_embed: Option<PointEmbedCache<T>>,
    samples: Vec<SampleCache<T>>,
}

impl<T> NetworkCache<T> {
    pub fn batch_size(&self) -> usize {
        self.samples.len()
    }

    /// Point-token coordinates (surviving set-abstraction centers) of
    /// sample `i`, if the point branch ran.
    pub fn token_coords(&self, i: usize) -> Option<&Tensor<T>> {
        self.samples.get(i).and_then(|s| s.token_coords.as_ref())
    }
}

impl Network {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.model_dim();
        Ok(Network {
            img_embed: ImageEmbedder::new("img", &config.embedding, d),
            pc_embed: PointEmbedder::new("pc", &config.embedding, d),
            itm_img: InternalTransformer::new("itm.img", &config.attention),
            itm_pc: InternalTransformer::new("itm.pc", &config.attention),
            sis: SequenceInteraction::new("etm.sis", &config.attention),
            ffs: FeatureFusion::new("etm.ffs", d, config.ffs_expansion),
            vlad_img: NeXtVlad::new("vlad.img", d, &config.vlad),
            vlad_pc: NeXtVlad::new("vlad.pc", d, &config.vlad),
            vlad_fusion: NeXtVlad::new("vlad.fusion", d, &config.vlad),
            config,
        })
    }

    /// Every parameter is registered regardless of the branch mask so that
    /// model files share one layout. Registration order is fixed, which
    /// makes the initialization a pure function of the seed.
    pub fn init_params<T: Scalar>(&self, seed: u64) -> Result<ParameterTable<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParameterTable::new();
        self.img_embed.register(&mut p, &mut rng)?;
        self.pc_embed.register(&mut p, &mut rng)?;
        self.itm_img.register(&mut p, &mut rng)?;
        self.itm_pc.register(&mut p, &mut rng)?;
        self.sis.register(&mut p, &mut rng)?;
        self.ffs.register(&mut p, &mut rng)?;
        self.vlad_img.register(&mut p, &mut rng)?;
        self.vlad_pc.register(&mut p, &mut rng)?;
        self.vlad_fusion.register(&mut p, &mut rng)?;
        Ok(p)
    }

    /// Descriptors of a batch of samples. The point branch runs over the
    /// whole batch at once so that batch-norm statistics cover every cloud.
    pub fn forward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        images: &[&Tensor<T>],
        clouds: &[&Tensor<T>],
        ctx: &mut Ctx<T>,
    ) -> Result<(Vec<Tensor<T>>, NetworkCache<T>)> {
        ensure!(
            !images.is_empty() && images.len() == clouds.len(),
            MODULE,
            "batch needs matching non-empty image and cloud lists, got {} and {}",
            images.len(),
            clouds.len()
        );
        let b = self.config.branches;
        let out_dim = self.config.vlad.output_dim;
        let mut cache = NetworkCache {
            pc_embed: None,
            samples: Vec::with_capacity(images.len()),
        };
        let mut pc_embedded: Vec<Option<(Tensor<T>, Tensor<T>)>> = vec![None; images.len()];
        if b.needs_point() {
            let (out, c) = self.pc_embed.forward(p, clouds, ctx)?;
            cache.pc_embed = Some(c);
            pc_embedded = out.into_iter().map(Some).collect();
        }
        let mut descs = Vec::with_capacity(images.len());
        for (image, pc) in images.iter().zip(pc_embedded) {
            let mut sc = SampleCache {
                img_embed: None,
                itm_img: Vec::new(),
                vlad_img: None,
                itm_pc: Vec::new(),
                vlad_pc: None,
                fusion: None,
                token_coords: None,
            };
            let mut img_tokens = None;
            if b.needs_image() {
                let (t, c) = self.img_embed.forward(p, image)?;
                sc.img_embed = Some(c);
                let (t, c) = self.itm_img.forward(p, &t)?;
                sc.itm_img = c;
                img_tokens = Some(t);
            }
            let mut pc_tokens = None;
            if let Some((t, coords)) = pc {
                sc.token_coords = Some(coords);
                let (t, c) = self.itm_pc.forward(p, &t)?;
                sc.itm_pc = c;
                pc_tokens = Some(t);
            }

            let zeros = || Tensor::zeros(&[out_dim]);
            let img_sub = match (&img_tokens, b.image) {
                (Some(t), true) => {
                    let (v, c) = self.vlad_img.forward(p, t)?;
                    sc.vlad_img = Some(c);
                    v
                }
                _ => zeros(),
            };
            let pc_sub = match (&pc_tokens, b.point) {
                (Some(t), true) => {
                    let (v, c) = self.vlad_pc.forward(p, t)?;
                    sc.vlad_pc = Some(c);
                    v
                }
                _ => zeros(),
            };
            let fusion_sub = match (&img_tokens, &pc_tokens, b.fusion) {
                (Some(it), Some(pt), true) => {
                    let (v, c) = self.fusion_forward(p, it, pt)?;
                    sc.fusion = Some(c);
                    v
                }
                _ => zeros(),
            };
            let desc = assemble_global_descriptor(&img_sub, &pc_sub, &fusion_sub)?;
            desc.check_finite(MODULE, "global descriptor")?;
            descs.push(desc);
            cache.samples.push(sc);
        }
        Ok((descs, cache))
    }

    fn fusion_forward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        img: &Tensor<T>,
        pc: &Tensor<T>,
    ) -> Result<(Tensor<T>, FusionCache<T>)> {
        let (n_img, n_pc) = (img.rows(), pc.rows());
        let (sis, stacked) = if self.config.use_sis {
            let ((i2, p2), c) = self.sis.forward(p, img, pc)?;
            (Some(c), ops::concat(&[&i2, &p2], 0)?)
        } else {
            (None, ops::concat(&[img, pc], 0)?)
        };
        let (ffs, fused) = if self.config.use_ffs {
            let (y, c) = self.ffs.forward(p, &stacked)?;
            (Some(c), y)
        } else {
            (None, stacked)
        };
        let (v, vlad) = self.vlad_fusion.forward(p, &fused)?;
        Ok((
            v,
            FusionCache {
                sis,
                ffs,
                vlad,
                n_img,
                n_pc,
            },
        ))
    }

    /// Accumulates parameter gradients for one descriptor gradient per
    /// batch sample. Parameters outside the enabled branches receive zero
    /// gradients.
    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        cache: &NetworkCache<T>,
        g_descs: &[&Tensor<T>],
        grads: &mut Gradients<T>,
    ) -> Result<()> {
        let out_dim = self.config.vlad.output_dim;
        ensure!(
            g_descs.len() == cache.samples.len(),
            MODULE,
            "expected {} descriptor gradients, got {}",
            cache.samples.len(),
            g_descs.len()
        );
        let mut g_pc_tokens = Vec::with_capacity(g_descs.len());
        for (g_desc, sc) in g_descs.iter().zip(&cache.samples) {
            ensure!(
                g_desc.shape() == [3 * out_dim],
                MODULE,
                "descriptor gradient must be [{}], got {:?}",
                3 * out_dim,
                g_desc.shape()
            );
            let parts = ops::split(g_desc, 0, &[out_dim, out_dim, out_dim]);
            let mut g_img: Option<Tensor<T>> = None;
            let mut g_pc: Option<Tensor<T>> = None;
            let add = |acc: &mut Option<Tensor<T>>, g: Tensor<T>| match acc {
                Some(a) => a.add_assign(&g),
                None => *acc = Some(g),
            };

            if let Some(c) = &sc.vlad_img {
                add(&mut g_img, self.vlad_img.backward(p, c, &parts[0], grads)?);
            }
            if let Some(c) = &sc.vlad_pc {
                add(&mut g_pc, self.vlad_pc.backward(p, c, &parts[1], grads)?);
            }
            if let Some(c) = &sc.fusion {
                let mut g = self.vlad_fusion.backward(p, &c.vlad, &parts[2], grads)?;
                if let Some(fc) = &c.ffs {
                    g = self.ffs.backward(p, fc, &g, grads)?;
                }
                let halves = ops::split(&g, 0, &[c.n_img, c.n_pc]);
                let (gi, gp) = match &c.sis {
                    Some(s) => self.sis.backward(p, s, &halves[0], &halves[1], grads)?,
                    None => (halves[0].clone(), halves[1].clone()),
                };
                add(&mut g_img, gi);
                add(&mut g_pc, gp);
            }

            if let (Some(g), Some(ec)) = (g_img, &sc.img_embed) {
                let g = self.itm_img.backward(p, &sc.itm_img, &g, grads)?;
                self.img_embed.backward(p, ec, &g, grads)?;
            }
            if let Some(coords) = &sc.token_coords {
                let g = match g_pc {
                    Some(g) => self.itm_pc.backward(p, &sc.itm_pc, &g, grads)?,
                    None => Tensor::zeros(&[coords.rows(), self.config.model_dim()]),
                };
                g_pc_tokens.push(g);
            }
        }
        if let Some(ec) = &cache.pc_embed {
            self.pc_embed.backward(p, ec, &g_pc_tokens.iter().collect::<Vec<_>>(), grads)?;
        }
        grads.fill_missing(p);
        Ok(())
    }

    /// Inference-mode descriptor.
    pub fn embed<T: Scalar>(&self, p: &ParameterTable<T>, image: &Tensor<T>, cloud: &Tensor<T>) -> Result<Tensor<T>> {
        let mut ctx = Ctx::eval();
        let (mut d, _) = self.forward(p, &[image], &[cloud], &mut ctx)?;
        Ok(d.pop().expect("one descriptor per sample"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Init;

    fn inputs(cfg: &ModelConfig, seed: u64) -> (Tensor<f32>, Tensor<f32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = &cfg.embedding;
        let img = Init::Uniform(0.5)
            .sample::<f32>(&[e.image_height, e.image_width, 3], &mut rng)
            .map(|v| v + 0.5);
        let cloud = Init::Uniform(10.0).sample(&[e.num_points, 3], &mut rng);
        (img, cloud)
    }

    #[test]
    fn desk_descriptor_layout() {
        let cfg = ModelConfig::desk();
        let net = Network::new(cfg.clone()).unwrap();
        let p = net.init_params::<f32>(1).unwrap();
        let (img, cloud) = inputs(&cfg, 2);
        let d = net.embed(&p, &img, &cloud).unwrap();
        assert_eq!(d.shape(), &[768]);
        for block in d.data().chunks(256) {
            let n: f32 = block.iter().map(|v| v * v).sum::<f32>().sqrt();
            assert!((n - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn masked_blocks_are_zero_and_grads_complete() {
        let mut cfg = ModelConfig::desk();
        cfg.branches = Branches::IMAGE;
        let net = Network::new(cfg.clone()).unwrap();
        let p = net.init_params::<f32>(1).unwrap();
        let (img, cloud) = inputs(&cfg, 2);
        let mut ctx = Ctx::train();
        let (d, c) = net.forward(&p, &[&img], &[&cloud], &mut ctx).unwrap();
        assert!(d[0].data()[256..].iter().all(|&v| v == 0.0));
        let mut g = Gradients::new();
        net.backward(&p, &c, &[&Tensor::full(&[768], 1.0)], &mut g).unwrap();
        let trainable = p.iter().filter(|(_, q)| q.trainable).count();
        assert_eq!(g.len(), trainable);
        assert!(g.get("vlad.pc.proj.weight").unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn branch_list_parsing() {
        assert_eq!("all".parse::<Branches>().unwrap(), Branches::ALL);
        assert_eq!("image, point".parse::<Branches>().unwrap(), Branches::CONCAT);
        assert!("lidar".parse::<Branches>().is_err());
        assert_eq!(Branches::FUSION.to_string(), "fusion");
    }
}
