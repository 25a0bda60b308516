//! Multi-head self-attention, the internal transformer block, cross-modal
//! attention, and the two-stage cross-modal fusion (sequence-wise
//! interaction followed by feature-wise inverted-residual fusion).

use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Result};
use crate::layers::{Conv2d, FeedForward, FeedForwardCache, LayerNorm, LayerNormCache, Linear};
use crate::ops::{self, ConvGeometry};
use crate::params::{Gradients, ParameterTable};
use crate::tensor::{gemm, MatLayout, Scalar, Tensor};

const MODULE: &str = "attention";

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionConfig {
    pub heads: usize,
    pub model_dim: usize,
    /// Only 0 is supported: every attention layer runs deterministically.
    pub dropout: f64,
    pub ffn_hidden: usize,
    /// Internal transformer blocks per branch.
    pub depth: usize,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig {
            heads: 4,
            model_dim: 256,
            dropout: 0.0,
            ffn_hidden: 512,
            depth: 1,
        }
    }
}

impl AttentionConfig {
    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.heads > 0, MODULE, "heads must be positive");
        ensure!(
            self.model_dim % self.heads == 0,
            MODULE,
            "model_dim {} is not divisible by heads {}",
            self.model_dim,
            self.heads
        );
        ensure!(self.dropout == 0.0, MODULE, "dropout {} unsupported (only 0)", self.dropout);
        ensure!(self.ffn_hidden > 0, MODULE, "ffn_hidden must be positive");
        Ok(())
    }
}

/// Scaled dot-product attention over `heads` column blocks.
/// Returns the concatenated head outputs `[Lq, d]` and the row-stochastic
/// attention weights `[heads, Lq, Lk]`.
pub fn attend<T: Scalar>(q: &Tensor<T>, k: &Tensor<T>, v: &Tensor<T>, heads: usize) -> (Tensor<T>, Tensor<T>) {
    let (lq, lk, d) = (q.rows(), k.rows(), q.cols());
    let dk = d / heads;
    let scale = T::one() / T::of(dk as f64).sqrt();
    let mut attn = Tensor::zeros(&[heads, lq, lk]);
    let mut out = Tensor::zeros(&[lq, d]);
    for h in 0..heads {
        let block = MatLayout::column_block(lq, d, h * dk, dk);
        let kblock = MatLayout::column_block(lk, d, h * dk, dk);
        let a_view = MatLayout {
            offset: h * lq * lk,
            ..MatLayout::dense(lq, lk)
        };
        gemm(scale, q.data(), block, k.data(), kblock.t(), T::zero(), attn.data_mut(), a_view);
        let a = &mut attn.data_mut()[h * lq * lk..(h + 1) * lq * lk];
        for row in a.chunks_mut(lk) {
            ops::activation::softmax_in_place(row);
        }
        gemm(T::one(), attn.data(), a_view, v.data(), kblock, T::zero(), out.data_mut(), block);
    }
    (out, attn)
}

/// Gradients of [`attend`] with respect to `q`, `k` and `v`.
pub fn attend_backward<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    attn: &Tensor<T>,
    g_out: &Tensor<T>,
    heads: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (lq, lk, d) = (q.rows(), k.rows(), q.cols());
    let dk = d / heads;
    let scale = T::one() / T::of(dk as f64).sqrt();
    let mut gq = Tensor::zeros(q.shape());
    let mut gk = Tensor::zeros(k.shape());
    let mut gv = Tensor::zeros(v.shape());
    let mut g_attn = vec![T::zero(); lq * lk];
    let mut g_scores = vec![T::zero(); lq * lk];
    for h in 0..heads {
        let block = MatLayout::column_block(lq, d, h * dk, dk);
        let kblock = MatLayout::column_block(lk, d, h * dk, dk);
        let a_view = MatLayout {
            offset: h * lq * lk,
            ..MatLayout::dense(lq, lk)
        };
        let dense = MatLayout::dense(lq, lk);
        // dA = dO Vᵀ ; dV = Aᵀ dO
        gemm(T::one(), g_out.data(), block, v.data(), kblock.t(), T::zero(), &mut g_attn, dense);
        gemm(T::one(), attn.data(), a_view.t(), g_out.data(), block, T::zero(), gv.data_mut(), kblock);
        let a = &attn.data()[h * lq * lk..(h + 1) * lq * lk];
        for r in 0..lq {
            ops::activation::softmax_row_backward(
                &a[r * lk..(r + 1) * lk],
                &g_attn[r * lk..(r + 1) * lk],
                &mut g_scores[r * lk..(r + 1) * lk],
            );
        }
        // S = scale Q Kᵀ
        gemm(scale, &g_scores, dense, k.data(), kblock, T::zero(), gq.data_mut(), block);
        gemm(scale, &g_scores, dense.t(), q.data(), block, T::zero(), gk.data_mut(), kblock);
    }
    (gq, gk, gv)
}

/// Multi-head self-attention with bias-free projections.
#[derive(Clone, Debug)]
pub struct SelfAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
}

pub struct SelfAttentionCache<T> {
    x: Tensor<T>,
    q: Tensor<T>,
    k: Tensor<T>,
    v: Tensor<T>,
    pub attn: Tensor<T>,
    concat: Tensor<T>,
}

impl SelfAttention {
    pub fn new(path: &str, cfg: &AttentionConfig) -> Self {
        let d = cfg.model_dim;
        SelfAttention {
            wq: Linear::new(&format!("{path}.wq"), d, d, false),
            wk: Linear::new(&format!("{path}.wk"), d, d, false),
            wv: Linear::new(&format!("{path}.wv"), d, d, false),
            wo: Linear::new(&format!("{path}.wo"), d, d, false),
            heads: cfg.heads,
        }
    }

    pub fn register<T: Scalar>(&self, p: &mut ParameterTable<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        for l in [&self.wq, &self.wk, &self.wv, &self.wo] {
            l.register(p, rng)?;
        }
        Ok(())
    }

    pub fn forward<T: Scalar>(&self, p: &ParameterTable<T>, x: &Tensor<T>) -> Result<(Tensor<T>, SelfAttentionCache<T>)> {
        ensure!(
            x.cols() == self.wq.in_dim,
            MODULE,
            "self-attention: token dim {} != model dim {}",
            x.cols(),
            self.wq.in_dim
        );
        let q = self.wq.forward(p, x)?;
        let k = self.wk.forward(p, x)?;
        let v = self.wv.forward(p, x)?;
        let (concat, attn) = attend(&q, &k, &v, self.heads);
        let y = self.wo.forward(p, &concat)?;
        Ok((
            y,
            SelfAttentionCache {
                x: x.clone(),
                q,
                k,
                v,
                attn,
                concat,
            },
        ))
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        c: &SelfAttentionCache<T>,
        gy: &Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Result<Tensor<T>> {
        let g_concat = self.wo.backward(p, &c.concat, gy, grads)?;
        let (gq, gk, gv) = attend_backward(&c.q, &c.k, &c.v, &c.attn, &g_concat, self.heads);
        let mut gx = self.wq.backward(p, &c.x, &gq, grads)?;
        gx.add_assign(&self.wk.backward(p, &c.x, &gk, grads)?);
        gx.add_assign(&self.wv.backward(p, &c.x, &gv, grads)?);
        Ok(gx)
    }
}

/// Pre-norm transformer block: `x + MSA(LN(x))`, then `+ FFN(LN(.))`.
#[derive(Clone, Debug)]
pub struct TransformerBlock {
    pub ln1: LayerNorm,
    pub msa: SelfAttention,
    pub ln2: LayerNorm,
    pub ffn: FeedForward,
}

pub struct TransformerBlockCache<T> {
    ln1: LayerNormCache<T>,
    pub msa: SelfAttentionCache<T>,
    ln2: LayerNormCache<T>,
    ffn: FeedForwardCache<T>,
}

impl TransformerBlock {
    pub fn new(path: &str, cfg: &AttentionConfig) -> Self {
        TransformerBlock {
            ln1: LayerNorm::new(&format!("{path}.ln1"), cfg.model_dim),
            msa: SelfAttention::new(&format!("{path}.msa"), cfg),
            ln2: LayerNorm::new(&format!("{path}.ln2"), cfg.model_dim),
            ffn: FeedForward::new(&format!("{path}.ffn"), cfg.model_dim, cfg.ffn_hidden),
        }
    }

    pub fn register<T: Scalar>(&self, p: &mut ParameterTable<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        self.ln1.register(p)?;
        self.msa.register(p, rng)?;
        self.ln2.register(p)?;
        self.ffn.register(p, rng)
    }

    pub fn forward<T: Scalar>(&self, p: &ParameterTable<T>, x: &Tensor<T>) -> Result<(Tensor<T>, TransformerBlockCache<T>)> {
        let (n1, ln1) = self.ln1.forward(p, x)?;
        let (a, msa) = self.msa.forward(p, &n1)?;
        let mut x1 = x.clone();
        x1.add_assign(&a);
        let (n2, ln2) = self.ln2.forward(p, &x1)?;
        let (f, ffn) = self.ffn.forward(p, &n2)?;
        x1.add_assign(&f);
        Ok((x1, TransformerBlockCache { ln1, msa, ln2, ffn }))
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        c: &TransformerBlockCache<T>,
        gy: &Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Result<Tensor<T>> {
        let g_n2 = self.ffn.backward(p, &c.ffn, gy, grads)?;
        let mut g_x1 = gy.clone();
        g_x1.add_assign(&self.ln2.backward(p, &c.ln2, &g_n2, grads)?);
        let g_n1 = self.msa.backward(p, &c.msa, &g_x1, grads)?;
        let mut gx = g_x1;
        gx.add_assign(&self.ln1.backward(p, &c.ln1, &g_n1, grads)?);
        Ok(gx)
    }
}

/// A stack of transformer blocks for one modality.
#[derive(Clone, Debug)]
pub struct InternalTransformer {
    pub blocks: Vec<TransformerBlock>,
}

impl InternalTransformer {
    pub fn new(path: &str, cfg: &AttentionConfig) -> Self {
        InternalTransformer {
            blocks: (0..cfg.depth)
                .map(|i| TransformerBlock::new(&format!("{path}.block{i}"), cfg))
                .collect(),
        }
    }

    pub fn register<T: Scalar>(&self, p: &mut ParameterTable<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        self.blocks.iter().try_for_each(|b| b.register(p, rng))
    }

    pub fn forward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        x: &Tensor<T>,
    ) -> Result<(Tensor<T>, Vec<TransformerBlockCache<T>>)> {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (y, c) = b.forward(p, &h)?;
            h = y;
            caches.push(c);
        }
        Ok((h, caches))
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        caches: &[TransformerBlockCache<T>],
        gy: &Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Result<Tensor<T>> {
        let mut g = gy.clone();
        for (b, c) in self.blocks.iter().zip(caches).rev() {
            g = b.backward(p, c, &g, grads)?;
        }
        Ok(g)
    }
}

/// Cross-modal attention: queries from one sequence, keys and values from
/// the other. Queries and keys share one projection.
#[derive(Clone, Debug)]
pub struct CrossAttention {
    pub wqk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
}

pub struct CrossAttentionCache<T> {
    query_in: Tensor<T>,
    kv_in: Tensor<T>,
    q: Tensor<T>,
    k: Tensor<T>,
    v: Tensor<T>,
    pub attn: Tensor<T>,
    concat: Tensor<T>,
}

impl CrossAttention {
    pub fn new(path: &str, cfg: &AttentionConfig) -> Self {
        let d = cfg.model_dim;
        CrossAttention {
            wqk: Linear::new(&format!("{path}.wqk"), d, d, false),
            wv: Linear::new(&format!("{path}.wv"), d, d, false),
            wo: Linear::new(&format!("{path}.wo"), d, d, false),
            heads: cfg.heads,
        }
    }

    pub fn register<T: Scalar>(&self, p: &mut ParameterTable<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        for l in [&self.wqk, &self.wv, &self.wo] {
            l.register(p, rng)?;
        }
        Ok(())
    }

    pub fn forward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        query: &Tensor<T>,
        kv: &Tensor<T>,
    ) -> Result<(Tensor<T>, CrossAttentionCache<T>)> {
        let d = self.wqk.in_dim;
        ensure!(
            query.cols() == d && kv.cols() == d,
            MODULE,
            "cross-attention: token dims {} / {} != model dim {d}",
            query.cols(),
            kv.cols()
        );
        let q = self.wqk.forward(p, query)?;
        let k = self.wqk.forward(p, kv)?;
        let v = self.wv.forward(p, kv)?;
        let (concat, attn) = attend(&q, &k, &v, self.heads);
        let y = self.wo.forward(p, &concat)?;
        Ok((
            y,
            CrossAttentionCache {
                query_in: query.clone(),
                kv_in: kv.clone(),
                q,
                k,
                v,
                attn,
                concat,
            },
        ))
    }

    /// Returns gradients for the query and key/value sequences.
    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        c: &CrossAttentionCache<T>,
        gy: &Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let g_concat = self.wo.backward(p, &c.concat, gy, grads)?;
        let (gq, gk, gv) = attend_backward(&c.q, &c.k, &c.v, &c.attn, &g_concat, self.heads);
        let g_query = self.wqk.backward(p, &c.query_in, &gq, grads)?;
        let mut g_kv = self.wqk.backward(p, &c.kv_in, &gk, grads)?;
        g_kv.add_assign(&self.wv.backward(p, &c.kv_in, &gv, grads)?);
        Ok((g_query, g_kv))
    }
}

/// One direction of the sequence-wise interaction:
/// `z = W_m [CrossAttn(LN(q), LN(kv)) ; q]`, output `z + FFN(LN(z))`.
#[derive(Clone, Debug)]
pub struct InteractionDirection {
    pub ln_q: LayerNorm,
    pub ln_kv: LayerNorm,
    pub cross: CrossAttention,
    pub merge: Linear,
    pub ln_f: LayerNorm,
    pub ffn: FeedForward,
}

pub struct InteractionCache<T> {
    ln_q: LayerNormCache<T>,
    ln_kv: LayerNormCache<T>,
    pub cross: CrossAttentionCache<T>,
    merged_in: Tensor<T>,
    ln_f: LayerNormCache<T>,
    ffn: FeedForwardCache<T>,
}

impl InteractionDirection {
    pub fn new(path: &str, cfg: &AttentionConfig) -> Self {
        let d = cfg.model_dim;
        InteractionDirection {
            ln_q: LayerNorm::new(&format!("{path}.ln_q"), d),
            ln_kv: LayerNorm::new(&format!("{path}.ln_kv"), d),
            cross: CrossAttention::new(&format!("{path}.cross"), cfg),
            merge: Linear::new(&format!("{path}.merge"), 2 * d, d, true),
            ln_f: LayerNorm::new(&format!("{path}.ln_f"), d),
            ffn: FeedForward::new(&format!("{path}.ffn"), d, cfg.ffn_hidden),
        }
    }

    pub fn register<T: Scalar>(&self, p: &mut ParameterTable<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        self.ln_q.register(p)?;
        self.ln_kv.register(p)?;
        self.cross.register(p, rng)?;
        self.merge.register(p, rng)?;
        self.ln_f.register(p)?;
        self.ffn.register(p, rng)
    }

    pub fn forward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        query: &Tensor<T>,
        kv: &Tensor<T>,
    ) -> Result<(Tensor<T>, InteractionCache<T>)> {
        let (nq, ln_q) = self.ln_q.forward(p, query)?;
        let (nkv, ln_kv) = self.ln_kv.forward(p, kv)?;
        let (attended, cross) = self.cross.forward(p, &nq, &nkv)?;
        let merged_in = ops::concat(&[&attended, query], 1)?;
        let mut z = self.merge.forward(p, &merged_in)?;
        let (nz, ln_f) = self.ln_f.forward(p, &z)?;
        let (f, ffn) = self.ffn.forward(p, &nz)?;
        z.add_assign(&f);
        Ok((
            z,
            InteractionCache {
                ln_q,
                ln_kv,
                cross,
                merged_in,
                ln_f,
                ffn,
            },
        ))
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        c: &InteractionCache<T>,
        gy: &Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let g_nz = self.ffn.backward(p, &c.ffn, gy, grads)?;
        let mut g_z = gy.clone();
        g_z.add_assign(&self.ln_f.backward(p, &c.ln_f, &g_nz, grads)?);
        let g_merged = self.merge.backward(p, &c.merged_in, &g_z, grads)?;
        let d = self.merge.out_dim;
        let parts = ops::split(&g_merged, 1, &[d, d]);
        let (g_nq, g_nkv) = self.cross.backward(p, &c.cross, &parts[0], grads)?;
        let mut g_query = parts[1].clone();
        g_query.add_assign(&self.ln_q.backward(p, &c.ln_q, &g_nq, grads)?);
        let g_kv = self.ln_kv.backward(p, &c.ln_kv, &g_nkv, grads)?;
        Ok((g_query, g_kv))
    }
}

/// Bidirectional interaction with independent parameters per direction:
/// image tokens query point tokens (`i2p`) and vice versa (`p2i`).
#[derive(Clone, Debug)]
pub struct SequenceInteraction {
    pub i2p: InteractionDirection,
    pub p2i: InteractionDirection,
}

pub struct SequenceInteractionCache<T> {
    pub i2p: InteractionCache<T>,
    pub p2i: InteractionCache<T>,
}

impl SequenceInteraction {
    pub fn new(path: &str, cfg: &AttentionConfig) -> Self {
        SequenceInteraction {
            i2p: InteractionDirection::new(&format!("{path}.i2p"), cfg),
            p2i: InteractionDirection::new(&format!("{path}.p2i"), cfg),
        }
    }

    pub fn register<T: Scalar>(&self, p: &mut ParameterTable<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        self.i2p.register(p, rng)?;
        self.p2i.register(p, rng)
    }

    pub fn forward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        img: &Tensor<T>,
        pc: &Tensor<T>,
    ) -> Result<((Tensor<T>, Tensor<T>), SequenceInteractionCache<T>)> {
        let (img2, i2p) = self.i2p.forward(p, img, pc)?;
        let (pc2, p2i) = self.p2i.forward(p, pc, img)?;
        Ok(((img2, pc2), SequenceInteractionCache { i2p, p2i }))
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        c: &SequenceInteractionCache<T>,
        g_img2: &Tensor<T>,
        g_pc2: &Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let (mut g_img, g_pc_from_i2p) = self.i2p.backward(p, &c.i2p, g_img2, grads)?;
        let (mut g_pc, g_img_from_p2i) = self.p2i.backward(p, &c.p2i, g_pc2, grads)?;
        g_img.add_assign(&g_img_from_p2i);
        g_pc.add_assign(&g_pc_from_i2p);
        Ok((g_img, g_pc))
    }
}

/// Inverted-residual channel mixing over the token-axis concatenation of
/// both modalities: pointwise expansion, depth-wise 3×3 convolution along
/// the token axis, pointwise projection, shortcut added after projection.
#[derive(Clone, Debug)]
pub struct FeatureFusion {
    pub ln: LayerNorm,
    pub expand: Linear,
    pub dw: Conv2d,
    pub project: Linear,
    pub hidden: usize,
}

pub struct FeatureFusionCache<T> {
    input: Tensor<T>,
    ln: LayerNormCache<T>,
    normed: Tensor<T>,
    expand_pre: Tensor<T>,
    dw_in: Tensor<T>,
    dw_pre: Tensor<T>,
    project_in: Tensor<T>,
}

impl FeatureFusion {
    pub fn new(path: &str, dim: usize, expansion: usize) -> Self {
        let hidden = dim * expansion;
        FeatureFusion {
            ln: LayerNorm::new(&format!("{path}.ln"), dim),
            expand: Linear::new(&format!("{path}.expand"), dim, hidden, true),
            dw: Conv2d::new(
                &format!("{path}.dw"),
                hidden,
                hidden,
                3,
                ConvGeometry {
                    stride: 1,
                    padding: 1,
                    groups: hidden,
                },
            ),
            project: Linear::new(&format!("{path}.project"), hidden, dim, true),
            hidden,
        }
    }

    pub fn register<T: Scalar>(&self, p: &mut ParameterTable<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        self.ln.register(p)?;
        self.expand.register(p, rng)?;
        self.dw.register(p, rng)?;
        self.project.register(p, rng)
    }

    /// `stacked` is the token-axis concatenation `[img'; pc']`.
    pub fn forward<T: Scalar>(&self, p: &ParameterTable<T>, stacked: &Tensor<T>) -> Result<(Tensor<T>, FeatureFusionCache<T>)> {
        let l = stacked.rows();
        let (n, ln) = self.ln.forward(p, stacked)?;
        let expand_pre = self.expand.forward(p, &n)?;
        let dw_in = ops::relu(&expand_pre).reshape(vec![1, l, self.hidden])?;
        let dw_pre = self.dw.forward(p, &dw_in)?;
        let project_in = ops::relu(&dw_pre).reshape(vec![l, self.hidden])?;
        let mut y = self.project.forward(p, &project_in)?;
        y.add_assign(stacked);
        Ok((
            y,
            FeatureFusionCache {
                input: stacked.clone(),
                ln,
                normed: n,
                expand_pre,
                dw_in,
                dw_pre,
                project_in,
            },
        ))
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        c: &FeatureFusionCache<T>,
        gy: &Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Result<Tensor<T>> {
        let l = c.input.rows();
        let g_pin = self.project.backward(p, &c.project_in, gy, grads)?;
        let g_pin = g_pin.reshape(vec![1, l, self.hidden])?;
        let g_dw_pre = ops::relu_backward(&c.dw_pre, &g_pin);
        let g_dw_in = self.dw.backward(p, &c.dw_in, &g_dw_pre, grads)?;
        let g_dw_in = g_dw_in.reshape(vec![l, self.hidden])?;
        let g_pre = ops::relu_backward(&c.expand_pre, &g_dw_in);
        let g_n = self.expand.backward(p, &c.normed, &g_pre, grads)?;
        let mut gx = gy.clone();
        gx.add_assign(&self.ln.backward(p, &c.ln, &g_n, grads)?);
        Ok(gx)
    }
}
