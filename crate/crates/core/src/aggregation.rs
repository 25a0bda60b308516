//! NeXtVLAD aggregation of a token sequence into one L2-normalized global
//! vector, and assembly of the three branch vectors into a descriptor.

use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Result};
use crate::layers::Linear;
use crate::ops;
use crate::params::{Gradients, Init, ParameterTable};
use crate::tensor::{matmul, matmul_nt, matmul_tn, Scalar, Tensor};

const MODULE: &str = "aggregation";

#[derive(Clone, Debug, PartialEq)]
pub struct NeXtVladConfig {
    pub clusters: usize,
    pub groups: usize,
    pub expansion: usize,
    pub output_dim: usize,
    /// Standard deviation of the normal init of the output projection;
    /// `None` keeps the fan-in uniform default.
    pub proj_init_std: Option<f64>,
}

impl Default for NeXtVladConfig {
    fn default() -> Self {
        NeXtVladConfig {
            clusters: 64,
            groups: 8,
            expansion: 2,
            output_dim: 256,
            proj_init_std: None,
        }
    }
}

impl NeXtVladConfig {
    pub fn validate(&self, in_dim: usize) -> Result<()> {
        ensure!(
            self.clusters > 0 && self.groups > 0 && self.expansion > 0 && self.output_dim > 0,
            MODULE,
            "NeXtVLAD sizes must be positive: {self:?}"
        );
        ensure!(
            (self.expansion * in_dim) % self.groups == 0,
            MODULE,
            "expanded width {} is not divisible by {} groups",
            self.expansion * in_dim,
            self.groups
        );
        if let Some(s) = self.proj_init_std {
            ensure!(s.is_finite() && s > 0.0, MODULE, "projection init std must be positive, got {s}");
        }
        Ok(())
    }
}

/// NeXtVLAD: expand features by `λ`, split into `G` groups, softly assign
/// each group slice to `K` clusters with a per-group sigmoid attention gate,
/// accumulate residuals to the cluster centers, intra-normalize per cluster,
/// project to the output width and L2-normalize.
#[derive(Clone, Debug)]
pub struct NeXtVlad {
    pub expand: Linear,
    pub gate: Linear,
    pub assign: Linear,
    pub centers: String,
    pub proj: Linear,
    pub clusters: usize,
    pub groups: usize,
    pub group_dim: usize,
}

pub struct NeXtVladCache<T> {
    input: Tensor<T>,
    expanded: Tensor<T>,
    gates: Tensor<T>,
    /// Soft assignment `[L * G, K]`.
    pub assignment: Tensor<T>,
    weighted: Tensor<T>,
    vlad: Tensor<T>,
    normalized: Tensor<T>,
    projected: Tensor<T>,
}

impl NeXtVlad {
    pub fn new(path: &str, in_dim: usize, cfg: &NeXtVladConfig) -> Self {
        let wide = cfg.expansion * in_dim;
        let group_dim = wide / cfg.groups;
        let mut proj = Linear::new(&format!("{path}.proj"), cfg.clusters * group_dim, cfg.output_dim, false);
        if let Some(std) = cfg.proj_init_std {
            proj = proj.with_init(Init::Normal(std));
        }
        NeXtVlad {
            expand: Linear::new(&format!("{path}.expand"), in_dim, wide, true),
            gate: Linear::new(&format!("{path}.gate"), wide, cfg.groups, true),
            assign: Linear::new(&format!("{path}.assign"), wide, cfg.groups * cfg.clusters, true),
            centers: format!("{path}.centers"),
            proj,
            clusters: cfg.clusters,
            groups: cfg.groups,
            group_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.proj.out_dim
    }

    pub fn register<T: Scalar>(&self, p: &mut ParameterTable<T>, rng: &mut ChaCha8Rng) -> Result<()> {
        self.expand.register(p, rng)?;
        self.gate.register(p, rng)?;
        self.assign.register(p, rng)?;
        p.insert(
            self.centers.clone(),
            Init::fan_in(self.group_dim).sample(&[self.clusters, self.group_dim], rng),
        )?;
        self.proj.register(p, rng)
    }

    /// `x` is `[L, d]`; returns the `[out]` unit vector.
    pub fn forward<T: Scalar>(&self, p: &ParameterTable<T>, x: &Tensor<T>) -> Result<(Tensor<T>, NeXtVladCache<T>)> {
        ensure!(
            x.rank() == 2 && x.cols() == self.expand.in_dim && x.rows() > 0,
            MODULE,
            "NeXtVLAD expects [L, {}] tokens, got {:?}",
            self.expand.in_dim,
            x.shape()
        );
        let (l, g, k, dg) = (x.rows(), self.groups, self.clusters, self.group_dim);
        let expanded = self.expand.forward(p, x)?;
        let gates = ops::sigmoid(&self.gate.forward(p, &expanded)?);
        let logits = self.assign.forward(p, &expanded)?.reshape(vec![l * g, k])?;
        let assignment = ops::softmax_rows(&logits);
        let mut weighted = assignment.clone();
        for (i, row) in weighted.data_mut().chunks_mut(k).enumerate() {
            let gate = gates.data()[i];
            row.iter_mut().for_each(|v| *v *= gate);
        }
        let slices = expanded.clone().reshape(vec![l * g, dg])?;
        let mut vlad = matmul_tn(&weighted, &slices);
        let centers = p.get(&self.centers)?;
        for c in 0..k {
            let mass: T = (0..l * g).map(|i| weighted.data()[i * k + c]).sum();
            for (v, &ck) in vlad.row_mut(c).iter_mut().zip(centers.row(c)) {
                *v -= mass * ck;
            }
        }
        let normalized = ops::l2_normalize_rows(&vlad).reshape(vec![1, k * dg])?;
        let projected = self.proj.forward(p, &normalized)?;
        let out = ops::l2_normalize_rows(&projected).reshape(vec![self.output_dim()])?;
        Ok((
            out,
            NeXtVladCache {
                input: x.clone(),
                expanded,
                gates,
                assignment,
                weighted,
                vlad,
                normalized,
                projected,
            },
        ))
    }

    /// Returns the gradient with respect to the tokens.
    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterTable<T>,
        c: &NeXtVladCache<T>,
        gy: &Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Result<Tensor<T>> {
        let (l, g, k, dg) = (c.input.rows(), self.groups, self.clusters, self.group_dim);
        let gy = gy.clone().reshape(vec![1, self.output_dim()])?;
        let g_proj = ops::l2_normalize_rows_backward(&c.projected, &gy);
        let g_norm = self.proj.backward(p, &c.normalized, &g_proj, grads)?.reshape(vec![k, dg])?;
        let g_vlad = ops::l2_normalize_rows_backward(&c.vlad, &g_norm);

        let centers = p.get(&self.centers)?;
        let slices = c.expanded.clone().reshape(vec![l * g, dg])?;
        // vlad[k] = sum_i w[i,k] x_i - (sum_i w[i,k]) c_k
        let mut g_weighted = matmul_nt(&slices, &g_vlad);
        let mut g_centers = Tensor::zeros(&[k, dg]);
        for cl in 0..k {
            let gc: T = g_vlad.row(cl).iter().zip(centers.row(cl)).map(|(&a, &b)| a * b).sum();
            let mass: T = (0..l * g).map(|i| c.weighted.data()[i * k + cl]).sum();
            for (o, &v) in g_centers.row_mut(cl).iter_mut().zip(g_vlad.row(cl)) {
                *o = -mass * v;
            }
            for i in 0..l * g {
                g_weighted.data_mut()[i * k + cl] -= gc;
            }
        }
        grads.accumulate(&self.centers, g_centers);
        let g_slices = matmul(&c.weighted, &g_vlad);

        let mut g_assign = g_weighted.clone();
        let mut g_gates = Tensor::zeros(&[l, g]);
        for i in 0..l * g {
            let gate = c.gates.data()[i];
            let a = c.assignment.row(i);
            let gw = g_weighted.row(i);
            g_gates.data_mut()[i] = gw.iter().zip(a).map(|(&x, &y)| x * y).sum();
            g_assign.row_mut(i).iter_mut().for_each(|v| *v *= gate);
        }
        let g_logits = ops::softmax_rows_backward(&c.assignment, &g_assign).reshape(vec![l, g * k])?;
        let g_gate_logits = ops::sigmoid_backward(&c.gates, &g_gates);

        let mut g_expanded = g_slices.reshape(vec![l, g * dg])?;
        g_expanded.add_assign(&self.assign.backward(p, &c.expanded, &g_logits, grads)?);
        g_expanded.add_assign(&self.gate.backward(p, &c.expanded, &g_gate_logits, grads)?);
        self.expand.backward(p, &c.input, &g_expanded, grads)
    }
}

/// Concatenate the branch vectors in order image, point cloud, fusion.
/// Each block is unit-norm on its own; the result is not renormalized.
pub fn assemble_global_descriptor<T: Scalar>(img: &Tensor<T>, pc: &Tensor<T>, fusion: &Tensor<T>) -> Result<Tensor<T>> {
    ensure!(
        img.rank() == 1 && pc.rank() == 1 && fusion.rank() == 1,
        MODULE,
        "branch vectors must be 1-D, got {:?} {:?} {:?}",
        img.shape(),
        pc.shape(),
        fusion.shape()
    );
    ops::concat(&[img, pc, fusion], 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn small() -> (NeXtVlad, ParameterTable<f64>) {
        let cfg = NeXtVladConfig {
            clusters: 4,
            groups: 2,
            expansion: 2,
            output_dim: 6,
            proj_init_std: None,
        };
        let v = NeXtVlad::new("vlad.img", 4, &cfg);
        let mut p = ParameterTable::new();
        v.register(&mut p, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        (v, p)
    }

    #[test]
    fn output_is_unit_norm() {
        let (v, p) = small();
        let x = Init::Normal(1.0).sample::<f64>(&[5, 4], &mut ChaCha8Rng::seed_from_u64(4));
        let (y, c) = v.forward(&p, &x).unwrap();
        assert_eq!(y.shape(), &[6]);
        assert!((y.norm() - 1.0).abs() < 1e-12);
        for row in c.assignment.data().chunks(4) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_gates_give_zero_vector() {
        let (v, mut p) = small();
        p.get_mut("vlad.img.gate.bias").unwrap().data_mut().fill(-1e4);
        let x = Init::Normal(1.0).sample::<f64>(&[5, 4], &mut ChaCha8Rng::seed_from_u64(4));
        let (y, _) = v.forward(&p, &x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn descriptor_blocks_in_order() {
        let a = Tensor::from_vec(vec![1.0f32, 0.0]);
        let b = Tensor::from_vec(vec![0.0f32, 1.0]);
        let c = Tensor::from_vec(vec![0.6f32, 0.8]);
        let d = assemble_global_descriptor(&a, &b, &c).unwrap();
        assert_eq!(d.data(), &[1.0, 0.0, 0.0, 1.0, 0.6, 0.8]);
    }
}
