//! Triplet mining from poses and triplet-loss training with SGD.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Error, Result};
use crate::layers::{apply_bn_updates, Ctx};
use crate::network::Network;
use crate::optim::{sgd_momentum_step, SgdConfig};
use crate::params::{Gradients, ParameterTable};
use crate::tensor::{Scalar, Tensor};

const MODULE: &str = "metric";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TripletTuple {
    pub query: u64,
    pub positive: u64,
    pub negative: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub sgd: SgdConfig,
    pub margin: f64,
    pub d_pos: f64,
    pub d_neg: f64,
    pub steps: usize,
    pub num_tuples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            sgd: SgdConfig::default(),
            margin: 0.5,
            d_pos: 5.0,
            d_neg: 50.0,
            steps: 200,
            num_tuples: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.batch_size > 0, MODULE, "batch size must be positive");
        ensure!(self.margin > 0.0, MODULE, "margin must be positive, got {}", self.margin);
        ensure!(
            0.0 < self.d_pos && self.d_pos < self.d_neg,
            MODULE,
            "thresholds must satisfy 0 < d_pos < d_neg, got {} and {}",
            self.d_pos,
            self.d_neg
        );
        ensure!(self.num_tuples > 0, MODULE, "tuple count must be positive");
        ensure!(self.sgd.lr > 0.0, MODULE, "learning rate must be positive");
        ensure!((0.0..1.0).contains(&self.sgd.momentum), MODULE, "momentum must lie in [0, 1)");
        ensure!(self.sgd.weight_decay >= 0.0, MODULE, "weight decay must be non-negative");
        Ok(())
    }
}

pub struct TripletOutput<T> {
    pub loss: T,
    /// Gradients with respect to query, positive and negative descriptors.
    pub grads: [Tensor<T>; 3],
}

fn distance<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> T {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt()
}

/// `max(margin + |q - p| - |q - n|, 0)`. The gradient is zero when the
/// hinge is inactive; the derivative of a zero distance is taken as zero.
pub fn triplet_loss<T: Scalar>(q: &Tensor<T>, p: &Tensor<T>, n: &Tensor<T>, margin: T) -> TripletOutput<T> {
    let (dp, dn) = (distance(q, p), distance(q, n));
    let raw = margin + dp - dn;
    let mut grads = [Tensor::zeros(q.shape()), Tensor::zeros(q.shape()), Tensor::zeros(q.shape())];
    if raw <= T::zero() {
        return TripletOutput { loss: T::zero(), grads };
    }
    for i in 0..q.len() {
        let up = if dp > T::zero() { (q.data()[i] - p.data()[i]) / dp } else { T::zero() };
        let un = if dn > T::zero() { (q.data()[i] - n.data()[i]) / dn } else { T::zero() };
        grads[0].data_mut()[i] = up - un;
        grads[1].data_mut()[i] = -up;
        grads[2].data_mut()[i] = un;
    }
    TripletOutput { loss: raw, grads }
}

fn dist3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Sample `count` tuples: a query drawn uniformly among samples that have
/// a positive within `d_pos` (self excluded), a positive drawn uniformly
/// from that ball and a negative drawn uniformly from samples at least
/// `d_neg` away. Poses are compared in full 3-D.
pub fn mine_triplets(
    poses: &BTreeMap<u64, [f64; 3]>,
    d_pos: f64,
    d_neg: f64,
    seed: u64,
    count: usize,
) -> Result<Vec<TripletTuple>> {
    ensure!(
        0.0 < d_pos && d_pos < d_neg,
        MODULE,
        "thresholds must satisfy 0 < d_pos < d_neg, got {d_pos} and {d_neg}"
    );
    let entries: Vec<(u64, [f64; 3])> = poses.iter().map(|(&k, &v)| (k, v)).collect();
    let mut max_distance = 0.0f64;
    let mut candidates = Vec::new();
    let mut any_positive = false;
    for (i, (id, pa)) in entries.iter().enumerate() {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (j, (other, pb)) in entries.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = dist3(pa, pb);
            max_distance = max_distance.max(d);
            if d <= d_pos {
                pos.push(*other);
            }
            if d >= d_neg {
                neg.push(*other);
            }
        }
        any_positive |= !pos.is_empty();
        if !pos.is_empty() && !neg.is_empty() {
            candidates.push((*id, pos, neg));
        }
    }
    if !any_positive {
        return Err(Error::Mining {
            reason: format!("no valid positive pair within {d_pos} m"),
            max_distance,
        });
    }
    if candidates.is_empty() {
        return Err(Error::Mining {
            reason: format!("no query with both a positive within {d_pos} m and a negative beyond {d_neg} m"),
            max_distance,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let (q, pos, neg) = &candidates[rng.random_range(0..candidates.len())];
            TripletTuple {
                query: *q,
                positive: pos[rng.random_range(0..pos.len())],
                negative: neg[rng.random_range(0..neg.len())],
            }
        })
        .collect())
}

/// Network input for one sample, already preprocessed.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleInput<T = f32> {
    pub image: Tensor<T>,
    pub cloud: Tensor<T>,
}

/// Per-step batch composition: tuples are visited in seeded random order,
/// reshuffled whenever the list is exhausted.
pub fn batch_schedule(n_tuples: usize, batch_size: usize, steps: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    (0..steps)
        .map(|_| {
            (0..batch_size)
                .map(|_| {
                    if cursor == order.len() {
                        order = (0..n_tuples).collect();
                        order.shuffle(&mut rng);
                        cursor = 0;
                    }
                    cursor += 1;
                    order[cursor - 1]
                })
                .collect()
        })
        .collect()
}

fn first_non_finite<T: Scalar>(params: &ParameterTable<T>, grads: &Gradients<T>) -> String {
    for (path, p) in params.iter() {
        if !p.value.is_finite() || grads.get(path).is_some_and(|g| !g.is_finite()) {
            return path.to_string();
        }
    }
    "<loss>".to_string()
}

/// Mean triplet loss of one batch and the averaged parameter gradients.
/// Batch-norm statistics observed during the pass are returned for the
/// caller to fold into the running averages.
pub fn batch_loss_and_grads<T: Scalar>(
    net: &Network,
    params: &ParameterTable<T>,
    samples: &BTreeMap<u64, SampleInput<T>>,
    batch: &[TripletTuple],
    margin: f64,
) -> Result<(T, Gradients<T>, Ctx<T>)> {
    let mut grads = Gradients::new();
    let mut ctx = Ctx::train();
    let mut total = T::zero();
    let get = |id: u64| {
        samples
            .get(&id)
            .ok_or_else(|| Error::contract(MODULE, format!("tuple references unknown sample {id}")))
    };
    let mut members = Vec::with_capacity(3 * batch.len());
    for t in batch {
        members.extend([get(t.query)?, get(t.positive)?, get(t.negative)?]);
    }
    let images: Vec<&Tensor<T>> = members.iter().map(|s| &s.image).collect();
    let clouds: Vec<&Tensor<T>> = members.iter().map(|s| &s.cloud).collect();
    let (descs, cache) = net.forward(params, &images, &clouds, &mut ctx)?;
    let mut g_descs = Vec::with_capacity(descs.len());
    for d in descs.chunks(3) {
        let out = triplet_loss(&d[0], &d[1], &d[2], T::of(margin));
        total += out.loss;
        g_descs.extend(out.grads);
    }
    net.backward(params, &cache, &g_descs.iter().collect::<Vec<_>>(), &mut grads)?;
    grads.fill_missing(params);
    let inv = T::one() / T::of(batch.len() as f64);
    grads.scale(inv);
    Ok((total * inv, grads, ctx))
}

pub struct TrainOutcome {
    /// Mean batch loss before each update.
    pub loss_history: Vec<f64>,
}

/// Run `cfg.steps` SGD updates over `tuples`. Deterministic given the
/// inputs and `seed`, which only drives batch composition.
pub fn train(
    net: &Network,
    params: &mut ParameterTable<f32>,
    samples: &BTreeMap<u64, SampleInput<f32>>,
    tuples: &[TripletTuple],
    cfg: &TrainConfig,
    seed: u64,
    mut on_step: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    ensure!(!tuples.is_empty(), MODULE, "no training tuples");
    let schedule = batch_schedule(tuples.len(), cfg.batch_size, cfg.steps, seed);
    let mut loss_history = Vec::with_capacity(cfg.steps);
    for (step, idx) in schedule.iter().enumerate() {
        let batch: Vec<TripletTuple> = idx.iter().map(|&i| tuples[i]).collect();
        let (loss, grads, ctx) = batch_loss_and_grads(net, params, samples, &batch, cfg.margin)?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                step,
                path: first_non_finite(params, &grads),
            });
        }
        sgd_momentum_step(params, &grads, cfg.sgd)?;
        apply_bn_updates(params, &ctx.bn_updates)?;
        if let Some((path, _)) = params.iter().find(|(_, p)| !p.value.is_finite()) {
            return Err(Error::Diverged {
                step,
                path: path.to_string(),
            });
        }
        loss_history.push(loss as f64);
        on_step(step, loss as f64);
    }
    Ok(TrainOutcome { loss_history })
}
