//! Named parameter storage, gradient accumulation and initialization.

use indexmap::IndexMap;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug)]
pub struct Param<T = f32> {
    pub value: Tensor<T>,
    pub momentum: Option<Tensor<T>>,
    pub trainable: bool,
}

/// Ordered map from parameter path to tensor.
///
/// Batch-norm running statistics live here too, flagged non-trainable; they
/// are recognized on load by their `running_mean` / `running_var` suffix.
#[derive(Clone, Debug, Default)]
pub struct ParameterTable<T = f32> {
    entries: IndexMap<String, Param<T>>,
}

pub fn is_buffer_path(path: &str) -> bool {
    path.ends_with(".running_mean") || path.ends_with(".running_var")
}

impl<T: Scalar> ParameterTable<T> {
    pub fn new() -> Self {
        ParameterTable {
            entries: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, path: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let path = path.into();
        if self.entries.contains_key(&path) {
            return Err(Error::contract(
                "diffcore",
                format!("duplicate parameter path `{path}`"),
            ));
        }
        let trainable = !is_buffer_path(&path);
        self.entries.insert(
            path,
            Param {
                value,
                momentum: None,
                trainable,
            },
        );
        Ok(())
    }

    pub fn get(&self, path: &str) -> Result<&Tensor<T>> {
        self.entries
            .get(path)
            .map(|p| &p.value)
            .ok_or_else(|| Error::contract("diffcore", format!("missing parameter `{path}`")))
    }

    pub fn get_mut(&mut self, path: &str) -> Result<&mut Tensor<T>> {
        self.entries
            .get_mut(path)
            .map(|p| &mut p.value)
            .ok_or_else(|| Error::contract("diffcore", format!("missing parameter `{path}`")))
    }

    pub fn param(&self, path: &str) -> Option<&Param<T>> {
        self.entries.get(path)
    }

    pub fn contains(&self, path: &str) -> bool {
        self.entries.contains_key(path)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|p| p.value.len()).sum()
    }

    /// Copy of the table in another precision; momentum buffers are dropped.
    pub fn cast<U: Scalar>(&self) -> ParameterTable<U> {
        ParameterTable {
            entries: self
                .entries
                .iter()
                .map(|(k, p)| {
                    (
                        k.clone(),
                        Param {
                            value: p.value.cast(),
                            momentum: None,
                            trainable: p.trainable,
                        },
                    )
                })
                .collect(),
        }
    }

    /// True when all values are bitwise identical (momentum ignored).
    pub fn bitwise_eq(&self, other: &ParameterTable<T>) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|((ka, a), (kb, b))| {
                ka == kb
                    && a.value.shape() == b.value.shape()
                    && a
                        .value
                        .data()
                        .iter()
                        .zip(b.value.data())
                        .all(|(x, y)| x.to_bits_eq(*y))
            })
    }
}

trait BitsEq {
    fn to_bits_eq(self, other: Self) -> bool;
}

impl<T: Scalar> BitsEq for T {
    fn to_bits_eq(self, other: T) -> bool {
        // Scalar is only implemented for f32 and f64; widening is exact.
        self.as_f64().to_bits() == other.as_f64().to_bits()
    }
}

/// Gradient accumulator keyed by parameter path.
#[derive(Clone, Debug, Default)]
pub struct Gradients<T = f32> {
    entries: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn new() -> Self {
        Gradients {
            entries: IndexMap::new(),
        }
    }

    pub fn accumulate(&mut self, path: &str, grad: Tensor<T>) {
        match self.entries.get_mut(path) {
            Some(g) => g.add_assign(&grad),
            None => {
                self.entries.insert(path.to_string(), grad);
            }
        }
    }

    pub fn get(&self, path: &str) -> Option<&Tensor<T>> {
        self.entries.get(path)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Insert zero gradients for trainable parameters that received none,
    /// e.g. parameters of a masked-out branch.
    pub fn fill_missing(&mut self, params: &ParameterTable<T>) {
        for (path, p) in params.iter() {
            if p.trainable && !self.entries.contains_key(path) {
                self.entries.insert(path.to_string(), Tensor::zeros(p.value.shape()));
            }
        }
    }

    pub fn merge(&mut self, other: Gradients<T>) {
        for (k, v) in other.entries {
            self.accumulate(&k, v);
        }
    }

    pub fn scale(&mut self, s: T) {
        for g in self.entries.values_mut() {
            g.scale(s);
        }
    }
}

/// Initialization recipe for one parameter tensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    Uniform(f64),
    Normal(f64),
}

impl Init {
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn fan_in(fan_in: usize) -> Self {
        Init::Uniform(1.0 / (fan_in as f64).sqrt())
    }

    /// Variance-preserving bound for layers followed by a ReLU.
    pub fn he(fan_in: usize) -> Self {
        Init::Uniform((6.0 / fan_in as f64).sqrt())
    }

    pub fn sample<T: Scalar>(self, shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<T> {
        let n: usize = shape.iter().product();
        let data = match self {
            Init::Zeros => vec![T::zero(); n],
            Init::Ones => vec![T::one(); n],
            Init::Uniform(bound) => (0..n)
                .map(|_| T::of(rng.random_range(-bound..=bound)))
                .collect(),
            Init::Normal(std) => {
                let dist = Normal::new(0.0, std).expect("finite std");
                (0..n).map(|_| T::of(dist.sample(rng))).collect()
            }
        };
        Tensor::from_parts(shape.to_vec(), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn duplicate_paths_rejected() {
        let mut t = ParameterTable::<f32>::new();
        t.insert("a", Tensor::zeros(&[2])).unwrap();
        assert!(t.insert("a", Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn running_stats_are_not_trainable() {
        let mut t = ParameterTable::<f32>::new();
        t.insert("x.bn.running_mean", Tensor::zeros(&[2])).unwrap();
        t.insert("x.bn.gamma", Tensor::zeros(&[2])).unwrap();
        assert!(!t.param("x.bn.running_mean").unwrap().trainable);
        assert!(t.param("x.bn.gamma").unwrap().trainable);
    }

    #[test]
    fn init_is_seeded() {
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        let x: Tensor<f32> = Init::Uniform(0.5).sample(&[4, 4], &mut a);
        let y: Tensor<f32> = Init::Uniform(0.5).sample(&[4, 4], &mut b);
        assert_eq!(x, y);
        assert!(x.data().iter().all(|v| v.abs() <= 0.5));
    }

    #[test]
    fn gradients_accumulate() {
        let mut g = Gradients::<f32>::new();
        g.accumulate("w", Tensor::from_vec(vec![1.0, 2.0]));
        g.accumulate("w", Tensor::from_vec(vec![0.5, 0.5]));
        assert_eq!(g.get("w").unwrap().data(), &[1.5, 2.5]);
    }
}
