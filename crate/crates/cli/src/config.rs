//! `key = value` experiment configuration. One assignment per line, `#`
//! starts a comment. `preset` (canonical or desk) is applied before every
//! other key regardless of its position.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use triplace_core::metric::TrainConfig;
use triplace_core::network::{Branches, ModelConfig};
use triplace_core::{Error, Result};

const MODULE: &str = "cli";

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "preset",
    "batch_size",
    "lr",
    "momentum",
    "weight_decay",
    "margin",
    "d_pos",
    "d_neg",
    "steps",
    "num_tuples",
    "heads",
    "model_dim",
    "dropout",
    "ffn_hidden",
    "depth",
    "clusters",
    "groups",
    "expansion",
    "output_dim",
    "proj_init_std",
    "image_height",
    "image_width",
    "conv_channels",
    "patch_size",
    "num_points",
    "stem_dim",
    "sa_points",
    "sa_dims",
    "neighbors",
    "use_sis",
    "use_ffs",
    "ffs_expansion",
    "branches",
];

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::format(MODULE, format!("config key `{key}`: cannot parse `{raw}`")))
}

fn list(key: &str, raw: &str) -> Result<Vec<usize>> {
    raw.split(',').map(|t| value(key, t.trim())).collect()
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(MODULE, format!("config line {}: expected `key = value`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::format(MODULE, format!("config line {}: unknown key `{k}`", n + 1)));
            }
            if pairs.insert(k.to_string(), (n + 1, v.to_string())).is_some() {
                return Err(Error::format(MODULE, format!("config line {}: duplicate key `{k}`", n + 1)));
            }
        }
        let mut cfg = match pairs.remove("preset").map(|(_, v)| v).as_deref() {
            None | Some("canonical") => ExperimentConfig::default(),
            Some("desk") => ExperimentConfig {
                model: ModelConfig::desk(),
                train: TrainConfig::default(),
            },
            Some(other) => {
                return Err(Error::format(
                    MODULE,
                    format!("config key `preset`: unknown preset `{other}` (expected canonical or desk)"),
                ))
            }
        };
        for (k, (_, v)) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.model.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, k: &str, v: &str) -> Result<()> {
        let (m, t) = (&mut self.model, &mut self.train);
        match k {
            "batch_size" => t.batch_size = value(k, v)?,
            "lr" => t.sgd.lr = value(k, v)?,
            "momentum" => t.sgd.momentum = value(k, v)?,
            "weight_decay" => t.sgd.weight_decay = value(k, v)?,
            "margin" => t.margin = value(k, v)?,
            "d_pos" => t.d_pos = value(k, v)?,
            "d_neg" => t.d_neg = value(k, v)?,
            "steps" => t.steps = value(k, v)?,
            "num_tuples" => t.num_tuples = value(k, v)?,
            "heads" => m.attention.heads = value(k, v)?,
            "model_dim" => m.attention.model_dim = value(k, v)?,
            "dropout" => m.attention.dropout = value(k, v)?,
            "ffn_hidden" => m.attention.ffn_hidden = value(k, v)?,
            "depth" => m.attention.depth = value(k, v)?,
            "clusters" => m.vlad.clusters = value(k, v)?,
            "groups" => m.vlad.groups = value(k, v)?,
            "expansion" => m.vlad.expansion = value(k, v)?,
            "output_dim" => m.vlad.output_dim = value(k, v)?,
            "proj_init_std" => {
                m.vlad.proj_init_std = if v == "none" { None } else { Some(value(k, v)?) }
            }
            "image_height" => m.embedding.image_height = value(k, v)?,
            "image_width" => m.embedding.image_width = value(k, v)?,
            "conv_channels" => m.embedding.conv_channels = value(k, v)?,
            "patch_size" => m.embedding.patch_size = value(k, v)?,
            "num_points" => m.embedding.num_points = value(k, v)?,
            "stem_dim" => m.embedding.stem_dim = value(k, v)?,
            "sa_points" => m.embedding.sa_points = list(k, v)?,
            "sa_dims" => m.embedding.sa_dims = list(k, v)?,
            "neighbors" => m.embedding.neighbors = value(k, v)?,
            "use_sis" => m.use_sis = value(k, v)?,
            "use_ffs" => m.use_ffs = value(k, v)?,
            "ffs_expansion" => m.ffs_expansion = value(k, v)?,
            "branches" => m.branches = v.parse::<Branches>()?,
            _ => unreachable!("key list checked by the parser"),
        }
        Ok(())
    }

    /// Every key with its resolved value; parsing the output yields `self`.
    pub fn to_text(&self) -> String {
        let (m, t) = (&self.model, &self.train);
        let e = &m.embedding;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("batch_size", t.batch_size.to_string());
        kv("lr", t.sgd.lr.to_string());
        kv("momentum", t.sgd.momentum.to_string());
        kv("weight_decay", t.sgd.weight_decay.to_string());
        kv("margin", t.margin.to_string());
        kv("d_pos", t.d_pos.to_string());
        kv("d_neg", t.d_neg.to_string());
        kv("steps", t.steps.to_string());
        kv("num_tuples", t.num_tuples.to_string());
        kv("heads", m.attention.heads.to_string());
        kv("model_dim", m.attention.model_dim.to_string());
        kv("dropout", m.attention.dropout.to_string());
        kv("ffn_hidden", m.attention.ffn_hidden.to_string());
        kv("depth", m.attention.depth.to_string());
        kv("clusters", m.vlad.clusters.to_string());
        kv("groups", m.vlad.groups.to_string());
        kv("expansion", m.vlad.expansion.to_string());
        kv("output_dim", m.vlad.output_dim.to_string());
        kv(
            "proj_init_std",
            m.vlad.proj_init_std.map_or("none".to_string(), |v| v.to_string()),
        );
        kv("image_height", e.image_height.to_string());
        kv("image_width", e.image_width.to_string());
        kv("conv_channels", e.conv_channels.to_string());
        kv("patch_size", e.patch_size.to_string());
        kv("num_points", e.num_points.to_string());
        kv("stem_dim", e.stem_dim.to_string());
        kv("sa_points", join(&e.sa_points));
        kv("sa_dims", join(&e.sa_dims));
        kv("neighbors", e.neighbors.to_string());
        kv("use_sis", m.use_sis.to_string());
        kv("use_ffs", m.use_ffs.to_string());
        kv("ffs_expansion", m.ffs_expansion.to_string());
        kv("branches", m.branches.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_canonical() {
        assert_eq!(ExperimentConfig::parse("# nothing\n\n").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn preset_applies_first_and_comments_are_stripped() {
        let c = ExperimentConfig::parse("steps = 7 # short run\npreset = desk\nbranches = image\n").unwrap();
        assert_eq!(c.train.steps, 7);
        assert_eq!(c.model.embedding, ModelConfig::desk().embedding);
        assert_eq!(c.model.branches, Branches::IMAGE);
    }

    #[test]
    fn text_roundtrip() {
        let c = ExperimentConfig::parse("preset = desk\nproj_init_std = none\nsa_points = 48,24\n").unwrap();
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
        assert_eq!(c.to_text().lines().count(), KEYS.len() - 1);
    }

    #[test]
    fn rejects_unknown_duplicate_and_invalid() {
        for bad in [
            "learning_rate = 1\n",
            "steps = 1\nsteps = 2\n",
            "steps = many\n",
            "steps\n",
            "heads = 5\n",
            "preset = huge\n",
            "d_pos = 60\n",
        ] {
            assert!(ExperimentConfig::parse(bad).is_err(), "{bad}");
        }
    }
}
