use triplace_core::aggregation::NeXtVladConfig;
use triplace_core::attention::AttentionConfig;
use triplace_core::embedding::EmbeddingConfig;
use triplace_core::network::{Branches, ModelConfig};

/// A network small enough for finite differences.
pub fn toy_model(branches: Branches) -> ModelConfig {
    ModelConfig {
        embedding: EmbeddingConfig {
            image_height: 8,
            image_width: 16,
            conv_channels: 3,
            patch_size: 2,
            num_points: 24,
            stem_dim: 4,
            sa_points: vec![8, 4],
            sa_dims: vec![6, 8],
            neighbors: 3,
        },
        attention: AttentionConfig {
            heads: 2,
            model_dim: 8,
            dropout: 0.0,
            ffn_hidden: 12,
            depth: 1,
        },
        vlad: NeXtVladConfig {
            clusters: 3,
            groups: 2,
            expansion: 2,
            output_dim: 5,
            proj_init_std: None,
        },
        branches,
        ..ModelConfig::default()
    }
}
