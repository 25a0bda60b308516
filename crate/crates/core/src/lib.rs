//! Three-branch camera/LiDAR place descriptor.
//!
//! Images are tokenized by a small convolutional stem, point clouds by
//! cascaded point-wise MLPs and two set-abstraction stages. Each modality
//! is refined by self-attention, the two are exchanged through
//! bidirectional cross-attention and channel-mixed by an inverted residual
//! block, and three NeXtVLAD heads produce a 768-float global descriptor
//! trained with a triplet loss.

pub mod aggregation;
pub mod attention;
pub mod embedding;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod metric;
pub mod network;
pub mod ops;
pub mod optim;
pub mod params;
pub mod pointops;
pub mod serialize;
pub mod tensor;

pub use error::{Error, Result};
pub use params::{Gradients, Init, Param, ParameterTable};
pub use tensor::{Scalar, Tensor};
