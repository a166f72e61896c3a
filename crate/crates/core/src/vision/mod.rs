//! Lightweight-CNN building blocks and their cost models.

mod blocks;
mod conv;
mod cost;
mod scaling;

pub use blocks::{
    excitation, inverted_residual, se_block, se_weights, squeeze, InvertedResidualParams,
    SE_REDUCTION,
};
pub use conv::{channel_shuffle, channel_unshuffle, conv2d_forward};
pub use cost::{cost_depthwise_separable, cost_standard, ConvMode, ConvSpec, SeparableCost};
pub use scaling::{compound_scale, CompoundScale, ScalingSpec};
