//! Differentiable kernels. Every forward op has a matching backward that
//! returns exact analytic gradients; the model is composed only of these.

mod activation;
mod batchnorm;
mod concat;
mod conv;
mod pool;
mod softmax;
mod upsample;

pub use activation::{relu, relu_backward};
pub use batchnorm::{
    batchnorm, batchnorm_backward, batchnorm_infer, batchnorm_train, BnCache, BnGrads, BnMode,
    BnState,
};
pub use concat::{concat_channels, split_backward};
pub use conv::{conv3x3, conv3x3_backward, ConvGrads};
pub use pool::{maxpool2x2, maxpool2x2_backward, PoolIndices};
pub use softmax::{softmax_channels, softmax_cross_entropy, weighted_cross_entropy};
pub use upsample::{upsample_bilinear2x, upsample_bilinear2x_backward};
