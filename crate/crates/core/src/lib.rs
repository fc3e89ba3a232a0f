//! Label refinement network: an encoder–decoder that predicts a label map at
//! six increasing resolutions, supervising every stage with its own loss.
//!
//! Everything runs on the hand-written kernels in [`ops`]; the same graph is
//! generic over [`Scalar`] so the gradient checks can rerun it at `f64`.

pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod labels;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use labels::{LabelMap, IGNORE};
pub use tensor::{Dims, Scalar, Tensor4};
