//! Forward and backward kernels for the primitive layers.
//!
//! Every kernel is a pure function of its inputs; state needed by a backward
//! pass is returned from the forward call as an explicit cache value.

mod activation;
mod batchnorm;
mod concat;
mod conv;
mod dense;
pub(crate) mod gemm;
mod pool;

pub use activation::{relu, relu_backward, softmax};
pub use batchnorm::{batchnorm_backward, batchnorm_forward, BatchNormSpec, BnCache, BnMode, BnParams, Phase};
pub use concat::{concat_channels, split_channels};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvSpec, Padding};
pub use dense::{dense_backward, dense_forward, DenseGrads};
pub use pool::{
    global_avg_pool, global_avg_pool_backward, maxpool2x2_backward, maxpool2x2_forward, pooled_hw, PoolSwitches,
};
