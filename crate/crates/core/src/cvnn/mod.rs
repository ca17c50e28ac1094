//! Complex-valued neural network layers with hand-written reverse mode.
//!
//! Gradients follow the Wirtinger convention: for a real loss `L` and a
//! complex quantity `t`, the propagated value is `∂L/∂ℜt + i·∂L/∂ℑt`.

mod batch_norm;
mod conv;
mod elementwise;
mod gemm;
pub mod gradcheck;
mod init;
mod linear;
mod network;
mod optim;
mod pool;
mod tensor;

pub use batch_norm::{BatchNorm, ChannelStats, BN_EPS, BN_MOMENTUM};
pub use conv::{Conv2d, ConvTranspose2d};
pub use elementwise::{crelu, modulus};
pub use linear::Linear;
pub use network::{Backward, Grads, Layer, Network, StatsAccumulator, Tape};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use pool::{max_pool, upsample};
pub use tensor::CTensor;
