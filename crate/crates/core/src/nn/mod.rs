//! Dense convolutional layers with hand-written forward and backward passes,
//! network geometry and weight files.

pub mod arch;
mod backward;
mod forward;
mod gemm;
mod geometry;
mod init;
mod layer;
pub mod weights;

pub use backward::{net_backward, Backward, CrossEntropy, Gradients, LayerGrad};
pub use forward::{conv_forward, maxpool_forward, net_forward, net_logits, relu_forward, sigmoid};
pub use geometry::{net_geometry, NetGeometry};
pub use init::init_weights;
pub use layer::{LayerKind, LayerSpec, NetworkSpec};
