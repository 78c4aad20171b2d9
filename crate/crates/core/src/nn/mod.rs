//! Minimal convolutional-network engine: layers with reverse-mode gradients,
//! the two laboratory architectures, softmax cross-entropy, and momentum SGD.

pub mod init;
pub mod layers;
pub mod loss;
pub mod network;
pub mod sgd;

pub use loss::softmax_cross_entropy;
pub use network::{build_network, Architecture, Mode, Network, NetworkConfig, Upto};
pub use sgd::Sgd;
