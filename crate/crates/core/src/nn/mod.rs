//! Minimal CPU neural-network engine: NCHW tensors, residual backbones, softmax
//! cross-entropy and AdamW.

pub mod layers;
pub mod loss;
pub mod optim;
pub mod resnet;
pub mod tensor;

pub use layers::{Linear, Module, Param};
pub use loss::{softmax, softmax_cross_entropy};
pub use optim::{cosine_lr, AdamW, AdamWConfig};
pub use resnet::{Architecture, ResNet, FEATURE_DIM};
pub use tensor::Tensor;
