//! Minimal tensor engine with explicit backpropagation.

pub mod checkpoint;
pub mod layers;
pub mod model;
pub mod tensor;

pub use checkpoint::{load_params, save_params, Checkpoint};
pub use layers::{
    conv1d_backward, conv1d_forward, dense_backward, dense_forward, interp_upsample,
    interp_upsample_backward, relu, relu_backward, sigmoid, sigmoid_backward,
};
pub use model::{ConvLayer, DenseLayer, ForwardCache, ModelConfig, ModelParams};
pub use tensor::Tensor;
