//! Inference-only tensor stack for the grasp fusion module and the student
//! policy network.

pub mod loss;
pub mod ops;
pub mod student;
pub mod tensor;
pub mod transformer;
pub mod weights;

pub use loss::kd_loss;
pub use ops::{attention, conv2d, elu, layer_norm, linear, max_pool2d, relu, softmax};
pub use student::{student_forward, StudentConfig, StudentNet};
pub use tensor::Tensor;
pub use transformer::{transformer_encoder_layer, EncoderLayerWeights};
pub use weights::{Init, ParamSpec, WeightStore};
