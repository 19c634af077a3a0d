//! A small deterministic 1-D convolution engine.
//!
//! Everything is `f64`. Reductions run in a fixed order (GEMMs are
//! single-threaded and batches are accumulated sequentially), so identical
//! inputs give bitwise-identical parameters after training.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layer;
pub mod loss;
pub mod model;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint};
pub use gradcheck::{grad_check, loss_and_grads};
pub use layer::{conv_backward, conv_forward, conv_infer, Activation, ConvCache, ConvLayer, LayerGrads, LEAKY_SLOPE};
pub use loss::{mse, mse_loss};
pub use model::{FcnModel, ModelGrads};
pub use tensor::SignalTensor;
