//! A small 1D convolutional network engine.
//!
//! All arithmetic is `f64`. Layers carry a `trainable` flag; frozen layers
//! forward and (when needed) propagate gradients but never receive
//! parameter updates or optimizer state.

mod io;
mod layer;
mod model;
mod tensor;
mod train;

pub use io::{decode_model, encode_model, load_model, save_model};
pub use layer::{cross_entropy, softmax, Activation, Layer, LayerGrad, LayerKind, LayerSpec};
pub use model::{init_model, BatchOutcome, ForwardCache, Gradients, ModelState};
pub use tensor::{Shape, Tensor};
pub use train::{
    evaluate, train, train_with_eval, AdamConfig, EpochStats, Evaluation, TrainConfig,
};
