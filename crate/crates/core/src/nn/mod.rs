//! Small dense/convolutional network kernel with hand-written backprop.
//!
//! Samples are processed one at a time; minibatches accumulate [`Gradients`].
//! Storage and reductions are `f64`; weight files store `f32`.

mod io;
mod network;
mod tensor;

pub use io::{load_weights, read_weights, save_weights, write_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};
pub use network::{conv_output_geometry, Gradients, Layer, Network, Trace};
pub use tensor::Tensor;
