//! Dense layers with hand-derived gradients, the CNN text encoder, Adam and
//! the training loop.

mod adam;
mod checkpoint;
pub mod layers;
mod loss;
mod model;
mod param;
mod real;
pub mod rng;
mod tensor;
mod train;

pub use adam::{adam_step, AdamConfig};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_for, save_checkpoint, MAGIC};
pub use layers::DropoutMode;
pub use loss::{softmax, softmax_cross_entropy};
pub use model::{CnnCache, CnnEncoder, ConvBlock, EncoderConfig, FeatureBatch, ForwardCache, ForwardOutput, ModelState, SequenceEncoder};
pub use param::Parameter;
pub use real::{axpy, dot, Real};
pub use tensor::Tensor;
pub use train::{argmax, evaluate_model, predict, train, write_log_csv, EpochLog, TrainConfig, TrainOutcome};
