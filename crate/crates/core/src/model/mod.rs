//! Encoder-decoder sequence model with hand-written backpropagation, its optimizer,
//! checkpoints and training loop.

mod checkpoint;
mod config;
pub mod linalg;
mod optim;
mod params;
mod scalar;
mod train;
mod transformer;

pub use checkpoint::{load_checkpoint, read_manifest, save_checkpoint, Manifest, MANIFEST_FILE, TENSOR_FILE};
pub use config::ModelConfig;
pub use optim::{AdamW, AdamWConfig};
pub use params::{init_params, layout, Layout, ParamSet};
pub use scalar::{Precision, Scalar};
pub use train::{
    loss_and_grad, prepare_examples, train_steps, BatchGrad, BatchSchedule, Example, StepLog, StepLoss, TrainConfig,
    TrainData, TrainState,
};
pub use transformer::{teacher_input, Memory, Model, Trace};
