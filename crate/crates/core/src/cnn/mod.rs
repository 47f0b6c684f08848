//! A small convolutional network trained from scratch.
//!
//! Topology: five 3x3 convolutions with ReLU, 2x2 max-pooling after the
//! first, second and fifth, then three fully connected layers (ReLU on the
//! first two) ending in a two-way softmax. The post-ReLU output of the first
//! fully connected layer is the learned feature vector.

mod checkpoint;
mod config;
pub mod layers;
mod network;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, NNC_MAGIC};
pub use config::{ConvSpec, NetworkConfig, Shape, CLASSES, CONV_LAYERS, FC_LAYERS, POOL_AFTER};
pub use layers::{softmax, softmax_cross_entropy};
pub use network::{backward, extract_features, forward, ForwardCache, LayerParams, NetworkParams};
pub use train::{
    split_validation_groups, train, train_split, write_loss_csv, LabeledTensor, SampleSource, TrainConfig,
    TrainOutcome, ValidationSummary,
};
