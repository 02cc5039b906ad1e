//! A small continuous-convolution encoder-decoder for point segmentation,
//! with hand-written backward passes.

pub mod checkpoint;
pub mod conv;
pub mod model;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use conv::{conv_forward, Activation, ConvLayer, PairList};
pub use model::{cross_entropy, ForwardOutput, NetConfig, PreparedScene, SegNet, StepLoss};
pub use train::{evaluate, train, Evaluation, EpochLog, TrainConfig, TrainLog};
