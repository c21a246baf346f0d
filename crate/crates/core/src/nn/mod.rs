//! Tensors, a tape-based reverse-mode engine and the network built on it.

mod checkpoint;
pub mod gradcheck;
pub mod kernels;
mod network;
mod optim;
mod spec;
mod tape;
mod tensor;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, ParamEntry, CHECKPOINT_FORMAT};
pub use gradcheck::{grad_check, grad_check_network, GradCheckReport, Objective, ScaledGradient};
pub use network::{argmax, bilstm, lstm, Forward, LstmVars, Mode, Network, Param};
pub use optim::{Adam, AdamConfig};
pub use spec::{Architecture, LayerSpec, NetworkSpec, TraceRow};
pub use tape::{softmax_rows, BatchStats, Tape, Var};
pub use tensor::Tensor;
pub use train::{epoch_batches, predict, predict_proba, train_epoch, EpochMetrics, TrainConfig, TrainData, TrainState};
