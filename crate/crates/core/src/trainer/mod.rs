//! Desk-scale training of the pre-filter on a synthetic motion task.

pub mod dataset;
pub mod model;
pub mod train;

pub use dataset::{gen_dataset, Dataset, LabeledClip, SyntheticTaskSpec};
pub use model::{spike_report, ClipEval, EvalOptions, FilterMode, ParamGrads, SpikeMode, SpikeStats, TinyModel};
pub use train::{build_model, evaluate, loss_and_grads, train, train_on, EpochMetrics, Evaluation, TrainConfig, TrainReport};
