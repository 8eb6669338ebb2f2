//! Two-stage residual training, the variant registry, the survival head
//! loss, per-step gradient logging and `RTMC` checkpoints.

mod checkpoint;
mod config;
mod log;
mod loss;
mod model;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{TrainConfig, Variant, MULTI_LR_FACTOR};
pub use log::{EpochRecord, GateForm, Stage, StepRecord, TrainLog, EPOCH_COLUMNS, STEP_COLUMNS};
pub use loss::{survival_loss, survival_risk, task_loss};
pub use model::{binary_score, evaluate, primary_metric, CompCache, Composition, ModelState};
pub use train::{init_model, train_stage1, train_stage2, train_variant};
