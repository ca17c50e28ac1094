//! Datasets, training, evaluation and checkpoints.

mod checkpoint;
mod config;
mod dataset;
mod eval;
mod metrics;
mod statefile;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use config::TrainConfig;
pub use dataset::{
    generate_dataset, label_name, sample_rng, Dataset, DatasetKind, GenerateOptions, Record, DATASET_MAGIC, DATASET_VERSION,
    LABEL_BISEPARABLE, LABEL_BOUND_ENTANGLED, LABEL_ENTANGLED, LABEL_SEPARABLE,
};
pub use eval::{
    evaluate, evaluate_scores, export_latents, score_dataset, Counts, EvalReport, Histogram, LabelBreakdown,
    ThresholdSource,
};
pub use metrics::{eer, roc_auc, roc_curve, trapezoid_auc, RocPoint};
pub use statefile::{parse_state_text, read_state_file, StateInput};
pub use train::{check_training_labels, train, train_on, EpochLog, TrainOutcome};
