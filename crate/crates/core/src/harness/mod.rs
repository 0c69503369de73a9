//! Training loop, optimizer, evaluation and cross-validation.

mod adam;
mod config;
mod cv;
mod metrics;
mod train;

pub use adam::Adam;
pub use config::{lr_schedule, Mode, TrainConfig};
pub use cv::{aggregate_cv, cross_validate, cv_cells, cv_folds, run_cv_cell, CvCell, CvReport, FoldRecord};
pub use metrics::{MeanMetrics, Metrics};
pub use train::{evaluate, predict_all, train, unlabeled_pool, EpochRecord, TrainData, TrainOutcome};
