use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::metrics::{MeanMetrics, Metrics};
use super::train::{evaluate, train, EpochRecord, TrainData};
use crate::corpus::{split_folds, EmbeddingTable, Instance};
use crate::error::{Error, Result};

/// One (repeat, fold) training/evaluation cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CvCell {
    pub repeat: usize,
    pub fold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub repeat: usize,
    pub fold: usize,
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub final_loss: f64,
    pub metrics: Metrics,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub repeats: usize,
    pub folds: Vec<FoldRecord>,
    /// Micro-averaged metrics of each repeat (pooled fold confusion counts).
    pub per_repeat: Vec<Metrics>,
    /// Mean of `per_repeat`.
    pub mean: MeanMetrics,
}

/// The fold partition, fixed by `cfg.seed` across repeats.
pub fn cv_folds(n: usize, k: usize, cfg: &TrainConfig) -> Result<Vec<Vec<usize>>> {
    split_folds(n, k, cfg.seed)
}

/// Cells in reporting order: repeat-major, then fold.
pub fn cv_cells(k: usize, repeats: usize) -> Vec<CvCell> {
    (0..repeats).flat_map(|repeat| (0..k).map(move |fold| CvCell { repeat, fold })).collect()
}

/// Trains on every fold but `cell.fold` with seed `cfg.seed + repeat` and
/// evaluates on the held-out fold.
pub fn run_cv_cell(
    corpus: &[Instance],
    unlabeled: &[Instance],
    embeddings: &EmbeddingTable,
    cfg: &TrainConfig,
    folds: &[Vec<usize>],
    cell: CvCell,
) -> Result<FoldRecord> {
    let test: Vec<Instance> = folds[cell.fold].iter().map(|&i| corpus[i].clone()).collect();
    let train_set: Vec<Instance> = folds
        .iter()
        .enumerate()
        .filter(|&(f, _)| f != cell.fold)
        .flat_map(|(_, idx)| idx.iter().map(|&i| corpus[i].clone()))
        .collect();
    let seed = cfg.seed.wrapping_add(cell.repeat as u64);
    let run_cfg = TrainConfig { seed, ..cfg.clone() };
    let data = TrainData { labeled: &train_set, unlabeled, heldout: &[], vocabulary: &test };
    let outcome = train(data, embeddings, &run_cfg)?;
    let metrics = evaluate(&outcome.model, &test)?;
    Ok(FoldRecord {
        repeat: cell.repeat,
        fold: cell.fold,
        seed,
        train_size: train_set.len(),
        test_size: test.len(),
        final_loss: outcome.history.last().map_or(f64::NAN, |h| h.mean_loss),
        metrics,
        history: outcome.history,
    })
}

/// Micro-averages each repeat's folds, then averages over repeats. Records
/// must be in [`cv_cells`] order.
pub fn aggregate_cv(k: usize, repeats: usize, folds: Vec<FoldRecord>) -> CvReport {
    let per_repeat: Vec<Metrics> = (0..repeats)
        .map(|r| Metrics::pooled(folds.iter().filter(|f| f.repeat == r).map(|f| &f.metrics)))
        .collect();
    let mean = MeanMetrics::of(&per_repeat);
    CvReport { k, repeats, folds, per_repeat, mean }
}

/// k-fold cross-validation repeated `repeats` times, sequentially.
pub fn cross_validate(
    corpus: &[Instance],
    unlabeled: &[Instance],
    embeddings: &EmbeddingTable,
    cfg: &TrainConfig,
    k: usize,
    repeats: usize,
) -> Result<CvReport> {
    if repeats == 0 {
        return Err(Error::Config(alloc::string::String::from("repeats must be positive")));
    }
    let folds = cv_folds(corpus.len(), k, cfg)?;
    let records = cv_cells(k, repeats)
        .into_iter()
        .map(|cell| run_cv_cell(corpus, unlabeled, embeddings, cfg, &folds, cell))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate_cv(k, repeats, records))
}
