//! Cross-validation across worker threads.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use advreg_core::corpus::{EmbeddingTable, Instance};
use advreg_core::harness::{aggregate_cv, cv_cells, cv_folds, run_cv_cell, CvReport, FoldRecord, TrainConfig};
use anyhow::{anyhow, bail, Result};

pub const THREADS_VAR: &str = "ADVREG_THREADS";

/// Worker count from `ADVREG_THREADS`; 1 when unset.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_VAR) {
        Err(std::env::VarError::NotPresent) => Ok(1),
        Err(e) => bail!("{THREADS_VAR}: {e}"),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => bail!("{THREADS_VAR} must be a positive integer, got {v:?}"),
        },
    }
}

/// Runs every (repeat, fold) cell on up to `threads` workers. Records are
/// aggregated in cell order, so the report does not depend on `threads`.
pub fn cross_validate_parallel(
    corpus: &[Instance],
    unlabeled: &[Instance],
    embeddings: &EmbeddingTable,
    cfg: &TrainConfig,
    k: usize,
    repeats: usize,
    threads: usize,
) -> Result<CvReport> {
    if repeats == 0 {
        bail!("repeats must be positive");
    }
    let folds = cv_folds(corpus.len(), k, cfg)?;
    let cells = cv_cells(k, repeats);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<advreg_core::Result<FoldRecord>>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(&cell) = cells.get(i) else { break };
        let rec = run_cv_cell(corpus, unlabeled, embeddings, cfg, &folds, cell);
        if let Ok(r) = &rec {
            log::info!("repeat {} fold {}: F = {:.4}", r.repeat, r.fold, r.metrics.fscore);
        }
        slots.lock().expect("no worker panicked")[i] = Some(rec);
    };
    std::thread::scope(|s| {
        for _ in 1..threads.clamp(1, cells.len()) {
            s.spawn(worker);
        }
        worker();
    });
    let records = slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.ok_or_else(|| anyhow!("cell not run"))?.map_err(anyhow::Error::from))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate_cv(k, repeats, records))
}
