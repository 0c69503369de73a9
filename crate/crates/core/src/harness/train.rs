use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::config::{lr_schedule, Mode, TrainConfig};
use super::metrics::Metrics;
use crate::adversarial::adversarial_loss;
use crate::classifier::{cross_entropy_step, predict, Classifier};
use crate::corpus::{normalize_embeddings, EmbeddingTable, Instance};
use crate::encoder::{FeatureTables, IndexedInstance, PerturbScope};
use crate::error::{Error, Result};
use crate::numcore::RandomSource;
use crate::pcnn::{ModelParams, Pcnn, PcnnDims};
use crate::vat::combined_vat_objective;

// Independent random streams derived from the run seed.
const STREAM_TABLES: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_PERTURB: u64 = 3;
const STREAM_UNLABELED: u64 = 4;

/// Inputs to one training run.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrainData<'a> {
    pub labeled: &'a [Instance],
    /// Unlabeled pool for `vat` mode; ignored otherwise.
    pub unlabeled: &'a [Instance],
    /// Evaluated after every epoch when non-empty.
    pub heldout: &'a [Instance],
    /// Extra sentences whose words should receive their own embedding rows.
    pub vocabulary: &'a [Instance],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
    pub heldout: Option<Metrics>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelParams,
    pub history: Vec<EpochRecord>,
    /// Batch loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
    /// Labeled or unlabeled instances dropped because an entity was pruned.
    pub skipped: usize,
}

/// The unlabeled stream for `mode`: the labeled set without labels for
/// `vat_star`, `unlabeled_ratio · |labeled|` instances drawn from `pool` for
/// `vat`, and nothing otherwise.
pub fn unlabeled_pool(labeled: &[Instance], pool: &[Instance], cfg: &TrainConfig) -> Vec<Instance> {
    match cfg.mode {
        Mode::VatStar => labeled.iter().map(Instance::unlabeled).collect(),
        Mode::Vat => {
            let mut order: Vec<usize> = (0..pool.len()).collect();
            RandomSource::with_stream(cfg.seed, STREAM_UNLABELED).shuffle(&mut order);
            order
                .into_iter()
                .take(cfg.vat.unlabeled_ratio * labeled.len())
                .map(|i| pool[i].unlabeled())
                .collect()
        }
        _ => Vec::new(),
    }
}

fn index_all(tables: &FeatureTables, instances: &[Instance], skipped: &mut usize) -> Result<Vec<IndexedInstance>> {
    let mut out = Vec::with_capacity(instances.len());
    for inst in instances {
        match tables.index(inst) {
            Ok(ids) => out.push(ids),
            Err(Error::InstanceSkipped(_)) => *skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Cycles through a pool in per-pass shuffled order.
struct BatchCursor {
    order: Vec<usize>,
    pos: usize,
}

impl BatchCursor {
    fn new(n: usize) -> Self {
        Self { order: (0..n).collect(), pos: n }
    }

    fn take(&mut self, count: usize, rng: &mut RandomSource) -> Vec<usize> {
        let n = self.order.len();
        let mut out = Vec::with_capacity(count.min(n));
        while out.len() < count.min(n) {
            if self.pos == n {
                rng.shuffle(&mut self.order);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Trains a model in the configured mode with Adam on the decayed learning
/// rate. The embeddings are normalized by their largest component first.
/// Deterministic given `cfg.seed`.
pub fn train(data: TrainData<'_>, embeddings: &EmbeddingTable, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.labeled.is_empty() {
        return Err(Error::Empty("labeled training set"));
    }
    let embeddings = &normalize_embeddings(embeddings.clone())?;
    let pool = unlabeled_pool(data.labeled, data.unlabeled, cfg);
    let vocab_source = data.labeled.iter().chain(&pool).chain(data.heldout).chain(data.vocabulary);
    let mut table_rng = RandomSource::with_stream(cfg.seed, STREAM_TABLES);
    let tables = FeatureTables::build(vocab_source, embeddings, cfg.max_sentence_len, &mut table_rng);
    let dims = PcnnDims { input_dim: tables.layout.width(), filters: cfg.filters, window: cfg.window };
    let mut model = ModelParams { net: Pcnn::init(dims, cfg.seed), tables };

    let mut skipped = 0;
    let labeled = index_all(&model.tables, data.labeled, &mut skipped)?;
    let unlabeled = index_all(&model.tables, &pool, &mut skipped)?;
    if labeled.is_empty() {
        return Err(Error::Empty("labeled training set after pruning"));
    }
    let heldout = index_all(&model.tables, data.heldout, &mut 0)?;

    let adv = cfg.effective_adv();
    let scope = if cfg.mode.is_vat() { PerturbScope::All } else { adv.scope };
    let mut shuffle_rng = RandomSource::with_stream(cfg.seed, STREAM_SHUFFLE);
    let mut perturb_rng = RandomSource::with_stream(cfg.seed, STREAM_PERTURB);
    let mut unlabeled_rng = RandomSource::with_stream(cfg.seed, STREAM_UNLABELED ^ 0xff);
    let mut unlabeled_cursor = BatchCursor::new(unlabeled.len());
    let mut adam = Adam::new(&model);
    let mut order: Vec<usize> = (0..labeled.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step_losses = Vec::new();
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_labeled) {
            let lr = lr_schedule(step, cfg);
            let batch: Vec<_> = chunk.iter().map(|&i| model.tables.materialize(&labeled[i], scope)).collect();
            let mut grads = model.zero_grads();
            let w = 1.0 / batch.len() as f64;
            let loss = match cfg.mode {
                Mode::Baseline => {
                    let mut total = 0.0;
                    for inst in &batch {
                        let label = inst.label.ok_or(Error::Empty("label"))?;
                        total += cross_entropy_step(&model, inst, &inst.x, label, w, Some(&mut grads))?.0;
                    }
                    total * w
                }
                Mode::At | Mode::AtMulti => {
                    let mut total = 0.0;
                    for inst in &batch {
                        total += adversarial_loss(&model, inst, &adv, &mut perturb_rng, w, &mut grads)?;
                    }
                    total * w
                }
                Mode::Vat | Mode::VatStar => {
                    let ub: Vec<_> = unlabeled_cursor
                        .take(cfg.vat.unlabeled_batch, &mut unlabeled_rng)
                        .into_iter()
                        .map(|i| model.tables.materialize(&unlabeled[i], scope))
                        .collect();
                    combined_vat_objective(&model, &batch, &ub, &cfg.vat, &mut perturb_rng, &mut grads)?
                }
            };
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { step, lr, grad_norm: grads.norm() });
            }
            adam.step(&mut model, &grads, lr);
            epoch_loss += loss * batch.len() as f64;
            step_losses.push(loss);
            step += 1;
        }
        let heldout_metrics = if heldout.is_empty() { None } else { Some(evaluate_indexed(&model, &heldout, 0)?) };
        history.push(EpochRecord {
            epoch,
            mean_loss: epoch_loss / labeled.len() as f64,
            lr: lr_schedule(step, cfg),
            heldout: heldout_metrics,
        });
    }
    Ok(TrainOutcome { model, history, step_losses, skipped })
}

fn evaluate_indexed(model: &ModelParams, instances: &[IndexedInstance], skipped_positive: usize) -> Result<Metrics> {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, skipped_positive, 0);
    for ids in instances {
        let inst = model.tables.materialize(ids, PerturbScope::Embedding);
        let label = inst.label.ok_or(Error::Empty("label on test instance"))?;
        let p = predict(model, &inst)?;
        match (p[1] > p[0], label == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(Metrics::from_counts(tp, fp, fn_, tn))
}

/// Argmax predictions scored on the positive class. Instances whose
/// entities do not fit the model's sentence length count as predicted
/// negative.
pub fn evaluate(model: &ModelParams, test: &[Instance]) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mut kept = Vec::with_capacity(test.len());
    let (mut skipped_pos, mut skipped_neg) = (0, 0);
    for inst in test {
        match model.tables.index(inst) {
            Ok(ids) => kept.push(ids),
            Err(Error::InstanceSkipped(_)) => match inst.label.map(|l| l.index()) {
                Some(1) => skipped_pos += 1,
                Some(_) => skipped_neg += 1,
                None => return Err(Error::Empty("label on test instance")),
            },
            Err(e) => return Err(e),
        }
    }
    let mut m = evaluate_indexed(model, &kept, skipped_pos)?;
    m = Metrics::from_counts(m.tp, m.fp, m.fn_, m.tn + skipped_neg);
    Ok(m)
}

/// Per-instance predicted distributions; `None` for skipped instances.
pub fn predict_all(model: &ModelParams, instances: &[Instance]) -> Vec<Option<Vec<f64>>> {
    instances
        .iter()
        .map(|inst| {
            let enc = model.tables.encode(inst, PerturbScope::Embedding).ok()?;
            predict(model, &enc).ok()
        })
        .collect()
}
