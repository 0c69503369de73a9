//! Builds the model input matrix from an instance: word embedding, POS,
//! dependency, two relative-distance blocks and a one-hot entity type per
//! token, plus segment boundaries and the perturbation mask.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::{format, vec, vec::Vec};
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingTable, Instance, Span};
use crate::error::{Error, Result};
use crate::numcore::{Matrix, RandomSource};

pub const POS_DIM: usize = 10;
pub const DEP_DIM: usize = 10;
pub const DIST_DIM: usize = 5;
pub const ENTITY_TYPES: usize = 4;
/// Relative distances are clipped to `[-MAX_DISTANCE, MAX_DISTANCE]`.
pub const MAX_DISTANCE: i32 = 50;
pub const DIST_TABLE_ROWS: usize = 2 * MAX_DISTANCE as usize + 1;
pub const DEFAULT_MAX_LEN: usize = 100;
/// Half-width of the uniform initialisation of the learned feature tables.
pub const TABLE_INIT_RANGE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Embedding,
    Pos,
    Dep,
    Dist1,
    Dist2,
    EntityType,
}

/// Which input columns adversarial perturbations may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbScope {
    Embedding,
    All,
}

/// Column layout of one input row. Blocks are contiguous and in the order of
/// [`BlockKind`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    widths: [usize; 6],
}

impl FeatureLayout {
    pub const KINDS: [BlockKind; 6] = [
        BlockKind::Embedding,
        BlockKind::Pos,
        BlockKind::Dep,
        BlockKind::Dist1,
        BlockKind::Dist2,
        BlockKind::EntityType,
    ];

    /// Standard layout for a given word-embedding dimension (200 gives 234 columns).
    pub fn standard(embedding_dim: usize) -> Self {
        Self { widths: [embedding_dim, POS_DIM, DEP_DIM, DIST_DIM, DIST_DIM, ENTITY_TYPES] }
    }

    /// Arbitrary block widths, for reduced test configurations.
    pub fn with_widths(widths: [usize; 6]) -> Self {
        Self { widths }
    }

    pub fn width(&self) -> usize {
        self.widths.iter().sum()
    }

    pub fn range(&self, kind: BlockKind) -> Range<usize> {
        let k = Self::KINDS.iter().position(|&b| b == kind).unwrap_or(0);
        let start: usize = self.widths[..k].iter().sum();
        start..start + self.widths[k]
    }

    /// Non-empty blocks with their column ranges.
    pub fn blocks(&self) -> impl Iterator<Item = (BlockKind, Range<usize>)> + '_ {
        Self::KINDS.iter().map(|&k| (k, self.range(k))).filter(|(_, r)| !r.is_empty())
    }

    pub fn scope_columns(&self, scope: PerturbScope) -> Range<usize> {
        match scope {
            PerturbScope::Embedding => self.range(BlockKind::Embedding),
            PerturbScope::All => 0..self.width(),
        }
    }
}

/// Signed distance from `token` to `span`: 0 inside, `-k` when `k` positions
/// to the left of the span start, `+k` when `k` positions right of its end,
/// clipped to `±MAX_DISTANCE`.
pub fn relative_distance(token: usize, span: Span) -> i32 {
    let d = if token < span.start {
        -((span.start - token).min(MAX_DISTANCE as usize) as i32)
    } else if token > span.end {
        (token - span.end).min(MAX_DISTANCE as usize) as i32
    } else {
        0
    };
    d.clamp(-MAX_DISTANCE, MAX_DISTANCE)
}

/// Segment ends for piecewise pooling: the last token of each entity.
pub fn segment_boundaries(e1: Span, e2: Span) -> Result<(usize, usize)> {
    if e1.overlaps(&e2) || e2.start < e1.start {
        return Err(Error::Span(format!("entities {e1:?} and {e2:?} overlap or are out of order")));
    }
    Ok((e1.end, e2.end))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntityType {
    Entity1,
    Entity2,
    Entity,
    Outside,
}

impl EntityType {
    pub fn index(self) -> usize {
        self as usize
    }
}

/// String vocabulary with id 0 reserved for unknown entries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    words: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl Vocab {
    pub const UNK: usize = 0;

    pub fn from_words(words: impl IntoIterator<Item = String>) -> Self {
        let mut v = Self::default();
        for w in words {
            if !v.index.contains_key(&w) {
                v.index.insert(w.clone(), v.words.len() + 1);
                v.words.push(w);
            }
        }
        v
    }

    /// Restores the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.words.iter().enumerate().map(|(i, w)| (w.clone(), i + 1)).collect();
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(Self::UNK)
    }

    /// Number of rows a lookup table needs, including the unknown row.
    pub fn rows(&self) -> usize {
        self.words.len() + 1
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Lookup-table ids of one instance; independent of the table values, so it
/// is computed once and re-materialized whenever the tables change.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedInstance {
    pub words: Vec<usize>,
    pub pos: Vec<usize>,
    pub dep: Vec<usize>,
    pub dist1: Vec<usize>,
    pub dist2: Vec<usize>,
    pub entity_types: Vec<EntityType>,
    pub boundaries: (usize, usize),
    pub label: Option<usize>,
}

impl IndexedInstance {
    pub fn valid_len(&self) -> usize {
        self.words.len()
    }
}

/// Model input for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInstance {
    pub x: Matrix,
    pub valid_len: usize,
    pub boundaries: (usize, usize),
    pub mask: Matrix,
    pub layout: FeatureLayout,
    pub label: Option<usize>,
    /// Table ids used to route input gradients into lookup tables.
    pub ids: Option<IndexedInstance>,
}

impl EncodedInstance {
    /// Wraps a raw input matrix, e.g. for reduced test configurations.
    pub fn from_matrix(
        x: Matrix,
        valid_len: usize,
        boundaries: (usize, usize),
        layout: FeatureLayout,
        scope: PerturbScope,
        label: Option<usize>,
    ) -> Result<Self> {
        if layout.width() != x.cols() || valid_len > x.rows() {
            return Err(Error::Dimension(format!(
                "input {}x{} does not match layout width {} / valid length {valid_len}",
                x.rows(),
                x.cols(),
                layout.width()
            )));
        }
        if boundaries.0 > boundaries.1 || (valid_len > 0 && boundaries.1 >= valid_len) {
            return Err(Error::Boundary { s1: boundaries.0, s2: boundaries.1, valid_len });
        }
        let mask = build_mask(x.rows(), valid_len, &layout, scope);
        Ok(Self { x, valid_len, boundaries, mask, layout, label, ids: None })
    }

    /// Perturbation mask for `scope`: ones on in-scope columns of real tokens.
    pub fn mask_for(&self, scope: PerturbScope) -> Matrix {
        build_mask(self.x.rows(), self.valid_len, &self.layout, scope)
    }
}

fn build_mask(rows: usize, valid_len: usize, layout: &FeatureLayout, scope: PerturbScope) -> Matrix {
    let cols = layout.scope_columns(scope);
    let mut m = Matrix::zeros(rows, layout.width());
    for r in 0..valid_len.min(rows) {
        m.row_mut(r)[cols.clone()].fill(1.0);
    }
    m
}

/// Learned lookup tables: fine-tuned word vectors plus POS, dependency and
/// distance tables. Row 0 of the word, POS and dependency tables is the
/// unknown entry. Both distance blocks share one table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTables {
    pub layout: FeatureLayout,
    pub max_len: usize,
    pub word_vocab: Vocab,
    pub words: Matrix,
    pub pos_vocab: Vocab,
    pub pos: Matrix,
    pub dep_vocab: Vocab,
    pub dep: Matrix,
    pub dist: Matrix,
}

impl FeatureTables {
    /// Vocabularies are collected from `instances`. Word rows are copied
    /// from `embeddings` (surfaces missing there share the unknown row);
    /// the other tables are drawn uniform on `±TABLE_INIT_RANGE`.
    pub fn build<'a>(
        instances: impl IntoIterator<Item = &'a Instance>,
        embeddings: &EmbeddingTable,
        max_len: usize,
        rng: &mut RandomSource,
    ) -> Self {
        let mut words = Vec::new();
        let mut pos = Vec::new();
        let mut dep = Vec::new();
        for inst in instances {
            for t in &inst.tokens {
                if embeddings.contains(&t.surface) {
                    words.push(t.surface.clone());
                }
                pos.push(t.pos.clone());
                dep.push(t.dep.clone());
            }
        }
        words.sort_unstable();
        pos.sort_unstable();
        dep.sort_unstable();
        let word_vocab = Vocab::from_words(words);
        let pos_vocab = Vocab::from_words(pos);
        let dep_vocab = Vocab::from_words(dep);

        let dim = embeddings.dimension();
        let mut word_table = Matrix::zeros(word_vocab.rows(), dim);
        word_table.row_mut(Vocab::UNK).copy_from_slice(embeddings.unk());
        for (i, w) in word_vocab.words().iter().enumerate() {
            word_table.row_mut(i + 1).copy_from_slice(embeddings.lookup(w));
        }
        let mut init = |rows, cols| Matrix::filled_with(rows, cols, |_, _| rng.uniform(-TABLE_INIT_RANGE, TABLE_INIT_RANGE));
        let pos_table = init(pos_vocab.rows(), POS_DIM);
        let dep_table = init(dep_vocab.rows(), DEP_DIM);
        let dist_table = init(DIST_TABLE_ROWS, DIST_DIM);
        Self {
            layout: FeatureLayout::standard(dim),
            max_len,
            word_vocab,
            words: word_table,
            pos_vocab,
            pos: pos_table,
            dep_vocab,
            dep: dep_table,
            dist: dist_table,
        }
    }

    /// Restores vocabulary indices after deserialization.
    pub fn reindex(&mut self) {
        self.word_vocab.reindex();
        self.pos_vocab.reindex();
        self.dep_vocab.reindex();
    }

    /// Table ids for `instance`. Sentences longer than `max_len` are pruned;
    /// an instance whose entities do not survive pruning is skipped.
    pub fn index(&self, instance: &Instance) -> Result<IndexedInstance> {
        let (s1, s2) = segment_boundaries(instance.e1, instance.e2)?;
        if instance.e2.end >= self.max_len {
            return Err(Error::InstanceSkipped(format!(
                "entity span {:?} lies beyond the maximum sentence length {}",
                instance.e2, self.max_len
            )));
        }
        let n = instance.tokens.len().min(self.max_len);
        let tokens = &instance.tokens[..n];
        let entity_types = (0..n)
            .map(|i| {
                if instance.e1.contains(i) {
                    EntityType::Entity1
                } else if instance.e2.contains(i) {
                    EntityType::Entity2
                } else if instance.other.iter().any(|s| s.contains(i)) {
                    EntityType::Entity
                } else {
                    EntityType::Outside
                }
            })
            .collect();
        let dist_id = |d: i32| (d + MAX_DISTANCE) as usize;
        Ok(IndexedInstance {
            words: tokens.iter().map(|t| self.word_vocab.id(&t.surface)).collect(),
            pos: tokens.iter().map(|t| self.pos_vocab.id(&t.pos)).collect(),
            dep: tokens.iter().map(|t| self.dep_vocab.id(&t.dep)).collect(),
            dist1: (0..n).map(|i| dist_id(relative_distance(i, instance.e1))).collect(),
            dist2: (0..n).map(|i| dist_id(relative_distance(i, instance.e2))).collect(),
            entity_types,
            boundaries: (s1, s2),
            label: instance.label.map(|l| l.index()),
        })
    }

    /// Looks up the current table values for an indexed instance.
    pub fn materialize(&self, ids: &IndexedInstance, scope: PerturbScope) -> EncodedInstance {
        let layout = self.layout;
        let mut x = Matrix::zeros(self.max_len, layout.width());
        let emb = layout.range(BlockKind::Embedding);
        let pos = layout.range(BlockKind::Pos);
        let dep = layout.range(BlockKind::Dep);
        let d1 = layout.range(BlockKind::Dist1);
        let d2 = layout.range(BlockKind::Dist2);
        let et = layout.range(BlockKind::EntityType);
        for i in 0..ids.valid_len() {
            let row = x.row_mut(i);
            row[emb.clone()].copy_from_slice(self.words.row(ids.words[i]));
            row[pos.clone()].copy_from_slice(self.pos.row(ids.pos[i]));
            row[dep.clone()].copy_from_slice(self.dep.row(ids.dep[i]));
            row[d1.clone()].copy_from_slice(self.dist.row(ids.dist1[i]));
            row[d2.clone()].copy_from_slice(self.dist.row(ids.dist2[i]));
            row[et.start + ids.entity_types[i].index()] = 1.0;
        }
        let valid_len = ids.valid_len();
        EncodedInstance {
            x,
            valid_len,
            boundaries: ids.boundaries,
            mask: build_mask(self.max_len, valid_len, &layout, scope),
            layout,
            label: ids.label,
            ids: Some(ids.clone()),
        }
    }

    pub fn encode(&self, instance: &Instance, scope: PerturbScope) -> Result<EncodedInstance> {
        Ok(self.materialize(&self.index(instance)?, scope))
    }

    pub fn zero_grads(&self) -> TableGrads {
        TableGrads {
            words: BTreeMap::new(),
            pos: Matrix::zeros(self.pos.rows(), self.pos.cols()),
            dep: Matrix::zeros(self.dep.rows(), self.dep.cols()),
            dist: Matrix::zeros(self.dist.rows(), self.dist.cols()),
        }
    }

    /// Routes an input gradient into the lookup tables used by `ids`. The
    /// entity-type one-hot block is fixed and receives nothing.
    pub fn accumulate_grads(&self, ids: &IndexedInstance, d_x: &Matrix, grads: &mut TableGrads) {
        let layout = self.layout;
        let emb = layout.range(BlockKind::Embedding);
        let pos = layout.range(BlockKind::Pos);
        let dep = layout.range(BlockKind::Dep);
        let d1 = layout.range(BlockKind::Dist1);
        let d2 = layout.range(BlockKind::Dist2);
        for i in 0..ids.valid_len() {
            let g = d_x.row(i);
            let w = grads.words.entry(ids.words[i]).or_insert_with(|| vec![0.0; emb.len()]);
            add(w, &g[emb.clone()]);
            add(grads.pos.row_mut(ids.pos[i]), &g[pos.clone()]);
            add(grads.dep.row_mut(ids.dep[i]), &g[dep.clone()]);
            add(grads.dist.row_mut(ids.dist1[i]), &g[d1.clone()]);
            add(grads.dist.row_mut(ids.dist2[i]), &g[d2.clone()]);
        }
    }
}

fn add(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

/// Gradients of the lookup tables. Word rows are sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct TableGrads {
    pub words: BTreeMap<usize, Vec<f64>>,
    pub pos: Matrix,
    pub dep: Matrix,
    pub dist: Matrix,
}

impl TableGrads {
    pub fn sum_squares(&self) -> f64 {
        let sq = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>();
        self.words.values().map(|v| sq(v)).sum::<f64>()
            + sq(self.pos.as_slice())
            + sq(self.dep.as_slice())
            + sq(self.dist.as_slice())
    }
}
