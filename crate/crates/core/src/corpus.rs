//! Relation instances, pre-trained embeddings, unlabeled-pair generation and
//! fold partitioning.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::{format, vec::Vec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Matrix, RandomSource};

/// Seed of the fixed stream that draws the unknown-word vector.
pub const UNK_SEED: u64 = 0x756e_6b5f_7665_6374;
/// Half-width of the uniform range used for the unknown-word vector.
pub const UNK_RANGE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token {
    pub surface: String,
    pub pos: String,
    /// Label of the incoming dependency arc.
    pub dep: String,
}

impl Token {
    pub fn new(surface: impl Into<String>, pos: impl Into<String>, dep: impl Into<String>) -> Self {
        Self { surface: surface.into(), pos: pos.into(), dep: dep.into() }
    }
}

/// Inclusive token-index span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.start <= idx && idx <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Negative => 0,
            Label::Positive => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Label::Negative),
            1 => Some(Label::Positive),
            _ => None,
        }
    }
}

/// A sentence with a candidate entity pair. Labeled instances carry
/// `Some(label)`, unlabeled ones `None`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instance {
    pub tokens: Vec<Token>,
    pub e1: Span,
    pub e2: Span,
    pub other: Vec<Span>,
    pub label: Option<Label>,
}

impl Instance {
    /// Validates spans and orders the pair so that `e1` precedes `e2`.
    pub fn new(tokens: Vec<Token>, e1: Span, e2: Span, other: Vec<Span>, label: Option<Label>) -> Result<Self> {
        if tokens.iter().any(|t| t.surface.is_empty()) {
            return Err(Error::Span(String::from("empty token surface")));
        }
        for s in [&e1, &e2].into_iter().chain(&other) {
            check_span(s, tokens.len())?;
        }
        if e1.overlaps(&e2) {
            return Err(Error::Span(format!("entity spans {e1:?} and {e2:?} overlap")));
        }
        let (e1, e2) = if e2.start < e1.start { (e2, e1) } else { (e1, e2) };
        Ok(Self { tokens, e1, e2, other, label })
    }

    /// Copy without the label.
    pub fn unlabeled(&self) -> Self {
        Self { label: None, ..self.clone() }
    }
}

fn check_span(s: &Span, len: usize) -> Result<()> {
    if s.start > s.end || s.end >= len {
        return Err(Error::Span(format!("span [{}, {}] out of bounds for {len} tokens", s.start, s.end)));
    }
    Ok(())
}

/// A tagged sentence with all recognised entity mentions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    pub entities: Vec<Span>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>, entities: Vec<Span>) -> Result<Self> {
        for s in &entities {
            check_span(s, tokens.len())?;
        }
        Ok(Self { tokens, entities })
    }
}

/// One unlabeled instance per unordered pair of entity mentions; all other
/// mentions of the sentence become `other`. Overlapping pairs are skipped.
pub fn generate_unlabeled(sentences: &[Sentence]) -> Vec<Instance> {
    let mut out = Vec::new();
    for s in sentences {
        let n = s.entities.len();
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (s.entities[i], s.entities[j]);
                let other = s
                    .entities
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != i && k != j)
                    .map(|(_, sp)| *sp)
                    .collect();
                if let Ok(inst) = Instance::new(s.tokens.clone(), a, b, other, None) {
                    out.push(inst);
                }
            }
        }
    }
    out
}

/// Word vectors with an unknown-word fallback.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    words: Vec<String>,
    index: BTreeMap<String, usize>,
    vectors: Matrix,
    unk: Vec<f64>,
    n_max: f64,
}

impl EmbeddingTable {
    /// Builds a table from parallel word/vector lists. Duplicate words keep
    /// their first vector.
    pub fn new(words: Vec<String>, vectors: Matrix) -> Result<Self> {
        if words.len() != vectors.rows() {
            return Err(Error::Dimension(format!("{} words for {} vectors", words.len(), vectors.rows())));
        }
        if !vectors.is_finite() {
            return Err(Error::Dimension(String::from("non-finite embedding component")));
        }
        let mut index = BTreeMap::new();
        for (i, w) in words.iter().enumerate() {
            index.entry(w.clone()).or_insert(i);
        }
        let n_max = vectors.max_abs();
        if n_max == 0.0 {
            return Err(Error::DegenerateEmbeddings);
        }
        let mut rng = RandomSource::new(UNK_SEED);
        let unk = (0..vectors.cols()).map(|_| rng.uniform(-UNK_RANGE, UNK_RANGE)).collect();
        Ok(Self { words, index, vectors, unk, n_max })
    }

    pub fn dimension(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Largest absolute component over all loaded vectors.
    pub fn n_max(&self) -> f64 {
        self.n_max
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index.get(word).map(|&i| self.vectors.row(i))
    }

    /// Vector for `word`, or the unknown-word vector.
    pub fn lookup(&self, word: &str) -> &[f64] {
        self.get(word).unwrap_or(&self.unk)
    }

    pub fn unk(&self) -> &[f64] {
        &self.unk
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }
}

/// Divides every loaded vector by the table's largest absolute component.
pub fn normalize_embeddings(mut table: EmbeddingTable) -> Result<EmbeddingTable> {
    if table.n_max == 0.0 {
        return Err(Error::DegenerateEmbeddings);
    }
    let inv = 1.0 / table.n_max;
    table.vectors.as_mut_slice().iter_mut().for_each(|v| *v *= inv);
    table.n_max = table.vectors.max_abs();
    Ok(table)
}

/// Seeded shuffle of `0..n` dealt round-robin into `k` folds. Each fold is
/// returned in ascending order.
pub fn split_folds(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::Folds { n, k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    RandomSource::new(seed).shuffle(&mut order);
    let mut folds = alloc::vec![Vec::with_capacity(n / k + 1); k];
    for (pos, idx) in order.into_iter().enumerate() {
        folds[pos % k].push(idx);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}
