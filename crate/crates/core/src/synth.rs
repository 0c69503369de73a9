//! Template-sentence corpus where the word between the two entities decides
//! the relation label. Used for smoke runs and end-to-end tests.

use alloc::string::{String, ToString};
use alloc::{format, vec, vec::Vec};

use crate::corpus::{EmbeddingTable, Instance, Label, Sentence, Span, Token};
use crate::numcore::{Matrix, RandomSource};

pub const POSITIVE_TRIGGERS: [&str; 5] = ["binds", "activates", "phosphorylates", "inhibits", "recruits"];
pub const NEGATIVE_TRIGGERS: [&str; 5] = ["and", "or", "versus", "unlike", "near"];
const FILLERS: [&str; 12] = ["the", "a", "protein", "strongly", "directly", "in", "vivo", "vitro", "cells", "also", "was", "shown"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub instances: usize,
    pub entity_names: usize,
    pub embedding_dim: usize,
    /// Embedding components are drawn uniform on `±embedding_scale`.
    pub embedding_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { instances: 500, entity_names: 30, embedding_dim: 50, embedding_scale: 3.0, seed: 7 }
    }
}

pub struct SyntheticCorpus {
    pub instances: Vec<Instance>,
    pub embeddings: EmbeddingTable,
}

fn entity(i: usize) -> String {
    format!("PROT{i}")
}

fn filler_run(rng: &mut RandomSource, max: usize, out: &mut Vec<Token>) {
    for _ in 0..rng.below(max + 1) {
        out.push(Token::new(FILLERS[rng.below(FILLERS.len())], "DT", "dep"));
    }
}

/// Vocabulary of every word the generator can emit.
pub fn vocabulary(entity_names: usize) -> Vec<String> {
    let mut words: Vec<String> = (0..entity_names).map(entity).collect();
    words.extend(POSITIVE_TRIGGERS.iter().chain(&NEGATIVE_TRIGGERS).chain(&FILLERS).map(|w| w.to_string()));
    words.extend(["with", "."].iter().map(|w| w.to_string()));
    words
}

/// Random embedding table over [`vocabulary`].
pub fn embeddings(cfg: &SyntheticConfig) -> EmbeddingTable {
    let words = vocabulary(cfg.entity_names);
    let mut rng = RandomSource::with_stream(cfg.seed, 1);
    let m = Matrix::filled_with(words.len(), cfg.embedding_dim, |_, _| rng.uniform(-cfg.embedding_scale, cfg.embedding_scale));
    EmbeddingTable::new(words, m).expect("synthetic embeddings are non-degenerate")
}

/// Sentence `fillers E1 fillers TRIGGER fillers E2 fillers [with E3] .`,
/// labeled positive exactly when the trigger is a positive one. Labels
/// alternate so the corpus is balanced.
pub fn generate(cfg: &SyntheticConfig) -> SyntheticCorpus {
    let mut rng = RandomSource::with_stream(cfg.seed, 0);
    let mut instances = Vec::with_capacity(cfg.instances);
    for i in 0..cfg.instances {
        let positive = i % 2 == 0;
        let mut tokens = Vec::new();
        filler_run(&mut rng, 2, &mut tokens);
        let a = rng.below(cfg.entity_names);
        let mut b = rng.below(cfg.entity_names);
        if b == a {
            b = (b + 1) % cfg.entity_names;
        }
        let e1 = Span::new(tokens.len(), tokens.len());
        tokens.push(Token::new(entity(a), "NNP", "nsubj"));
        filler_run(&mut rng, 1, &mut tokens);
        let trigger = if positive {
            POSITIVE_TRIGGERS[rng.below(POSITIVE_TRIGGERS.len())]
        } else {
            NEGATIVE_TRIGGERS[rng.below(NEGATIVE_TRIGGERS.len())]
        };
        tokens.push(Token::new(trigger, "VBZ", "root"));
        filler_run(&mut rng, 1, &mut tokens);
        let e2 = Span::new(tokens.len(), tokens.len());
        tokens.push(Token::new(entity(b), "NNP", "dobj"));
        filler_run(&mut rng, 2, &mut tokens);
        let mut other = Vec::new();
        if rng.below(4) == 0 {
            tokens.push(Token::new("with", "IN", "prep"));
            other.push(Span::new(tokens.len(), tokens.len()));
            tokens.push(Token::new(entity(rng.below(cfg.entity_names)), "NNP", "pobj"));
        }
        tokens.push(Token::new(".", ".", "punct"));
        let label = if positive { Label::Positive } else { Label::Negative };
        instances.push(Instance::new(tokens, e1, e2, other, Some(label)).expect("template spans are valid"));
    }
    SyntheticCorpus { instances, embeddings: embeddings(cfg) }
}

/// Sentences with two to four entity mentions for unlabeled-pair generation.
pub fn sentences(cfg: &SyntheticConfig, count: usize) -> Vec<Sentence> {
    let mut rng = RandomSource::with_stream(cfg.seed, 2);
    (0..count)
        .map(|_| {
            let mentions = 2 + rng.below(3);
            let mut tokens = vec![];
            let mut spans = vec![];
            for m in 0..mentions {
                filler_run(&mut rng, 1, &mut tokens);
                spans.push(Span::new(tokens.len(), tokens.len()));
                tokens.push(Token::new(entity(rng.below(cfg.entity_names)), "NNP", "dep"));
                if m + 1 < mentions {
                    let pool: &[&str] = if rng.below(2) == 0 { &POSITIVE_TRIGGERS } else { &NEGATIVE_TRIGGERS };
                    tokens.push(Token::new(pool[rng.below(pool.len())], "VBZ", "root"));
                }
            }
            tokens.push(Token::new(".", ".", "punct"));
            Sentence::new(tokens, spans).expect("template spans are valid")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_balanced_and_deterministic() {
        let cfg = SyntheticConfig { instances: 40, ..SyntheticConfig::default() };
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(a.instances, b.instances);
        let pos = a.instances.iter().filter(|i| i.label == Some(Label::Positive)).count();
        assert_eq!(pos, 20);
        for inst in &a.instances {
            assert!(inst.tokens.iter().all(|t| a.embeddings.contains(&t.surface)));
            let between = &inst.tokens[inst.e1.end + 1..inst.e2.start];
            let has_positive = between.iter().any(|t| POSITIVE_TRIGGERS.contains(&t.surface.as_str()));
            assert_eq!(has_positive, inst.label == Some(Label::Positive));
        }
    }

    #[test]
    fn sentences_have_several_mentions() {
        let s = sentences(&SyntheticConfig::default(), 20);
        assert!(s.iter().all(|s| (2..=4).contains(&s.entities.len())));
    }
}
