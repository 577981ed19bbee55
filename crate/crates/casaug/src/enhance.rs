//! Semantic enhancement of candidate subjects: pre-classify the subject
//! over relations, attend over its similar vocabulary within each relation,
//! and blend the per-relation enhancement vectors by the pre-classification
//! weights. Also builds the soft relation labels and the pre-classification
//! loss term.

use std::collections::BTreeMap;

use crate::autodiff::{Tape, TensorId};
use crate::corpus::AnnotatedSentence;
use crate::error::{Error, Result};
use crate::lexicon::SimilarVocab;
use crate::model::PreclassNorm;
use crate::params::ParamStore;

/// Output of the enhancement step, all on the tape:
/// relation weights `w` ([R]), the per-relation enhancement vectors stacked
/// as an [R×D] matrix, and their `w`-weighted blend `h_aug` ([D]).
#[derive(Debug, Clone, Copy)]
pub struct EnhancementResult {
    pub w: TensorId,
    pub v_aug_per_rel: TensorId,
    pub h_aug: TensorId,
}

/// Relation weights for a subject vector: the classification layer
/// followed by the configured normalization.
pub fn preclassify(
    tape: &mut Tape,
    store: &ParamStore,
    v_sub: TensorId,
    norm: PreclassNorm,
) -> Result<TensorId> {
    let w_cls = tape.param(store, "preclass.w")?;
    let b_cls = tape.param(store, "preclass.b")?;
    let logits = tape.matvec(w_cls, v_sub)?;
    let logits = tape.add(logits, b_cls)?;
    match norm {
        PreclassNorm::Softmax => tape.softmax(logits),
        PreclassNorm::Sigmoid => Ok(tape.sigmoid(logits)),
    }
}

/// Attention weights of a word set against a subject vector: softmax over
/// the dot products.
pub fn attention_weights(tape: &mut Tape, v_sub: TensorId, words: TensorId) -> Result<TensorId> {
    if tape.shape(words)[0] == 0 {
        return Err(Error::contract("attention_weights: empty word list"));
    }
    let dots = tape.matvec(words, v_sub)?;
    tape.softmax(dots)
}

/// Convex combination of word vectors under attention weights.
pub fn relation_enhancement(tape: &mut Tape, weights: TensorId, words: TensorId) -> Result<TensorId> {
    tape.matvec_t(words, weights)
}

/// Full enhancement: per relation, attend over that relation's similar
/// vocabulary (relations with no entries contribute a zero vector), then
/// blend the per-relation vectors with the pre-classification weights.
pub fn enhance(
    tape: &mut Tape,
    v_sub: TensorId,
    sim: &SimilarVocab,
    w: TensorId,
) -> Result<EnhancementResult> {
    let num_rel = sim.per_relation.len();
    if tape.shape(w) != [num_rel] {
        return Err(Error::dimension("enhance", tape.shape(w), &[num_rel]));
    }
    let dim = tape.shape(v_sub)[0];
    let mut v_augs = Vec::with_capacity(num_rel);
    for entries in &sim.per_relation {
        if entries.is_empty() {
            v_augs.push(tape.constant(vec![0.0; dim], vec![dim])?);
            continue;
        }
        let mut flat = Vec::with_capacity(entries.len() * dim);
        for e in entries {
            if e.vector.len() != dim {
                return Err(Error::dimension("enhance", &[e.vector.len()], &[dim]));
            }
            flat.extend_from_slice(&e.vector);
        }
        let words = tape.constant(flat, vec![entries.len(), dim])?;
        let att = attention_weights(tape, v_sub, words)?;
        v_augs.push(relation_enhancement(tape, att, words)?);
    }
    let v_aug_per_rel = tape.stack_rows(&v_augs)?;
    let h_aug = tape.matvec_t(v_aug_per_rel, w)?;
    Ok(EnhancementResult {
        w,
        v_aug_per_rel,
        h_aug,
    })
}

/// Soft relation label of a subject: per-relation occurrence counts over
/// the training triples, normalized into a distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationTargetLabel {
    pub counts: Vec<u64>,
    pub probs: Vec<f64>,
}

impl RelationTargetLabel {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total: u64 = counts.iter().sum();
        let probs = if total == 0 {
            vec![0.0; counts.len()]
        } else {
            counts.iter().map(|&c| c as f64 / total as f64).collect()
        };
        RelationTargetLabel { counts, probs }
    }

    /// False for subjects that never appear in a gold triple; such
    /// subjects are excluded from the pre-classification loss.
    pub fn has_supervision(&self) -> bool {
        self.counts.iter().any(|&c| c > 0)
    }
}

/// Count how often `subject` appears in each relation across the corpus
/// and normalize. A subject absent from the corpus yields all-zero counts.
pub fn build_relation_target(
    subject: &str,
    corpus: &[AnnotatedSentence],
    num_rel: usize,
) -> RelationTargetLabel {
    let mut counts = vec![0u64; num_rel];
    for sentence in corpus {
        for aligned in &sentence.triples {
            if aligned.triple.subject == subject {
                counts[aligned.triple.relation] += 1;
            }
        }
    }
    RelationTargetLabel::from_counts(counts)
}

/// Precomputed targets for every subject string in a corpus.
#[derive(Debug, Clone, Default)]
pub struct RelationTargets {
    map: BTreeMap<String, RelationTargetLabel>,
    num_rel: usize,
}

impl RelationTargets {
    pub fn build<'a, I>(corpus: I, num_rel: usize) -> Self
    where
        I: IntoIterator<Item = &'a AnnotatedSentence>,
    {
        let mut counts: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        for sentence in corpus {
            for aligned in &sentence.triples {
                counts
                    .entry(aligned.triple.subject.clone())
                    .or_insert_with(|| vec![0u64; num_rel])[aligned.triple.relation] += 1;
            }
        }
        RelationTargets {
            map: counts
                .into_iter()
                .map(|(s, c)| (s, RelationTargetLabel::from_counts(c)))
                .collect(),
            num_rel,
        }
    }

    pub fn get(&self, subject: &str) -> RelationTargetLabel {
        self.map
            .get(subject)
            .cloned()
            .unwrap_or_else(|| RelationTargetLabel::from_counts(vec![0; self.num_rel]))
    }

    pub fn subjects(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|s| s.as_str())
    }
}

/// Mean binary cross entropy between the relation weights and the soft
/// target label. Callers must exclude unsupervised subjects upstream.
pub fn preclassification_loss(
    tape: &mut Tape,
    w: TensorId,
    target: &RelationTargetLabel,
) -> Result<TensorId> {
    if !target.has_supervision() {
        return Err(Error::contract(
            "preclassification_loss: subject has no supervision",
        ));
    }
    if tape.shape(w) != [target.probs.len()] {
        return Err(Error::dimension(
            "preclassification_loss",
            tape.shape(w),
            &[target.probs.len()],
        ));
    }
    let t = tape.constant(target.probs.clone(), vec![target.probs.len()])?;
    tape.binary_cross_entropy(w, t)
}
