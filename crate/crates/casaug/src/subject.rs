//! Subject recognition: per-token start/end scoring, threshold span
//! decoding, and span pooling into the subject vector consumed downstream.

use crate::autodiff::{Tape, TensorId};
use crate::encoder::EncodedSentence;
use crate::error::{Error, Result};
use crate::params::ParamStore;

/// Start/end probability vectors for one sentence, on the tape.
#[derive(Debug, Clone, Copy)]
pub struct SubjectScores {
    pub start: TensorId,
    pub end: TensorId,
}

/// A decoded (or gold) subject span with its pooled vector.
#[derive(Debug, Clone)]
pub struct SubjectSpan {
    pub start: usize,
    pub end: usize,
    pub v_sub: TensorId,
    pub surface: String,
    pub start_prob: f64,
    pub end_prob: f64,
}

/// Score every token as a potential subject start and end:
/// `σ(w_start·x_i + b_start)` and `σ(w_end·x_i + b_end)`.
pub fn score_subject_positions(
    tape: &mut Tape,
    store: &ParamStore,
    enc: &EncodedSentence,
) -> Result<SubjectScores> {
    if enc.is_empty() {
        return Err(Error::contract("cannot score an empty sentence"));
    }
    let w_start = tape.param(store, "subject.w_start")?;
    let b_start = tape.param(store, "subject.b_start")?;
    let w_end = tape.param(store, "subject.w_end")?;
    let b_end = tape.param(store, "subject.b_end")?;

    let zs = tape.matvec(enc.h, w_start)?;
    let zs = tape.add_scalar(zs, b_start)?;
    let start = tape.sigmoid(zs);

    let ze = tape.matvec(enc.h, w_end)?;
    let ze = tape.add_scalar(ze, b_end)?;
    let end = tape.sigmoid(ze);

    Ok(SubjectScores { start, end })
}

/// Threshold span decoding shared by the subject and object taggers.
///
/// Positions with probability strictly above `threshold` fire. Each fired
/// start pairs with the nearest fired end at an index >= the start and
/// strictly before the next fired start; starts that find no such end are
/// dropped. The result is sorted by start and spans never overlap.
pub fn decode_spans(start_probs: &[f64], end_probs: &[f64], threshold: f64) -> Vec<(usize, usize)> {
    debug_assert!(threshold > 0.0 && threshold < 1.0);
    debug_assert_eq!(start_probs.len(), end_probs.len());
    let n = start_probs.len();
    let starts: Vec<usize> = (0..n).filter(|&i| start_probs[i] > threshold).collect();
    let end_fired: Vec<bool> = (0..n).map(|i| end_probs[i] > threshold).collect();

    let mut spans = Vec::new();
    for (k, &s) in starts.iter().enumerate() {
        let limit = starts.get(k + 1).copied().unwrap_or(n);
        if let Some(e) = (s..limit).find(|&e| end_fired[e]) {
            spans.push((s, e));
        }
    }
    spans
}

/// Mean of the context rows covered by a span.
pub fn subject_vector(
    tape: &mut Tape,
    enc: &EncodedSentence,
    span: (usize, usize),
) -> Result<TensorId> {
    tape.mean_rows(enc.h, span.0, span.1)
}

/// Pool a span into a full [`SubjectSpan`], reading its firing
/// probabilities from the scores.
pub fn make_subject_span(
    tape: &mut Tape,
    enc: &EncodedSentence,
    scores: &SubjectScores,
    span: (usize, usize),
) -> Result<SubjectSpan> {
    let v_sub = subject_vector(tape, enc, span)?;
    Ok(SubjectSpan {
        start: span.0,
        end: span.1,
        v_sub,
        surface: enc.tokens[span.0..=span.1].join(" "),
        start_prob: tape.data(scores.start)[span.0],
        end_prob: tape.data(scores.end)[span.1],
    })
}
