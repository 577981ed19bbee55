//! Composite training loss with teacher forcing, the optimizer, the epoch
//! loop, and the metrics log.
//!
//! Each step runs the full forward path with one sampled gold subject (the
//! object taggers see the gold span, not a decoded one) and sums four
//! terms: subject tagging loss, object tagging loss over relations the
//! subject holds, a null-object term over the remaining relations, and the
//! pre-classification loss.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, TensorId};
use crate::corpus::AnnotatedSentence;
use crate::encoder::{encode_tokens, TokenVocabulary};
use crate::enhance::{enhance, preclassification_loss, preclassify, RelationTargets};
use crate::error::{Error, Result};
use crate::eval;
use crate::lexicon::{build_lexicon, top_n_similar, SubjectLexicon};
use crate::model::{Model, ModelConfig};
use crate::object::score_object_positions;
use crate::params::ParamStore;
use crate::subject::{score_subject_positions, subject_vector, SubjectScores};

/// When lexicon vectors are recomputed from the evolving encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LexiconRefresh {
    /// Rebuild at the start of every epoch (default; a from-scratch encoder
    /// has no meaningful vectors at initialization).
    PerEpoch,
    /// Build once from the initial encoder and keep it.
    Frozen,
}

/// Per-term weights on the composite loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub subject: f64,
    pub object: f64,
    pub null_object: f64,
    pub preclass: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            subject: 1.0,
            object: 1.0,
            null_object: 1.0,
            preclass: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub threshold: f64,
    pub seed: u64,
    pub dev_fraction: f64,
    pub lexicon_refresh: LexiconRefresh,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 8,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            threshold: 0.5,
            seed: 0,
            dev_fraction: 0.1,
            lexicon_refresh: LexiconRefresh::PerEpoch,
            weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.learning_rate < 0.0 {
            return Err(Error::config("learning_rate must be >= 0"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::config("threshold must be in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.dev_fraction) {
            return Err(Error::config("dev_fraction must be in [0, 1)"));
        }
        Ok(())
    }
}

/// The four loss terms and their weighted total, as plain values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub subject_loss: f64,
    pub object_loss: f64,
    pub null_object_loss: f64,
    pub preclass_loss: f64,
    pub total: f64,
}

/// Subject tagging loss: mean of the start-position BCE (labels 1 at every
/// gold start) and the end-position BCE.
pub fn subject_loss(
    tape: &mut Tape,
    scores: &SubjectScores,
    gold_spans: &[(usize, usize)],
    sentence_len: usize,
) -> Result<TensorId> {
    let mut start_labels = vec![0.0; sentence_len];
    let mut end_labels = vec![0.0; sentence_len];
    for &(s, e) in gold_spans {
        if e >= sentence_len {
            return Err(Error::contract(format!(
                "gold span ({s}, {e}) out of bounds for {sentence_len} tokens"
            )));
        }
        start_labels[s] = 1.0;
        end_labels[e] = 1.0;
    }
    let sl = tape.constant(start_labels, vec![sentence_len])?;
    let el = tape.constant(end_labels, vec![sentence_len])?;
    let bce_start = tape.binary_cross_entropy(scores.start, sl)?;
    let bce_end = tape.binary_cross_entropy(scores.end, el)?;
    let sum = tape.add(bce_start, bce_end)?;
    Ok(tape.scale(sum, 0.5))
}

/// Object tagging losses for one sampled subject: the BCE over the rows of
/// relations the subject holds in this sentence (labels mark gold object
/// spans) and the null-object BCE over every remaining relation row with
/// all-zero labels. An empty side contributes an exact zero.
pub fn object_loss(
    tape: &mut Tape,
    scores: &crate::object::ObjectScores,
    gold_objects: &BTreeMap<usize, Vec<(usize, usize)>>,
    num_rel: usize,
    sentence_len: usize,
) -> Result<(TensorId, TensorId)> {
    let mut held_rows = Vec::new();
    let mut held_labels = Vec::new();
    let mut null_rows = Vec::new();
    for r in 0..num_rel {
        match gold_objects.get(&r) {
            Some(spans) => {
                let mut start_labels = vec![0.0; sentence_len];
                let mut end_labels = vec![0.0; sentence_len];
                for &(s, e) in spans {
                    start_labels[s] = 1.0;
                    end_labels[e] = 1.0;
                }
                held_rows.push(scores.start[r]);
                held_labels.extend(start_labels);
                held_rows.push(scores.end[r]);
                held_labels.extend(end_labels);
            }
            None => {
                null_rows.push(scores.start[r]);
                null_rows.push(scores.end[r]);
            }
        }
    }

    let object = if held_rows.is_empty() {
        tape.scalar(0.0)
    } else {
        let preds = tape.stack_rows(&held_rows)?;
        let labels = tape.constant(held_labels, vec![held_rows.len(), sentence_len])?;
        tape.binary_cross_entropy(preds, labels)?
    };
    let null_object = if null_rows.is_empty() {
        tape.scalar(0.0)
    } else {
        let preds = tape.stack_rows(&null_rows)?;
        let zeros = tape.constant(
            vec![0.0; null_rows.len() * sentence_len],
            vec![null_rows.len(), sentence_len],
        )?;
        tape.binary_cross_entropy(preds, zeros)?
    };
    Ok((object, null_object))
}

/// Distinct gold subject spans of a sentence, sorted.
pub fn unique_subject_spans(sentence: &AnnotatedSentence) -> Vec<(usize, usize)> {
    let mut spans: Vec<(usize, usize)> = sentence
        .triples
        .iter()
        .map(|t| t.subject_span)
        .collect();
    spans.sort();
    spans.dedup();
    spans
}

/// Build the full teacher-forced loss for one sentence on a fresh tape.
/// `subject_choice` indexes into [`unique_subject_spans`].
#[allow(clippy::too_many_arguments)]
pub fn sentence_loss(
    tape: &mut Tape,
    store: &ParamStore,
    config: &ModelConfig,
    vocab: &TokenVocabulary,
    lexicon: Option<&SubjectLexicon>,
    targets: &RelationTargets,
    sentence: &AnnotatedSentence,
    subject_choice: usize,
    weights: &LossWeights,
) -> Result<(LossBreakdown, TensorId)> {
    let spans = unique_subject_spans(sentence);
    if spans.is_empty() {
        return Err(Error::contract(
            "sentence_loss: sentence has no gold subjects",
        ));
    }
    let span = spans[subject_choice % spans.len()];

    let enc = encode_tokens(
        tape,
        store,
        vocab,
        &config.encoder(),
        sentence.tokens.clone(),
    )?;
    let n = enc.len();

    let scores = score_subject_positions(tape, store, &enc)?;
    // spans can exceed the encoded length after truncation; clip labels
    let in_bounds: Vec<(usize, usize)> = spans.iter().copied().filter(|&(_, e)| e < n).collect();
    let l_subject = subject_loss(tape, &scores, &in_bounds, n)?;

    let v_sub = subject_vector(tape, &enc, (span.0.min(n - 1), span.1.min(n - 1)))?;

    let (h_aug, l_preclass) = if config.disable_enhancement {
        let zero = tape.constant(vec![0.0; config.dim], vec![config.dim])?;
        (zero, tape.scalar(0.0))
    } else {
        let lex = lexicon.ok_or_else(|| {
            Error::contract("sentence_loss: enhancement enabled but no lexicon given")
        })?;
        let v_vals = tape.data(v_sub).to_vec();
        let sim = top_n_similar(&v_vals, lex, config.lexicon_n, config.distance)?;
        let w = preclassify(tape, store, v_sub, config.preclass_norm)?;
        let subject_string = sentence
            .triples
            .iter()
            .find(|t| t.subject_span == span)
            .map(|t| t.triple.subject.clone())
            .unwrap_or_default();
        let target = targets.get(&subject_string);
        let l = if target.has_supervision() {
            preclassification_loss(tape, w, &target)?
        } else {
            tape.scalar(0.0)
        };
        (enhance(tape, v_sub, &sim, w)?.h_aug, l)
    };

    let object_scores =
        score_object_positions(tape, store, &enc, v_sub, h_aug, config.num_rel)?;
    let mut gold_objects: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for t in &sentence.triples {
        if t.subject_span == span && t.object_span.1 < n {
            gold_objects
                .entry(t.triple.relation)
                .or_default()
                .push(t.object_span);
        }
    }
    let (l_object, l_null) = object_loss(tape, &object_scores, &gold_objects, config.num_rel, n)?;

    let ws = tape.scale(l_subject, weights.subject);
    let wo = tape.scale(l_object, weights.object);
    let wn = tape.scale(l_null, weights.null_object);
    let wp = tape.scale(l_preclass, weights.preclass);
    let t1 = tape.add(ws, wo)?;
    let t2 = tape.add(t1, wn)?;
    let total = tape.add(t2, wp)?;

    Ok((
        LossBreakdown {
            subject_loss: tape.value(l_subject),
            object_loss: tape.value(l_object),
            null_object_loss: tape.value(l_null),
            preclass_loss: tape.value(l_preclass),
            total: tape.value(total),
        },
        total,
    ))
}

/// Adam optimizer with bias correction; state keyed by parameter name.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            learning_rate,
            beta1,
            beta2,
            eps,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self::new(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Vec<f64>>) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (name, grad) in grads {
            let param = match params.get_mut(name) {
                Some(p) => p,
                None => continue,
            };
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; grad.len()]);
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; grad.len()]);
            for i in 0..grad.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * grad[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                param.data[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// One line of the metrics log (newline-delimited JSON on disk).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub subject_loss: f64,
    pub object_loss: f64,
    pub null_object_loss: f64,
    pub preclass_loss: f64,
    pub total: f64,
    pub dev_f1: Option<f64>,
}

#[derive(Debug)]
pub struct FitOutcome {
    pub metrics: Vec<EpochMetrics>,
    pub lexicon: Option<SubjectLexicon>,
    /// Sentences without gold triples, skipped during training.
    pub skipped: usize,
}

/// Train in place. Per epoch: optional lexicon refresh, seeded shuffle,
/// one uniformly sampled gold subject per sentence, gradient accumulation
/// per batch, and an Adam update. Deterministic given (corpus, config,
/// seed).
pub fn fit(model: &mut Model, corpus: &[AnnotatedSentence], cfg: &TrainConfig) -> Result<FitOutcome> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::input("training corpus is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // seeded dev split
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng);
    let dev_count = (corpus.len() as f64 * cfg.dev_fraction).floor() as usize;
    let dev_idx: Vec<usize> = order[..dev_count].to_vec();
    let train_idx: Vec<usize> = order[dev_count..].to_vec();

    let mut trainable: Vec<usize> = train_idx
        .iter()
        .copied()
        .filter(|&i| !corpus[i].triples.is_empty())
        .collect();
    trainable.sort();
    let skipped = train_idx.len() - trainable.len();
    if trainable.is_empty() {
        return Err(Error::input("no training sentence has gold triples"));
    }

    let train_sentences: Vec<&AnnotatedSentence> =
        trainable.iter().map(|&i| &corpus[i]).collect();
    let targets = RelationTargets::build(
        train_sentences.iter().copied(),
        model.config.num_rel,
    );

    let mut adam = Adam::from_config(cfg);
    let mut lexicon: Option<SubjectLexicon> = None;
    let mut metrics = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        if !model.config.disable_enhancement {
            let needs_build = lexicon.is_none() || cfg.lexicon_refresh == LexiconRefresh::PerEpoch;
            if needs_build {
                lexicon = Some(build_lexicon(
                    model,
                    train_sentences.iter().copied(),
                    model.config.lexicon_m,
                    &format!("fit-seed{}-epoch{epoch}", cfg.seed),
                )?);
            }
        }

        let mut epoch_order = trainable.clone();
        epoch_order.shuffle(&mut rng);

        let mut sums = LossBreakdown {
            subject_loss: 0.0,
            object_loss: 0.0,
            null_object_loss: 0.0,
            preclass_loss: 0.0,
            total: 0.0,
        };
        let mut count = 0usize;

        for batch in epoch_order.chunks(cfg.batch_size) {
            let mut grads: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for &idx in batch {
                let sentence = &corpus[idx];
                let span_count = unique_subject_spans(sentence).len();
                let choice = rng.random_range(0..span_count);
                let mut tape = Tape::new();
                let (breakdown, total) = sentence_loss(
                    &mut tape,
                    &model.params,
                    &model.config,
                    &model.vocab,
                    lexicon.as_ref(),
                    &targets,
                    sentence,
                    choice,
                    &cfg.weights,
                )?;
                if !breakdown.total.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        detail: format!(
                            "non-finite loss on {:?}: {breakdown:?}",
                            sentence.text
                        ),
                    });
                }
                tape.backward(total)?;
                for (name, grad) in tape.param_grads() {
                    let acc = grads.entry(name).or_insert_with(|| vec![0.0; grad.len()]);
                    for (a, g) in acc.iter_mut().zip(&grad) {
                        *a += g;
                    }
                }
                sums.subject_loss += breakdown.subject_loss;
                sums.object_loss += breakdown.object_loss;
                sums.null_object_loss += breakdown.null_object_loss;
                sums.preclass_loss += breakdown.preclass_loss;
                sums.total += breakdown.total;
                count += 1;
            }
            let scale = 1.0 / batch.len() as f64;
            for grad in grads.values_mut() {
                for g in grad.iter_mut() {
                    *g *= scale;
                }
            }
            adam.step(&mut model.params, &grads);
        }

        let denom = count.max(1) as f64;
        let dev_f1 = if dev_idx.is_empty() {
            None
        } else {
            let dev: Vec<&AnnotatedSentence> = dev_idx.iter().map(|&i| &corpus[i]).collect();
            Some(eval::micro_f1(model, lexicon.as_ref(), &dev, cfg.threshold)?)
        };
        metrics.push(EpochMetrics {
            epoch,
            subject_loss: sums.subject_loss / denom,
            object_loss: sums.object_loss / denom,
            null_object_loss: sums.null_object_loss / denom,
            preclass_loss: sums.preclass_loss / denom,
            total: sums.total / denom,
            dev_f1,
        });
    }

    // per-epoch mode tracks the encoder, so the shipped lexicon is rebuilt
    // from the trained weights; frozen mode ships the lexicon the model
    // actually trained against
    if !model.config.disable_enhancement && cfg.lexicon_refresh == LexiconRefresh::PerEpoch {
        lexicon = Some(build_lexicon(
            model,
            train_sentences.iter().copied(),
            model.config.lexicon_m,
            &format!("fit-seed{}-final", cfg.seed),
        )?);
    }

    Ok(FitOutcome {
        metrics,
        lexicon,
        skipped,
    })
}

pub fn write_metrics_log(path: &std::path::Path, metrics: &[EpochMetrics]) -> Result<()> {
    let mut out = String::new();
    for m in metrics {
        out.push_str(&serde_json::to_string(m)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
