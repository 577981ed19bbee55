//! Per-relation object recognition conditioned on the subject vector and
//! its enhancement, plus end-to-end triple extraction.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, TensorId};
use crate::encoder::{encode, EncodedSentence};
use crate::enhance::{enhance, preclassify};
use crate::error::{Error, Result};
use crate::lexicon::{top_n_similar, SubjectLexicon};
use crate::model::Model;
use crate::params::ParamStore;
use crate::subject::{decode_spans, make_subject_span, score_subject_positions, SubjectSpan};

/// Per-relation start/end probability vectors (each `[N]`), indexed by
/// relation id.
#[derive(Debug, Clone)]
pub struct ObjectScores {
    pub start: Vec<TensorId>,
    pub end: Vec<TensorId>,
}

/// Score every token as an object start/end for every relation:
/// `σ(w_r·(x_i + v_sub + h_aug) + b_r)`. Passing a zero `h_aug` yields the
/// plain cascade scores unchanged.
pub fn score_object_positions(
    tape: &mut Tape,
    store: &ParamStore,
    enc: &EncodedSentence,
    v_sub: TensorId,
    h_aug: TensorId,
    num_rel: usize,
) -> Result<ObjectScores> {
    let cond = tape.add(v_sub, h_aug)?;
    let h_in = tape.add_row_broadcast(enc.h, cond)?;

    let mut start = Vec::with_capacity(num_rel);
    let mut end = Vec::with_capacity(num_rel);
    for r in 0..num_rel {
        let w_s = tape.param(store, &format!("object.r{r}.w_start"))?;
        let b_s = tape.param(store, &format!("object.r{r}.b_start"))?;
        let z_s = tape.matvec(h_in, w_s)?;
        let z_s = tape.add_scalar(z_s, b_s)?;
        start.push(tape.sigmoid(z_s));

        let w_e = tape.param(store, &format!("object.r{r}.w_end"))?;
        let b_e = tape.param(store, &format!("object.r{r}.b_end"))?;
        let z_e = tape.matvec(h_in, w_e)?;
        let z_e = tape.add_scalar(z_e, b_e)?;
        end.push(tape.sigmoid(z_e));
    }
    Ok(ObjectScores { start, end })
}

/// A fully decoded triple with spans, surfaces, and a confidence used only
/// for deterministic output ordering (the minimum of the four firing
/// probabilities).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedTriple {
    pub subject: String,
    pub subject_span: (usize, usize),
    pub relation: usize,
    pub object: String,
    pub object_span: (usize, usize),
    pub confidence: f64,
}

/// Decode object spans per relation (same pairing rule as subject decoding)
/// and assemble triples for one subject. Relations with no fired span yield
/// nothing.
pub fn decode_triples(
    tape: &Tape,
    scores: &ObjectScores,
    subject: &SubjectSpan,
    enc: &EncodedSentence,
    threshold: f64,
) -> Vec<ExtractedTriple> {
    let mut triples = Vec::new();
    for r in 0..scores.start.len() {
        let start_probs = tape.data(scores.start[r]);
        let end_probs = tape.data(scores.end[r]);
        for (os, oe) in decode_spans(start_probs, end_probs, threshold) {
            let confidence = subject
                .start_prob
                .min(subject.end_prob)
                .min(start_probs[os])
                .min(end_probs[oe]);
            triples.push(ExtractedTriple {
                subject: subject.surface.clone(),
                subject_span: (subject.start, subject.end),
                relation: r,
                object: enc.tokens[os..=oe].join(" "),
                object_span: (os, oe),
                confidence,
            });
        }
    }
    triples
}

/// Full pipeline on one sentence: encode, decode subjects, enhance each,
/// decode objects per relation, deduplicate on (subject span, relation,
/// object span), and order by descending confidence.
pub fn extract(
    model: &Model,
    lexicon: Option<&SubjectLexicon>,
    sentence: &str,
    threshold: f64,
) -> Result<Vec<ExtractedTriple>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::config(format!(
            "threshold must be in (0, 1), got {threshold}"
        )));
    }
    if !model.config.disable_enhancement && lexicon.is_none() {
        return Err(Error::contract(
            "extraction with enhancement enabled needs a lexicon",
        ));
    }

    let mut tape = Tape::new();
    let enc = encode(
        &mut tape,
        &model.params,
        &model.vocab,
        &model.config.encoder(),
        sentence,
    )?;
    let subject_scores = score_subject_positions(&mut tape, &model.params, &enc)?;
    let spans = decode_spans(
        tape.data(subject_scores.start),
        tape.data(subject_scores.end),
        threshold,
    );

    let mut seen = BTreeSet::new();
    let mut triples = Vec::new();
    for span in spans {
        let subject = make_subject_span(&mut tape, &enc, &subject_scores, span)?;
        let h_aug = if model.config.disable_enhancement {
            tape.constant(vec![0.0; model.config.dim], vec![model.config.dim])?
        } else {
            let lex = lexicon.unwrap();
            let v_sub_values = tape.data(subject.v_sub).to_vec();
            let sim = top_n_similar(
                &v_sub_values,
                lex,
                model.config.lexicon_n,
                model.config.distance,
            )?;
            let w = preclassify(
                &mut tape,
                &model.params,
                subject.v_sub,
                model.config.preclass_norm,
            )?;
            enhance(&mut tape, subject.v_sub, &sim, w)?.h_aug
        };
        let scores = score_object_positions(
            &mut tape,
            &model.params,
            &enc,
            subject.v_sub,
            h_aug,
            model.config.num_rel,
        )?;
        for t in decode_triples(&tape, &scores, &subject, &enc, threshold) {
            let key = (t.subject_span, t.relation, t.object_span);
            if seen.insert(key) {
                triples.push(t);
            }
        }
    }

    triples.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.subject_span.cmp(&b.subject_span))
            .then(a.relation.cmp(&b.relation))
            .then(a.object_span.cmp(&b.object_span))
    });
    Ok(triples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::sigmoid_scalar;
    use crate::encoder::{encode_tokens, TokenVocabulary};
    use crate::model::ModelConfig;

    fn model(dim: usize, num_rel: usize) -> Model {
        let config = ModelConfig {
            dim,
            context_layers: 0,
            max_len: 16,
            num_rel,
            ..ModelConfig::default()
        };
        let vocab = TokenVocabulary::build(&["alpha beta gamma delta"], 1).unwrap();
        let names = (0..num_rel).map(|r| format!("r{r}")).collect();
        Model::init(config, vocab, names, 19).unwrap()
    }

    fn enc_for(m: &Model, tape: &mut Tape, words: &[&str]) -> EncodedSentence {
        encode_tokens(
            tape,
            &m.params,
            &m.vocab,
            &m.config.encoder(),
            words.iter().map(|w| w.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_params_give_half_probs() {
        let config = ModelConfig {
            dim: 4,
            context_layers: 0,
            max_len: 8,
            num_rel: 2,
            ..ModelConfig::default()
        };
        let vocab = TokenVocabulary::build(&["alpha beta"], 1).unwrap();
        let m = Model::zeros(config, vocab, vec!["r0".into(), "r1".into()], 0).unwrap();
        let mut tape = Tape::new();
        let enc = enc_for(&m, &mut tape, &["alpha", "beta"]);
        let v_sub = tape.constant(vec![0.0; 4], vec![4]).unwrap();
        let h_aug = tape.constant(vec![0.0; 4], vec![4]).unwrap();
        let scores =
            score_object_positions(&mut tape, &m.params, &enc, v_sub, h_aug, 2).unwrap();
        for r in 0..2 {
            for &p in tape.data(scores.start[r]).iter().chain(tape.data(scores.end[r])) {
                assert_eq!(p, 0.5);
            }
        }
    }

    #[test]
    fn zero_enhancement_reduces_to_plain_cascade_scores() {
        let m = model(4, 2);
        let run = |with_aug: bool| {
            let mut tape = Tape::new();
            let enc = enc_for(&m, &mut tape, &["alpha", "beta", "gamma"]);
            let v_sub = crate::subject::subject_vector(&mut tape, &enc, (0, 0)).unwrap();
            let h_aug = tape.constant(vec![0.0; 4], vec![4]).unwrap();
            let scores = if with_aug {
                score_object_positions(&mut tape, &m.params, &enc, v_sub, h_aug, 2).unwrap()
            } else {
                // plain cascade: condition on v_sub only
                let h_in = tape.add_row_broadcast(enc.h, v_sub).unwrap();
                let mut start = Vec::new();
                let mut end = Vec::new();
                for r in 0..2 {
                    let w_s = tape.param(&m.params, &format!("object.r{r}.w_start")).unwrap();
                    let b_s = tape.param(&m.params, &format!("object.r{r}.b_start")).unwrap();
                    let z = tape.matvec(h_in, w_s).unwrap();
                    let z = tape.add_scalar(z, b_s).unwrap();
                    start.push(tape.sigmoid(z));
                    let w_e = tape.param(&m.params, &format!("object.r{r}.w_end")).unwrap();
                    let b_e = tape.param(&m.params, &format!("object.r{r}.b_end")).unwrap();
                    let z = tape.matvec(h_in, w_e).unwrap();
                    let z = tape.add_scalar(z, b_e).unwrap();
                    end.push(tape.sigmoid(z));
                }
                ObjectScores { start, end }
            };
            let mut all = Vec::new();
            for r in 0..2 {
                all.extend_from_slice(tape.data(scores.start[r]));
                all.extend_from_slice(tape.data(scores.end[r]));
            }
            all
        };
        let with_aug = run(true);
        let plain = run(false);
        assert_eq!(with_aug, plain);
    }

    #[test]
    fn one_relation_fixture_matches_hand_arithmetic() {
        // 1 relation, 2 tokens, D = 2; score = σ(w·(x_i + v_sub + h_aug) + b)
        let mut m = model(2, 1);
        let d = 2;
        let embed = m.params.get_mut("encoder.embed").unwrap();
        let alpha = 2;
        let beta = 3;
        embed.data[alpha * d..alpha * d + d].copy_from_slice(&[0.5, -1.0]);
        embed.data[beta * d..beta * d + d].copy_from_slice(&[2.0, 0.25]);
        m.params
            .get_mut("object.r0.w_start")
            .unwrap()
            .data
            .copy_from_slice(&[0.6, -0.3]);
        m.params.get_mut("object.r0.b_start").unwrap().data[0] = 0.2;

        let v_sub_vals = [0.1, 0.4];
        let h_aug_vals = [-0.2, 0.05];
        let mut tape = Tape::new();
        let enc = enc_for(&m, &mut tape, &["alpha", "beta"]);
        let v_sub = tape.constant(v_sub_vals.to_vec(), vec![2]).unwrap();
        let h_aug = tape.constant(h_aug_vals.to_vec(), vec![2]).unwrap();
        let scores =
            score_object_positions(&mut tape, &m.params, &enc, v_sub, h_aug, 1).unwrap();

        let x = [[0.5, -1.0], [2.0, 0.25]];
        for (i, row) in x.iter().enumerate() {
            let z = 0.6 * (row[0] + 0.1 - 0.2) + (-0.3) * (row[1] + 0.4 + 0.05) + 0.2;
            let want = sigmoid_scalar(z);
            let got = tape.data(scores.start[0])[i];
            assert!((got - want).abs() < 1e-12, "token {i}: {got} vs {want}");
        }
    }

    #[test]
    fn permuting_relation_params_permutes_score_rows() {
        let m = model(4, 3);
        let mut swapped = m.clone();
        for suffix in ["w_start", "b_start", "w_end", "b_end"] {
            let a = swapped.params.get(&format!("object.r0.{suffix}")).unwrap().clone();
            let b = swapped.params.get(&format!("object.r2.{suffix}")).unwrap().clone();
            swapped.params.insert(format!("object.r0.{suffix}"), b.shape, b.data);
            swapped.params.insert(format!("object.r2.{suffix}"), a.shape, a.data);
        }
        let run = |m: &Model| {
            let mut tape = Tape::new();
            let enc = enc_for(m, &mut tape, &["alpha", "beta"]);
            let v_sub = crate::subject::subject_vector(&mut tape, &enc, (0, 0)).unwrap();
            let h_aug = tape.constant(vec![0.0; 4], vec![4]).unwrap();
            let scores =
                score_object_positions(&mut tape, &m.params, &enc, v_sub, h_aug, 3).unwrap();
            (0..3)
                .map(|r| tape.data(scores.start[r]).to_vec())
                .collect::<Vec<_>>()
        };
        let base = run(&m);
        let perm = run(&swapped);
        assert_eq!(base[0], perm[2]);
        assert_eq!(base[2], perm[0]);
        assert_eq!(base[1], perm[1]);
    }

    fn subject_at(tape: &mut Tape, enc: &EncodedSentence, pos: usize) -> SubjectSpan {
        let v_sub = crate::subject::subject_vector(tape, enc, (pos, pos)).unwrap();
        SubjectSpan {
            start: pos,
            end: pos,
            v_sub,
            surface: enc.tokens[pos].clone(),
            start_prob: 0.9,
            end_prob: 0.9,
        }
    }

    #[test]
    fn decode_all_half_probs_yields_nothing() {
        let m = model(4, 2);
        let mut tape = Tape::new();
        let enc = enc_for(&m, &mut tape, &["alpha", "beta"]);
        let subject = subject_at(&mut tape, &enc, 0);
        let half = tape.constant(vec![0.5, 0.5], vec![2]).unwrap();
        let scores = ObjectScores {
            start: vec![half, half],
            end: vec![half, half],
        };
        assert!(decode_triples(&tape, &scores, &subject, &enc, 0.5).is_empty());
    }

    #[test]
    fn single_relation_fire_yields_one_triple() {
        let m = model(4, 2);
        let mut tape = Tape::new();
        let enc = enc_for(&m, &mut tape, &["alpha", "beta"]);
        let subject = subject_at(&mut tape, &enc, 0);
        let quiet = tape.constant(vec![0.1, 0.1], vec![2]).unwrap();
        let fire1 = tape.constant(vec![0.1, 0.8], vec![2]).unwrap();
        let scores = ObjectScores {
            start: vec![quiet, fire1],
            end: vec![quiet, fire1],
        };
        let triples = decode_triples(&tape, &scores, &subject, &enc, 0.5);
        assert_eq!(triples.len(), 1);
        assert_eq!(triples[0].relation, 1);
        assert_eq!(triples[0].object_span, (1, 1));
        assert_eq!(triples[0].object, "beta");
        assert!((triples[0].confidence - 0.8).abs() < 1e-12);
    }

    #[test]
    fn multi_relation_pattern_matches_per_relation_pairing_oracle() {
        // reuse of the subject pairing rule per relation row
        let m = model(4, 2);
        let mut tape = Tape::new();
        let enc = enc_for(&m, &mut tape, &["alpha", "beta", "gamma", "delta"]);
        let subject = subject_at(&mut tape, &enc, 0);
        let s0 = tape.constant(vec![0.9, 0.0, 0.0, 0.9], vec![4]).unwrap();
        let e0 = tape.constant(vec![0.0, 0.9, 0.0, 0.9], vec![4]).unwrap();
        let s1 = tape.constant(vec![0.9, 0.9, 0.0, 0.0], vec![4]).unwrap();
        let e1 = tape.constant(vec![0.0, 0.0, 0.9, 0.0], vec![4]).unwrap();
        let scores = ObjectScores {
            start: vec![s0, s1],
            end: vec![e0, e1],
        };
        let triples = decode_triples(&tape, &scores, &subject, &enc, 0.5);
        let spans: Vec<(usize, (usize, usize))> =
            triples.iter().map(|t| (t.relation, t.object_span)).collect();
        // relation 0: starts {0,3}, ends {1,3} -> (0,1), (3,3)
        // relation 1: starts {0,1}, ends {2} -> (1,2)
        assert_eq!(spans, vec![(0, (0, 1)), (0, (3, 3)), (1, (1, 2))]);
    }

    #[test]
    fn extract_zero_init_model_returns_nothing() {
        let config = ModelConfig {
            dim: 4,
            context_layers: 1,
            max_len: 8,
            num_rel: 2,
            disable_enhancement: true,
            ..ModelConfig::default()
        };
        let vocab = TokenVocabulary::build(&["alpha beta gamma"], 1).unwrap();
        let m = Model::zeros(config, vocab, vec!["r0".into(), "r1".into()], 0).unwrap();
        let triples = extract(&m, None, "alpha beta gamma", 0.5).unwrap();
        assert!(triples.is_empty());
    }

    #[test]
    fn extract_requires_lexicon_when_enhancement_enabled() {
        let m = model(4, 2);
        assert!(matches!(
            extract(&m, None, "alpha beta", 0.5),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn extract_propagates_encoding_errors() {
        let mut m = model(4, 2);
        m.config.disable_enhancement = true;
        assert!(matches!(
            extract(&m, None, "...", 0.5),
            Err(Error::Input(_))
        ));
    }
}
