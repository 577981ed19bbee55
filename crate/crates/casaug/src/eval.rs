//! Exact-match triple scoring and report rendering.
//!
//! A predicted triple counts only if subject, relation and object all match
//! a gold triple after normalization (entity surfaces are lowercased and
//! re-joined through the shared tokenizer). Precision, recall and F1 are
//! micro-averaged: counts are pooled over sentences before the ratios.
//!
//! Every report recomputes F1 = 2PR/(P+R) from the printed P and R, so an
//! emitted triple of numbers is always internally consistent. The
//! originally published CasAug results do not satisfy this identity (they
//! print P 0.912, R 0.895 with F1 0.896, while the harmonic mean of that P
//! and R is 0.903), so those reported figures cannot be regenerated from
//! their own P/R and are not reproduced here.

use std::collections::BTreeSet;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    bucket_by_triple_count, classify_overlap, AnnotatedSentence, TripleCountBucket,
};
use crate::encoder::tokenize;
use crate::error::{Error, Result};
use crate::lexicon::SubjectLexicon;
use crate::model::Model;
use crate::object::extract;

/// Normalized triple used for set comparison: tokenizer-joined entity
/// surfaces plus the relation id.
pub type NormTriple = (String, usize, String);

pub fn normalize_entity(surface: &str) -> String {
    tokenize(surface).join(" ")
}

pub fn normalize_triple(subject: &str, relation: usize, object: &str) -> NormTriple {
    (normalize_entity(subject), relation, normalize_entity(object))
}

/// True/false positive/negative counts under set semantics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl AddAssign for MatchCounts {
    fn add_assign(&mut self, other: Self) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Set intersection/difference counts of predicted against gold triples.
pub fn exact_match(pred: &BTreeSet<NormTriple>, gold: &BTreeSet<NormTriple>) -> MatchCounts {
    let tp = pred.intersection(gold).count();
    MatchCounts {
        tp,
        fp: pred.len() - tp,
        fn_: gold.len() - tp,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Ratios from counts; 0/0 is defined as 0.
pub fn metrics(counts: &MatchCounts) -> Metrics {
    let precision = if counts.tp + counts.fp == 0 {
        0.0
    } else {
        counts.tp as f64 / (counts.tp + counts.fp) as f64
    };
    let recall = if counts.tp + counts.fn_ == 0 {
        0.0
    } else {
        counts.tp as f64 / (counts.tp + counts.fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Metrics {
        precision,
        recall,
        f1,
    }
}

/// One scored slice of the test set; `sentences` is the denominator the
/// slice was computed over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceReport {
    pub p: f64,
    pub r: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub sentences: usize,
}

impl SliceReport {
    fn from_counts(counts: MatchCounts, sentences: usize) -> Self {
        let m = metrics(&counts);
        SliceReport {
            p: m.precision,
            r: m.recall,
            f1: m.f1,
            tp: counts.tp,
            fp: counts.fp,
            fn_: counts.fn_,
            sentences,
        }
    }
}

/// Full evaluation report: overall, per overlap category, and per
/// triple-count bucket. Category slices overlap, so their sentence counts
/// may sum past the corpus size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub overall: SliceReport,
    pub by_category: std::collections::BTreeMap<String, SliceReport>,
    pub by_count: std::collections::BTreeMap<String, SliceReport>,
    pub config_echo: serde_json::Value,
}

pub fn gold_triples(sentence: &AnnotatedSentence) -> BTreeSet<NormTriple> {
    sentence
        .triples
        .iter()
        .map(|t| normalize_triple(&t.triple.subject, t.triple.relation, &t.triple.object))
        .collect()
}

/// Score a predictor over a corpus. The predictor returns normalized
/// triples per sentence; injection of an oracle or empty predictor is how
/// the scorer itself is tested.
pub fn evaluate_with<F>(
    mut predict: F,
    corpus: &[AnnotatedSentence],
    config_echo: serde_json::Value,
) -> Result<Report>
where
    F: FnMut(&AnnotatedSentence) -> Result<BTreeSet<NormTriple>>,
{
    if corpus.is_empty() {
        return Err(Error::input("cannot evaluate an empty corpus"));
    }

    let mut per_sentence = Vec::with_capacity(corpus.len());
    for sentence in corpus {
        let pred = predict(sentence)?;
        let gold = gold_triples(sentence);
        per_sentence.push(exact_match(&pred, &gold));
    }

    let mut overall = MatchCounts::default();
    for c in &per_sentence {
        overall += *c;
    }

    let mut by_category = std::collections::BTreeMap::new();
    for key in ["normal", "epo", "seo"] {
        let mut counts = MatchCounts::default();
        let mut sentences = 0usize;
        for (i, s) in corpus.iter().enumerate() {
            let flags = classify_overlap(s);
            let member = match key {
                "normal" => flags.normal,
                "epo" => flags.epo,
                _ => flags.seo,
            };
            if member {
                counts += per_sentence[i];
                sentences += 1;
            }
        }
        by_category.insert(key.to_string(), SliceReport::from_counts(counts, sentences));
    }

    let buckets = bucket_by_triple_count(corpus);
    let mut by_count = std::collections::BTreeMap::new();
    for bucket in [
        TripleCountBucket::One,
        TripleCountBucket::Two,
        TripleCountBucket::Three,
        TripleCountBucket::Four,
        TripleCountBucket::FivePlus,
    ] {
        let indices = buckets.get(&bucket).cloned().unwrap_or_default();
        let mut counts = MatchCounts::default();
        for &i in &indices {
            counts += per_sentence[i];
        }
        by_count.insert(
            bucket.label().to_string(),
            SliceReport::from_counts(counts, indices.len()),
        );
    }
    if let Some(indices) = buckets.get(&TripleCountBucket::Zero) {
        let mut counts = MatchCounts::default();
        for &i in indices {
            counts += per_sentence[i];
        }
        by_count.insert(
            TripleCountBucket::Zero.label().to_string(),
            SliceReport::from_counts(counts, indices.len()),
        );
    }

    Ok(Report {
        overall: SliceReport::from_counts(overall, corpus.len()),
        by_category,
        by_count,
        config_echo,
    })
}

/// Run the trained model over a corpus and score it.
pub fn evaluate(
    model: &Model,
    lexicon: Option<&SubjectLexicon>,
    corpus: &[AnnotatedSentence],
    threshold: f64,
    config_echo: serde_json::Value,
) -> Result<Report> {
    evaluate_with(
        |sentence| {
            let triples = extract(model, lexicon, &sentence.text, threshold)?;
            Ok(triples
                .into_iter()
                .map(|t| (t.subject, t.relation, t.object))
                .collect())
        },
        corpus,
        config_echo,
    )
}

/// Micro F1 only, used for the per-epoch dev log.
pub fn micro_f1(
    model: &Model,
    lexicon: Option<&SubjectLexicon>,
    corpus: &[&AnnotatedSentence],
    threshold: f64,
) -> Result<f64> {
    let mut counts = MatchCounts::default();
    for sentence in corpus {
        let triples = extract(model, lexicon, &sentence.text, threshold)?;
        let pred: BTreeSet<NormTriple> = triples
            .into_iter()
            .map(|t| (t.subject, t.relation, t.object))
            .collect();
        counts += exact_match(&pred, &gold_triples(sentence));
    }
    Ok(metrics(&counts).f1)
}

impl Report {
    /// Aligned text table, one row per slice.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let row = |name: &str, s: &SliceReport| {
            format!(
                "{name:<10} {:>7.4} {:>7.4} {:>7.4} {:>6} {:>6} {:>6} {:>9}\n",
                s.p, s.r, s.f1, s.tp, s.fp, s.fn_, s.sentences
            )
        };
        out.push_str(&format!(
            "{:<10} {:>7} {:>7} {:>7} {:>6} {:>6} {:>6} {:>9}\n",
            "slice", "prec", "rec", "f1", "tp", "fp", "fn", "sentences"
        ));
        out.push_str(&row("overall", &self.overall));
        for key in ["normal", "epo", "seo"] {
            if let Some(s) = self.by_category.get(key) {
                out.push_str(&row(key, s));
            }
        }
        let mut count_keys: Vec<&String> = self.by_count.keys().collect();
        count_keys.sort();
        for key in count_keys {
            out.push_str(&row(&format!("n={key}"), &self.by_count[key]));
        }
        out
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
