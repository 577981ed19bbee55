//! Relation-typed subject lexicon: for every relation, the most frequent
//! subject head-words from the training corpus with their encoder vectors,
//! plus exact nearest-neighbor retrieval of the similar vocabulary used by
//! the enhancement step.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::corpus::AnnotatedSentence;
use crate::encoder::{encode_tokens, tokenize};
use crate::error::{Error, Result};
use crate::model::Model;

/// Distance used for the similarity search. The default is plain Euclidean
/// distance; a cosine variant is available for comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    Euclidean,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub word: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationLexicon {
    pub id: usize,
    pub name: String,
    pub entries: Vec<LexiconEntry>,
}

/// The full lexicon: up to `m` entries per relation, embedded with the
/// encoder state named by `encoder_checkpoint`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectLexicon {
    pub version: u32,
    pub dim: usize,
    pub relations: Vec<RelationLexicon>,
    pub encoder_checkpoint: String,
    #[serde(default)]
    pub provenance: serde_json::Value,
}

pub const LEXICON_VERSION: u32 = 1;

impl SubjectLexicon {
    pub fn num_rel(&self) -> usize {
        self.relations.len()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let lex: SubjectLexicon = serde_json::from_str(&fs::read_to_string(path)?)?;
        if lex.version != LEXICON_VERSION {
            return Err(Error::input(format!(
                "unsupported lexicon version {}",
                lex.version
            )));
        }
        Ok(lex)
    }
}

/// First token of a subject string, the word that stands for it in the
/// word-level lexicon.
pub fn head_word(subject: &str) -> Option<String> {
    tokenize(subject).into_iter().next()
}

/// Collect, per relation, the `m` most frequent subject head-words (ties
/// broken lexicographically) and embed each by encoding it as a one-token
/// sentence and taking the first context row.
pub fn build_lexicon<'a, I>(
    model: &Model,
    corpus: I,
    m: usize,
    encoder_checkpoint: &str,
) -> Result<SubjectLexicon>
where
    I: IntoIterator<Item = &'a AnnotatedSentence>,
{
    if m == 0 {
        return Err(Error::config("lexicon m must be >= 1"));
    }
    let num_rel = model.schema.num_rel();
    let mut counts: Vec<BTreeMap<String, usize>> = vec![BTreeMap::new(); num_rel];
    for sentence in corpus {
        for aligned in &sentence.triples {
            if let Some(word) = head_word(&aligned.triple.subject) {
                *counts[aligned.triple.relation].entry(word).or_insert(0) += 1;
            }
        }
    }

    let mut relations = Vec::with_capacity(num_rel);
    for (rel_id, rel_counts) in counts.into_iter().enumerate() {
        let mut ranked: Vec<(String, usize)> = rel_counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(m);
        let mut entries = Vec::with_capacity(ranked.len());
        for (word, _) in ranked {
            let mut tape = Tape::new();
            let enc = encode_tokens(
                &mut tape,
                &model.params,
                &model.vocab,
                &model.config.encoder(),
                vec![word.clone()],
            )?;
            let vector = tape.data(enc.h)[..model.config.dim].to_vec();
            entries.push(LexiconEntry { word, vector });
        }
        relations.push(RelationLexicon {
            id: rel_id,
            name: model.schema.name_of(rel_id).unwrap_or_default().to_string(),
            entries,
        });
    }

    Ok(SubjectLexicon {
        version: LEXICON_VERSION,
        dim: model.config.dim,
        relations,
        encoder_checkpoint: encoder_checkpoint.to_string(),
        provenance: serde_json::Value::Null,
    })
}

/// Distance between two vectors under the chosen metric; smaller means
/// more similar.
pub fn semantic_distance(a: &[f64], b: &[f64], metric: DistanceMetric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dimension("semantic_distance", &[a.len()], &[b.len()]));
    }
    match metric {
        DistanceMetric::Euclidean => {
            let mut acc = 0.0;
            for (x, y) in a.iter().zip(b) {
                let d = x - y;
                acc += d * d;
            }
            Ok(acc.sqrt())
        }
        DistanceMetric::Cosine => {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                return Ok(1.0);
            }
            Ok(1.0 - dot / (na * nb))
        }
    }
}

/// One retrieved similar word.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarEntry {
    pub word: String,
    pub vector: Vec<f64>,
    pub distance: f64,
}

/// Per relation, the `n` nearest lexicon words to a query vector, ascending
/// by distance.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarVocab {
    pub per_relation: Vec<Vec<SimilarEntry>>,
}

/// Exact scan: per relation the `n` smallest-distance entries, ties broken
/// by lexicon order (stable sort).
pub fn top_n_similar(
    v_sub: &[f64],
    lexicon: &SubjectLexicon,
    n: usize,
    metric: DistanceMetric,
) -> Result<SimilarVocab> {
    if n == 0 {
        return Err(Error::contract("top_n_similar: n must be >= 1"));
    }
    let mut per_relation = Vec::with_capacity(lexicon.relations.len());
    for rel in &lexicon.relations {
        let mut scored: Vec<SimilarEntry> = rel
            .entries
            .iter()
            .map(|e| {
                semantic_distance(v_sub, &e.vector, metric).map(|distance| SimilarEntry {
                    word: e.word.clone(),
                    vector: e.vector.clone(),
                    distance,
                })
            })
            .collect::<Result<_>>()?;
        scored.sort_by(|a, b| a.distance.total_cmp(&b.distance));
        scored.truncate(n);
        per_relation.push(scored);
    }
    Ok(SimilarVocab { per_relation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_dataset, RelationSchema};
    use crate::encoder::TokenVocabulary;
    use crate::model::{Model, ModelConfig};

    fn fixture_corpus() -> (Vec<AnnotatedSentence>, RelationSchema) {
        let text = r#"{"text": "john runs acme", "triples": [{"subject": "john", "relation": "runs", "object": "acme"}]}
{"text": "john runs orbit", "triples": [{"subject": "john", "relation": "runs", "object": "orbit"}]}
{"text": "john runs vega", "triples": [{"subject": "john", "relation": "runs", "object": "vega"}]}
{"text": "mary runs acme", "triples": [{"subject": "mary", "relation": "runs", "object": "acme"}]}
{"text": "new york hosts expo", "triples": [{"subject": "new york", "relation": "hosts", "object": "expo"}]}"#;
        let out = parse_dataset(text, None).unwrap();
        assert!(out.dropped.is_empty() && out.errors.is_empty());
        (out.sentences, out.schema)
    }

    fn fixture_model(corpus: &[AnnotatedSentence], schema: &RelationSchema) -> Model {
        let texts: Vec<String> = corpus.iter().map(|s| s.text.clone()).collect();
        let vocab = TokenVocabulary::build(&texts, 1).unwrap();
        let config = ModelConfig {
            dim: 6,
            context_layers: 1,
            max_len: 16,
            num_rel: schema.num_rel(),
            ..ModelConfig::default()
        };
        Model::init(config, vocab, schema.names().to_vec(), 17).unwrap()
    }

    #[test]
    fn frequency_top_one_per_relation() {
        let (corpus, schema) = fixture_corpus();
        let model = fixture_model(&corpus, &schema);
        let lex = build_lexicon(&model, &corpus, 1, "test").unwrap();
        let runs_id = schema.id_of("runs").unwrap();
        assert_eq!(lex.relations[runs_id].entries.len(), 1);
        assert_eq!(lex.relations[runs_id].entries[0].word, "john");
    }

    #[test]
    fn m_larger_than_distinct_subjects_keeps_all_without_padding() {
        let (corpus, schema) = fixture_corpus();
        let model = fixture_model(&corpus, &schema);
        let lex = build_lexicon(&model, &corpus, 50, "test").unwrap();
        let runs_id = schema.id_of("runs").unwrap();
        assert_eq!(lex.relations[runs_id].entries.len(), 2);
        let words: Vec<&str> = lex.relations[runs_id]
            .entries
            .iter()
            .map(|e| e.word.as_str())
            .collect();
        assert_eq!(words, vec!["john", "mary"]);
    }

    #[test]
    fn multi_word_subject_contributes_head_word() {
        // independent head-word oracle over the fixture: first token of the
        // tokenized subject string
        let (corpus, schema) = fixture_corpus();
        let model = fixture_model(&corpus, &schema);
        let lex = build_lexicon(&model, &corpus, 4, "test").unwrap();
        let hosts_id = schema.id_of("hosts").unwrap();
        let words: Vec<&str> = lex.relations[hosts_id]
            .entries
            .iter()
            .map(|e| e.word.as_str())
            .collect();
        assert_eq!(words, vec!["new"]);
        for s in &corpus {
            for t in &s.triples {
                let oracle = tokenize(&t.triple.subject).into_iter().next().unwrap();
                assert_eq!(head_word(&t.triple.subject), Some(oracle));
            }
        }
    }

    #[test]
    fn relation_with_no_subjects_gets_empty_list() {
        let (corpus, _) = fixture_corpus();
        let schema =
            RelationSchema::from_names(vec!["hosts".into(), "runs".into(), "unused".into()])
                .unwrap();
        let texts: Vec<String> = corpus.iter().map(|s| s.text.clone()).collect();
        let vocab = TokenVocabulary::build(&texts, 1).unwrap();
        let config = ModelConfig {
            dim: 6,
            num_rel: 3,
            ..ModelConfig::default()
        };
        let model = Model::init(config, vocab, schema.names().to_vec(), 17).unwrap();
        // realign corpus against the 3-relation schema
        let records: Vec<String> = corpus
            .iter()
            .map(|s| serde_json::to_string(&s.to_record(&RelationSchema::from_names(vec!["hosts".into(), "runs".into()]).unwrap())).unwrap())
            .collect();
        let out = parse_dataset(&records.join("\n"), Some(schema)).unwrap();
        let lex = build_lexicon(&model, &out.sentences, 4, "test").unwrap();
        assert!(lex.relations[2].entries.is_empty());
    }

    #[test]
    fn lexicon_vectors_come_from_one_token_encoding() {
        let (corpus, schema) = fixture_corpus();
        let model = fixture_model(&corpus, &schema);
        let lex = build_lexicon(&model, &corpus, 2, "test").unwrap();
        let mut tape = Tape::new();
        let enc = encode_tokens(
            &mut tape,
            &model.params,
            &model.vocab,
            &model.config.encoder(),
            vec!["john".into()],
        )
        .unwrap();
        let expect = &tape.data(enc.h)[..model.config.dim];
        let runs_id = schema.id_of("runs").unwrap();
        let got = &lex.relations[runs_id].entries[0].vector;
        assert_eq!(expect, &got[..]);
    }

    #[test]
    fn rebuild_is_bitwise_reproducible() {
        let (corpus, schema) = fixture_corpus();
        let model = fixture_model(&corpus, &schema);
        let a = build_lexicon(&model, &corpus, 4, "test").unwrap();
        let b = build_lexicon(&model, &corpus, 4, "test").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn serialization_round_trips_losslessly() {
        let (corpus, schema) = fixture_corpus();
        let model = fixture_model(&corpus, &schema);
        let lex = build_lexicon(&model, &corpus, 4, "ckpt-17").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lexicon.json");
        lex.save(&path).unwrap();
        let loaded = SubjectLexicon::load(&path).unwrap();
        assert_eq!(lex, loaded);
    }

    #[test]
    fn distance_identical_vectors_is_zero() {
        let v = vec![0.3, -0.7, 1.1];
        assert_eq!(
            semantic_distance(&v, &v, DistanceMetric::Euclidean).unwrap(),
            0.0
        );
    }

    #[test]
    fn distance_unit_basis_is_sqrt_two() {
        let e1 = vec![1.0, 0.0];
        let e2 = vec![0.0, 1.0];
        let d = semantic_distance(&e1, &e2, DistanceMetric::Euclidean).unwrap();
        assert!((d - 2.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn distance_matches_componentwise_loop_oracle() {
        let mut rng = crate::testutil::SplitMix::new(5);
        let a: Vec<f64> = (0..16).map(|_| rng.next_f64() - 0.5).collect();
        let b: Vec<f64> = (0..16).map(|_| rng.next_f64() - 0.5).collect();
        let mut acc = 0.0;
        for i in 0..16 {
            acc += (a[i] - b[i]) * (a[i] - b[i]);
        }
        let want = acc.sqrt();
        let got = semantic_distance(&a, &b, DistanceMetric::Euclidean).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn distance_dimension_mismatch_is_error() {
        assert!(matches!(
            semantic_distance(&[1.0], &[1.0, 2.0], DistanceMetric::Euclidean),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn cosine_variant_is_zero_for_parallel_vectors() {
        let a = vec![1.0, 2.0];
        let b = vec![2.0, 4.0];
        let d = semantic_distance(&a, &b, DistanceMetric::Cosine).unwrap();
        assert!(d.abs() < 1e-12);
        // zero vector is defined as neutral
        assert_eq!(
            semantic_distance(&[0.0, 0.0], &a, DistanceMetric::Cosine).unwrap(),
            1.0
        );
    }

    fn synthetic_lexicon(words: &[(&str, Vec<f64>)]) -> SubjectLexicon {
        SubjectLexicon {
            version: LEXICON_VERSION,
            dim: words[0].1.len(),
            relations: vec![RelationLexicon {
                id: 0,
                name: "r0".into(),
                entries: words
                    .iter()
                    .map(|(w, v)| LexiconEntry {
                        word: w.to_string(),
                        vector: v.clone(),
                    })
                    .collect(),
            }],
            encoder_checkpoint: "test".into(),
            provenance: serde_json::Value::Null,
        }
    }

    #[test]
    fn top_n_finds_exact_query_at_distance_zero() {
        let lex = synthetic_lexicon(&[
            ("far", vec![5.0, 5.0]),
            ("self", vec![1.0, -1.0]),
            ("near", vec![1.1, -1.0]),
        ]);
        let sim = top_n_similar(&[1.0, -1.0], &lex, 1, DistanceMetric::Euclidean).unwrap();
        assert_eq!(sim.per_relation[0][0].word, "self");
        assert_eq!(sim.per_relation[0][0].distance, 0.0);
    }

    #[test]
    fn top_n_with_n_at_least_m_returns_whole_sorted_list() {
        let lex = synthetic_lexicon(&[
            ("b", vec![2.0, 0.0]),
            ("a", vec![1.0, 0.0]),
            ("c", vec![3.0, 0.0]),
        ]);
        let sim = top_n_similar(&[0.0, 0.0], &lex, 10, DistanceMetric::Euclidean).unwrap();
        let words: Vec<&str> = sim.per_relation[0].iter().map(|e| e.word.as_str()).collect();
        assert_eq!(words, vec!["a", "b", "c"]);
    }

    #[test]
    fn top_n_matches_full_sort_oracle() {
        let mut rng = crate::testutil::SplitMix::new(23);
        let words: Vec<(String, Vec<f64>)> = (0..20)
            .map(|i| {
                let v: Vec<f64> = (0..4).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
                (format!("w{i}"), v)
            })
            .collect();
        let refs: Vec<(&str, Vec<f64>)> =
            words.iter().map(|(w, v)| (w.as_str(), v.clone())).collect();
        let lex = synthetic_lexicon(&refs);
        let query: Vec<f64> = (0..4).map(|_| rng.next_f64() * 2.0 - 1.0).collect();

        let sim = top_n_similar(&query, &lex, 5, DistanceMetric::Euclidean).unwrap();

        // oracle: full sort of (distance, index) then prefix
        let mut all: Vec<(f64, usize)> = words
            .iter()
            .enumerate()
            .map(|(i, (_, v))| {
                let d: f64 = query
                    .iter()
                    .zip(v)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                (d, i)
            })
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (k, entry) in sim.per_relation[0].iter().enumerate() {
            assert_eq!(entry.word, words[all[k].1].0);
            assert!((entry.distance - all[k].0).abs() < 1e-15);
        }
    }

    #[test]
    fn distances_sorted_ascending_and_exact() {
        let lex = synthetic_lexicon(&[
            ("a", vec![0.5, 0.5]),
            ("b", vec![-1.0, 2.0]),
            ("c", vec![3.0, 0.1]),
            ("d", vec![0.0, 0.0]),
        ]);
        let query = [0.25, -0.75];
        let sim = top_n_similar(&query, &lex, 3, DistanceMetric::Euclidean).unwrap();
        let entries = &sim.per_relation[0];
        for w in entries.windows(2) {
            assert!(w[0].distance <= w[1].distance);
        }
        for e in entries {
            let d = semantic_distance(&query, &e.vector, DistanceMetric::Euclidean).unwrap();
            assert_eq!(d, e.distance);
        }
    }
}
