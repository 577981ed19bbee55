//! Corpus handling: newline-delimited JSON ingestion with gold-span
//! alignment, overlap-category classification, triple-count bucketing, and
//! the seeded synthetic-corpus generator used for desk-scale runs.
//!
//! Wire format, one sentence per line:
//! `{"text": str, "triples": [{"subject": str, "relation": str, "object": str}]}`.
//! The schema file is a JSON list of relation names.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::tokenize;
use crate::error::{Error, Result};

/// Ordered relation names; a triple's relation id indexes into this.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSchema {
    names: Vec<String>,
}

impl RelationSchema {
    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(Error::config("relation names must be unique"));
        }
        if names.is_empty() {
            return Err(Error::config("relation schema must not be empty"));
        }
        Ok(RelationSchema { names })
    }

    pub fn num_rel(&self) -> usize {
        self.names.len()
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name_of(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(|s| s.as_str())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(&self.names)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let names: Vec<String> = serde_json::from_str(&fs::read_to_string(path)?)?;
        Self::from_names(names)
    }
}

/// One gold or predicted fact.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RelationTriple {
    pub subject: String,
    pub relation: usize,
    pub object: String,
}

/// A gold triple with its token spans in the owning sentence (inclusive).
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedTriple {
    pub triple: RelationTriple,
    pub subject_span: (usize, usize),
    pub object_span: (usize, usize),
}

/// A sentence with aligned gold triples.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedSentence {
    pub text: String,
    pub tokens: Vec<String>,
    pub triples: Vec<AlignedTriple>,
}

/// Wire representation of a triple (relation by name).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleRecord {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

/// Wire representation of a sentence line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub text: String,
    pub triples: Vec<TripleRecord>,
}

impl AnnotatedSentence {
    pub fn to_record(&self, schema: &RelationSchema) -> SentenceRecord {
        SentenceRecord {
            text: self.text.clone(),
            triples: self
                .triples
                .iter()
                .map(|t| TripleRecord {
                    subject: t.triple.subject.clone(),
                    relation: schema
                        .name_of(t.triple.relation)
                        .unwrap_or("<unknown>")
                        .to_string(),
                    object: t.triple.object.clone(),
                })
                .collect(),
        }
    }
}

/// A skipped or rejected input line.
#[derive(Debug, Clone, PartialEq)]
pub struct LineIssue {
    pub line: usize,
    pub reason: String,
}

/// Result of loading a corpus: aligned sentences, the effective schema,
/// sentences dropped with a reason, and malformed-line errors.
#[derive(Debug)]
pub struct LoadOutcome {
    pub sentences: Vec<AnnotatedSentence>,
    pub schema: RelationSchema,
    pub dropped: Vec<LineIssue>,
    pub errors: Vec<LineIssue>,
}

fn find_token_subsequence(haystack: &[String], needle: &[String]) -> Option<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    (0..=haystack.len() - needle.len()).find(|&i| haystack[i..i + needle.len()] == *needle)
}

/// Parse newline-delimited JSON sentences, align every entity to its first
/// token-range occurrence, and resolve relation names against `schema`
/// (or a schema observed from the data, sorted, when none is given).
pub fn parse_dataset(text: &str, schema: Option<RelationSchema>) -> Result<LoadOutcome> {
    let mut records: Vec<(usize, SentenceRecord)> = Vec::new();
    let mut errors = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<SentenceRecord>(line) {
            Ok(rec) => records.push((line_no, rec)),
            Err(e) => errors.push(LineIssue {
                line: line_no,
                reason: e.to_string(),
            }),
        }
    }

    let schema = match schema {
        Some(s) => s,
        None => {
            let observed: BTreeSet<String> = records
                .iter()
                .flat_map(|(_, r)| r.triples.iter().map(|t| t.relation.clone()))
                .collect();
            if observed.is_empty() {
                return Err(Error::input(
                    "no relations observed in corpus and no schema given",
                ));
            }
            RelationSchema::from_names(observed.into_iter().collect())?
        }
    };

    let mut sentences = Vec::new();
    let mut dropped = Vec::new();
    'lines: for (line_no, rec) in records {
        let tokens = tokenize(&rec.text);
        let mut aligned = Vec::with_capacity(rec.triples.len());
        for t in &rec.triples {
            let relation = match schema.id_of(&t.relation) {
                Some(id) => id,
                None => {
                    dropped.push(LineIssue {
                        line: line_no,
                        reason: format!("relation {:?} not in schema", t.relation),
                    });
                    continue 'lines;
                }
            };
            let subject_tokens = tokenize(&t.subject);
            let object_tokens = tokenize(&t.object);
            let subject_start = find_token_subsequence(&tokens, &subject_tokens);
            let object_start = find_token_subsequence(&tokens, &object_tokens);
            match (subject_start, object_start) {
                (Some(s), Some(o)) => aligned.push(AlignedTriple {
                    triple: RelationTriple {
                        subject: t.subject.clone(),
                        relation,
                        object: t.object.clone(),
                    },
                    subject_span: (s, s + subject_tokens.len() - 1),
                    object_span: (o, o + object_tokens.len() - 1),
                }),
                _ => {
                    let missing = if subject_start.is_none() {
                        &t.subject
                    } else {
                        &t.object
                    };
                    dropped.push(LineIssue {
                        line: line_no,
                        reason: format!("entity {missing:?} not found in text"),
                    });
                    continue 'lines;
                }
            }
        }
        sentences.push(AnnotatedSentence {
            text: rec.text,
            tokens,
            triples: aligned,
        });
    }

    Ok(LoadOutcome {
        sentences,
        schema,
        dropped,
        errors,
    })
}

pub fn load_dataset(path: &Path, schema: Option<RelationSchema>) -> Result<LoadOutcome> {
    let text = fs::read_to_string(path)?;
    parse_dataset(&text, schema)
}

pub fn save_corpus(path: &Path, records: &[SentenceRecord]) -> Result<()> {
    let mut out = String::new();
    for rec in records {
        out.push_str(&serde_json::to_string(rec)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Overlap category flags for one sentence. `epo` and `seo` may both hold;
/// `normal` holds exactly when neither does.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverlapFlags {
    pub normal: bool,
    pub epo: bool,
    pub seo: bool,
}

/// Classify a sentence by how its triples share entity strings: a pair of
/// distinct triples with the same unordered entity pair is an entity-pair
/// overlap (EPO); a pair sharing exactly one entity string is a
/// single-entity overlap (SEO).
pub fn classify_overlap(sentence: &AnnotatedSentence) -> OverlapFlags {
    let mut epo = false;
    let mut seo = false;
    let entity_pair = |t: &AlignedTriple| {
        let (a, b) = (&t.triple.subject, &t.triple.object);
        if a <= b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        }
    };
    fn entity_set(t: &AlignedTriple) -> BTreeSet<&String> {
        [&t.triple.subject, &t.triple.object].into_iter().collect()
    }
    for i in 0..sentence.triples.len() {
        for j in i + 1..sentence.triples.len() {
            let (a, b) = (&sentence.triples[i], &sentence.triples[j]);
            if entity_pair(a) == entity_pair(b) {
                epo = true;
            }
            if entity_set(a).intersection(&entity_set(b)).count() == 1 {
                seo = true;
            }
        }
    }
    OverlapFlags {
        normal: !epo && !seo,
        epo,
        seo,
    }
}

/// Triple-count bucket for per-N reporting: 1, 2, 3, 4, and 5-or-more.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TripleCountBucket {
    Zero,
    One,
    Two,
    Three,
    Four,
    FivePlus,
}

impl TripleCountBucket {
    pub fn of(count: usize) -> Self {
        match count {
            0 => TripleCountBucket::Zero,
            1 => TripleCountBucket::One,
            2 => TripleCountBucket::Two,
            3 => TripleCountBucket::Three,
            4 => TripleCountBucket::Four,
            _ => TripleCountBucket::FivePlus,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            TripleCountBucket::Zero => "0",
            TripleCountBucket::One => "1",
            TripleCountBucket::Two => "2",
            TripleCountBucket::Three => "3",
            TripleCountBucket::Four => "4",
            TripleCountBucket::FivePlus => "5+",
        }
    }
}

/// Exact partition of sentence indices by triple count.
pub fn bucket_by_triple_count(
    sentences: &[AnnotatedSentence],
) -> BTreeMap<TripleCountBucket, Vec<usize>> {
    let mut buckets: BTreeMap<TripleCountBucket, Vec<usize>> = BTreeMap::new();
    for (i, s) in sentences.iter().enumerate() {
        buckets
            .entry(TripleCountBucket::of(s.triples.len()))
            .or_default()
            .push(i);
    }
    buckets
}

/// Target fractions of overlap categories in a synthetic corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapMix {
    pub normal: f64,
    pub epo: f64,
    pub seo: f64,
}

impl Default for OverlapMix {
    fn default() -> Self {
        OverlapMix {
            normal: 1.0,
            epo: 0.0,
            seo: 0.0,
        }
    }
}

impl OverlapMix {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("normal", self.normal),
            ("epo", self.epo),
            ("seo", self.seo),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!(
                    "overlap mix fraction {name} = {v} out of [0, 1]"
                )));
            }
        }
        let total = self.normal + self.epo + self.seo;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "overlap mix fractions sum to {total}, expected 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_rel: usize,
    pub vocab_size: usize,
    pub sentences: usize,
    pub mix: OverlapMix,
    pub seed: u64,
}

const BASE_VERBS: &[&str] = &[
    "governs", "visits", "employs", "founded", "owns", "leads", "likes", "sells", "buys",
    "joins", "guards", "teaches", "praises", "serves", "funds", "hosts", "meets", "backs",
    "guides", "hires", "trains", "greets", "helps", "names",
];

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];

/// Deterministic pseudo-word: two consonant-vowel syllables, so generated
/// entities never collide with verbs or connectives.
fn pseudo_word(index: usize) -> String {
    let syllables = ONSETS.len() * VOWELS.len();
    let syl = |i: usize| format!("{}{}", ONSETS[i / VOWELS.len()], VOWELS[i % VOWELS.len()]);
    format!("{}{}", syl(index / syllables % syllables), syl(index % syllables))
}

struct Pools {
    verbs: Vec<String>,
    subjects: Vec<Vec<String>>,
    objects: Vec<String>,
    fillers: Vec<String>,
}

fn build_pools(cfg: &SynthConfig) -> Result<Pools> {
    let verbs: Vec<String> = (0..cfg.num_rel)
        .map(|r| {
            BASE_VERBS
                .get(r)
                .map(|v| v.to_string())
                .unwrap_or_else(|| format!("verb{r}"))
        })
        .collect();

    // budget for entities and fillers; "and" and the verbs use the rest
    let reserved = cfg.num_rel + 1;
    if cfg.vocab_size < reserved + 3 * cfg.num_rel + 4 {
        return Err(Error::config(format!(
            "vocab_size {} too small for {} relations",
            cfg.vocab_size, cfg.num_rel
        )));
    }
    let budget = cfg.vocab_size - reserved;
    let subj_total = (budget * 2 / 5).max(cfg.num_rel);
    let obj_total = (budget * 2 / 5).max(2);
    let filler_total = budget - subj_total - obj_total;

    let mut next = 0;
    let mut take = |n: usize| -> Vec<String> {
        let words = (next..next + n).map(pseudo_word).collect();
        next += n;
        words
    };
    let subj_words = take(subj_total);
    let objects = take(obj_total);
    let fillers = take(filler_total.max(1));

    let per_rel = subj_total / cfg.num_rel;
    let subjects: Vec<Vec<String>> = (0..cfg.num_rel)
        .map(|r| {
            let start = r * per_rel;
            let end = if r + 1 == cfg.num_rel {
                subj_total
            } else {
                start + per_rel
            };
            subj_words[start..end].to_vec()
        })
        .collect();

    Ok(Pools {
        verbs,
        subjects,
        objects,
        fillers,
    })
}

#[derive(Clone, Copy, PartialEq)]
enum Category {
    Normal,
    Epo,
    Seo,
}

/// Generate a synthetic corpus where each relation is signaled by its verb
/// and subjects are drawn from disjoint per-relation name pools. Overlap
/// categories are met exactly by template construction.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<(Vec<SentenceRecord>, RelationSchema)> {
    cfg.mix.validate()?;
    if cfg.num_rel == 0 {
        return Err(Error::config("num_rel must be >= 1"));
    }
    if cfg.sentences == 0 {
        return Err(Error::config("sentence count must be >= 1"));
    }
    if (cfg.mix.epo > 0.0 || cfg.mix.seo > 0.0) && cfg.num_rel < 2 {
        return Err(Error::config(
            "overlapping categories need at least two relations",
        ));
    }
    let pools = build_pools(cfg)?;
    let schema = RelationSchema::from_names(pools.verbs.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let n_epo = (cfg.sentences as f64 * cfg.mix.epo).round() as usize;
    let n_seo = (cfg.sentences as f64 * cfg.mix.seo).round() as usize;
    let n_normal = cfg.sentences.saturating_sub(n_epo + n_seo);
    let mut plan = Vec::with_capacity(cfg.sentences);
    plan.extend(std::iter::repeat_n(Category::Normal, n_normal));
    plan.extend(std::iter::repeat_n(Category::Epo, n_epo));
    plan.extend(std::iter::repeat_n(Category::Seo, n_seo));
    plan.truncate(cfg.sentences);
    plan.shuffle(&mut rng);

    let pick = |rng: &mut ChaCha8Rng, pool: &[String]| pool[rng.random_range(0..pool.len())].clone();
    let pick_two_rels = |rng: &mut ChaCha8Rng| {
        let r1 = rng.random_range(0..cfg.num_rel);
        let mut r2 = rng.random_range(0..cfg.num_rel - 1);
        if r2 >= r1 {
            r2 += 1;
        }
        (r1, r2)
    };

    let mut records = Vec::with_capacity(cfg.sentences);
    for category in plan {
        let record = match category {
            Category::Normal => {
                let r = rng.random_range(0..cfg.num_rel);
                let s = pick(&mut rng, &pools.subjects[r]);
                let o = pick(&mut rng, &pools.objects);
                let mut words = vec![s.clone(), pools.verbs[r].clone(), o.clone()];
                match rng.random_range(0..10) {
                    0..=2 => words.push(pick(&mut rng, &pools.fillers)),
                    3..=4 => words.insert(0, pick(&mut rng, &pools.fillers)),
                    _ => {}
                }
                SentenceRecord {
                    text: sentence_text(words),
                    triples: vec![triple(&s, &pools.verbs[r], &o)],
                }
            }
            Category::Epo => {
                let (r1, r2) = pick_two_rels(&mut rng);
                let s = pick(&mut rng, &pools.subjects[r1]);
                let o = pick(&mut rng, &pools.objects);
                let words = vec![
                    s.clone(),
                    pools.verbs[r1].clone(),
                    "and".to_string(),
                    pools.verbs[r2].clone(),
                    o.clone(),
                ];
                SentenceRecord {
                    text: sentence_text(words),
                    triples: vec![
                        triple(&s, &pools.verbs[r1], &o),
                        triple(&s, &pools.verbs[r2], &o),
                    ],
                }
            }
            Category::Seo => {
                // distinct subjects sharing one object: token identity plus
                // sentence context disambiguates, so the pattern stays
                // learnable for a position-free encoder
                let (r1, r2) = pick_two_rels(&mut rng);
                let s1 = pick(&mut rng, &pools.subjects[r1]);
                let s2 = pick(&mut rng, &pools.subjects[r2]);
                let o = pick(&mut rng, &pools.objects);
                let words = vec![
                    s1.clone(),
                    pools.verbs[r1].clone(),
                    o.clone(),
                    "and".to_string(),
                    s2.clone(),
                    pools.verbs[r2].clone(),
                    o.clone(),
                ];
                SentenceRecord {
                    text: sentence_text(words),
                    triples: vec![
                        triple(&s1, &pools.verbs[r1], &o),
                        triple(&s2, &pools.verbs[r2], &o),
                    ],
                }
            }
        };
        records.push(record);
    }
    Ok((records, schema))
}

fn sentence_text(mut words: Vec<String>) -> String {
    if let Some(last) = words.last_mut() {
        last.push('.');
    }
    words.join(" ")
}

fn triple(subject: &str, relation: &str, object: &str) -> TripleRecord {
    TripleRecord {
        subject: subject.to_string(),
        relation: relation.to_string(),
        object: object.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentence(triples: &[(&str, usize, &str)]) -> AnnotatedSentence {
        AnnotatedSentence {
            text: String::new(),
            tokens: vec![],
            triples: triples
                .iter()
                .map(|(s, r, o)| AlignedTriple {
                    triple: RelationTriple {
                        subject: s.to_string(),
                        relation: *r,
                        object: o.to_string(),
                    },
                    subject_span: (0, 0),
                    object_span: (0, 0),
                })
                .collect(),
        }
    }

    #[test]
    fn load_single_well_formed_line() {
        let text = r#"{"text": "john lives in paris", "triples": [{"subject": "john", "relation": "lives_in", "object": "paris"}]}"#;
        let out = parse_dataset(text, None).unwrap();
        assert_eq!(out.sentences.len(), 1);
        assert!(out.errors.is_empty());
        let s = &out.sentences[0];
        assert_eq!(s.triples[0].subject_span, (0, 0));
        assert_eq!(s.triples[0].object_span, (3, 3));
    }

    #[test]
    fn entity_absent_drops_sentence_with_reason() {
        let text = r#"{"text": "john lives here", "triples": [{"subject": "john", "relation": "lives_in", "object": "paris"}]}
{"text": "mary lives in rome", "triples": [{"subject": "mary", "relation": "lives_in", "object": "rome"}]}"#;
        let out = parse_dataset(text, None).unwrap();
        assert_eq!(out.sentences.len(), 1);
        assert_eq!(out.dropped.len(), 1);
        assert!(out.dropped[0].reason.contains("paris"));
        assert_eq!(out.dropped[0].line, 1);
    }

    #[test]
    fn malformed_lines_reported_with_line_numbers() {
        let mut lines = Vec::new();
        for i in 0..10 {
            if i == 2 || i == 7 {
                lines.push("{not json".to_string());
            } else {
                lines.push(format!(
                    r#"{{"text": "w{i} rel w{i}b", "triples": [{{"subject": "w{i}", "relation": "rel", "object": "w{i}b"}}]}}"#
                ));
            }
        }
        let out = parse_dataset(&lines.join("\n"), None).unwrap();
        assert_eq!(out.sentences.len(), 8);
        assert_eq!(out.errors.len(), 2);
        let bad_lines: Vec<usize> = out.errors.iter().map(|e| e.line).collect();
        assert_eq!(bad_lines, vec![3, 8]);
    }

    #[test]
    fn multi_token_entity_aligns_as_range() {
        let text = r#"{"text": "the new york times praised new york", "triples": [{"subject": "new york times", "relation": "about", "object": "new york"}]}"#;
        let out = parse_dataset(text, None).unwrap();
        let s = &out.sentences[0];
        assert_eq!(s.triples[0].subject_span, (1, 3));
        // first occurrence wins
        assert_eq!(s.triples[0].object_span, (1, 2));
    }

    #[test]
    fn unknown_relation_with_fixed_schema_drops_sentence() {
        let text = r#"{"text": "a rel b", "triples": [{"subject": "a", "relation": "other", "object": "b"}]}"#;
        let schema = RelationSchema::from_names(vec!["rel".into()]).unwrap();
        let out = parse_dataset(text, Some(schema)).unwrap();
        assert!(out.sentences.is_empty());
        assert_eq!(out.dropped.len(), 1);
    }

    #[test]
    fn observed_schema_is_sorted() {
        let text = r#"{"text": "a zr b", "triples": [{"subject": "a", "relation": "zr", "object": "b"}]}
{"text": "a ar b", "triples": [{"subject": "a", "relation": "ar", "object": "b"}]}"#;
        let out = parse_dataset(text, None).unwrap();
        assert_eq!(out.schema.names(), &["ar", "zr"]);
    }

    #[test]
    fn classify_single_triple_is_normal() {
        let flags = classify_overlap(&sentence(&[("a", 0, "b")]));
        assert!(flags.normal && !flags.epo && !flags.seo);
    }

    #[test]
    fn classify_shared_pair_is_epo() {
        let flags = classify_overlap(&sentence(&[("a", 0, "b"), ("a", 1, "b")]));
        assert!(!flags.normal && flags.epo && !flags.seo);
    }

    #[test]
    fn classify_single_shared_entity_is_seo() {
        let flags = classify_overlap(&sentence(&[("a", 0, "b"), ("a", 1, "c")]));
        assert!(!flags.normal && !flags.epo && flags.seo);
    }

    #[test]
    fn classify_epo_and_seo_can_coexist() {
        let flags = classify_overlap(&sentence(&[("a", 0, "b"), ("a", 1, "b"), ("a", 2, "c")]));
        assert!(flags.epo && flags.seo && !flags.normal);
    }

    #[test]
    fn classify_reversed_pair_counts_as_epo() {
        let flags = classify_overlap(&sentence(&[("a", 0, "b"), ("b", 1, "a")]));
        assert!(flags.epo);
    }

    #[test]
    fn classify_matches_pairwise_oracle() {
        // independent oracle: literal pairwise comparison over all pairs
        let cases: Vec<Vec<(&str, usize, &str)>> = vec![
            vec![("a", 0, "b")],
            vec![("a", 0, "b"), ("a", 1, "b")],
            vec![("a", 0, "b"), ("a", 1, "c")],
            vec![("a", 0, "b"), ("c", 1, "b")],
            vec![("a", 0, "b"), ("c", 1, "d")],
            vec![("a", 0, "b"), ("a", 1, "b"), ("a", 2, "c")],
            vec![("a", 0, "b"), ("b", 1, "a"), ("c", 2, "d")],
        ];
        for case in cases {
            let s = sentence(&case);
            let got = classify_overlap(&s);
            let mut epo = false;
            let mut seo = false;
            for i in 0..case.len() {
                for j in 0..case.len() {
                    if i == j {
                        continue;
                    }
                    let (s1, _, o1) = case[i];
                    let (s2, _, o2) = case[j];
                    let mut p1 = [s1, o1];
                    let mut p2 = [s2, o2];
                    p1.sort();
                    p2.sort();
                    if p1 == p2 {
                        epo = true;
                    }
                    let set1: BTreeSet<&str> = p1.into_iter().collect();
                    let set2: BTreeSet<&str> = p2.into_iter().collect();
                    if set1.intersection(&set2).count() == 1 {
                        seo = true;
                    }
                }
            }
            assert_eq!(got.epo, epo, "{case:?}");
            assert_eq!(got.seo, seo, "{case:?}");
            assert_eq!(got.normal, !epo && !seo, "{case:?}");
        }
    }

    #[test]
    fn bucket_partition_sums_to_total() {
        let sentences: Vec<AnnotatedSentence> = [1usize, 1, 2, 5, 7]
            .iter()
            .map(|&n| {
                let triples: Vec<(String, usize, String)> = (0..n)
                    .map(|i| (format!("s{i}"), 0, format!("o{i}")))
                    .collect();
                let refs: Vec<(&str, usize, &str)> = triples
                    .iter()
                    .map(|(s, r, o)| (s.as_str(), *r, o.as_str()))
                    .collect();
                sentence(&refs)
            })
            .collect();
        let buckets = bucket_by_triple_count(&sentences);
        let total: usize = buckets.values().map(|v| v.len()).sum();
        assert_eq!(total, sentences.len());
        assert_eq!(buckets[&TripleCountBucket::One].len(), 2);
        assert_eq!(buckets[&TripleCountBucket::Two].len(), 1);
        assert_eq!(buckets[&TripleCountBucket::FivePlus].len(), 2);
        assert!(!buckets.contains_key(&TripleCountBucket::Three));
    }

    #[test]
    fn synthetic_all_normal_classifies_normal() {
        let cfg = SynthConfig {
            num_rel: 3,
            vocab_size: 60,
            sentences: 50,
            mix: OverlapMix::default(),
            seed: 1,
        };
        let (records, schema) = generate_synthetic(&cfg).unwrap();
        let text: String = records
            .iter()
            .map(|r| serde_json::to_string(r).unwrap() + "\n")
            .collect();
        let out = parse_dataset(&text, Some(schema)).unwrap();
        assert_eq!(out.sentences.len(), 50);
        assert!(out.dropped.is_empty(), "{:?}", out.dropped);
        for s in &out.sentences {
            assert!(classify_overlap(s).normal);
        }
    }

    #[test]
    fn synthetic_is_seeded_reproducible() {
        let cfg = SynthConfig {
            num_rel: 4,
            vocab_size: 80,
            sentences: 40,
            mix: OverlapMix {
                normal: 0.5,
                epo: 0.25,
                seo: 0.25,
            },
            seed: 7,
        };
        let (a, _) = generate_synthetic(&cfg).unwrap();
        let (b, _) = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn synthetic_mix_proportions_hold() {
        let cfg = SynthConfig {
            num_rel: 4,
            vocab_size: 120,
            sentences: 400,
            mix: OverlapMix {
                normal: 0.5,
                epo: 0.25,
                seo: 0.25,
            },
            seed: 11,
        };
        let (records, schema) = generate_synthetic(&cfg).unwrap();
        let text: String = records
            .iter()
            .map(|r| serde_json::to_string(r).unwrap() + "\n")
            .collect();
        let out = parse_dataset(&text, Some(schema)).unwrap();
        assert_eq!(out.sentences.len(), 400);
        let mut counts = (0usize, 0usize, 0usize);
        for s in &out.sentences {
            let flags = classify_overlap(s);
            if flags.normal {
                counts.0 += 1;
            }
            if flags.epo {
                counts.1 += 1;
            }
            if flags.seo {
                counts.2 += 1;
            }
        }
        let total = out.sentences.len() as f64;
        assert!((counts.0 as f64 / total - 0.5).abs() <= 0.03);
        assert!((counts.1 as f64 / total - 0.25).abs() <= 0.03);
        assert!((counts.2 as f64 / total - 0.25).abs() <= 0.03);
    }

    #[test]
    fn synthetic_invalid_mix_is_config_error() {
        let cfg = SynthConfig {
            num_rel: 2,
            vocab_size: 60,
            sentences: 10,
            mix: OverlapMix {
                normal: 0.5,
                epo: 0.25,
                seo: 0.3,
            },
            seed: 0,
        };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn corpus_round_trips_through_files() {
        let cfg = SynthConfig {
            num_rel: 2,
            vocab_size: 40,
            sentences: 12,
            mix: OverlapMix {
                normal: 0.5,
                epo: 0.25,
                seo: 0.25,
            },
            seed: 3,
        };
        let (records, schema) = generate_synthetic(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.ndjson");
        save_corpus(&path, &records).unwrap();
        let out = load_dataset(&path, Some(schema.clone())).unwrap();
        assert_eq!(out.sentences.len(), 12);
        let back: Vec<SentenceRecord> = out
            .sentences
            .iter()
            .map(|s| s.to_record(&schema))
            .collect();
        assert_eq!(back, records);
        // load → serialize → load fixed point
        save_corpus(&path, &back).unwrap();
        let out2 = load_dataset(&path, Some(schema)).unwrap();
        assert_eq!(out2.sentences, out.sentences);
    }
}
