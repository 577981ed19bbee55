//! Sentence encoder: tokenization, vocabulary, and the trainable context
//! encoder that turns a sentence into the N×D matrix whose rows the taggers
//! consume.
//!
//! The encoder is a token embedding table followed by `context_layers`
//! rounds of single-head self-attention with a residual connection, so every
//! token representation sees full sentence context. All parameters live on
//! the active tape during training.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, TensorId};
use crate::error::{Error, Result};
use crate::params::ParamStore;

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
const RESERVED: usize = 2;

/// Lowercase, split on whitespace, strip surrounding punctuation. Tokens
/// that are punctuation-only disappear.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Token → id map with reserved ids 0 (padding) and 1 (unknown). Unseen
/// tokens always look up to the unknown id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenVocabulary {
    tokens: Vec<String>,
}

impl TokenVocabulary {
    /// Build from tokenized sentences keeping tokens whose frequency is
    /// at least `min_count`. Ids are assigned by frequency (descending),
    /// ties broken lexicographically, so two builds of the same corpus
    /// agree.
    pub fn build<S: AsRef<str>>(corpus: &[S], min_count: usize) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::input("cannot build a vocabulary from an empty corpus"));
        }
        let mut counts: std::collections::BTreeMap<String, usize> = Default::default();
        for sentence in corpus {
            for token in tokenize(sentence.as_ref()) {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_count)
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(TokenVocabulary {
            tokens: ranked.into_iter().map(|(t, _)| t).collect(),
        })
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        TokenVocabulary { tokens }
    }

    /// Number of ids including the two reserved ones.
    pub fn len(&self) -> usize {
        self.tokens.len() + RESERVED
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id_of(&self, token: &str) -> usize {
        self.tokens
            .iter()
            .position(|t| t == token)
            .map(|i| i + RESERVED)
            .unwrap_or(UNK_ID)
    }

    pub fn token_of(&self, id: usize) -> Option<&str> {
        match id {
            PAD_ID => Some("<pad>"),
            UNK_ID => Some("<unk>"),
            _ => self.tokens.get(id - RESERVED).map(|s| s.as_str()),
        }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.iter().any(|t| t == token)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Embedding / context dimension D.
    pub dim: usize,
    /// Rounds of self-attention mixing; 0 leaves raw embedding rows.
    pub context_layers: usize,
    /// Sentences longer than this are truncated.
    pub max_len: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: 64,
            context_layers: 1,
            max_len: 64,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::config(format!("encoder dim must be >= 2, got {}", self.dim)));
        }
        if self.max_len < 1 {
            return Err(Error::config("encoder max_len must be >= 1"));
        }
        Ok(())
    }
}

/// A sentence after encoding: tokens, their ids, and the context matrix on
/// the tape (row i is the representation of token i).
#[derive(Debug, Clone)]
pub struct EncodedSentence {
    pub tokens: Vec<String>,
    pub ids: Vec<usize>,
    pub h: TensorId,
    pub truncated: bool,
}

impl EncodedSentence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Parameter names owned by the encoder for a given configuration.
pub fn param_names(config: &EncoderConfig) -> Vec<String> {
    let mut names = vec!["encoder.embed".to_string()];
    for layer in 0..config.context_layers {
        names.push(format!("encoder.layer{layer}.wq"));
        names.push(format!("encoder.layer{layer}.wk"));
        names.push(format!("encoder.layer{layer}.wv"));
    }
    names
}

/// Encode pre-tokenized input. Applies truncation at `max_len` and flags it.
pub fn encode_tokens(
    tape: &mut Tape,
    store: &ParamStore,
    vocab: &TokenVocabulary,
    config: &EncoderConfig,
    tokens: Vec<String>,
) -> Result<EncodedSentence> {
    if tokens.is_empty() {
        return Err(Error::input("cannot encode a sentence with zero tokens"));
    }
    let truncated = tokens.len() > config.max_len;
    let tokens: Vec<String> = tokens.into_iter().take(config.max_len).collect();
    let ids: Vec<usize> = tokens.iter().map(|t| vocab.id_of(t)).collect();

    let table = tape.param(store, "encoder.embed")?;
    let mut h = tape.embed_rows(table, &ids)?;

    let scale = 1.0 / (config.dim as f64).sqrt();
    for layer in 0..config.context_layers {
        let wq = tape.param(store, &format!("encoder.layer{layer}.wq"))?;
        let wk = tape.param(store, &format!("encoder.layer{layer}.wk"))?;
        let wv = tape.param(store, &format!("encoder.layer{layer}.wv"))?;
        let q = tape.matmul(h, wq)?;
        let k = tape.matmul(h, wk)?;
        let v = tape.matmul(h, wv)?;
        let kt = tape.transpose(k)?;
        let scores = tape.matmul(q, kt)?;
        let scaled = tape.scale(scores, scale);
        let attn = tape.softmax(scaled)?;
        let mixed = tape.matmul(attn, v)?;
        h = tape.add(h, mixed)?;
    }

    Ok(EncodedSentence {
        tokens,
        ids,
        h,
        truncated,
    })
}

/// Tokenize and encode a raw sentence.
pub fn encode(
    tape: &mut Tape,
    store: &ParamStore,
    vocab: &TokenVocabulary,
    config: &EncoderConfig,
    sentence: &str,
) -> Result<EncodedSentence> {
    encode_tokens(tape, store, vocab, config, tokenize(sentence))
}
