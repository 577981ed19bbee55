//! Assembled model state: configuration, vocabulary, relation schema and
//! the parameter store, plus checkpoint serialization.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::RelationSchema;
use crate::encoder::{self, EncoderConfig, TokenVocabulary};
use crate::error::{Error, Result};
use crate::lexicon::DistanceMetric;
use crate::params::ParamStore;

/// How the pre-classification logits are normalized into relation weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreclassNorm {
    /// One distribution over relations (the default; matches the soft
    /// count-label geometry).
    Softmax,
    /// Independent per-relation sigmoids, kept for comparison runs.
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dim: usize,
    pub context_layers: usize,
    pub max_len: usize,
    pub num_rel: usize,
    /// Lexicon entries kept per relation.
    pub lexicon_m: usize,
    /// Similar words retrieved per relation for enhancement.
    pub lexicon_n: usize,
    pub distance: DistanceMetric,
    pub preclass_norm: PreclassNorm,
    /// Ablation switch: skip pre-classification and enhancement, forcing
    /// the enhancement vector to zero (the plain cascade baseline).
    pub disable_enhancement: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 64,
            context_layers: 1,
            max_len: 64,
            num_rel: 2,
            lexicon_m: 50,
            lexicon_n: 5,
            distance: DistanceMetric::Euclidean,
            preclass_norm: PreclassNorm::Softmax,
            disable_enhancement: false,
        }
    }
}

impl ModelConfig {
    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            dim: self.dim,
            context_layers: self.context_layers,
            max_len: self.max_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder().validate()?;
        if self.num_rel == 0 {
            return Err(Error::config("num_rel must be >= 1"));
        }
        if self.lexicon_m == 0 || self.lexicon_n == 0 {
            return Err(Error::config("lexicon m and n must be >= 1"));
        }
        Ok(())
    }
}

/// Trainable model state.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: TokenVocabulary,
    pub schema: RelationSchema,
    pub params: ParamStore,
    pub seed: u64,
}

impl Model {
    /// Seeded random initialization: embedding and attention projections
    /// uniform in ±1/√D, tagger and classifier weights likewise, biases zero.
    pub fn init(
        config: ModelConfig,
        vocab: TokenVocabulary,
        relations: Vec<String>,
        seed: u64,
    ) -> Result<Self> {
        Self::build(config, vocab, relations, seed, false)
    }

    /// All-zero parameters. Every tagger emits probability 0.5 everywhere,
    /// so extraction under a strict threshold yields nothing.
    pub fn zeros(
        config: ModelConfig,
        vocab: TokenVocabulary,
        relations: Vec<String>,
        seed: u64,
    ) -> Result<Self> {
        Self::build(config, vocab, relations, seed, true)
    }

    fn build(
        config: ModelConfig,
        vocab: TokenVocabulary,
        relations: Vec<String>,
        seed: u64,
        zeroed: bool,
    ) -> Result<Self> {
        config.validate()?;
        let schema = RelationSchema::from_names(relations)?;
        if schema.num_rel() != config.num_rel {
            return Err(Error::config(format!(
                "schema has {} relations but config.num_rel is {}",
                schema.num_rel(),
                config.num_rel
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.dim;
        let bound = 1.0 / (d as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> {
            if zeroed {
                vec![0.0; n]
            } else {
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            }
        };

        let mut params = ParamStore::new();
        params.insert("encoder.embed", vec![vocab.len(), d], draw(vocab.len() * d));
        for layer in 0..config.context_layers {
            params.insert(format!("encoder.layer{layer}.wq"), vec![d, d], draw(d * d));
            params.insert(format!("encoder.layer{layer}.wk"), vec![d, d], draw(d * d));
            params.insert(format!("encoder.layer{layer}.wv"), vec![d, d], draw(d * d));
        }
        params.insert("subject.w_start", vec![d], draw(d));
        params.insert("subject.b_start", vec![1], vec![0.0]);
        params.insert("subject.w_end", vec![d], draw(d));
        params.insert("subject.b_end", vec![1], vec![0.0]);
        params.insert("preclass.w", vec![config.num_rel, d], draw(config.num_rel * d));
        params.insert("preclass.b", vec![config.num_rel], vec![0.0; config.num_rel]);
        for r in 0..config.num_rel {
            params.insert(format!("object.r{r}.w_start"), vec![d], draw(d));
            params.insert(format!("object.r{r}.b_start"), vec![1], vec![0.0]);
            params.insert(format!("object.r{r}.w_end"), vec![d], draw(d));
            params.insert(format!("object.r{r}.b_end"), vec![1], vec![0.0]);
        }

        Ok(Model {
            config,
            vocab,
            schema,
            params,
            seed,
        })
    }
}

/// On-disk checkpoint: one JSON document holding the configuration, the
/// vocabulary, the relation schema, and every named parameter with its
/// shape and float64 data. `provenance` echoes the effective run config
/// of whatever command wrote the file.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub config: ModelConfig,
    pub relations: Vec<String>,
    pub vocab: Vec<String>,
    pub params: ParamStore,
    #[serde(default)]
    pub provenance: serde_json::Value,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Model {
    pub fn to_checkpoint(&self, provenance: serde_json::Value) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            seed: self.seed,
            config: self.config.clone(),
            relations: self.schema.names().to_vec(),
            vocab: self.vocab.tokens().to_vec(),
            params: self.params.clone(),
            provenance,
        }
    }

    pub fn save(&self, path: &Path, provenance: serde_json::Value) -> Result<()> {
        let ckpt = self.to_checkpoint(provenance);
        let json = serde_json::to_string_pretty(&ckpt)?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::input(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        let vocab = TokenVocabulary::from_tokens(ckpt.vocab);
        let model = Model {
            config: ckpt.config,
            vocab,
            schema: RelationSchema::from_names(ckpt.relations)?,
            params: ckpt.params,
            seed: ckpt.seed,
        };
        model.config.validate()?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&json)?;
        Self::from_checkpoint(ckpt)
    }
}

/// Re-export used by encoder tests; the encoder's parameter list is derived
/// from the model configuration.
pub fn encoder_param_names(config: &ModelConfig) -> Vec<String> {
    encoder::param_names(&config.encoder())
}
