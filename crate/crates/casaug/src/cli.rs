//! Command-line surface: one binary with `synth`, `build-lexicon`,
//! `train`, `eval`, `extract` and `verify` subcommands.
//!
//! A JSON config file (`--config`) supplies defaults; command-line flags
//! override file values; the effective configuration is echoed into every
//! artifact written. Exit codes: 0 success, 1 runtime failure, 2
//! configuration error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::builder::PossibleValue;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::autodiff::{grad_check, Tape};
use crate::corpus::{
    generate_synthetic, load_dataset, parse_dataset, save_corpus, OverlapMix, RelationSchema,
    SynthConfig,
};
use crate::encoder::TokenVocabulary;
use crate::enhance::{enhance, RelationTargetLabel, RelationTargets};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::lexicon::{build_lexicon, DistanceMetric, SubjectLexicon};
use crate::model::{Model, ModelConfig, PreclassNorm};
use crate::object::extract;
use crate::subject::decode_spans;
use crate::train::{fit, sentence_loss, write_metrics_log, LexiconRefresh, LossWeights, TrainConfig};

impl ValueEnum for DistanceMetric {
    fn value_variants<'a>() -> &'a [Self] {
        &[DistanceMetric::Euclidean, DistanceMetric::Cosine]
    }

    fn to_possible_value(&self) -> Option<PossibleValue> {
        Some(match self {
            DistanceMetric::Euclidean => PossibleValue::new("euclidean"),
            DistanceMetric::Cosine => PossibleValue::new("cosine"),
        })
    }
}

impl ValueEnum for PreclassNorm {
    fn value_variants<'a>() -> &'a [Self] {
        &[PreclassNorm::Softmax, PreclassNorm::Sigmoid]
    }

    fn to_possible_value(&self) -> Option<PossibleValue> {
        Some(match self {
            PreclassNorm::Softmax => PossibleValue::new("softmax"),
            PreclassNorm::Sigmoid => PossibleValue::new("sigmoid"),
        })
    }
}

impl ValueEnum for LexiconRefresh {
    fn value_variants<'a>() -> &'a [Self] {
        &[LexiconRefresh::PerEpoch, LexiconRefresh::Frozen]
    }

    fn to_possible_value(&self) -> Option<PossibleValue> {
        Some(match self {
            LexiconRefresh::PerEpoch => PossibleValue::new("per-epoch"),
            LexiconRefresh::Frozen => PossibleValue::new("frozen"),
        })
    }
}

/// Ablation switches accepted by `--ablation`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    DisableEnhancement,
}

impl ValueEnum for Ablation {
    fn value_variants<'a>() -> &'a [Self] {
        &[Ablation::DisableEnhancement]
    }

    fn to_possible_value(&self) -> Option<PossibleValue> {
        Some(match self {
            Ablation::DisableEnhancement => PossibleValue::new("disable-enhancement"),
        })
    }
}

/// Every tunable of the pipeline in one JSON-loadable document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    // encoder / model
    pub dim: usize,
    pub context_layers: usize,
    pub max_len: usize,
    pub lexicon_m: usize,
    pub lexicon_n: usize,
    pub distance: DistanceMetric,
    pub w_norm: PreclassNorm,
    pub ablation: Option<Ablation>,
    pub vocab_min_count: usize,
    // training
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub threshold: f64,
    pub seed: u64,
    pub dev_fraction: f64,
    pub lexicon_refresh: LexiconRefresh,
    pub w_subject: f64,
    pub w_object: f64,
    pub w_null_object: f64,
    pub w_preclass: f64,
    // synthesis
    pub num_rel: usize,
    pub vocab_size: usize,
    pub sentences: usize,
    pub test_sentences: usize,
    pub dev_sentences: usize,
    pub mix_normal: f64,
    pub mix_epo: f64,
    pub mix_seo: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dim: 64,
            context_layers: 1,
            max_len: 64,
            lexicon_m: 50,
            lexicon_n: 5,
            distance: DistanceMetric::Euclidean,
            w_norm: PreclassNorm::Softmax,
            ablation: None,
            vocab_min_count: 1,
            epochs: 50,
            batch_size: 8,
            learning_rate: 1e-3,
            threshold: 0.5,
            seed: 0,
            dev_fraction: 0.1,
            lexicon_refresh: LexiconRefresh::PerEpoch,
            w_subject: 1.0,
            w_object: 1.0,
            w_null_object: 1.0,
            w_preclass: 1.0,
            num_rel: 4,
            vocab_size: 200,
            sentences: 500,
            test_sentences: 100,
            dev_sentences: 0,
            mix_normal: 0.5,
            mix_epo: 0.25,
            mix_seo: 0.25,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| {
                    Error::config(format!("cannot read config {}: {e}", p.display()))
                })?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::config(format!("bad config {}: {e}", p.display())))
            }
        }
    }

    pub fn model_config(&self, num_rel: usize) -> ModelConfig {
        ModelConfig {
            dim: self.dim,
            context_layers: self.context_layers,
            max_len: self.max_len,
            num_rel,
            lexicon_m: self.lexicon_m,
            lexicon_n: self.lexicon_n,
            distance: self.distance,
            preclass_norm: self.w_norm,
            disable_enhancement: self.ablation == Some(Ablation::DisableEnhancement),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            threshold: self.threshold,
            seed: self.seed,
            dev_fraction: self.dev_fraction,
            lexicon_refresh: self.lexicon_refresh,
            weights: LossWeights {
                subject: self.w_subject,
                object: self.w_object,
                null_object: self.w_null_object,
                preclass: self.w_preclass,
            },
            ..TrainConfig::default()
        }
    }

    pub fn synth_config(&self, total: usize) -> SynthConfig {
        SynthConfig {
            num_rel: self.num_rel,
            vocab_size: self.vocab_size,
            sentences: total,
            mix: OverlapMix {
                normal: self.mix_normal,
                epo: self.mix_epo,
                seo: self.mix_seo,
            },
            seed: self.seed,
        }
    }
}

/// Command-line overrides of [`RunConfig`] fields, shared by all
/// subcommands.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigOverrides {
    #[arg(long, help = "Embedding/context dimension D")]
    pub dim: Option<usize>,
    #[arg(long)]
    pub context_layers: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long, help = "Lexicon entries kept per relation")]
    pub lexicon_m: Option<usize>,
    #[arg(long, help = "Similar words retrieved per relation")]
    pub lexicon_n: Option<usize>,
    #[arg(long, value_enum)]
    pub distance: Option<DistanceMetric>,
    #[arg(long, value_enum)]
    pub w_norm: Option<PreclassNorm>,
    #[arg(long, value_enum)]
    pub ablation: Option<Ablation>,
    #[arg(long)]
    pub vocab_min_count: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dev_fraction: Option<f64>,
    #[arg(long, value_enum)]
    pub lexicon_refresh: Option<LexiconRefresh>,
    #[arg(long)]
    pub w_subject: Option<f64>,
    #[arg(long)]
    pub w_object: Option<f64>,
    #[arg(long)]
    pub w_null_object: Option<f64>,
    #[arg(long)]
    pub w_preclass: Option<f64>,
    #[arg(long)]
    pub num_rel: Option<usize>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long, help = "Training sentences to generate")]
    pub sentences: Option<usize>,
    #[arg(long)]
    pub test_sentences: Option<usize>,
    #[arg(long)]
    pub dev_sentences: Option<usize>,
    #[arg(long)]
    pub mix_normal: Option<f64>,
    #[arg(long)]
    pub mix_epo: Option<f64>,
    #[arg(long)]
    pub mix_seo: Option<f64>,
}

macro_rules! apply_field {
    ($cfg:expr, $ov:expr, $($field:ident),*) => {
        $(if let Some(v) = $ov.$field.clone() { $cfg.$field = v; })*
    };
}

impl ConfigOverrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        apply_field!(
            cfg, self, dim, context_layers, max_len, lexicon_m, lexicon_n, distance, w_norm,
            vocab_min_count, epochs, batch_size, learning_rate, threshold, seed, dev_fraction,
            lexicon_refresh, w_subject, w_object, w_null_object, w_preclass, num_rel, vocab_size,
            sentences, test_sentences, dev_sentences, mix_normal, mix_epo, mix_seo
        );
        if self.ablation.is_some() {
            cfg.ablation = self.ablation;
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "casaug",
    version,
    about = "Cascaded binary-tagging relation extraction with subject-lexicon semantic enhancement"
)]
pub struct Cli {
    /// JSON config file; command-line flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic train/dev/test corpus plus schema file.
    Synth {
        /// Output directory for train.ndjson, test.ndjson, schema.json.
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Build the per-relation subject lexicon from a corpus.
    BuildLexicon {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Encoder checkpoint; a fresh seeded encoder is used when absent.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Train a model and write checkpoint, metrics log, and lexicon.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        out_checkpoint: PathBuf,
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        lexicon_out: Option<PathBuf>,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Score a trained model on a test corpus.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Where to write the JSON report (the text table always prints).
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Extract triples from raw text, one JSON line per sentence with
    /// predictions.
    Extract {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// A single sentence to extract from.
        #[arg(long, conflicts_with = "input")]
        text: Option<String>,
        /// File with one sentence per line.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output file; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Run the invariant self-check suite.
    Verify {
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::from_file(cli.config.as_deref())?;
    match cli.command {
        Command::Synth { out_dir, overrides } => {
            overrides.apply(&mut cfg);
            cmd_synth(&cfg, &out_dir)
        }
        Command::BuildLexicon {
            corpus,
            schema,
            checkpoint,
            out,
            overrides,
        } => {
            overrides.apply(&mut cfg);
            cmd_build_lexicon(&cfg, &corpus, schema.as_deref(), checkpoint.as_deref(), &out)
        }
        Command::Train {
            corpus,
            schema,
            out_checkpoint,
            metrics,
            lexicon_out,
            overrides,
        } => {
            overrides.apply(&mut cfg);
            cmd_train(
                &cfg,
                &corpus,
                schema.as_deref(),
                &out_checkpoint,
                metrics.as_deref(),
                lexicon_out.as_deref(),
            )
        }
        Command::Eval {
            corpus,
            checkpoint,
            lexicon,
            report,
            overrides,
        } => {
            overrides.apply(&mut cfg);
            cmd_eval(&cfg, &corpus, &checkpoint, lexicon.as_deref(), report.as_deref())
        }
        Command::Extract {
            checkpoint,
            lexicon,
            text,
            input,
            output,
            overrides,
        } => {
            overrides.apply(&mut cfg);
            cmd_extract(
                &cfg,
                &checkpoint,
                lexicon.as_deref(),
                text.as_deref(),
                input.as_deref(),
                output.as_deref(),
            )
        }
        Command::Verify { overrides } => {
            overrides.apply(&mut cfg);
            cmd_verify(&cfg)
        }
    }
}

/// Effective-configuration echo embedded in every written artifact. File
/// paths stay out so identical runs in different directories produce
/// byte-identical artifacts.
fn provenance(cfg: &RunConfig, command: &str) -> serde_json::Value {
    serde_json::json!({
        "command": command,
        "seed": cfg.seed,
        "config": cfg,
    })
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn require_exists(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::config(format!(
            "{what} not found: {}",
            path.display()
        )));
    }
    Ok(())
}

pub fn cmd_synth(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let total = cfg.sentences + cfg.dev_sentences + cfg.test_sentences;
    let synth = cfg.synth_config(total);
    let (records, schema) = generate_synthetic(&synth)?;
    fs::create_dir_all(out_dir)?;

    let train = &records[..cfg.sentences];
    let dev = &records[cfg.sentences..cfg.sentences + cfg.dev_sentences];
    let test = &records[cfg.sentences + cfg.dev_sentences..];

    save_corpus(&out_dir.join("train.ndjson"), train)?;
    if !dev.is_empty() {
        save_corpus(&out_dir.join("dev.ndjson"), dev)?;
    }
    save_corpus(&out_dir.join("test.ndjson"), test)?;
    schema.save(&out_dir.join("schema.json"))?;
    let meta = provenance(cfg, "synth");
    fs::write(
        out_dir.join("synth_meta.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;
    println!(
        "wrote {} train / {} dev / {} test sentences ({} relations) to {}",
        train.len(),
        dev.len(),
        test.len(),
        schema.num_rel(),
        out_dir.display()
    );
    Ok(())
}

fn load_corpus_with_schema(
    corpus_path: &Path,
    schema_path: Option<&Path>,
) -> Result<crate::corpus::LoadOutcome> {
    require_exists(corpus_path, "corpus")?;
    let schema = match schema_path {
        Some(p) => {
            require_exists(p, "schema")?;
            Some(RelationSchema::load(p)?)
        }
        None => None,
    };
    let outcome = load_dataset(corpus_path, schema)?;
    for issue in &outcome.errors {
        eprintln!("warning: line {}: {}", issue.line, issue.reason);
    }
    for issue in &outcome.dropped {
        eprintln!("warning: line {} dropped: {}", issue.line, issue.reason);
    }
    Ok(outcome)
}

pub fn cmd_build_lexicon(
    cfg: &RunConfig,
    corpus_path: &Path,
    schema_path: Option<&Path>,
    checkpoint_path: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let outcome = load_corpus_with_schema(corpus_path, schema_path)?;
    let (model, checkpoint_id) = match checkpoint_path {
        Some(p) => {
            require_exists(p, "checkpoint")?;
            (Model::load(p)?, file_name(p))
        }
        None => {
            let texts: Vec<String> = outcome.sentences.iter().map(|s| s.text.clone()).collect();
            let vocab = TokenVocabulary::build(&texts, cfg.vocab_min_count)?;
            let model = Model::init(
                cfg.model_config(outcome.schema.num_rel()),
                vocab,
                outcome.schema.names().to_vec(),
                cfg.seed,
            )?;
            (model, format!("fresh-init(seed={})", cfg.seed))
        }
    };
    let mut lexicon = build_lexicon(&model, &outcome.sentences, cfg.lexicon_m, &checkpoint_id)?;
    lexicon.provenance = provenance(cfg, "build-lexicon");
    lexicon.save(out)?;
    println!(
        "wrote lexicon for {} relations to {}",
        lexicon.num_rel(),
        out.display()
    );
    Ok(())
}

pub fn cmd_train(
    cfg: &RunConfig,
    corpus_path: &Path,
    schema_path: Option<&Path>,
    out_checkpoint: &Path,
    metrics_path: Option<&Path>,
    lexicon_out: Option<&Path>,
) -> Result<()> {
    let outcome = load_corpus_with_schema(corpus_path, schema_path)?;
    if outcome.sentences.is_empty() {
        return Err(Error::input("training corpus has no usable sentences"));
    }
    let texts: Vec<String> = outcome.sentences.iter().map(|s| s.text.clone()).collect();
    let vocab = TokenVocabulary::build(&texts, cfg.vocab_min_count)?;
    let mut model = Model::init(
        cfg.model_config(outcome.schema.num_rel()),
        vocab,
        outcome.schema.names().to_vec(),
        cfg.seed,
    )?;

    let train_cfg = cfg.train_config();
    let fit_out = fit(&mut model, &outcome.sentences, &train_cfg)?;
    if fit_out.skipped > 0 {
        eprintln!(
            "note: {} sentences without triples were skipped",
            fit_out.skipped
        );
    }

    let prov = provenance(cfg, "train");
    model.save(out_checkpoint, prov.clone())?;
    if let Some(p) = metrics_path {
        write_metrics_log(p, &fit_out.metrics)?;
    }
    if let Some(p) = lexicon_out {
        if let Some(mut lexicon) = fit_out.lexicon {
            lexicon.encoder_checkpoint = file_name(out_checkpoint);
            lexicon.provenance = prov;
            lexicon.save(p)?;
        } else {
            eprintln!("note: enhancement disabled, no lexicon to write");
        }
    }
    if let Some(last) = fit_out.metrics.last() {
        println!(
            "epoch {}: total {:.4} (subject {:.4}, object {:.4}, null {:.4}, preclass {:.4}){}",
            last.epoch,
            last.total,
            last.subject_loss,
            last.object_loss,
            last.null_object_loss,
            last.preclass_loss,
            last.dev_f1
                .map(|f| format!(", dev f1 {f:.4}"))
                .unwrap_or_default()
        );
    }
    println!("wrote checkpoint to {}", out_checkpoint.display());
    Ok(())
}

fn load_model_and_lexicon(
    checkpoint: &Path,
    lexicon: Option<&Path>,
) -> Result<(Model, Option<SubjectLexicon>)> {
    require_exists(checkpoint, "checkpoint")?;
    let model = Model::load(checkpoint)?;
    let lex = match lexicon {
        Some(p) => {
            require_exists(p, "lexicon")?;
            Some(SubjectLexicon::load(p)?)
        }
        None => None,
    };
    if !model.config.disable_enhancement && lex.is_none() {
        return Err(Error::config(
            "this checkpoint uses semantic enhancement: pass --lexicon",
        ));
    }
    Ok((model, lex))
}

pub fn cmd_eval(
    cfg: &RunConfig,
    corpus_path: &Path,
    checkpoint: &Path,
    lexicon: Option<&Path>,
    report_path: Option<&Path>,
) -> Result<()> {
    let (model, lex) = load_model_and_lexicon(checkpoint, lexicon)?;
    require_exists(corpus_path, "corpus")?;
    let outcome = load_dataset(corpus_path, Some(model.schema.clone()))?;
    let echo = provenance(cfg, "eval");
    let report = evaluate(&model, lex.as_ref(), &outcome.sentences, cfg.threshold, echo)?;
    print!("{}", report.render_text());
    if let Some(p) = report_path {
        report.save(p)?;
        println!("wrote report to {}", p.display());
    }
    Ok(())
}

/// One output line of `extract`.
#[derive(Debug, Serialize, Deserialize)]
pub struct PredictionLine {
    pub text: String,
    pub triples: Vec<PredictionTriple>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictionTriple {
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub confidence: f64,
}

pub fn cmd_extract(
    cfg: &RunConfig,
    checkpoint: &Path,
    lexicon: Option<&Path>,
    text: Option<&str>,
    input: Option<&Path>,
    output: Option<&Path>,
) -> Result<()> {
    let (model, lex) = load_model_and_lexicon(checkpoint, lexicon)?;
    let sentences: Vec<String> = match (text, input) {
        (Some(t), None) => vec![t.to_string()],
        (None, Some(p)) => {
            require_exists(p, "input")?;
            fs::read_to_string(p)?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| l.to_string())
                .collect()
        }
        _ => {
            return Err(Error::config(
                "extract needs exactly one of --text or --input",
            ))
        }
    };

    let mut lines = String::new();
    for sentence in &sentences {
        let triples = extract(&model, lex.as_ref(), sentence, cfg.threshold)?;
        if triples.is_empty() {
            continue;
        }
        let line = PredictionLine {
            text: sentence.clone(),
            triples: triples
                .into_iter()
                .map(|t| PredictionTriple {
                    subject: t.subject,
                    relation: model
                        .schema
                        .name_of(t.relation)
                        .unwrap_or("<unknown>")
                        .to_string(),
                    object: t.object,
                    confidence: t.confidence,
                })
                .collect(),
        };
        lines.push_str(&serde_json::to_string(&line)?);
        lines.push('\n');
    }
    match output {
        Some(p) => fs::write(p, lines)?,
        None => {
            let mut stdout = std::io::stdout();
            stdout.write_all(lines.as_bytes())?;
        }
    }
    Ok(())
}

// ── verify ──────────────────────────────────────────────────────────────

const VERIFY_FIXTURE: &str = r#"{"text": "mira governs lyra", "triples": [{"subject": "mira", "relation": "governs", "object": "lyra"}]}
{"text": "odo visits and employs kara", "triples": [{"subject": "odo", "relation": "visits", "object": "kara"}, {"subject": "odo", "relation": "employs", "object": "kara"}]}
{"text": "mira visits tilo and odo governs lyra", "triples": [{"subject": "mira", "relation": "visits", "object": "tilo"}, {"subject": "odo", "relation": "governs", "object": "lyra"}]}"#;

fn verify_model() -> Result<(Model, Vec<crate::corpus::AnnotatedSentence>)> {
    let schema = RelationSchema::from_names(vec![
        "employs".into(),
        "governs".into(),
        "visits".into(),
    ])?;
    let outcome = parse_dataset(VERIFY_FIXTURE, Some(schema.clone()))?;
    if !outcome.errors.is_empty() || !outcome.dropped.is_empty() {
        return Err(Error::contract("verify fixture failed to parse"));
    }
    let texts: Vec<String> = outcome.sentences.iter().map(|s| s.text.clone()).collect();
    let vocab = TokenVocabulary::build(&texts, 1)?;
    let config = ModelConfig {
        dim: 8,
        context_layers: 1,
        max_len: 16,
        num_rel: 3,
        lexicon_m: 4,
        lexicon_n: 2,
        ..ModelConfig::default()
    };
    let model = Model::init(config, vocab, schema.names().to_vec(), 29)?;
    Ok((model, outcome.sentences))
}

struct CheckReport {
    failed: Vec<String>,
}

impl CheckReport {
    fn record(&mut self, name: &str, ok: bool, detail: String) {
        println!("check {name}: {} ({detail})", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed.push(name.to_string());
        }
    }
}

/// Run the invariant suite: gradient checking on the full loss, attention
/// normalization, one-hot blend selection, the span pairing oracle, and
/// soft-label normalization. Exits non-zero if any check fails.
pub fn cmd_verify(cfg: &RunConfig) -> Result<()> {
    let mut report = CheckReport { failed: vec![] };

    // gradient correctness on the full composite loss
    let (model, sentences) = verify_model()?;
    let lexicon = build_lexicon(&model, &sentences, model.config.lexicon_m, "verify")?;
    let targets = RelationTargets::build(&sentences, model.config.num_rel);
    let config = model.config.clone();
    let vocab = model.vocab.clone();
    let err = grad_check(&model.params, 1e-5, |store, tape| {
        let mut totals = Vec::new();
        for (i, sentence) in sentences.iter().enumerate() {
            let (_, total) = sentence_loss(
                tape,
                store,
                &config,
                &vocab,
                Some(&lexicon),
                &targets,
                sentence,
                i,
                &LossWeights::default(),
            )?;
            totals.push(total);
        }
        let stacked = tape.stack_rows(&totals)?;
        Ok(tape.mean(stacked))
    })?;
    report.record(
        "grad-check",
        err < 1e-4,
        format!("max relative error {err:.3e}, tolerance 1e-4"),
    );

    // attention weight normalization over seeded draws
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst = 0.0_f64;
    let mut all_positive = true;
    for _ in 0..1000 {
        let n = rng.random_range(1..=6usize);
        let d = rng.random_range(2..=8usize);
        let mut tape = Tape::new();
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let words: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let vt = tape.constant(v, vec![d])?;
        let wt = tape.constant(words, vec![n, d])?;
        let p = crate::enhance::attention_weights(&mut tape, vt, wt)?;
        let sum: f64 = tape.data(p).iter().sum();
        worst = worst.max((sum - 1.0).abs());
        all_positive &= tape.data(p).iter().all(|&x| x > 0.0);
    }
    report.record(
        "attention-normalization",
        worst < 1e-9 && all_positive,
        format!("worst |sum-1| = {worst:.3e} over 1000 draws"),
    );

    // one-hot blend selection
    let dim = model.config.dim;
    let probe: Vec<f64> = (0..dim).map(|i| 0.3 - 0.1 * i as f64).collect();
    let mut tape = Tape::new();
    let v_sub = tape.constant(probe.clone(), vec![dim])?;
    let sim = crate::lexicon::top_n_similar(
        &probe,
        &lexicon,
        model.config.lexicon_n,
        model.config.distance,
    )?;
    let w = tape.constant(vec![0.0, 1.0, 0.0], vec![3])?;
    let out = enhance(&mut tape, v_sub, &sim, w)?;
    let selected = tape.data(out.v_aug_per_rel)[dim..2 * dim].to_vec();
    let one_hot_ok = tape.data(out.h_aug) == &selected[..];
    report.record(
        "one-hot-selection",
        one_hot_ok,
        "h_aug equals the selected relation vector exactly".to_string(),
    );

    // span pairing against the exhaustive oracle, all patterns of length 6
    let mut pairing_ok = true;
    let n = 6usize;
    'outer: for s_bits in 0..(1u32 << n) {
        for e_bits in 0..(1u32 << n) {
            let starts: Vec<bool> = (0..n).map(|i| s_bits >> i & 1 == 1).collect();
            let ends: Vec<bool> = (0..n).map(|i| e_bits >> i & 1 == 1).collect();
            let sp: Vec<f64> = starts.iter().map(|&b| if b { 0.9 } else { 0.1 }).collect();
            let ep: Vec<f64> = ends.iter().map(|&b| if b { 0.9 } else { 0.1 }).collect();
            let got = decode_spans(&sp, &ep, 0.5);
            let want = verify_pairing_oracle(&starts, &ends);
            if got != want {
                pairing_ok = false;
                break 'outer;
            }
            for w in got.windows(2) {
                if w[0].1 >= w[1].0 {
                    pairing_ok = false;
                    break 'outer;
                }
            }
            if got.iter().any(|&(s, e)| s > e) {
                pairing_ok = false;
                break 'outer;
            }
        }
    }
    report.record(
        "pairing-oracle",
        pairing_ok,
        format!("all {} fire patterns of length {n} agree", (1u64 << n) * (1u64 << n)),
    );

    // soft-label normalization
    let mut label_ok = true;
    for subject in ["mira", "odo"] {
        let label = crate::enhance::build_relation_target(subject, &sentences, 3);
        let sum: f64 = label.probs.iter().sum();
        label_ok &= (sum - 1.0).abs() < 1e-12;
    }
    let synthetic = RelationTargetLabel::from_counts(vec![2, 1, 0]);
    label_ok &= synthetic.probs == vec![2.0 / 3.0, 1.0 / 3.0, 0.0];
    report.record(
        "label-normalization",
        label_ok,
        "soft labels sum to 1 and match count ratios".to_string(),
    );

    if report.failed.is_empty() {
        println!("all checks passed");
        Ok(())
    } else {
        Err(Error::contract(format!(
            "verification failed: {}",
            report.failed.join(", ")
        )))
    }
}

/// Independent restatement of the span pairing rule used by `verify`.
fn verify_pairing_oracle(starts: &[bool], ends: &[bool]) -> Vec<(usize, usize)> {
    let n = starts.len();
    let mut out = Vec::new();
    for s in 0..n {
        if !starts[s] {
            continue;
        }
        let mut q = s;
        loop {
            if q > s && starts[q] {
                break;
            }
            if ends[q] {
                out.push((s, q));
                break;
            }
            q += 1;
            if q == n {
                break;
            }
        }
    }
    out
}
