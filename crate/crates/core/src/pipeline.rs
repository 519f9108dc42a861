//! End-to-end run: generate a corpus, train tokenizers, encode the three
//! ablation label variants, filter by length, plan an epoch, decode with an
//! identity mock and evaluate.
//!
//! Stages talk only through files. Everything is written to a staging
//! directory inside `out_dir` and moved into place once every stage has
//! succeeded; on failure the staging directory is removed.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    derive_seed, generate_samples, length_filter_by, plan_epoch, reference_sources, DataSource, DocumentProfile,
    SampleRecord, SourceSpec,
};
use crate::decode::{fit_geometry, greedy_decode, DecodeContext, ReferenceScorer, HEIGHT_CAP, MAX_TOKENS, WIDTH_CAP};
use crate::evalbench::{evaluate, render_report, CanonMode, RawEvalRecord, RawTags, ReportFormat};
use crate::hst::decode_hst;
use crate::jsonl;
use crate::sdt::{merge_decoupled, segment_label, train_bpe, DecoupledVocabulary, Modality, TokenId};

const STAGING: &str = ".staging";

fn default_n_docs() -> usize {
    24
}
fn default_scale() -> u64 {
    1000
}
fn default_text_vocab() -> usize {
    700
}
fn default_formula_vocab() -> usize {
    400
}
fn default_coupled_vocab() -> usize {
    900
}
fn default_max_len() -> usize {
    MAX_TOKENS
}

/// Pipeline configuration. Relative paths resolve against `base_dir`
/// (the directory of the config file when loaded with [`RunConfig::load`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default = "default_n_docs")]
    pub n_docs: usize,
    /// Document profile JSON; the built-in default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<PathBuf>,
    /// Source manifest JSON; the reference data mix when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(default = "default_scale")]
    pub scale: u64,
    #[serde(default = "default_text_vocab")]
    pub text_vocab_size: usize,
    #[serde(default = "default_formula_vocab")]
    pub formula_vocab_size: usize,
    #[serde(default = "default_coupled_vocab")]
    pub coupled_vocab_size: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn out_path(&self) -> PathBuf {
        self.resolve(&self.out_dir)
    }

    /// Checks every input path and numeric setting; nothing is written.
    pub fn validate(&self) -> Result<(), PipelineError> {
        for (what, p) in [("profile", &self.profile), ("manifest", &self.manifest)] {
            if let Some(p) = p {
                let full = self.resolve(p);
                if !full.is_file() {
                    return Err(PipelineError::Config(format!("{what} file {} does not exist", full.display())));
                }
            }
        }
        let out = self.out_path();
        if out.exists() && !out.is_dir() {
            return Err(PipelineError::Config(format!("output {} is not a directory", out.display())));
        }
        if self.n_docs == 0 || self.scale == 0 || self.max_len < 2 {
            return Err(PipelineError::Config("n_docs and scale must be positive, max_len at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: &'static str, message: String },
}

fn stage<T, E: std::fmt::Display>(name: &'static str, r: Result<T, E>) -> Result<T, PipelineError> {
    r.map_err(|e| PipelineError::Stage {
        stage: name,
        message: e.to_string(),
    })
}

/// One ablation axis of the label encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Hierarchical supervision tokens, decoupled vocabulary.
    Full,
    /// Supervision tokens stripped, decoupled vocabulary.
    NohstSdt,
    /// Supervision tokens stripped, single coupled vocabulary.
    NohstNosdt,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::NohstSdt, Variant::NohstNosdt];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NohstSdt => "nohst_sdt",
            Variant::NohstNosdt => "nohst_nosdt",
        }
    }

    pub fn label(self, sample: &SampleRecord) -> &str {
        match self {
            Variant::Full => &sample.hst_label,
            _ => &sample.label,
        }
    }

    pub fn mode(self) -> CanonMode {
        match self {
            Variant::Full => CanonMode::Hst,
            _ => CanonMode::Raw,
        }
    }

    fn vocab_file(self) -> &'static str {
        match self {
            Variant::NohstNosdt => "vocab_coupled.json",
            _ => "vocab_sdt.json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub kept: usize,
    pub dropped: usize,
    pub avg: Option<f64>,
    pub overall_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub samples: usize,
    pub sdt_vocab_size: usize,
    pub coupled_vocab_size: usize,
    pub epoch_total: u64,
    pub variants: Vec<VariantSummary>,
    /// Artifact file names, in the order they were produced.
    pub artifacts: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct EncodedRecord {
    id: String,
    ids: Vec<TokenId>,
}

#[derive(Serialize)]
struct Stamped<'a, T> {
    seed: u64,
    artifact: &'a str,
    #[serde(flatten)]
    body: T,
}

struct Stager {
    dir: PathBuf,
    seed: u64,
    written: Vec<String>,
}

impl Stager {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn json<T: Serialize>(&mut self, name: &str, body: &T) -> std::io::Result<()> {
        let stamped = Stamped {
            seed: self.seed,
            artifact: name,
            body,
        };
        let mut text = serde_json::to_string_pretty(&stamped)?;
        text.push('\n');
        self.raw(name, text.as_bytes())
    }

    fn jsonl<T: Serialize>(&mut self, name: &str, records: impl IntoIterator<Item = T>) -> std::io::Result<()> {
        let mut out = BufWriter::new(fs::File::create(self.path(name))?);
        jsonl::write_header(&mut out, self.seed, name)?;
        for r in records {
            jsonl::write_record(&mut out, &r)?;
        }
        out.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn raw(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        fs::write(self.path(name), bytes)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn read_jsonl<T: serde::de::DeserializeOwned>(&self, name: &str) -> std::io::Result<Vec<T>> {
        jsonl::read_all(BufReader::new(fs::File::open(self.path(name))?))
    }
}

/// Runs every stage and returns the summary (also written as `summary.json`).
pub fn run_pipeline(config: &RunConfig) -> Result<RunSummary, PipelineError> {
    config.validate()?;
    let out = config.out_path();
    let staging = out.join(STAGING);
    stage("setup", fs::create_dir_all(&out))?;
    if staging.exists() {
        stage("setup", fs::remove_dir_all(&staging))?;
    }
    stage("setup", fs::create_dir_all(&staging))?;
    let mut stager = Stager {
        dir: staging.clone(),
        seed: config.seed,
        written: Vec::new(),
    };
    let result = run_stages(config, &mut stager).and_then(|summary| {
        for name in &stager.written {
            stage("publish", fs::rename(staging.join(name), out.join(name)))?;
        }
        Ok(summary)
    });
    if let Err(e) = fs::remove_dir_all(&staging) {
        log::warn!("could not remove {}: {e}", staging.display());
    }
    result
}

fn run_stages(config: &RunConfig, st: &mut Stager) -> Result<RunSummary, PipelineError> {
    let seed = config.seed;

    // gen
    let profile: DocumentProfile = match &config.profile {
        Some(p) => stage("gen", read_json(&config.resolve(p)))?,
        None => DocumentProfile::default(),
    };
    let (_, samples) = stage("gen", generate_samples(derive_seed(seed, 0), config.n_docs, &profile))?;
    stage("gen", st.jsonl("samples.jsonl", &samples))?;
    log::info!("generated {} samples", samples.len());

    // tokenizers
    let samples: Vec<SampleRecord> = stage("train", st.read_jsonl("samples.jsonl"))?;
    let (text_corpus, formula_corpus) = split_modalities(&samples);
    let text = stage("train", train_bpe(&text_corpus, config.text_vocab_size, Modality::Text))?;
    let formula = stage("train", train_bpe(&formula_corpus, config.formula_vocab_size, Modality::Formula))?;
    let coupled = stage(
        "train",
        train_bpe(samples.iter().map(|s| s.label.as_str()), config.coupled_vocab_size, Modality::Text),
    )?;
    for (name, vocab) in [
        ("vocab_sdt.json", merge_decoupled(&text, &formula)),
        ("vocab_coupled.json", DecoupledVocabulary::coupled(&coupled)),
    ] {
        let mut file = vocab.to_file();
        file.seed = Some(seed);
        let mut json = stage("train", serde_json::to_string_pretty(&file))?;
        json.push('\n');
        stage("train", st.raw(name, json.as_bytes()))?;
    }

    // encode + filter
    let mut kept_by_variant = Vec::new();
    let mut filter_stats = Vec::new();
    for variant in Variant::ALL {
        let vocab = stage("encode", DecoupledVocabulary::load(st.path(variant.vocab_file())))?;
        let encoded = samples
            .iter()
            .map(|s| {
                vocab.encode(variant.label(s)).map(|ids| EncodedRecord {
                    id: s.id.clone(),
                    ids,
                })
            })
            .collect::<Result<Vec<_>, _>>();
        let encoded = stage("encode", encoded)?;
        stage("encode", st.jsonl(&format!("encoded_{}.jsonl", variant.name()), &encoded))?;

        let outcome = length_filter_by(&vocab, samples.clone(), config.max_len, |s| variant.label(s));
        filter_stats.push(serde_json::json!({
            "variant": variant,
            "max_len": config.max_len,
            "kept": outcome.kept.len(),
            "dropped": outcome.dropped.len(),
            "dropped_by_tag": outcome.dropped_by_tag,
        }));
        kept_by_variant.push(outcome.kept);
    }
    stage("filter", st.json("filter.json", &serde_json::json!({ "variants": filter_stats })))?;

    // plan
    let specs: Vec<SourceSpec> = match &config.manifest {
        Some(p) => stage("plan", read_json(&config.resolve(p)))?,
        None => reference_sources(1),
    };
    let manifest_dir = config.manifest.as_ref().map_or(config.base_dir.clone(), |p| {
        config.resolve(p).parent().map(Path::to_path_buf).unwrap_or_default()
    });
    let sources = specs
        .iter()
        .map(|s| DataSource::from_spec(s, &manifest_dir, config.scale))
        .collect::<Result<Vec<_>, _>>();
    let plan = stage("plan", plan_epoch(&stage("plan", sources)?, derive_seed(seed, 1)))?;
    let epoch_total = plan.total();
    stage("plan", st.json("plan.json", &plan))?;

    // decode + eval
    let geometry = stage("decode", fit_geometry(HEIGHT_CAP, WIDTH_CAP))?;
    let context = DecodeContext {
        visual_tokens: geometry.visual_tokens as usize,
    };
    let mut variants = Vec::new();
    for (variant, kept) in Variant::ALL.into_iter().zip(kept_by_variant) {
        let vocab = stage("decode", DecoupledVocabulary::load(st.path(variant.vocab_file())))?;
        let encoded: Vec<EncodedRecord> = stage("decode", st.read_jsonl(&format!("encoded_{}.jsonl", variant.name())))?;
        let by_id: std::collections::HashMap<&str, &[TokenId]> =
            encoded.iter().map(|r| (r.id.as_str(), r.ids.as_slice())).collect();
        let mut records = Vec::with_capacity(kept.len());
        for sample in &kept {
            let target = by_id[sample.id.as_str()].to_vec();
            let scorer = ReferenceScorer::new(target, &vocab);
            let ids = stage("decode", greedy_decode(&scorer, &vocab, &context, config.max_len))?;
            let pred = stage("decode", vocab.decode(&ids))?;
            let modality = serde_json::to_value(sample.tags.modality).ok();
            records.push(RawEvalRecord {
                id: sample.id.clone(),
                gt: variant.label(sample).to_string(),
                pred,
                tags: RawTags {
                    modality: modality.as_ref().and_then(|v| v.as_str()).unwrap_or_default().to_string(),
                    level: Some(sample.tags.level.tag().to_string()),
                    language: Some(sample.tags.language.clone()),
                    domain: Some(sample.tags.domain.clone()),
                },
                degenerate: false,
            });
        }
        let records_name = format!("records_{}.jsonl", variant.name());
        stage("decode", st.jsonl(&records_name, &records))?;

        let raw: Vec<RawEvalRecord> = stage("eval", st.read_jsonl(&records_name))?;
        let report = stage("eval", evaluate(raw, variant.mode()))?;
        stage("eval", st.json(&format!("report_{}.json", variant.name()), &serde_json::json!({ "report": report })))?;
        let table = format!("seed: {seed}\n\n{}", render_report(&report, ReportFormat::Table));
        stage("eval", st.raw(&format!("report_{}.txt", variant.name()), table.as_bytes()))?;
        variants.push(VariantSummary {
            variant,
            kept: kept.len(),
            dropped: samples.len() - kept.len(),
            avg: report.avg,
            overall_mean: report.overall_mean,
        });
    }

    let mut summary = RunSummary {
        samples: samples.len(),
        sdt_vocab_size: merge_decoupled(&text, &formula).len(),
        coupled_vocab_size: DecoupledVocabulary::coupled(&coupled).len(),
        epoch_total,
        variants,
        artifacts: st.written.clone(),
    };
    summary.artifacts.push("summary.json".into());
    stage("report", st.json("summary.json", &summary))?;
    Ok(summary)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Text and formula training corpora: segment contents with the supervision
/// tokens undone.
fn split_modalities(samples: &[SampleRecord]) -> (Vec<String>, Vec<String>) {
    let mut text = Vec::new();
    let mut formula = Vec::new();
    for s in samples {
        let Ok(label) = segment_label(&s.hst_label) else { continue };
        for seg in label.segments {
            match seg.modality {
                Modality::Formula => formula.push(seg.content),
                _ => text.push(decode_hst(&seg.content)),
            }
        }
    }
    (text, formula)
}
