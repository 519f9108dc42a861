//! Synthetic corpora and epoch planning.
//!
//! [`generate_document`] builds seeded mixed text/formula documents,
//! [`colorize_tokens`] and [`recover_labels`] simulate color-coded rendering
//! and label recovery, [`plan_epoch`] realizes per-source epoch targets by
//! sub-sampling or balanced re-sampling, and [`length_filter`] enforces the
//! token budget.

mod filter;
mod generate;
mod render;
mod sampler;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hst::HstError;
use crate::sdt::TokenizerError;

pub use filter::{length_filter, length_filter_by, FilterOutcome};
pub use generate::{generate_document, generate_samples, DocumentProfile, SampleRecord, SampleTags};
pub use render::{colorize_tokens, recover_labels, ColorMap, ColoredGlyphBox, ColoredToken, RecoveredLabels, Rgb};
pub use sampler::{
    plan_epoch, reference_sources, DataSource, EpochPlan, PlanEntry, Pool, SamplingMode, SourcePlan, SourceSpec,
    SourceTags,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("formula density {0} is outside [0, 1]")]
    InvalidDensity(f64),
    #[error("invalid {name} range [{min}, {max}]")]
    InvalidRange { name: &'static str, min: usize, max: usize },
    #[error("unknown language tag `{0}` (expected EN, CH or Mix)")]
    UnknownLanguage(String),
    #[error("{count} tokens exceed the 2^24 color space")]
    TooManyTokens { count: usize },
    #[error("render contains unknown color {0}")]
    UnknownColor(Rgb),
    #[error("source `{name}`: {reason}")]
    InvalidSource { name: String, reason: String },
    #[error(transparent)]
    Hst(#[from] HstError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Independent, reproducible sub-seed for stream `stream` of `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Modality tag of a label: text, formula or mix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContentModality {
    Text,
    Formula,
    Mix,
}
