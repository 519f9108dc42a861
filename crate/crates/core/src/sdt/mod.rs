//! Semantic-decoupled tokenization.
//!
//! Text and formula corpora get their own byte-level BPE models. The formula
//! model's tokens are then appended to the text vocabulary as atomic entries,
//! skipping any surface the text vocabulary already has, so that a command
//! such as `\sum` never shares an id with the English word `sum`.

mod bpe;
pub mod bytes;
mod pretokenize;
mod segment;
mod vocab;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bpe::{train_bpe, BpeModel};
pub use pretokenize::pretokenize;
pub use segment::{segment_label, Segment, SegmentedLabel};
pub use vocab::{
    merge_decoupled, modality_overlap_report, DecoupledVocabulary, OverlapEntry, VocabularyFile,
};

/// Token id in a vocabulary.
pub type TokenId = u32;

pub const BOS: &str = "<BOS>";
pub const EOS: &str = "<EOS>";
pub const LINE_BREAK: &str = "<|ln|>";
pub const PARAGRAPH_END: &str = "<|pn|>";
pub const PAD: &str = "<PAD>";

/// Reserved specials, in the order they are appended to a merged vocabulary.
pub const RESERVED_SPECIALS: [&str; 5] = [BOS, EOS, LINE_BREAK, PARAGRAPH_END, PAD];

/// Vocabulary size used for the full-scale recognizer.
pub const FULL_SCALE_VOCAB_SIZE: usize = 56_371;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Formula,
    Special,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenEntry {
    pub id: TokenId,
    pub surface: String,
    pub modality: Modality,
}

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("vocab too small: target {target} is below the base alphabet size {alphabet}")]
    VocabTooSmall { target: usize, alphabet: usize },
    #[error("cannot train a tokenizer for modality {0:?}")]
    UntrainableModality(Modality),
    #[error("unbalanced math delimiter `{delimiter}` at byte offset {offset}")]
    UnbalancedDelimiter { offset: usize, delimiter: String },
    #[error("reserved token `{token}` at byte offset {offset} cannot appear in a label")]
    ReservedToken { offset: usize, token: String },
    #[error("token id {id} at position {position} is out of range for vocabulary of size {size}")]
    IdOutOfRange {
        position: usize,
        id: TokenId,
        size: usize,
    },
    #[error("internal error: no token covers byte {0:#04x}")]
    Unrepresentable(u8),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TokenizerError> = std::result::Result<T, E>;
