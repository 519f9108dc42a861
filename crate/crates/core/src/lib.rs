//! Infrastructure for unified text and formula recognition.
//!
//! - [`sdt`]: decoupled text/formula BPE tokenization.
//! - [`hst`]: line and paragraph supervision tokens in labels.
//! - [`corpus`]: synthetic documents, color alignment, epoch planning.
//! - [`evalbench`]: normalized edit distance and grouped reports.
//! - [`decode`]: image geometry and greedy decoding over a pluggable scorer.
//! - [`pipeline`]: end-to-end reproducible runs.

pub mod corpus;
pub mod decode;
pub mod evalbench;
pub mod hst;
pub mod jsonl;
pub mod pipeline;
pub mod sdt;
