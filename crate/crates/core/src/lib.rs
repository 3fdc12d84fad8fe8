//! Offensive-language tweet classification with transfer learning.
//!
//! The crate covers the whole pipeline at desk scale:
//!
//! - [`corpus`]: labeled TSV and raw JSON-lines ingestion, tail split,
//!   deduplication and @-mention list extraction.
//! - [`textprep`]: normalization, character-class tokenization and the
//!   meaningful-word filter used for topic modelling.
//! - [`embed`]: word vectors with hashed character n-gram fallback and IDF.
//! - [`lda`]: collapsed Gibbs LDA, fold-in inference and user clustering.
//! - [`net`]: the BiLSTM-CNN classifier with hand-written backpropagation,
//!   per-layer freezing and Nesterov-Adam.
//! - [`transfer`]: pre-training task builders, head replacement and the
//!   unfreezing schedules.
//! - [`evalkit`]: precision/recall/F1, run aggregation and error reports.
//! - [`baseline`]: a linear hinge-loss model over IDF-weighted embeddings.
//! - [`config`]: the key=value run configuration shared by the CLI.
//! - [`fixtures`]: synthetic corpora used by tests and `make-fixtures`.

pub mod baseline;
pub mod config;
pub mod corpus;
pub mod embed;
pub mod emoji;
pub mod error;
pub mod evalkit;
pub mod fixtures;
pub mod lda;
pub mod net;
pub mod textprep;
pub mod transfer;

pub use error::{Error, Result};
