//! Detection of coordinated propaganda accounts in Telegram-style chat
//! corpora: ingestion, labeling, coordination analysis, topic clustering,
//! feature and embedding based classifiers, and evaluation.

pub mod coordination;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod labeling;
pub mod models;
pub mod synthgen;
pub mod text;
pub mod topics;

pub use error::{Error, Result};
