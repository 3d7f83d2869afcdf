//! Live moderation: scores incoming reply events with a trained pair
//! detector and, when configured, deletes propaganda through a
//! Bot-API-shaped HTTP connector.

pub mod bench;
pub mod config;
pub mod detector;
pub mod embed;
pub mod serve;
pub mod stub;
pub mod telegram;

pub use bench::{latency_bench, BenchResult};
pub use config::{Action, BotConfig, EmbeddingSource, MissingPolicy};
pub use detector::{Detector, Outcome, Scored};
pub use embed::Embedder;
pub use serve::{serve, ServeOptions, ServeReport, VerdictRecord};
pub use telegram::TelegramClient;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] propwatch_core::Error),

    #[error("invalid bot configuration: {0}")]
    Config(String),

    #[error("HTTP request failed: {0}")]
    Http(String),

    #[error("API call {method} rejected: {description}")]
    Api { method: String, description: String },

    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
