use std::time::Duration;

use propwatch_core::corpus::Message;
use propwatch_core::embeddings::{hash_embed, load_store, EmbeddingStore};
use serde::{Deserialize, Serialize};

use crate::config::EmbeddingSource;
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub dim: usize,
    pub vectors: Vec<Vec<f32>>,
}

/// Blocking client for the `/embed` route. Safe to call from any thread,
/// including inside an async runtime's blocking pool.
#[derive(Debug, Clone)]
pub struct EndpointClient {
    url: String,
    dim: usize,
    agent: ureq::Agent,
}

impl EndpointClient {
    pub fn new(url: impl Into<String>, dim: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(10)))
            .build()
            .into();
        Self {
            url: url.into(),
            dim,
            agent,
        }
    }

    pub fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        let body = EmbedRequest { texts: texts.to_vec() };
        let resp: EmbedResponse = self
            .agent
            .post(&self.url)
            .send_json(&body)
            .map_err(|e| Error::Http(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| Error::Http(e.to_string()))?;
        if resp.dim != self.dim || resp.vectors.len() != texts.len() || resp.vectors.iter().any(|v| v.len() != self.dim) {
            return Err(Error::Http(format!(
                "embed endpoint returned {} vectors of dimension {}, expected {} of {}",
                resp.vectors.len(),
                resp.dim,
                texts.len(),
                self.dim
            )));
        }
        Ok(resp.vectors)
    }
}

#[derive(Debug, Clone)]
pub enum Embedder {
    Store(EmbeddingStore),
    Endpoint(EndpointClient),
    Hash { dim: usize },
}

impl Embedder {
    pub fn from_source(source: &EmbeddingSource) -> Result<Self> {
        Ok(match source {
            EmbeddingSource::Store { path } => Embedder::Store(load_store(path)?),
            EmbeddingSource::Endpoint { url, dim } => Embedder::Endpoint(EndpointClient::new(url.clone(), *dim)),
            EmbeddingSource::Hash { dim } => {
                hash_embed("", *dim)?;
                Embedder::Hash { dim: *dim }
            }
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Embedder::Store(s) => s.dim(),
            Embedder::Endpoint(c) => c.dim,
            Embedder::Hash { dim } => *dim,
        }
    }

    /// `None` when the source has no vector for this message.
    pub fn embed(&self, message: &Message) -> Option<Vec<f32>> {
        match self {
            Embedder::Store(s) => s.get_key(&message.key()).map(<[f32]>::to_vec),
            Embedder::Hash { dim } => hash_embed(&message.text, *dim).ok(),
            Embedder::Endpoint(c) => match c.embed_texts(std::slice::from_ref(&message.text)) {
                Ok(mut v) => v.pop(),
                Err(e) => {
                    log::warn!("embedding {} failed: {e}", message.key());
                    None
                }
            },
        }
    }
}
