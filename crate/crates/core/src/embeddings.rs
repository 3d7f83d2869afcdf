//! Message embedding storage and the hashed character n-gram embedder.
//!
//! File layout (all stores written by this crate or the offline exporter):
//!
//! ```text
//! TGEMB1\n
//! {"dim": D, "count": N, "provenance": "..."}\n
//! N x [ u16 BE id length | id bytes (UTF-8 "channel:message") | D x f32 LE ]
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, MessageKey};
use crate::error::{Error, Result};

pub const MAGIC: &[u8] = b"TGEMB1\n";
/// Width of the multilingual sentence encoder used by the exporter.
pub const DEFAULT_DIM: usize = 768;
pub const DEFAULT_HASH_DIM: usize = 128;
pub const MIN_HASH_DIM: usize = 8;

#[derive(Serialize, Deserialize)]
struct Header {
    dim: usize,
    count: usize,
    provenance: String,
}

/// Fixed-width vectors keyed by `channel:message` id, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    provenance: String,
    ids: Vec<String>,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(dim: usize, provenance: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("embedding dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            provenance: provenance.into(),
            ids: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn push(&mut self, id: impl Into<String>, vector: &[f32]) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::Data(format!(
                "vector for {id} has {} components, store dimension is {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::Data(format!("vector for {id} has a non-finite component")));
        }
        if id.len() > u16::MAX as usize {
            return Err(Error::Data(format!("id longer than {} bytes", u16::MAX)));
        }
        if self.index.contains_key(&id) {
            return Err(Error::Data(format!("duplicate embedding id {id}")));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index
            .get(id)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn get_key(&self, key: &MessageKey) -> Option<&[f32]> {
        self.get(&key.to_string())
    }

    /// One result per requested id, in request order.
    pub fn get_many<'a, S: AsRef<str>>(&'a self, ids: &[S]) -> Vec<Option<&'a [f32]>> {
        ids.iter().map(|id| self.get(id.as_ref())).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_string(&Header {
            dim: self.dim,
            count: self.ids.len(),
            provenance: self.provenance.clone(),
        })
        .expect("header serializes");
        let mut out = Vec::with_capacity(
            MAGIC.len() + header.len() + 1 + self.ids.len() * (2 + 24) + self.data.len() * 4,
        );
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(header.as_bytes());
        out.push(b'\n');
        for (i, id) in self.ids.iter().enumerate() {
            out.extend_from_slice(&(id.len() as u16).to_be_bytes());
            out.extend_from_slice(id.as_bytes());
            for x in &self.data[i * self.dim..(i + 1) * self.dim] {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let rest = bytes
            .strip_prefix(MAGIC)
            .ok_or_else(|| Error::Format("missing TGEMB1 magic".into()))?;
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("unterminated header line".into()))?;
        let header: Header = serde_json::from_slice(&rest[..nl])
            .map_err(|e| Error::Format(format!("bad header: {e}")))?;
        if header.dim == 0 {
            return Err(Error::Format("header dimension is zero".into()));
        }
        let mut store = EmbeddingStore::new(header.dim, header.provenance)?;
        let mut body = &rest[nl + 1..];
        let mut take = |n: usize, what: &str| -> Result<&[u8]> {
            if body.len() < n {
                return Err(Error::Format(format!("truncated file while reading {what}")));
            }
            let (head, tail) = body.split_at(n);
            body = tail;
            Ok(head)
        };
        let mut vector = vec![0f32; header.dim];
        for r in 0..header.count {
            let len = u16::from_be_bytes(take(2, "id length")?.try_into().unwrap()) as usize;
            let id = std::str::from_utf8(take(len, "id")?)
                .map_err(|_| Error::Format(format!("record {r}: id is not UTF-8")))?
                .to_string();
            let raw = take(4 * header.dim, "vector")?;
            for (x, chunk) in vector.iter_mut().zip(raw.chunks_exact(4)) {
                *x = f32::from_le_bytes(chunk.try_into().unwrap());
            }
            store.push(id, &vector)?;
        }
        if !body.is_empty() {
            return Err(Error::Format(format!(
                "{} trailing bytes after {} records",
                body.len(),
                header.count
            )));
        }
        Ok(store)
    }
}

pub fn save_store(store: &EmbeddingStore, path: &Path) -> Result<()> {
    fs::write(path, store.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_store(path: &Path) -> Result<EmbeddingStore> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingStore::from_bytes(&bytes)
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Character trigrams of the text padded with one space on each side.
/// Shorter strings yield the padded string itself as the only gram.
pub fn char_trigrams(text: &str) -> Vec<String> {
    let padded: Vec<char> = std::iter::once(' ')
        .chain(text.chars())
        .chain(std::iter::once(' '))
        .collect();
    if padded.len() < 3 {
        return vec![padded.iter().collect()];
    }
    padded.windows(3).map(|w| w.iter().collect()).collect()
}

/// Bucket and sign of one gram: `h mod dim`, negative when the top bit is set.
pub fn gram_bucket(gram: &str, dim: usize) -> (usize, f64) {
    let h = fnv1a(gram.as_bytes());
    let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
    ((h % dim as u64) as usize, sign)
}

/// Deterministic stand-in for a sentence encoder: signed feature hashing of
/// character trigrams, L2-normalized. If the hashed counts cancel out
/// completely the vector falls back to a single bucket chosen by the
/// hash of the whole text.
pub fn hash_embed(text: &str, dim: usize) -> Result<Vec<f32>> {
    if dim < MIN_HASH_DIM {
        return Err(Error::InvalidInput(format!(
            "hash embedding dimension must be at least {MIN_HASH_DIM}, got {dim}"
        )));
    }
    let mut acc = vec![0f64; dim];
    for g in char_trigrams(text) {
        let (b, s) = gram_bucket(&g, dim);
        acc[b] += s;
    }
    let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        let mut v = vec![0f32; dim];
        v[(fnv1a(text.as_bytes()) % dim as u64) as usize] = 1.0;
        return Ok(v);
    }
    Ok(acc.iter().map(|x| (x / norm) as f32).collect())
}

/// Hash-embeds every message of a corpus.
pub fn hash_store(corpus: &Corpus, dim: usize) -> Result<EmbeddingStore> {
    let mut store = EmbeddingStore::new(dim, format!("hash-trigram:dim={dim}"))?;
    for m in corpus.messages() {
        store.push(m.key().to_string(), &hash_embed(&m.text, dim)?)?;
    }
    Ok(store)
}
