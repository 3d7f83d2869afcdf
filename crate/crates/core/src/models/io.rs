//! Model files: a JSON envelope with MLP weights as base64 little-endian
//! `f32` blobs.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::gbt::{GbtModel, GbtParams, Node, Tree};
use super::mlp::{Dense, InputKind, InputSpec, MlpModel, MlpParams};
use crate::error::{Error, Result};
use crate::features::FeatureSchema;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Gbt(GbtModel),
    Mlp(MlpModel),
}

impl AnyModel {
    pub fn kind(&self) -> &'static str {
        match self {
            AnyModel::Gbt(_) => "gbt",
            AnyModel::Mlp(_) => "mlp",
        }
    }

    /// `kind-` plus the first 12 hex digits of the SHA-256 of the file body.
    pub fn id(&self) -> String {
        let body = to_json(self).expect("model serializes");
        let digest = Sha256::digest(body.as_bytes());
        let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
        format!("{}-{hex}", self.kind())
    }

    pub fn into_gbt(self) -> Result<GbtModel> {
        match self {
            AnyModel::Gbt(m) => Ok(m),
            other => Err(Error::SchemaMismatch {
                expected: "gbt".into(),
                found: other.kind().into(),
            }),
        }
    }

    pub fn into_mlp(self) -> Result<MlpModel> {
        match self {
            AnyModel::Mlp(m) => Ok(m),
            other => Err(Error::SchemaMismatch {
                expected: "mlp".into(),
                found: other.kind().into(),
            }),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SchemaRecord {
    #[serde(flatten)]
    schema: FeatureSchema,
    hash: String,
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    inputs: usize,
    outputs: usize,
    activation: String,
    weights: String,
    bias: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Envelope {
    Gbt {
        version: u32,
        feature_schema: Option<SchemaRecord>,
        parameters: GbtParams,
        n_features: usize,
        base_score: f64,
        trees: Vec<Tree>,
    },
    Mlp {
        version: u32,
        input: InputSpec,
        parameters: MlpParams,
        layers: Vec<LayerRecord>,
    },
}

fn encode_f32(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for &v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    STANDARD.encode(bytes)
}

fn decode_f32(blob: &str, expected: usize, what: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(blob)
        .map_err(|e| Error::Format(format!("{what}: bad base64: {e}")))?;
    if bytes.len() != expected * 4 {
        return Err(Error::Format(format!(
            "{what}: expected {expected} floats, found {} bytes",
            bytes.len()
        )));
    }
    let out: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data(format!("{what}: non-finite weight")));
    }
    Ok(out)
}

fn to_json(model: &AnyModel) -> Result<String> {
    let env = match model {
        AnyModel::Gbt(m) => Envelope::Gbt {
            version: FORMAT_VERSION,
            feature_schema: m.schema.clone().map(|s| SchemaRecord {
                hash: s.hash(),
                schema: s,
            }),
            parameters: m.params,
            n_features: m.n_features,
            base_score: m.base_score,
            trees: m.trees.clone(),
        },
        AnyModel::Mlp(m) => Envelope::Mlp {
            version: FORMAT_VERSION,
            input: m.input.clone(),
            parameters: m.params.clone(),
            layers: m
                .layers
                .iter()
                .enumerate()
                .map(|(i, l)| LayerRecord {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    activation: if i + 1 == m.layers.len() { "sigmoid" } else { "relu" }.into(),
                    weights: encode_f32(&l.weights),
                    bias: encode_f32(&l.bias),
                })
                .collect(),
        },
    };
    Ok(serde_json::to_string_pretty(&env)?)
}

fn check_version(v: u32) -> Result<()> {
    if v != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported model file version {v}")));
    }
    Ok(())
}

fn validate_tree(t: &Tree, n_features: usize) -> Result<()> {
    if t.nodes.is_empty() {
        return Err(Error::Format("empty tree".into()));
    }
    for (i, n) in t.nodes.iter().enumerate() {
        match *n {
            Node::Leaf { value } if !value.is_finite() => {
                return Err(Error::Data("non-finite leaf value".into()))
            }
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                // children always follow their parent, which rules out cycles
                if feature >= n_features
                    || !threshold.is_finite()
                    || left <= i
                    || right <= i
                    || left >= t.nodes.len()
                    || right >= t.nodes.len()
                {
                    return Err(Error::Format(format!("invalid split node {i}")));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

fn from_json(text: &str) -> Result<AnyModel> {
    let env: Envelope =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("model file: {e}")))?;
    match env {
        Envelope::Gbt {
            version,
            feature_schema,
            parameters,
            n_features,
            base_score,
            trees,
        } => {
            check_version(version)?;
            let schema = match feature_schema {
                Some(rec) => {
                    let actual = rec.schema.hash();
                    if actual != rec.hash {
                        return Err(Error::SchemaMismatch {
                            expected: rec.hash,
                            found: actual,
                        });
                    }
                    Some(rec.schema)
                }
                None => None,
            };
            if !base_score.is_finite() {
                return Err(Error::Data("non-finite base score".into()));
            }
            for t in &trees {
                validate_tree(t, n_features)?;
            }
            Ok(AnyModel::Gbt(GbtModel {
                params: parameters,
                n_features,
                base_score,
                trees,
                schema,
            }))
        }
        Envelope::Mlp {
            version,
            input,
            parameters,
            layers,
        } => {
            check_version(version)?;
            let mut expected_in = input.width();
            let mut out = Vec::with_capacity(layers.len());
            for (i, l) in layers.iter().enumerate() {
                if l.inputs != expected_in {
                    return Err(Error::Format(format!("layer {i} input size does not chain")));
                }
                out.push(Dense {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    weights: decode_f32(&l.weights, l.inputs * l.outputs, "weights")?,
                    bias: decode_f32(&l.bias, l.outputs, "bias")?,
                });
                expected_in = l.outputs;
            }
            if out.is_empty() || expected_in != 1 {
                return Err(Error::Format("network must end in a single output".into()));
            }
            Ok(AnyModel::Mlp(MlpModel {
                input,
                params: parameters,
                layers: out,
            }))
        }
    }
}

pub fn save_model(path: &Path, model: &AnyModel) -> Result<()> {
    let mut text = to_json(model)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<AnyModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}

/// Loads a boosted-tree model and checks it was trained on `schema`.
pub fn load_gbt_for(path: &Path, schema: &FeatureSchema) -> Result<GbtModel> {
    let m = load_model(path)?.into_gbt()?;
    m.check_schema(schema)?;
    Ok(m)
}

/// Loads an MLP and checks its input kind and embedding dimension.
pub fn load_mlp_for(path: &Path, kind: InputKind, embedding_dim: usize) -> Result<MlpModel> {
    let m = load_model(path)?.into_mlp()?;
    m.check_input(kind, embedding_dim)?;
    Ok(m)
}

impl MlpModel {
    pub fn check_input(&self, kind: InputKind, embedding_dim: usize) -> Result<()> {
        if self.input.kind != kind || self.input.embedding_dim != embedding_dim {
            return Err(Error::SchemaMismatch {
                expected: format!("{kind:?} input of dimension {embedding_dim}"),
                found: format!("{:?} input of dimension {}", self.input.kind, self.input.embedding_dim),
            });
        }
        Ok(())
    }
}
