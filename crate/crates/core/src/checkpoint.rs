//! Versioned single-file checkpoints.
//!
//! Layout: 8-byte magic `VALTACKP`, u32 LE format version, u64 LE manifest
//! length, the JSON manifest, then every parameter group as little-endian
//! f64 in [`PARAM_GROUPS`] order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{Affine, BiasTable, ModelConfig, ModelParams, PARAM_GROUPS};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VALTACKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GroupEntry {
    name: String,
    len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    config: ModelConfig,
    vocab_hash: String,
    vocabulary: Vec<String>,
    item_ids: Vec<String>,
    user_ids: Vec<String>,
    groups: Vec<GroupEntry>,
}

/// A trained model together with the vocabulary it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub vocabulary: Vocabulary,
}

/// Hex SHA-256 of the newline-joined vocabulary.
pub fn vocabulary_hash(vocab: &Vocabulary) -> String {
    let mut h = Sha256::new();
    for t in vocab.tokens() {
        h.update(t.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

pub fn encode_checkpoint(params: &ModelParams, vocabulary: &Vocabulary) -> Result<Vec<u8>> {
    params.validate()?;
    if vocabulary.len() != params.config.vocab_size {
        return Err(Error::InvalidArgument("vocabulary size does not match model".into()));
    }
    let groups = params.groups();
    let manifest = Manifest {
        format_version: CHECKPOINT_VERSION,
        config: params.config,
        vocab_hash: vocabulary_hash(vocabulary),
        vocabulary: vocabulary.tokens().to_vec(),
        item_ids: params.bias_item.ids().to_vec(),
        user_ids: params.bias_user.ids().to_vec(),
        groups: PARAM_GROUPS
            .iter()
            .zip(groups.iter())
            .map(|(n, g)| GroupEntry {
                name: n.to_string(),
                len: g.len(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&manifest)?;
    let n_values: usize = groups.iter().map(|g| g.len()).sum();
    let mut out = Vec::with_capacity(20 + json.len() + 8 * n_values);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for g in groups {
        for v in g {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let corrupt = |m: &str| Error::Corrupt(format!("checkpoint: {m}"));
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            what: "checkpoint".into(),
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let mlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = bytes.get(20..).ok_or_else(|| corrupt("truncated"))?;
    if body.len() < mlen {
        return Err(corrupt("truncated manifest"));
    }
    let manifest: Manifest = serde_json::from_slice(&body[..mlen])?;
    if manifest.format_version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            what: "checkpoint manifest".into(),
            expected: CHECKPOINT_VERSION,
            found: manifest.format_version,
        });
    }
    let vocabulary = Vocabulary::new(manifest.vocabulary.clone())?;
    if vocabulary_hash(&vocabulary) != manifest.vocab_hash {
        return Err(corrupt("vocabulary hash mismatch"));
    }

    let cfg = manifest.config;
    let mut params = ModelParams::zeros(cfg, Vec::<String>::new(), Vec::<String>::new())?;
    params.bias_item = BiasTable::from_parts(manifest.item_ids.clone(), vec![0.0; manifest.item_ids.len()])?;
    params.bias_user = BiasTable::from_parts(manifest.user_ids.clone(), vec![0.0; manifest.user_ids.len()])?;
    let (v, a, h, t) = (cfg.vocab_size, cfg.aspects, cfg.hidden, cfg.topics());
    params.trunk = Affine::zeros(h, v);
    params.aspect_head = Affine::zeros(a, h);
    params.topic_head = Affine::zeros(t, 2 * h);
    params.decoder = Affine::zeros(v, t);

    let mut data = body[mlen..].chunks_exact(8);
    if data.len() * 8 != body.len() - mlen {
        return Err(corrupt("weight section is not a whole number of f64 values"));
    }
    for (i, group) in params.groups_mut().into_iter().enumerate() {
        let entry = manifest.groups.get(i).ok_or_else(|| corrupt("missing group"))?;
        if entry.name != PARAM_GROUPS[i] || entry.len != group.len() {
            return Err(corrupt(&format!("group {} does not match config", entry.name)));
        }
        for slot in group.iter_mut() {
            let chunk = data.next().ok_or_else(|| corrupt("truncated weights"))?;
            *slot = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    if data.next().is_some() {
        return Err(corrupt("trailing data"));
    }
    Ok(Checkpoint { params, vocabulary })
}

pub fn checkpoint_save(params: &ModelParams, vocabulary: &Vocabulary, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(params, vocabulary)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn checkpoint_load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
