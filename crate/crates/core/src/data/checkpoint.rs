use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::DspConfig;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::numerics::{ParamStore, Tensor};
use crate::text::{Vocabulary, RESERVED};

use super::cache::write_atomic;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CL4A";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;
const DIGEST_LEN: usize = 32;

/// Everything a checkpoint must agree on with the code that loads it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointConfig {
    pub model: ModelConfig,
    pub dsp: DspConfig,
}

/// Hex SHA-256 of the config's JSON form.
pub fn config_hash(cfg: &CheckpointConfig) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(cfg).expect("config serializes")))
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: CheckpointConfig,
    pub vocab: Vocabulary,
    pub model: Model<f32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    config: CheckpointConfig,
    config_hash: String,
    /// Corpus tokens; reserved tokens are implied.
    vocab: Vec<String>,
    params: Vec<ParamEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
    /// Offset into the payload, in values.
    offset: usize,
}

/// Layout: magic, version (u32 LE), metadata length (u64 LE), metadata JSON,
/// parameter values as f32 LE, SHA-256 of all preceding bytes.
pub fn write_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    if ckpt.vocab.len() != ckpt.model.net.vocab_size() {
        return Err(Error::Contract(format!(
            "vocabulary of {} tokens for a model with {} outputs",
            ckpt.vocab.len(),
            ckpt.model.net.vocab_size()
        )));
    }
    let mut offset = 0;
    let params = ckpt
        .model
        .params
        .iter()
        .map(|(_, p)| {
            let e = ParamEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                trainable: p.trainable,
                offset,
            };
            offset += p.value.numel();
            e
        })
        .collect();
    let meta = Metadata {
        config: ckpt.config.clone(),
        config_hash: config_hash(&ckpt.config),
        vocab: ckpt.vocab.tokens()[RESERVED.len()..].to_vec(),
        params,
    };
    let json = serde_json::to_vec(&meta).expect("metadata serializes");
    let mut out = Vec::with_capacity(HEADER_LEN + json.len() + 4 * offset + DIGEST_LEN);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, p) in ckpt.model.params.iter() {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path, &write_checkpoint(ckpt)?)
}

/// Parses checkpoint bytes. `path` only labels errors.
pub fn read_checkpoint(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let corrupt = |offset: usize, reason: String| Error::Corruption {
        path: path.to_path_buf(),
        offset: offset as u64,
        reason,
    };
    if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(corrupt(0, "missing CL4A magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(corrupt(bytes.len(), "file ends inside the header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version(format!(
            "{}: checkpoint format {version}, this build reads {CHECKPOINT_VERSION}",
            path.display()
        )));
    }
    let meta_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let meta_end = usize::try_from(meta_len)
        .ok()
        .and_then(|n| n.checked_add(HEADER_LEN))
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt(bytes.len(), format!("file ends inside {meta_len} bytes of metadata")))?;
    let meta: Metadata = serde_json::from_slice(&bytes[HEADER_LEN..meta_end])
        .map_err(|e| corrupt(HEADER_LEN + e.column().saturating_sub(1), format!("bad metadata ({e})")))?;
    let values: usize = meta.params.iter().map(|p| p.shape.iter().product::<usize>()).sum();
    let payload_end = meta_end + 4 * values;
    if bytes.len() < payload_end + DIGEST_LEN {
        return Err(corrupt(
            bytes.len(),
            format!("file ends early; expected {} bytes", payload_end + DIGEST_LEN),
        ));
    }
    if bytes.len() > payload_end + DIGEST_LEN {
        return Err(corrupt(payload_end + DIGEST_LEN, "trailing bytes after the digest".into()));
    }
    if Sha256::digest(&bytes[..payload_end]).as_slice() != &bytes[payload_end..] {
        return Err(corrupt(payload_end, "digest mismatch".into()));
    }
    if config_hash(&meta.config) != meta.config_hash {
        return Err(Error::Version(format!(
            "{}: stored config hash {} does not match its config",
            path.display(),
            meta.config_hash
        )));
    }
    let payload = &bytes[meta_end..payload_end];
    let mut store = ParamStore::new();
    let mut expected_offset = 0;
    for p in &meta.params {
        let n: usize = p.shape.iter().product();
        if p.offset != expected_offset {
            return Err(corrupt(HEADER_LEN, format!("parameter {} at offset {}, expected {expected_offset}", p.name, p.offset)));
        }
        expected_offset += n;
        let data = payload[4 * p.offset..4 * (p.offset + n)]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let value = Tensor::new(&p.shape, data)?;
        if p.trainable {
            store.add(&p.name, value)?;
        } else {
            store.add_buffer(&p.name, value)?;
        }
    }
    let vocab = Vocabulary::from_corpus_tokens(meta.vocab)?;
    let model = Model::from_params(&meta.config.model, vocab.len(), store)?;
    Ok(Checkpoint {
        config: meta.config,
        vocab,
        model,
    })
}

/// Reads a checkpoint and, when `expected` is given, insists that it was
/// written with that configuration.
pub fn load_checkpoint(path: &Path, expected: Option<&CheckpointConfig>) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ckpt = read_checkpoint(&bytes, path)?;
    if let Some(want) = expected {
        let (have, want) = (config_hash(&ckpt.config), config_hash(want));
        if have != want {
            return Err(Error::Version(format!(
                "{}: checkpoint config hash {have} differs from the requested {want}",
                path.display()
            )));
        }
    }
    Ok(ckpt)
}
