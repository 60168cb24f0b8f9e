//! Single-file model checkpoints.
//!
//! Layout: the magic `CNCKPT01`, a little-endian u32 entry count, then per
//! entry a u16 name length, the UTF-8 name, a u64 payload length and the
//! payload. A SHA-256 of everything before it closes the file.
//!
//! Entries: `manifest` (JSON), `config` (key = value text), `inventory`
//! (id TAB term per line), `vocab` (one token per line) and one
//! `tensor/<name>` per parameter tensor as little-endian f32.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::TrainConfig;
use crate::corpus::ConceptInventory;
use crate::encoder::{ToyEncoder, Vocabulary};
use crate::model::ConceptNormalizer;
use crate::sim_head::{ConceptEmbeddingMatrix, CONCEPT_EMBEDDINGS};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"CNCKPT01";
pub const FORMAT_VERSION: u32 = 1;
const TENSOR_PREFIX: &str = "tensor/";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint inventory {found} does not match dataset inventory {expected}")]
    InventoryMismatch { expected: String, found: String },
    #[error("checkpoint {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn corrupt(msg: impl Into<String>) -> CheckpointError {
    CheckpointError::Corrupt(msg.into())
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct Manifest {
    format_version: u32,
    dim: usize,
    n_concepts: usize,
    vocab_size: usize,
    inventory_hash: String,
    concept_init_seed: u64,
    frozen: bool,
    tensors: BTreeMap<String, Vec<usize>>,
}

fn tensor_bytes(t: &Tensor) -> Vec<u8> {
    t.data()
        .iter()
        .flat_map(|&x| (x as f32).to_le_bytes())
        .collect()
}

/// Checkpoint bytes for `model`. Parameters are stored at 32-bit precision.
pub fn encode_checkpoint(
    model: &ConceptNormalizer<ToyEncoder>,
) -> Result<Vec<u8>, CheckpointError> {
    let vocab = model
        .encoder
        .vocab()
        .ok_or_else(|| corrupt("encoder has no weights to save"))?;
    let mut tensors: Vec<&Tensor> = model.encoder.tensors();
    tensors.push(model.concepts.tensor());

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        dim: model.concepts.dim(),
        n_concepts: model.concepts.n_concepts(),
        vocab_size: vocab.len(),
        inventory_hash: model.inventory.fingerprint(),
        concept_init_seed: model.concepts.init_seed(),
        frozen: model.encoder.is_frozen(),
        tensors: tensors
            .iter()
            .map(|t| (t.name().to_string(), t.shape().to_vec()))
            .collect(),
    };
    let inventory: String = (0..model.inventory.len())
        .map(|i| {
            format!(
                "{}\t{}\n",
                model.inventory.id(i),
                model.inventory.term(i).unwrap_or("")
            )
        })
        .collect();
    let vocab_text: String = vocab.tokens().iter().map(|t| format!("{t}\n")).collect();

    let mut entries: Vec<(String, Vec<u8>)> = vec![
        (
            "manifest".into(),
            serde_json::to_vec_pretty(&manifest).expect("manifest serializes"),
        ),
        (
            "config".into(),
            model.config.to_config_string().into_bytes(),
        ),
        ("inventory".into(), inventory.into_bytes()),
        ("vocab".into(), vocab_text.into_bytes()),
    ];
    for t in tensors {
        entries.push((format!("{TENSOR_PREFIX}{}", t.name()), tensor_bytes(t)));
    }

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, payload) in &entries {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(payload);
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

pub fn save_checkpoint(
    model: &ConceptNormalizer<ToyEncoder>,
    path: &Path,
) -> Result<(), CheckpointError> {
    let bytes = encode_checkpoint(model)?;
    fs::write(path, bytes).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| corrupt("unexpected end of data"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn utf8<'a>(entries: &BTreeMap<String, &'a [u8]>, name: &str) -> Result<&'a str, CheckpointError> {
    let bytes = entries
        .get(name)
        .ok_or_else(|| corrupt(format!("missing entry `{name}`")))?;
    std::str::from_utf8(bytes).map_err(|_| corrupt(format!("entry `{name}` is not UTF-8")))
}

fn read_tensor(
    entries: &BTreeMap<String, &[u8]>,
    manifest: &Manifest,
    name: &str,
) -> Result<Tensor, CheckpointError> {
    let shape = manifest
        .tensors
        .get(name)
        .ok_or_else(|| corrupt(format!("manifest lists no tensor `{name}`")))?;
    let bytes = entries
        .get(&format!("{TENSOR_PREFIX}{name}"))
        .ok_or_else(|| corrupt(format!("missing tensor `{name}`")))?;
    let n: usize = shape.iter().product();
    if bytes.len() != n * 4 {
        return Err(corrupt(format!(
            "tensor `{name}` has {} bytes, expected {}",
            bytes.len(),
            n * 4
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(Tensor::new(name, shape.clone(), data))
}

/// Parses checkpoint bytes.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<ConceptNormalizer<ToyEncoder>, CheckpointError> {
    if bytes.len() < MAGIC.len() + 4 + 32 {
        return Err(corrupt("file too short"));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch"));
    }
    let mut r = Reader {
        buf: body,
        pos: MAGIC.len(),
    };
    let count = r.u32()?;
    let mut entries: BTreeMap<String, &[u8]> = BTreeMap::new();
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| corrupt("entry name is not UTF-8"))?
            .to_string();
        let len = usize::try_from(r.u64()?).map_err(|_| corrupt("entry too large"))?;
        let payload = r.take(len)?;
        if entries.insert(name.clone(), payload).is_some() {
            return Err(corrupt(format!("duplicate entry `{name}`")));
        }
    }
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes after last entry"));
    }

    let manifest: Manifest = serde_json::from_str(utf8(&entries, "manifest")?)
        .map_err(|e| corrupt(format!("manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(corrupt(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    let config = TrainConfig::parse(utf8(&entries, "config")?)
        .map_err(|e| corrupt(format!("config: {e}")))?;

    let mut inventory = ConceptInventory::new();
    for line in utf8(&entries, "inventory")?.lines() {
        let (id, term) = line
            .split_once('\t')
            .ok_or_else(|| corrupt("inventory line without a tab"))?;
        let term = (!term.is_empty()).then(|| term.to_string());
        if inventory.index_of(id).is_some() {
            return Err(corrupt(format!("duplicate concept `{id}` in inventory")));
        }
        inventory.insert(id, term);
    }
    if inventory.fingerprint() != manifest.inventory_hash || inventory.len() != manifest.n_concepts
    {
        return Err(corrupt("stored inventory disagrees with manifest"));
    }

    let tokens: Vec<String> = utf8(&entries, "vocab")?
        .lines()
        .map(str::to_string)
        .collect();
    if tokens.len() != manifest.vocab_size {
        return Err(corrupt("vocabulary size disagrees with manifest"));
    }
    let vocab = Vocabulary::from_tokens(tokens);

    let mut encoder = ToyEncoder::from_parts(
        vocab,
        read_tensor(&entries, &manifest, ToyEncoder::EMBEDDINGS)?,
        read_tensor(&entries, &manifest, ToyEncoder::WEIGHT)?,
        read_tensor(&entries, &manifest, ToyEncoder::BIAS)?,
    )
    .map_err(|e| corrupt(e.to_string()))?;
    encoder.set_frozen(manifest.frozen);
    let concepts = ConceptEmbeddingMatrix::from_tensor(
        read_tensor(&entries, &manifest, CONCEPT_EMBEDDINGS)?,
        manifest.concept_init_seed,
    )
    .map_err(|e| corrupt(e.to_string()))?;
    if concepts.n_concepts() != manifest.n_concepts
        || concepts.dim() != manifest.dim
        || encoder.tensors()[2].len() != manifest.dim
    {
        return Err(corrupt("tensor shapes disagree with manifest"));
    }
    Ok(ConceptNormalizer {
        encoder,
        concepts,
        inventory,
        config,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<ConceptNormalizer<ToyEncoder>, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_checkpoint(&bytes)
}

/// Loads a checkpoint and checks it was trained against `inventory`.
pub fn load_checkpoint_for(
    path: &Path,
    inventory: &ConceptInventory,
) -> Result<ConceptNormalizer<ToyEncoder>, CheckpointError> {
    let model = load_checkpoint(path)?;
    let expected = inventory.fingerprint();
    let found = model.inventory.fingerprint();
    if expected != found {
        return Err(CheckpointError::InventoryMismatch { expected, found });
    }
    Ok(model)
}
