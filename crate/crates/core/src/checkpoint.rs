//! Versioned binary checkpoints with bit-exact reload.
//!
//! Layout: magic bytes, format version, endianness tag, a 32-byte config
//! hash, then each model block in its fixed declared order as
//! little-endian 64-bit reals (name, length, values). The config hash binds
//! a checkpoint to the training configuration that produced it; loading
//! verifies it when a hash is supplied.

use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::tensor::Real;
use std::io::Write;
use std::path::Path;

const MAGIC: &[u8; 8] = b"STEGCKPT";
const VERSION: u32 = 1;
const ENDIAN_TAG: u32 = 0x0102_0304;

pub type ConfigHash = [u8; 32];

/// SHA-256 of a canonical configuration string.
pub fn hash_config_text(text: &str) -> ConfigHash {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hasher.finalize().into()
}

pub fn hash_hex(hash: &ConfigHash) -> String {
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

/// Serialize `model` to bytes.
pub fn encode_checkpoint(model: &ModelState, config_hash: &ConfigHash) -> Vec<u8> {
    let blocks = model.state_blocks();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&ENDIAN_TAG.to_le_bytes());
    buf.extend_from_slice(config_hash);
    buf.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    for (name, values) in blocks {
        let name_bytes = name.as_bytes();
        buf.extend_from_slice(&(name_bytes.len() as u32).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for &v in values {
            #[allow(clippy::unnecessary_cast)] // Real may be f32; storage is f64
            buf.extend_from_slice(&(v as f64).to_le_bytes());
        }
    }
    buf
}

pub fn save_checkpoint(path: &Path, model: &ModelState, config_hash: &ConfigHash) -> Result<()> {
    let bytes = encode_checkpoint(model, config_hash);
    let mut file =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    file.write_all(&bytes)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decode a checkpoint into a freshly shaped model. Returns the model and
/// the stored config hash.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelState, ConfigHash)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let endian = r.u32()?;
    if endian != ENDIAN_TAG {
        return Err(Error::Checkpoint(format!(
            "endianness tag mismatch: {endian:#010x}"
        )));
    }
    let mut hash = [0u8; 32];
    hash.copy_from_slice(r.take(32)?);
    let n_blocks = r.u32()? as usize;

    let mut model = ModelState::new();
    {
        let mut blocks = model.state_blocks_mut();
        if n_blocks != blocks.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {n_blocks} blocks, model expects {}",
                blocks.len()
            )));
        }
        for (expected_name, values) in blocks.iter_mut() {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Checkpoint("non-utf8 block name".into()))?;
            if name != expected_name {
                return Err(Error::Checkpoint(format!(
                    "block order mismatch: found '{name}', expected '{expected_name}'"
                )));
            }
            let count = r.u64()? as usize;
            if count != values.len() {
                return Err(Error::Checkpoint(format!(
                    "block '{name}' has {count} values, expected {}",
                    values.len()
                )));
            }
            for v in values.iter_mut() {
                let raw = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
                *v = raw as Real;
            }
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after blocks".into()));
    }
    Ok((model, hash))
}

/// Load a checkpoint. When `expect_hash` is given, a mismatch is refused
/// with an explanation.
pub fn load_checkpoint(path: &Path, expect_hash: Option<&ConfigHash>) -> Result<ModelState> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let (model, hash) = decode_checkpoint(&bytes)?;
    if let Some(expected) = expect_hash {
        if &hash != expected {
            return Err(Error::Checkpoint(format!(
                "config hash mismatch: checkpoint was produced under {} but the current config hashes to {}; evaluate with the matching config or retrain",
                hash_hex(&hash),
                hash_hex(expected)
            )));
        }
    }
    Ok(model)
}
