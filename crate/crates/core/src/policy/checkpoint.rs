//! Checkpoint byte layout (all integers little-endian):
//!
//! ```text
//! magic        4  "MSCK"
//! version      u32
//! pool         u64  pool checksum
//! hero_tag     u8   0 = none, 1..=3 = mage, hunter, warrior
//! step         u64
//! dtype        u8   bytes per parameter (4 or 8)
//! dims         8 x u32  pool, actions, features, common_end, cb_end, card_vocab, embed, hidden
//! count        u64  number of parameters
//! payload      count x dtype
//! trailer      8    first 8 bytes of SHA-256 over everything above
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{NetDims, ParamLayout, ParamMeta, PolicyError, PolicyParams, Scalar};
use crate::engine::{Hero, PoolChecksum};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"MSCK";
const HEADER: usize = 4 + 4 + 8 + 1 + 8 + 1 + 8 * 4 + 8;

pub fn write_checkpoint<S: Scalar>(params: &PolicyParams<S>) -> Vec<u8> {
    let d = params.dims;
    let mut out = Vec::with_capacity(HEADER + params.data.len() * S::BYTES + 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&params.meta.pool_checksum.0.to_le_bytes());
    out.push(params.meta.hero_tag.map(|h| h.index() as u8 + 1).unwrap_or(0));
    out.extend_from_slice(&params.meta.step.to_le_bytes());
    out.push(S::BYTES as u8);
    for v in [d.pool_size, d.action_size, d.features, d.common_end, d.cb_end, d.card_vocab, d.embed, d.hidden] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&(params.data.len() as u64).to_le_bytes());
    for x in &params.data {
        x.write_le(&mut out);
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest[..8]);
    out
}

/// Parse and validate a checkpoint; `expected_pool` rejects weights trained on another pool.
pub fn read_checkpoint<S: Scalar>(bytes: &[u8], expected_pool: PoolChecksum) -> Result<PolicyParams<S>, PolicyError> {
    let corrupt = |m: &str| PolicyError::Corrupt(m.to_string());
    if bytes.len() < HEADER + 8 {
        return Err(corrupt("truncated header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 8);
    if Sha256::digest(body)[..8] != *trailer {
        return Err(corrupt("integrity check failed"));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
    let version = u32_at(4);
    if version != CHECKPOINT_VERSION {
        return Err(PolicyError::Version(version));
    }
    let pool = PoolChecksum(u64_at(8));
    if pool != expected_pool {
        return Err(PolicyError::PoolMismatch { expected: expected_pool, found: pool });
    }
    let hero_tag = match bytes[16] {
        0 => None,
        t => Some(Hero::from_index(t as usize - 1).ok_or_else(|| corrupt("bad hero tag"))?),
    };
    let step = u64_at(17);
    let dtype = bytes[25] as usize;
    if dtype != S::BYTES {
        return Err(corrupt(&format!("stored {dtype}-byte scalars, expected {}", S::BYTES)));
    }
    let dim = |k: usize| u32_at(26 + 4 * k) as usize;
    let dims = NetDims {
        pool_size: dim(0),
        action_size: dim(1),
        features: dim(2),
        common_end: dim(3),
        cb_end: dim(4),
        card_vocab: dim(5),
        embed: dim(6),
        hidden: dim(7),
    };
    let count = u64_at(58) as usize;
    if count != ParamLayout::new(dims).total {
        return Err(corrupt("parameter count does not match dimensions"));
    }
    let payload = &body[HEADER..];
    if payload.len() != count * dtype {
        return Err(corrupt("payload length mismatch"));
    }
    let data = payload.chunks_exact(dtype).map(S::read_le).collect();
    let meta = ParamMeta { pool_checksum: pool, version, step, hero_tag };
    Ok(PolicyParams { meta, dims, data })
}

/// Write atomically: a temp file in the same directory, then rename.
pub fn save_checkpoint<S: Scalar>(params: &PolicyParams<S>, path: &Path) -> Result<(), PolicyError> {
    let bytes = write_checkpoint(params);
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint<S: Scalar>(path: &Path, expected_pool: PoolChecksum) -> Result<PolicyParams<S>, PolicyError> {
    read_checkpoint(&fs::read(path)?, expected_pool)
}
