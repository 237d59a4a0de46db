//! Versioned JSON checkpoints.
//!
//! Every checkpoint is an envelope `{"format": <kind>, "version": <n>, "body": ...}`.
//! Floats are written in shortest round-trip form, so save/load is lossless.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    body: T,
}

pub fn to_json<T: Serialize>(kind: &str, body: &T) -> Result<String> {
    let env = Envelope {
        format: kind.to_string(),
        version: CHECKPOINT_VERSION,
        body,
    };
    Ok(serde_json::to_string(&env)?)
}

pub fn from_json<T: DeserializeOwned>(kind: &str, text: &str) -> Result<T> {
    let env: Envelope<T> = serde_json::from_str(text)?;
    if env.format != kind {
        return Err(Error::InvalidArgument(format!(
            "checkpoint format is {:?}, expected {kind:?}",
            env.format
        )));
    }
    if env.version != CHECKPOINT_VERSION {
        return Err(Error::Unsupported(format!(
            "checkpoint version {} (this build reads {CHECKPOINT_VERSION})",
            env.version
        )));
    }
    Ok(env.body)
}

pub fn save<T: Serialize>(path: &Path, kind: &str, body: &T) -> Result<()> {
    fs::write(path, to_json(kind, body)?)?;
    Ok(())
}

pub fn load<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    from_json(kind, &fs::read_to_string(path)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a parameter vector's exact bit patterns.
pub fn params_hash(params: &[f64]) -> String {
    let mut h = Sha256::new();
    for p in params {
        h.update(p.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}
