use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{XChaCha20Poly1305, XNonce};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PrivacyError, Result};
use crate::model::ParamVector;

const NONCE_LEN: usize = 24;

/// How parameter vectors are wrapped for transport.
#[derive(Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Codec {
    /// The plain `FREP` serialization.
    #[default]
    Identity,
    /// XChaCha20-Poly1305 over the `FREP` bytes. The nonce is derived from the
    /// key and plaintext, so encoding is deterministic.
    Symmetric {
        #[serde(with = "hex_key")]
        key: [u8; 32],
    },
}

impl std::fmt::Debug for Codec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Codec::Identity => f.write_str("Identity"),
            Codec::Symmetric { .. } => f.write_str("Symmetric { key: <redacted> }"),
        }
    }
}

fn nonce_for(key: &[u8; 32], plaintext: &[u8]) -> [u8; NONCE_LEN] {
    let mut h = Sha256::new();
    h.update(b"fedrep-codec-nonce");
    h.update(key);
    h.update(plaintext);
    let digest = h.finalize();
    let mut n = [0u8; NONCE_LEN];
    n.copy_from_slice(&digest[..NONCE_LEN]);
    n
}

pub fn encode(v: &ParamVector, codec: &Codec) -> Vec<u8> {
    let plain = v.to_bytes();
    match codec {
        Codec::Identity => plain,
        Codec::Symmetric { key } => {
            let cipher = XChaCha20Poly1305::new(key.into());
            let nonce = nonce_for(key, &plain);
            let sealed = cipher
                .encrypt(XNonce::from_slice(&nonce), plain.as_slice())
                .expect("in-memory AEAD encryption cannot fail");
            let mut out = Vec::with_capacity(NONCE_LEN + sealed.len());
            out.extend_from_slice(&nonce);
            out.extend_from_slice(&sealed);
            out
        }
    }
}

pub fn decode(bytes: &[u8], codec: &Codec) -> Result<ParamVector> {
    match codec {
        Codec::Identity => Ok(ParamVector::from_bytes(bytes)?),
        Codec::Symmetric { key } => {
            if bytes.len() < NONCE_LEN {
                return Err(PrivacyError::Authentication);
            }
            let (nonce, sealed) = bytes.split_at(NONCE_LEN);
            let plain = XChaCha20Poly1305::new(key.into())
                .decrypt(XNonce::from_slice(nonce), sealed)
                .map_err(|_| PrivacyError::Authentication)?;
            Ok(ParamVector::from_bytes(&plain)?)
        }
    }
}

mod hex_key {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(key: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&key.iter().map(|b| format!("{b:02x}")).collect::<String>())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        if s.len() != 64 || !s.is_ascii() {
            return Err(D::Error::custom("key must be 64 hex digits"));
        }
        let mut key = [0u8; 32];
        for (i, byte) in key.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).map_err(D::Error::custom)?;
        }
        Ok(key)
    }
}
