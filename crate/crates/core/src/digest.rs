//! SHA-256 digests with a length-prefixed field encoding.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

/// A 32-byte SHA-256 digest, rendered as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest([u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Digest(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0u8; 32]
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// First eight hex characters, for logs and reports.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.short())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid digest hex: {0}")]
pub struct ParseDigestError(String);

impl FromStr for Digest {
    type Err = ParseDigestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 64 || s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(ParseDigestError(s.to_string()));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|_| ParseDigestError(s.to_string()))?;
        Ok(Digest(out))
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Incremental hasher. Every field is written with a type tag and a length
/// prefix so that distinct field sequences never encode to the same bytes.
pub struct DigestBuilder {
    hasher: Sha256,
}

impl DigestBuilder {
    /// Starts a digest in the given domain (e.g. `"tx"`, `"event"`).
    pub fn new(domain: &str) -> Self {
        let mut b = DigestBuilder {
            hasher: Sha256::new(),
        };
        b.str(domain);
        b
    }

    fn tagged(&mut self, tag: u8, bytes: &[u8]) -> &mut Self {
        self.hasher.update([tag]);
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(bytes);
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.tagged(b's', s.as_bytes())
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.tagged(b'u', &v.to_le_bytes())
    }

    pub fn i64(&mut self, v: i64) -> &mut Self {
        self.tagged(b'i', &v.to_le_bytes())
    }

    /// Hashes the IEEE-754 bit pattern; `-0.0` and `0.0` differ.
    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.tagged(b'f', &v.to_bits().to_le_bytes())
    }

    pub fn digest(&mut self, d: &Digest) -> &mut Self {
        self.tagged(b'd', &d.0)
    }

    pub fn opt_str(&mut self, s: Option<&str>) -> &mut Self {
        match s {
            Some(s) => {
                self.hasher.update([1u8]);
                self.str(s)
            }
            None => {
                self.hasher.update([0u8]);
                self
            }
        }
    }

    pub fn finish(self) -> Digest {
        let out = self.hasher.finalize();
        let mut bytes = [0u8; 32];
        bytes.copy_from_slice(&out);
        Digest(bytes)
    }
}
