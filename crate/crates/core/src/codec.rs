// SPDX-License-Identifier: Apache-2.0

//! Canonical byte encoding used for block and state digests.
//!
//! Fields are written in declaration order. Integers are fixed-width
//! big-endian; variable-length data is prefixed with its length as a `u64`.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

#[derive(Default, Debug)]
pub struct CanonicalWriter {
    buf: Vec<u8>,
}

impl CanonicalWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn bool(&mut self, v: bool) -> &mut Self {
        self.u8(v as u8)
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.u64(v.len() as u64);
        self.buf.extend_from_slice(v);
        self
    }

    pub fn str(&mut self, v: &str) -> &mut Self {
        self.bytes(v.as_bytes())
    }

    pub fn item<T: Canonical + ?Sized>(&mut self, v: &T) -> &mut Self {
        v.encode(self);
        self
    }

    pub fn option<T: Canonical>(&mut self, v: Option<&T>) -> &mut Self {
        match v {
            None => self.u8(0),
            Some(inner) => self.u8(1).item(inner),
        }
    }

    pub fn seq<'a, T: Canonical + 'a>(&mut self, items: impl ExactSizeIterator<Item = &'a T>) -> &mut Self {
        self.u64(items.len() as u64);
        for item in items {
            item.encode(self);
        }
        self
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

pub trait Canonical {
    fn encode(&self, w: &mut CanonicalWriter);

    fn canonical_bytes(&self) -> Vec<u8> {
        let mut w = CanonicalWriter::new();
        self.encode(&mut w);
        w.into_bytes()
    }

    fn digest(&self) -> Digest {
        Digest::of_bytes(&self.canonical_bytes())
    }
}

/// SHA-256 digest, rendered as lowercase hex.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0; 32]);

    pub fn of_bytes(bytes: &[u8]) -> Self {
        Digest(Sha256::digest(bytes).into())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", hex::encode(&self.0[..8]))
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; 32];
        hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(Digest(out))
    }
}

impl Canonical for Digest {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.buf.extend_from_slice(&self.0);
    }
}

impl Canonical for u64 {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.u64(*self);
    }
}

impl Canonical for str {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.str(self);
    }
}

impl Canonical for String {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.str(self);
    }
}

impl Canonical for crate::units::Amount {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.u64(self.as_micros());
    }
}

impl Canonical for crate::units::SimTime {
    fn encode(&self, w: &mut CanonicalWriter) {
        w.u64(self.as_micros());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_prefix_separates_adjacent_strings() {
        let mut a = CanonicalWriter::new();
        a.str("ab").str("c");
        let mut b = CanonicalWriter::new();
        b.str("a").str("bc");
        assert_ne!(a.into_bytes(), b.into_bytes());
    }

    #[test]
    fn digest_hex_round_trips_through_serde() {
        let d = Digest::of_bytes(b"edge");
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(json.len(), 66);
        let back: Digest = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
    }
}
