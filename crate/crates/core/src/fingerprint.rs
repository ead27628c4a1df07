//! Stable 64-bit FNV-1a hashing for config fingerprints and seed derivation.
//!
//! `core::hash::Hash` output is not guaranteed stable across compiler
//! versions, so fingerprints hash explicit byte strings instead.

const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Copy)]
pub struct Fnv64(u64);

impl Default for Fnv64 {
    fn default() -> Self {
        Self(OFFSET)
    }
}

impl Fnv64 {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, bytes: &[u8]) -> &mut Self {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(PRIME);
        }
        self
    }

    pub fn write_u64(&mut self, v: u64) -> &mut Self {
        self.write(&v.to_le_bytes())
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

pub fn fnv64(bytes: &[u8]) -> u64 {
    Fnv64::new().write(bytes).finish()
}

/// Derives an independent stream seed from a base seed and a list of tags
/// (fold index, epoch, ...).
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut h = Fnv64::new();
    h.write_u64(base);
    for &t in tags {
        h.write_u64(t);
    }
    h.finish()
}
