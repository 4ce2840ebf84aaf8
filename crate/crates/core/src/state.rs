//! Canonical state keys and transition records.
//!
//! A [`StateKey`] wraps the environment's canonical byte encoding of a full
//! state. Equality is defined on the full encoding; the 64-bit digest is a
//! cache key only and never decides equality on its own, so digest collisions
//! cannot merge distinct states.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

/// Canonical, process-independent identifier of an environment state.
///
/// Cheap to clone (the encoding is shared). Ordering is lexicographic on the
/// encoding bytes, which keeps sorted output stable across runs.
#[derive(Clone)]
pub struct StateKey {
    bytes: Arc<[u8]>,
    digest: u64,
}

impl StateKey {
    pub fn new(encoding: impl Into<Arc<[u8]>>) -> Self {
        let bytes = encoding.into();
        let digest = fnv1a64(&bytes);
        StateKey { bytes, digest }
    }

    /// The canonical encoding.
    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// 64-bit FNV-1a digest of the encoding. Cache key only.
    pub fn digest(&self) -> u64 {
        self.digest
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&*self.bytes)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        Ok(StateKey::new(hex::decode(s)?))
    }
}

impl PartialEq for StateKey {
    fn eq(&self, other: &Self) -> bool {
        // Digest first as a fast reject; the byte comparison decides.
        self.digest == other.digest && self.bytes == other.bytes
    }
}

impl Eq for StateKey {}

impl Hash for StateKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.digest);
    }
}

impl PartialOrd for StateKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for StateKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.bytes.cmp(&other.bytes)
    }
}

impl fmt::Debug for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StateKey({})", self.to_hex())
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hasher that passes the already-mixed [`StateKey`] digest through instead
/// of re-hashing it. For hot lookup tables keyed by states or (state, action)
/// pairs.
#[derive(Clone, Copy, Debug, Default)]
pub struct DigestHasherBuilder;

pub struct DigestHasher(u64);

impl std::hash::BuildHasher for DigestHasherBuilder {
    type Hasher = DigestHasher;

    fn build_hasher(&self) -> DigestHasher {
        DigestHasher(0)
    }
}

impl Hasher for DigestHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        self.0 = self.0.rotate_left(29) ^ fnv1a64(bytes);
    }

    fn write_u64(&mut self, v: u64) {
        self.0 = self.0.rotate_left(29) ^ v;
    }

    fn write_u32(&mut self, v: u32) {
        // Spread small action indices across the word.
        self.0 = self.0.rotate_left(29) ^ (v as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    }

    fn write_u8(&mut self, v: u8) {
        self.write_u32(v as u32);
    }

    fn write_usize(&mut self, v: usize) {
        self.write_u64(v as u64);
    }
}

/// HashMap keyed by states (or state tuples) using the digest pass-through.
pub type DigestMap<K, V> = std::collections::HashMap<K, V, DigestHasherBuilder>;

/// HashSet counterpart of [`DigestMap`].
pub type DigestSet<K> = std::collections::HashSet<K, DigestHasherBuilder>;

/// One recorded environment step.
///
/// `terminal == true` means `next_state` is an absorbing endpoint: it is worth
/// exactly zero in every backup and is never expanded.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionRecord {
    pub state: StateKey,
    pub action: u32,
    pub reward: f64,
    pub next_state: StateKey,
    pub terminal: bool,
}
