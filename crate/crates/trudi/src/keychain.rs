//! Hash keychains: one-way key sequences disclosed in reverse generation order.
//!
//! A chain is built from a random anchor `K_n` by repeated hashing,
//! `K_{i-1} = H(K_i)`, and consumed starting from `K_1`. Disclosing `K_i`
//! reveals nothing about keys with higher indices, while any earlier key can
//! be recomputed from a later one by hashing forward. Receivers exploit that
//! to re-synchronize across gaps (backtracking).

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Smallest key width accepted on the wire, in bytes.
pub const MIN_KEY_BYTES: usize = 2;
/// Largest key width accepted on the wire, in bytes.
pub const MAX_KEY_BYTES: usize = 32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeychainError {
    #[error("key width must be 16..=256 bits in whole bytes, got {0}")]
    KeyBits(u16),
    #[error("keys must be {MIN_KEY_BYTES}..={MAX_KEY_BYTES} bytes, got {0}")]
    KeyLength(usize),
    #[error("chain must hold at least one key besides the root")]
    EmptyChain,
    #[error("backtracking {needed} steps exceeds the budget of {cap}")]
    BudgetExceeded { needed: u32, cap: u32 },
}

/// A truncated hash-chain key.
///
/// Keys are value types: comparing two keys compares their bytes. The unused
/// tail of the backing buffer is kept zeroed so derived equality is exact.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Key {
    len: u8,
    buf: [u8; MAX_KEY_BYTES],
}

impl Key {
    /// Builds a key from raw bytes. Width must be 2..=32 bytes.
    pub fn from_slice(bytes: &[u8]) -> Result<Self, KeychainError> {
        if !(MIN_KEY_BYTES..=MAX_KEY_BYTES).contains(&bytes.len()) {
            return Err(KeychainError::KeyLength(bytes.len()));
        }
        let mut buf = [0u8; MAX_KEY_BYTES];
        buf[..bytes.len()].copy_from_slice(bytes);
        Ok(Self { len: bytes.len() as u8, buf })
    }

    /// Draws a uniformly random key of the given width.
    pub fn random(rng: &mut impl RngCore, width: usize) -> Result<Self, KeychainError> {
        if !(MIN_KEY_BYTES..=MAX_KEY_BYTES).contains(&width) {
            return Err(KeychainError::KeyLength(width));
        }
        let mut buf = [0u8; MAX_KEY_BYTES];
        rng.fill_bytes(&mut buf[..width]);
        Ok(Self { len: width as u8, buf })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.buf[..self.len as usize]
    }
}

impl std::fmt::Debug for Key {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Key(")?;
        for b in self.as_bytes() {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

/// Hash primitive used for chain derivation and backtracking.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HashAlgorithm {
    #[default]
    Sha256,
}

/// Hash function selection plus the key truncation width.
///
/// Chain keys are the leading `key_bits` bits of the digest. Width must be a
/// whole number of bytes between 16 and 256 bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct HashConfig {
    #[serde(default)]
    pub algorithm: HashAlgorithm,
    #[serde(default = "default_key_bits")]
    pub key_bits: u16,
}

fn default_key_bits() -> u16 {
    128
}

impl Default for HashConfig {
    fn default() -> Self {
        Self { algorithm: HashAlgorithm::Sha256, key_bits: default_key_bits() }
    }
}

impl HashConfig {
    pub fn validate(&self) -> Result<(), KeychainError> {
        if self.key_bits < 16 || self.key_bits > 256 || self.key_bits % 8 != 0 {
            return Err(KeychainError::KeyBits(self.key_bits));
        }
        Ok(())
    }

    pub fn key_bytes(&self) -> usize {
        self.key_bits as usize / 8
    }
}

/// One application of the chain hash: `H(key)`, truncated to the configured
/// width. This is the inverse-direction step, mapping `K_i` to `K_{i-1}`.
pub fn hash_step(key: &Key, cfg: &HashConfig) -> Key {
    match cfg.algorithm {
        HashAlgorithm::Sha256 => {
            let digest = Sha256::digest(key.as_bytes());
            let mut buf = [0u8; MAX_KEY_BYTES];
            let width = cfg.key_bytes();
            buf[..width].copy_from_slice(&digest[..width]);
            Key { len: width as u8, buf }
        }
    }
}

/// Applies `hash_step` `steps` times, refusing to exceed `cap`.
///
/// The cap bounds the work an attacker-supplied index can demand from a
/// receiver. Callers count the performed steps themselves if they care.
pub fn backtrack(key: &Key, steps: u32, cfg: &HashConfig, cap: u32) -> Result<Key, KeychainError> {
    if steps > cap {
        return Err(KeychainError::BudgetExceeded { needed: steps, cap });
    }
    let mut k = *key;
    for _ in 0..steps {
        k = hash_step(&k, cfg);
    }
    Ok(k)
}

/// A fully derived keychain `K_0 ..= K_n`.
///
/// `K_n` is the anchor the chain was generated from; `K_0` is the root that
/// receivers are bootstrapped with.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Keychain {
    keys: Vec<Key>,
}

impl Keychain {
    /// Derives the whole chain from its anchor `K_n`. The anchor is truncated
    /// to the configured width first, so any 2..=32 byte seed works.
    pub fn derive(anchor: &Key, n: u16, cfg: &HashConfig) -> Result<Self, KeychainError> {
        cfg.validate()?;
        if n == 0 {
            return Err(KeychainError::EmptyChain);
        }
        let width = cfg.key_bytes();
        let mut top = [0u8; MAX_KEY_BYTES];
        let take = width.min(anchor.as_bytes().len());
        top[..take].copy_from_slice(&anchor.as_bytes()[..take]);
        let mut keys = vec![Key { len: width as u8, buf: [0; MAX_KEY_BYTES] }; n as usize + 1];
        keys[n as usize] = Key { len: width as u8, buf: top };
        for i in (0..n as usize).rev() {
            keys[i] = hash_step(&keys[i + 1], cfg);
        }
        Ok(Self { keys })
    }

    /// Generates a fresh chain with a random anchor.
    pub fn generate(rng: &mut impl RngCore, n: u16, cfg: &HashConfig) -> Result<Self, KeychainError> {
        cfg.validate()?;
        let anchor = Key::random(rng, cfg.key_bytes())?;
        Self::derive(&anchor, n, cfg)
    }

    /// Chain length `n`, excluding the root.
    pub fn n(&self) -> u16 {
        (self.keys.len() - 1) as u16
    }

    /// Returns `K_i`. Panics if `i > n`.
    pub fn key(&self, i: u16) -> &Key {
        &self.keys[i as usize]
    }

    /// The pre-shared root `K_0`.
    pub fn root(&self) -> &Key {
        &self.keys[0]
    }
}
