//! Frame codec: a compact binary layout plus a truncated HMAC trailer.
//!
//! Layout, all integers big-endian:
//!
//! ```text
//! version   u8      always 0x01
//! sc_id     u16
//! src_id    u16
//! freshness u64     strictly increasing per source
//! G         u8      slot count, 1..=8
//! tau       u8      bit k set: slot k carries a key entry
//! omega     u8      bit k set: slot k is being dismissed (subset of tau)
//! entries           for each present slot, ascending: c u8, i u16, key
//! msg_len   u16
//! message   msg_len bytes
//! mac       16 bytes, HMAC-SHA256 over everything above, truncated
//! ```
//!
//! Key width is fixed per secure channel and agreed out of band, so it does
//! not appear on the wire; [`decode_frame`] takes it as a parameter. The
//! encoding is canonical: any byte string accepted by the decoder re-encodes
//! to exactly itself.

use hmac::{Hmac, KeyInit, Mac};
use rand::RngCore;
use sha2::Sha256;
use thiserror::Error;

use crate::keychain::{Key, MAX_KEY_BYTES, MIN_KEY_BYTES};

/// Wire identifiers of the secure channel and the transmitting node.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LinkInfo {
    pub sc_id: u16,
    pub src_id: u16,
}

/// Per-slot authentication payload: generation counter, key index, key.
///
/// `omega` set means the slot's chain terminates with this disclosure and
/// receivers must drop its state once the frame is accepted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeyEntry {
    pub omega: bool,
    pub c: u8,
    pub i: u16,
    pub key: Key,
}

/// A decoded frame: link identifiers, freshness value, one optional key
/// entry per slot, and the application message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UFrame {
    pub link: LinkInfo,
    pub freshness: u64,
    pub entries: Vec<Option<KeyEntry>>,
    pub message: Vec<u8>,
}

impl UFrame {
    /// Key entries present in the frame, with their slot numbers.
    pub fn present(&self) -> impl Iterator<Item = (usize, &KeyEntry)> {
        self.entries.iter().enumerate().filter_map(|(g, e)| e.as_ref().map(|e| (g, e)))
    }
}

/// Shared secure-channel MAC key.
#[derive(Clone, PartialEq, Eq)]
pub struct ScKey([u8; 32]);

impl ScKey {
    pub fn new(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn random(rng: &mut impl RngCore) -> Self {
        let mut b = [0u8; 32];
        rng.fill_bytes(&mut b);
        Self(b)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl std::fmt::Debug for ScKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ScKey(..)")
    }
}

pub const MAC_LEN: usize = 16;
const HEADER_LEN: usize = 16;
/// Shortest structurally possible frame: header, message length, MAC.
pub const MIN_FRAME_LEN: usize = HEADER_LEN + 2 + MAC_LEN;
const VERSION: u8 = 0x01;
const MAX_GROUPS: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("slot count must be 1..=8, got {0}")]
    GroupCount(usize),
    #[error("all keys in a frame must share one width")]
    MixedKeyWidth,
    #[error("message of {0} bytes does not fit the 16-bit length field")]
    MessageLength(usize),
}

/// Single opaque decode failure.
///
/// Tampered MAC, truncation, and malformed structure are deliberately
/// indistinguishable to the caller.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("frame failed integrity check")]
pub struct IntegrityFailure;

/// HMAC-SHA256 over `data`, truncated to the wire MAC width.
pub fn compute_mac(sc_key: &ScKey, data: &[u8]) -> [u8; MAC_LEN] {
    let mut mac = Hmac::<Sha256>::new_from_slice(sc_key.as_bytes()).expect("any key length works");
    mac.update(data);
    let full = mac.finalize().into_bytes();
    let mut out = [0u8; MAC_LEN];
    out.copy_from_slice(&full[..MAC_LEN]);
    out
}

/// Serializes and authenticates a frame.
pub fn encode_frame(frame: &UFrame, sc_key: &ScKey) -> Result<Vec<u8>, WireError> {
    let groups = frame.entries.len();
    if groups == 0 || groups > MAX_GROUPS {
        return Err(WireError::GroupCount(groups));
    }
    if frame.message.len() > u16::MAX as usize {
        return Err(WireError::MessageLength(frame.message.len()));
    }
    let mut width = None;
    for (_, e) in frame.present() {
        let w = e.key.as_bytes().len();
        if *width.get_or_insert(w) != w {
            return Err(WireError::MixedKeyWidth);
        }
    }

    let mut tau = 0u8;
    let mut omega = 0u8;
    for (g, e) in frame.present() {
        tau |= 1 << g;
        if e.omega {
            omega |= 1 << g;
        }
    }

    let mut out = Vec::with_capacity(
        HEADER_LEN + groups * (3 + width.unwrap_or(0)) + 2 + frame.message.len() + MAC_LEN,
    );
    out.push(VERSION);
    out.extend_from_slice(&frame.link.sc_id.to_be_bytes());
    out.extend_from_slice(&frame.link.src_id.to_be_bytes());
    out.extend_from_slice(&frame.freshness.to_be_bytes());
    out.push(groups as u8);
    out.push(tau);
    out.push(omega);
    for (_, e) in frame.present() {
        out.push(e.c);
        out.extend_from_slice(&e.i.to_be_bytes());
        out.extend_from_slice(e.key.as_bytes());
    }
    out.extend_from_slice(&(frame.message.len() as u16).to_be_bytes());
    out.extend_from_slice(&frame.message);
    let mac = compute_mac(sc_key, &out);
    out.extend_from_slice(&mac);
    Ok(out)
}

/// Authenticates and parses a frame.
///
/// The MAC is verified (in constant time) before any field is interpreted;
/// only then is the structure parsed, strictly. `key_len` is the channel's
/// agreed key width in bytes.
pub fn decode_frame(bytes: &[u8], sc_key: &ScKey, key_len: usize) -> Result<UFrame, IntegrityFailure> {
    if !(MIN_KEY_BYTES..=MAX_KEY_BYTES).contains(&key_len) {
        return Err(IntegrityFailure);
    }
    if bytes.len() < MIN_FRAME_LEN {
        return Err(IntegrityFailure);
    }
    let (body, tag) = bytes.split_at(bytes.len() - MAC_LEN);
    let mut mac = Hmac::<Sha256>::new_from_slice(sc_key.as_bytes()).expect("any key length works");
    mac.update(body);
    mac.verify_truncated_left(tag).map_err(|_| IntegrityFailure)?;

    if body[0] != VERSION {
        return Err(IntegrityFailure);
    }
    let sc_id = u16::from_be_bytes([body[1], body[2]]);
    let src_id = u16::from_be_bytes([body[3], body[4]]);
    let freshness = u64::from_be_bytes(body[5..13].try_into().unwrap());
    let groups = body[13] as usize;
    if groups == 0 || groups > MAX_GROUPS {
        return Err(IntegrityFailure);
    }
    let tau = body[14];
    let omega = body[15];
    let mask = ((1u16 << groups) - 1) as u8;
    if tau & !mask != 0 || omega & !tau != 0 {
        return Err(IntegrityFailure);
    }

    let mut entries = vec![None; groups];
    let mut at = HEADER_LEN;
    for (g, slot) in entries.iter_mut().enumerate() {
        if tau & (1 << g) == 0 {
            continue;
        }
        if body.len() < at + 3 + key_len {
            return Err(IntegrityFailure);
        }
        let c = body[at];
        let i = u16::from_be_bytes([body[at + 1], body[at + 2]]);
        let key = Key::from_slice(&body[at + 3..at + 3 + key_len]).expect("width checked above");
        *slot = Some(KeyEntry { omega: omega & (1 << g) != 0, c, i, key });
        at += 3 + key_len;
    }

    if body.len() < at + 2 {
        return Err(IntegrityFailure);
    }
    let msg_len = u16::from_be_bytes([body[at], body[at + 1]]) as usize;
    at += 2;
    if body.len() != at + msg_len {
        return Err(IntegrityFailure);
    }
    let message = body[at..].to_vec();

    Ok(UFrame { link: LinkInfo { sc_id, src_id }, freshness, entries, message })
}
