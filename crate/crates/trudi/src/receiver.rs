//! The unified receiver: one validation pipeline for every strategy.
//!
//! Per-slot state mirrors what the transmitter scheduled into that slot: a
//! liveness flag, the chain's generation counter, and the anchor (index and
//! key) of the last accepted disclosure. A frame is authentic if any one of
//! its key entries hashes back to the matching slot anchor; acceptance then
//! refreshes the state of every slot the frame carries, which is how a stale
//! chain gets resurrected for free after losses. Rejections arm a one-shot
//! timeout; if it expires before some frame validates, the receiver declares
//! itself out of sync and asks for re-initialization.

use log::debug;
use sha2::{Digest, Sha256};

use crate::keychain::{hash_step, HashConfig, Key};
use crate::transmitter::{derive_dual_indices, ConfigError, Snapshot, StrategyConfig};
use crate::wire::{decode_frame, ScKey, UFrame};

/// Verdict for one processed frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Accepted { message: Vec<u8> },
    /// MAC or structural check failed; the frame never reached validation.
    RejectedIntegrity,
    /// Freshness value not beyond the last accepted frame's.
    RejectedReplay,
    /// Authentic channel members could have sent it, but no key entry
    /// hashes back to a live anchor.
    RejectedOrigin,
    /// Re-initialization is in flight; the frame was not examined.
    DroppedRecovering,
}

/// How long to wait after the first unvalidated frame before asking for
/// re-initialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case", rename_all_fields = "kebab-case")]
pub enum TimeoutRule {
    /// Constant timeout, typically the nominal inter-frame period.
    Fixed { t_to_us: u64 },
    /// Scale with the unexpired part of the newest live chain: frames keep
    /// arriving at `period_us`, so a chain with `k` keys left can only stay
    /// silent about them for roughly `k` periods before recovery is due
    /// anyway.
    ChainRemaining { period_us: u64 },
}

#[derive(Clone, Copy)]
struct SlotState {
    live: bool,
    c: u8,
    i: u16,
    key: Key,
}

/// Receive-side authentication state for one secure channel.
pub struct Receiver {
    groups: usize,
    key_len: usize,
    hash: HashConfig,
    chain_len: u16,
    timeout: TimeoutRule,
    cap: u32,
    sc_key: ScKey,
    slots: Vec<SlotState>,
    last_freshness: u64,
    deadline: Option<u64>,
    recovering: bool,
    hash_evals: u64,
}

impl Receiver {
    /// Builds a receiver bootstrapped from a certified snapshot.
    ///
    /// `backtrack_cap` bounds the hash walk a single key entry may demand;
    /// `None` allows the full chain length, which every licit gap fits in.
    pub fn new(
        cfg: &StrategyConfig,
        sc_key: ScKey,
        timeout: TimeoutRule,
        backtrack_cap: Option<u32>,
        snapshot: &Snapshot,
    ) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let mut rx = Self {
            groups: cfg.group_count(),
            key_len: cfg.hash.key_bytes(),
            hash: cfg.hash,
            chain_len: cfg.chain_len(),
            timeout,
            cap: backtrack_cap.unwrap_or(cfg.chain_len() as u32),
            sc_key,
            slots: vec![],
            last_freshness: 0,
            deadline: None,
            recovering: false,
            hash_evals: 0,
        };
        rx.load_snapshot(snapshot);
        Ok(rx)
    }

    fn load_snapshot(&mut self, snapshot: &Snapshot) {
        let dead = SlotState { live: false, c: 0, i: 0, key: Key::from_slice(&[0; 2]).unwrap() };
        self.slots = (0..self.groups)
            .map(|g| match snapshot.slots.get(g).copied().flatten() {
                Some(s) => SlotState { live: true, c: s.c, i: s.i, key: s.key },
                None => dead,
            })
            .collect();
        self.last_freshness = snapshot.freshness;
    }

    /// Verifies and, on success, absorbs one received frame.
    pub fn process(&mut self, bytes: &[u8], now_us: u64) -> Outcome {
        if self.recovering {
            return Outcome::DroppedRecovering;
        }
        let Ok(frame) = decode_frame(bytes, &self.sc_key, self.key_len) else {
            return Outcome::RejectedIntegrity;
        };
        if frame.freshness <= self.last_freshness {
            return Outcome::RejectedReplay;
        }
        if frame.entries.len() != self.groups {
            return self.reject_origin(now_us, "slot count mismatch");
        }

        if self.validate(&frame) {
            self.last_freshness = frame.freshness;
            self.deadline = None;
            for (g, e) in frame.present() {
                if e.omega {
                    self.slots[g].live = false;
                } else {
                    self.slots[g] = SlotState { live: true, c: e.c, i: e.i, key: e.key };
                }
            }
            Outcome::Accepted { message: frame.message }
        } else {
            self.reject_origin(now_us, "no key entry reached a live anchor")
        }
    }

    fn reject_origin(&mut self, now_us: u64, why: &str) -> Outcome {
        debug!("origin rejected at {now_us}us: {why}");
        if self.deadline.is_none() {
            self.deadline = Some(now_us + self.timeout_interval());
        }
        Outcome::RejectedOrigin
    }

    fn validate(&mut self, frame: &UFrame) -> bool {
        // Cheap gates first; then try candidates in order of hash distance,
        // so the common in-sync case costs one evaluation.
        let mut candidates: Vec<(u32, usize, &crate::wire::KeyEntry)> = frame
            .present()
            .filter_map(|(g, e)| {
                let s = &self.slots[g];
                (s.live && e.c == s.c && e.i > s.i).then(|| ((e.i - s.i) as u32, g, e))
            })
            .collect();
        candidates.sort_by_key(|&(delta, g, _)| (delta, g));

        for (delta, g, e) in candidates {
            if delta > self.cap {
                continue;
            }
            let mut k = e.key;
            for _ in 0..delta {
                k = hash_step(&k, &self.hash);
                self.hash_evals += 1;
            }
            if k == self.slots[g].key {
                return true;
            }
        }
        false
    }

    fn timeout_interval(&self) -> u64 {
        match self.timeout {
            TimeoutRule::Fixed { t_to_us } => t_to_us,
            TimeoutRule::ChainRemaining { period_us } => {
                let newest = self.slots.iter().filter(|s| s.live).map(|s| s.i).max().unwrap_or(0);
                (self.chain_len.saturating_sub(newest) as u64 + 1) * period_us
            }
        }
    }

    /// Checks the recovery timer. Returns true exactly once per expiry; the
    /// caller is then expected to fetch a certified snapshot and call
    /// [`Receiver::apply_recovery`]. Until that happens every frame is
    /// dropped unexamined.
    pub fn poll_timeout(&mut self, now_us: u64) -> bool {
        match self.deadline {
            Some(d) if now_us >= d => {
                debug!("validation timeout expired at {now_us}us, recovery required");
                self.deadline = None;
                self.recovering = true;
                true
            }
            _ => false,
        }
    }

    /// Re-initializes from a certified snapshot after recovery.
    pub fn apply_recovery(&mut self, snapshot: &Snapshot) {
        self.load_snapshot(snapshot);
        self.deadline = None;
        self.recovering = false;
    }

    pub fn is_recovering(&self) -> bool {
        self.recovering
    }

    pub fn timeout_deadline(&self) -> Option<u64> {
        self.deadline
    }

    /// Total chain-hash evaluations spent in validation so far.
    pub fn hash_evals(&self) -> u64 {
        self.hash_evals
    }

    pub fn last_freshness(&self) -> u64 {
        self.last_freshness
    }

    /// Digest over the authentication state: slot anchors plus the replay
    /// floor. Two receivers in the same state digest identically; a rejected
    /// frame must never change it.
    pub fn state_digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for s in &self.slots {
            h.update([s.live as u8, s.c]);
            h.update(s.i.to_be_bytes());
            h.update((s.key.as_bytes().len() as u8).to_be_bytes());
            h.update(s.key.as_bytes());
        }
        h.update(self.last_freshness.to_be_bytes());
        h.finalize().into()
    }
}

/// Single-chain backtracking state, for spelling out reference semantics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RefChainState {
    pub c: u8,
    pub i: u16,
    pub key: Key,
}

/// Reference single-chain validation predicate: the generation counter must
/// match, the index must advance, and hashing the disclosed key across the
/// index distance must land exactly on the stored anchor.
pub fn validate_single_ref(state: &RefChainState, c: u8, i: u16, key: &Key, cfg: &HashConfig) -> bool {
    if c != state.c || i <= state.i {
        return false;
    }
    let mut k = *key;
    for _ in 0..(i - state.i) {
        k = hash_step(&k, cfg);
    }
    k == state.key
}

/// Reference validation for a fully interleaved dual layout: a frame passes
/// if either the explicit entry validates against the first chain, or the
/// derived counterpart position validates against the second.
#[allow(clippy::too_many_arguments)]
pub fn validate_dual_ref(
    a: &RefChainState,
    b: &RefChainState,
    c_a: u8,
    i_a: u16,
    key_a: &Key,
    key_b: &Key,
    half_len: u16,
    cfg: &HashConfig,
) -> bool {
    if validate_single_ref(a, c_a, i_a, key_a, cfg) {
        return true;
    }
    match derive_dual_indices(i_a, c_a, half_len) {
        Some((i_b, c_b)) => validate_single_ref(b, c_b, i_b, key_b, cfg),
        None => false,
    }
}
