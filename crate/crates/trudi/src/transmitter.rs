//! Transmit-side scheduling: which keys go into which frame.
//!
//! Four strategies share one engine surface. All of them emit a periodic
//! pattern of A-frames (one key), D-frames (two keys) and J-frames (a chain
//! handover: the retiring chain's last key, flagged omega, next to its
//! replacement's first). Chains live in numbered wire slots; a replacement
//! chain always takes the currently vacant slot, which is what receivers
//! rely on to track handovers without any extra signalling.

use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keychain::{HashConfig, Key, Keychain, KeychainError};
use crate::wire::{KeyEntry, LinkInfo, UFrame};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("chain length must be at least 1")]
    ChainLength,
    #[error("chain length {n} does not fit two half-chains (max 32767 per half)")]
    ChainTooLong { n: u32 },
    #[error("overlap depth {q} requires 1 <= q and 2q <= n+1 (n = {n})")]
    OverlapDepth { q: u16, n: u16 },
    #[error("half length must be at least 2, got {0}")]
    HalfLength(u16),
    #[error("sparse layout requires (n+1) to be a multiple of (m+1) at ratio >= 2, got n = {n}, m = {m}")]
    SparseShape { n: u16, m: u16 },
    #[error(transparent)]
    Hash(#[from] KeychainError),
}

/// How many keys a dual-chain junction frame carries.
///
/// `Three` includes the cross-chain key alongside the handover pair, so the
/// junction itself can be validated through the other chain. `Two` drops it,
/// shortening junction frames at a small cost in recovery margin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JKeys {
    Two,
    Three,
}

/// Key scheduling strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", rename_all_fields = "kebab-case")]
pub enum Strategy {
    /// One chain of length `n`; a single junction frame per period.
    Basic { n: u16 },
    /// One chain, but the junction is repeated in `q` consecutive frames so
    /// a single lost junction no longer forces recovery.
    Overlapped { n: u16, q: u16 },
    /// Two chains of `2 * half_len` (or `2 * half_len - 1`) keys, offset by
    /// half a period, every frame carrying a key from each.
    DualFull { half_len: u16, j_keys: JKeys },
    /// Two offset chains with the cross-chain key only in every `m`-th
    /// frame, trading recovery margin for bandwidth.
    DualSparse { n: u16, m: u16 },
}

/// A strategy plus the hash/truncation parameters it runs with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyConfig {
    #[serde(flatten)]
    pub strategy: Strategy,
    #[serde(default)]
    pub hash: HashConfig,
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.hash.validate()?;
        match self.strategy {
            Strategy::Basic { n } => {
                if n == 0 {
                    return Err(ConfigError::ChainLength);
                }
            }
            Strategy::Overlapped { n, q } => {
                if n == 0 {
                    return Err(ConfigError::ChainLength);
                }
                if q == 0 || 2 * q as u32 > n as u32 + 1 {
                    return Err(ConfigError::OverlapDepth { q, n });
                }
            }
            Strategy::DualFull { half_len, .. } => {
                if half_len < 2 {
                    return Err(ConfigError::HalfLength(half_len));
                }
                if half_len > u16::MAX / 2 {
                    return Err(ConfigError::ChainTooLong { n: 2 * half_len as u32 });
                }
            }
            Strategy::DualSparse { n, m } => {
                if n == 0 {
                    return Err(ConfigError::ChainLength);
                }
                let (top, div) = (n as u32 + 1, m as u32 + 1);
                if m == 0 || top % div != 0 || top / div < 2 {
                    return Err(ConfigError::SparseShape { n, m });
                }
            }
        }
        Ok(())
    }

    /// Wire slots the strategy occupies.
    pub fn group_count(&self) -> usize {
        match self.strategy {
            Strategy::Basic { .. } | Strategy::Overlapped { .. } => 2,
            Strategy::DualFull { .. } | Strategy::DualSparse { .. } => 3,
        }
    }

    /// Frames after which the emission pattern repeats.
    pub fn period_frames(&self) -> u64 {
        match self.strategy {
            Strategy::Basic { n } => n as u64,
            Strategy::Overlapped { n, q } => (n - q + 1) as u64,
            Strategy::DualFull { half_len, .. } => 2 * half_len as u64,
            Strategy::DualSparse { n, m } => {
                let r = (n as u64 + 1) / (m as u64 + 1);
                r * m as u64
            }
        }
    }

    /// Length of each keychain, excluding the root.
    pub fn chain_len(&self) -> u16 {
        match self.strategy {
            Strategy::Basic { n } | Strategy::Overlapped { n, .. } | Strategy::DualSparse { n, .. } => n,
            Strategy::DualFull { half_len, j_keys: JKeys::Three } => 2 * half_len,
            Strategy::DualFull { half_len, j_keys: JKeys::Two } => 2 * half_len - 1,
        }
    }

    /// Messages per transmitted key, as an exact ratio.
    pub fn theoretical_efficiency(&self) -> Ratio<u64> {
        match self.strategy {
            Strategy::Basic { n } => Ratio::new(n as u64, n as u64 + 1),
            Strategy::Overlapped { n, q } => Ratio::new((n - q + 1) as u64, n as u64 + 1),
            Strategy::DualFull { half_len, j_keys: JKeys::Three } => {
                Ratio::new(half_len as u64, 2 * half_len as u64 + 1)
            }
            Strategy::DualFull { j_keys: JKeys::Two, .. } => Ratio::new(1, 2),
            Strategy::DualSparse { m, .. } => Ratio::new(m as u64, m as u64 + 1),
        }
    }
}

/// Certified receiver bootstrap state: one anchor per wire slot.
///
/// This is what the channel owner hands to joining (or recovering)
/// receivers: for every occupied slot, the chain's generation counter, the
/// index of its most recently disclosed key, and that key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot {
    pub slots: Vec<Option<SlotSync>>,
    pub freshness: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlotSync {
    pub c: u8,
    pub i: u16,
    pub key: Key,
}

/// Maps a first-chain position to the second chain's implied position in a
/// fully interleaved dual layout with half length `half_len`.
///
/// During the first half (`1..=N`) the second chain runs `N` ahead at the
/// same generation; during the second half (`N+1..=2N`) it runs `N` behind,
/// one generation up. Index 0 has no counterpart.
pub fn derive_dual_indices(i_a: u16, c_a: u8, half_len: u16) -> Option<(u16, u8)> {
    let n2 = 2 * half_len;
    if i_a == 0 || i_a > n2 {
        return None;
    }
    if i_a <= half_len {
        Some((i_a + half_len, c_a))
    } else {
        Some((i_a - half_len, c_a.wrapping_add(1)))
    }
}

struct LiveChain {
    c: u8,
    keys: Keychain,
    // Most recently disclosed index; starts at the virtual anchor receivers
    // are bootstrapped with.
    last: u16,
}

enum Roles {
    Single { active: usize, staged: Option<usize> },
    Dual { a: usize, b: usize },
    Sparse { startup: usize, settled: usize },
}

/// Frame producer for one secure channel.
pub struct Transmitter {
    cfg: StrategyConfig,
    link: LinkInfo,
    rng: ChaCha12Rng,
    freshness: u64,
    pos: u64,
    slots: Vec<Option<LiveChain>>,
    roles: Roles,
}

impl Transmitter {
    /// Builds the transmitter and the initial receiver snapshot.
    ///
    /// The first chains and every replacement after them are drawn from a
    /// deterministic stream seeded here, so a run is reproducible.
    pub fn new(cfg: StrategyConfig, link: LinkInfo, seed: u64) -> Result<(Self, Snapshot), ConfigError> {
        cfg.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let n = cfg.chain_len();
        let hash = cfg.hash;
        let mut slots: Vec<Option<LiveChain>> = (0..cfg.group_count()).map(|_| None).collect();

        let chain = |rng: &mut ChaCha12Rng, last: u16| -> Result<LiveChain, ConfigError> {
            Ok(LiveChain { c: 0, keys: Keychain::generate(rng, n, &hash)?, last })
        };

        let (roles, pos) = match cfg.strategy {
            Strategy::Basic { .. } | Strategy::Overlapped { .. } => {
                let q = match cfg.strategy {
                    Strategy::Overlapped { q, .. } => q,
                    _ => 1,
                };
                slots[0] = Some(chain(&mut rng, 0)?);
                (Roles::Single { active: 0, staged: None }, q as u64)
            }
            Strategy::DualFull { half_len, .. } => {
                slots[0] = Some(chain(&mut rng, 0)?);
                slots[1] = Some(chain(&mut rng, half_len - 1)?);
                (Roles::Dual { a: 0, b: 1 }, 1)
            }
            Strategy::DualSparse { n, m } => {
                let r = (n + 1) / (m + 1);
                slots[0] = Some(chain(&mut rng, 0)?);
                slots[1] = Some(chain(&mut rng, r - 1)?);
                (Roles::Sparse { startup: 0, settled: 1 }, 1)
            }
        };

        let tx = Self { cfg, link, rng, freshness: 0, pos, slots, roles };
        let snapshot = tx.snapshot();
        Ok((tx, snapshot))
    }

    pub fn config(&self) -> &StrategyConfig {
        &self.cfg
    }

    pub fn link(&self) -> LinkInfo {
        self.link
    }

    /// Freshness value of the most recently emitted frame.
    pub fn freshness(&self) -> u64 {
        self.freshness
    }

    /// Current certified state, as handed to a recovering receiver.
    pub fn snapshot(&self) -> Snapshot {
        let slots = self
            .slots
            .iter()
            .map(|s| s.as_ref().map(|ch| SlotSync { c: ch.c, i: ch.last, key: *ch.keys.key(ch.last) }))
            .collect();
        Snapshot { slots, freshness: self.freshness }
    }

    fn vacant_slot(&self) -> usize {
        self.slots.iter().position(|s| s.is_none()).expect("a slot is always vacant at handover")
    }

    fn spawn(&mut self, c: u8) -> usize {
        let slot = self.vacant_slot();
        let keys = Keychain::generate(&mut self.rng, self.cfg.chain_len(), &self.cfg.hash)
            .expect("config validated at construction");
        self.slots[slot] = Some(LiveChain { c, keys, last: 0 });
        slot
    }

    fn chain_c(&self, slot: usize) -> u8 {
        self.slots[slot].as_ref().expect("role slots are occupied").c
    }

    fn put(&mut self, entries: &mut [Option<KeyEntry>], slot: usize, i: u16, omega: bool) {
        let chain = self.slots[slot].as_mut().expect("role slots are occupied");
        chain.last = i;
        entries[slot] = Some(KeyEntry { omega, c: chain.c, i, key: *chain.keys.key(i) });
    }

    /// Emits the next frame of the schedule, carrying `message`.
    pub fn emit(&mut self, message: Vec<u8>) -> UFrame {
        self.freshness += 1;
        let mut entries: Vec<Option<KeyEntry>> = vec![None; self.cfg.group_count()];
        let p = self.pos;

        match self.cfg.strategy {
            Strategy::Basic { .. } | Strategy::Overlapped { .. } => {
                let (n, q) = match self.cfg.strategy {
                    Strategy::Overlapped { n, q } => (n, q),
                    Strategy::Basic { n } => (n, 1),
                    _ => unreachable!(),
                };
                let period = (n - q + 1) as u64;
                let Roles::Single { active, staged } = &mut self.roles else { unreachable!() };
                let active_slot = *active;
                if p < q as u64 {
                    let junior_slot = match *staged {
                        Some(s) => s,
                        None => {
                            let c = self.chain_c(active_slot).wrapping_add(1);
                            let s = self.spawn(c);
                            let Roles::Single { staged, .. } = &mut self.roles else { unreachable!() };
                            *staged = Some(s);
                            s
                        }
                    };
                    self.put(&mut entries, active_slot, n - q + 1 + p as u16, true);
                    self.put(&mut entries, junior_slot, p as u16, false);
                    if p == q as u64 - 1 {
                        self.slots[active_slot] = None;
                        self.roles = Roles::Single { active: junior_slot, staged: None };
                    }
                } else {
                    self.put(&mut entries, active_slot, p as u16, false);
                }
                self.pos = (p + 1) % period;
            }
            Strategy::DualFull { half_len, j_keys } => {
                let nn = half_len as u64;
                let Roles::Dual { a, b } = self.roles else { unreachable!() };
                match (p, j_keys) {
                    (0, JKeys::Three) => {
                        let new_a = self.spawn(self.chain_c(a).wrapping_add(1));
                        self.put(&mut entries, a, 2 * half_len, true);
                        self.put(&mut entries, new_a, 0, false);
                        self.put(&mut entries, b, half_len, false);
                        self.slots[a] = None;
                        self.roles = Roles::Dual { a: new_a, b };
                    }
                    (0, JKeys::Two) => {
                        let new_a = self.spawn(self.chain_c(a).wrapping_add(1));
                        self.put(&mut entries, a, 2 * half_len - 1, true);
                        self.put(&mut entries, new_a, 0, false);
                        self.slots[a] = None;
                        self.roles = Roles::Dual { a: new_a, b };
                    }
                    (p, JKeys::Three) if p == nn => {
                        let new_b = self.spawn(self.chain_c(b).wrapping_add(1));
                        self.put(&mut entries, a, half_len, false);
                        self.put(&mut entries, b, 2 * half_len, true);
                        self.put(&mut entries, new_b, 0, false);
                        self.slots[b] = None;
                        self.roles = Roles::Dual { a, b: new_b };
                    }
                    (p, JKeys::Two) if p == nn => {
                        let new_b = self.spawn(self.chain_c(b).wrapping_add(1));
                        self.put(&mut entries, b, 2 * half_len - 1, true);
                        self.put(&mut entries, new_b, 0, false);
                        self.slots[b] = None;
                        self.roles = Roles::Dual { a, b: new_b };
                    }
                    (p, JKeys::Three) => {
                        self.put(&mut entries, a, p as u16, false);
                        let i_b = if p < nn { p as u16 + half_len } else { p as u16 - half_len };
                        self.put(&mut entries, b, i_b, false);
                    }
                    (p, JKeys::Two) => {
                        let (i_a, i_b) = if p < nn {
                            (p as u16, p as u16 + half_len - 1)
                        } else {
                            (p as u16 - 1, p as u16 - half_len)
                        };
                        self.put(&mut entries, a, i_a, false);
                        self.put(&mut entries, b, i_b, false);
                    }
                }
                self.pos = (p + 1) % (2 * nn);
            }
            Strategy::DualSparse { n, m } => {
                let r = (n + 1) / (m + 1);
                let half = r as u64 * m as u64;
                let Roles::Sparse { startup, settled } = self.roles else { unreachable!() };
                if p == 0 {
                    let junior = self.spawn(self.chain_c(settled).wrapping_add(1));
                    self.put(&mut entries, settled, n, true);
                    self.put(&mut entries, junior, 0, false);
                    self.slots[settled] = None;
                    self.roles = Roles::Sparse { startup: junior, settled: startup };
                } else {
                    self.put(&mut entries, settled, r + p as u16 - 1, false);
                    if p % m as u64 == 0 {
                        self.put(&mut entries, startup, (p / m as u64) as u16, false);
                    }
                }
                self.pos = (p + 1) % half;
            }
        }

        UFrame { link: self.link, freshness: self.freshness, entries, message }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(strategy: Strategy) -> StrategyConfig {
        StrategyConfig { strategy, hash: HashConfig::default() }
    }

    // (slot, omega, c, i) per present entry, in slot order.
    fn shape(f: &UFrame) -> Vec<(usize, bool, u8, u16)> {
        f.present().map(|(g, e)| (g, e.omega, e.c, e.i)).collect()
    }

    #[test]
    fn basic_pattern_first_two_periods() {
        let (mut tx, snap) = Transmitter::new(cfg(Strategy::Basic { n: 3 }), LinkInfo::default(), 7).unwrap();
        assert_eq!(snap.slots.len(), 2);
        let s0 = snap.slots[0].unwrap();
        assert_eq!((s0.c, s0.i), (0, 0));
        assert!(snap.slots[1].is_none());

        let got: Vec<_> = (0..6).map(|_| shape(&tx.emit(vec![]))).collect();
        let want = vec![
            vec![(0, false, 0, 1)],
            vec![(0, false, 0, 2)],
            vec![(0, true, 0, 3), (1, false, 1, 0)],
            vec![(1, false, 1, 1)],
            vec![(1, false, 1, 2)],
            vec![(0, false, 2, 0), (1, true, 1, 3)],
        ];
        assert_eq!(got, want);
        assert_eq!(tx.freshness(), 6);
    }

    #[test]
    fn overlapped_pattern_repeats_the_junction() {
        let (mut tx, snap) =
            Transmitter::new(cfg(Strategy::Overlapped { n: 5, q: 2 }), LinkInfo::default(), 7).unwrap();
        let s0 = snap.slots[0].unwrap();
        assert_eq!((s0.c, s0.i), (0, 0));

        // Period is 4; the first chain starts at position q = 2.
        let got: Vec<_> = (0..10).map(|_| shape(&tx.emit(vec![]))).collect();
        let want = vec![
            vec![(0, false, 0, 2)],
            vec![(0, false, 0, 3)],
            vec![(0, true, 0, 4), (1, false, 1, 0)],
            vec![(0, true, 0, 5), (1, false, 1, 1)],
            vec![(1, false, 1, 2)],
            vec![(1, false, 1, 3)],
            vec![(0, false, 2, 0), (1, true, 1, 4)],
            vec![(0, false, 2, 1), (1, true, 1, 5)],
            vec![(0, false, 2, 2)],
            vec![(0, false, 2, 3)],
        ];
        assert_eq!(got, want);
    }

    #[test]
    fn dual_three_key_pattern() {
        let (mut tx, snap) = Transmitter::new(
            cfg(Strategy::DualFull { half_len: 2, j_keys: JKeys::Three }),
            LinkInfo::default(),
            7,
        )
        .unwrap();
        let (s0, s1) = (snap.slots[0].unwrap(), snap.slots[1].unwrap());
        assert_eq!((s0.c, s0.i), (0, 0));
        assert_eq!((s1.c, s1.i), (0, 1)); // second chain anchored at half_len - 1

        // Period 4, starting at position 1: D, J(b), D, J(a), ...
        let got: Vec<_> = (0..8).map(|_| shape(&tx.emit(vec![]))).collect();
        let want = vec![
            vec![(0, false, 0, 1), (1, false, 0, 3)],
            vec![(0, false, 0, 2), (1, true, 0, 4), (2, false, 1, 0)],
            vec![(0, false, 0, 3), (2, false, 1, 1)],
            vec![(0, true, 0, 4), (1, false, 1, 0), (2, false, 1, 2)],
            vec![(1, false, 1, 1), (2, false, 1, 3)],
            vec![(0, false, 2, 0), (1, false, 1, 2), (2, true, 1, 4)],
            vec![(0, false, 2, 1), (1, false, 1, 3)],
            vec![(0, false, 2, 2), (1, true, 1, 4), (2, false, 2, 0)],
        ];
        assert_eq!(got, want);
    }

    #[test]
    fn dual_two_key_pattern() {
        let (mut tx, _) = Transmitter::new(
            cfg(Strategy::DualFull { half_len: 2, j_keys: JKeys::Two }),
            LinkInfo::default(),
            7,
        )
        .unwrap();

        // Chain length 3, period 4; junction frames carry only the handover.
        let got: Vec<_> = (0..8).map(|_| shape(&tx.emit(vec![]))).collect();
        let want = vec![
            vec![(0, false, 0, 1), (1, false, 0, 2)],
            vec![(1, true, 0, 3), (2, false, 1, 0)],
            vec![(0, false, 0, 2), (2, false, 1, 1)],
            vec![(0, true, 0, 3), (1, false, 1, 0)],
            vec![(1, false, 1, 1), (2, false, 1, 2)],
            vec![(0, false, 2, 0), (2, true, 1, 3)],
            vec![(0, false, 2, 1), (1, false, 1, 2)],
            vec![(1, true, 1, 3), (2, false, 2, 0)],
        ];
        assert_eq!(got, want);
    }

    #[test]
    fn sparse_pattern_and_role_swap() {
        // n = 11, m = 3 -> r = 3, half = 9.
        let (mut tx, snap) =
            Transmitter::new(cfg(Strategy::DualSparse { n: 11, m: 3 }), LinkInfo::default(), 7).unwrap();
        let (s0, s1) = (snap.slots[0].unwrap(), snap.slots[1].unwrap());
        assert_eq!((s0.c, s0.i), (0, 0));
        assert_eq!((s1.c, s1.i), (0, 2)); // r - 1

        let got: Vec<_> = (0..18).map(|_| shape(&tx.emit(vec![]))).collect();
        let want = vec![
            // First half: settled chain in slot 1 every frame, startup chain
            // in slot 0 at every m-th position.
            vec![(1, false, 0, 3)],
            vec![(1, false, 0, 4)],
            vec![(0, false, 0, 1), (1, false, 0, 5)],
            vec![(1, false, 0, 6)],
            vec![(1, false, 0, 7)],
            vec![(0, false, 0, 2), (1, false, 0, 8)],
            vec![(1, false, 0, 9)],
            vec![(1, false, 0, 10)],
            // Junction: slot 1 seniors out at n = 11, replacement in slot 2.
            vec![(1, true, 0, 11), (2, false, 1, 0)],
            // Second half: roles swapped, slot 0 is now the settled chain.
            vec![(0, false, 0, 3)],
            vec![(0, false, 0, 4)],
            vec![(0, false, 0, 5), (2, false, 1, 1)],
            vec![(0, false, 0, 6)],
            vec![(0, false, 0, 7)],
            vec![(0, false, 0, 8), (2, false, 1, 2)],
            vec![(0, false, 0, 9)],
            vec![(0, false, 0, 10)],
            vec![(0, true, 0, 11), (1, false, 1, 0)],
        ];
        assert_eq!(got, want);
    }

    #[test]
    fn dual_slot_rotation_walks_all_six_arrangements() {
        let (mut tx, _) = Transmitter::new(
            cfg(Strategy::DualFull { half_len: 2, j_keys: JKeys::Three }),
            LinkInfo::default(),
            3,
        )
        .unwrap();
        let mut seen = vec![match tx.roles {
            Roles::Dual { a, b } => (a, b),
            _ => unreachable!(),
        }];
        for _ in 0..12 {
            tx.emit(vec![]);
            let Roles::Dual { a, b } = tx.roles else { unreachable!() };
            if *seen.last().unwrap() != (a, b) {
                seen.push((a, b));
            }
        }
        assert_eq!(
            &seen[..7],
            &[(0, 1), (0, 2), (1, 2), (1, 0), (2, 0), (2, 1), (0, 1)],
        );
    }

    #[test]
    fn single_chain_slots_alternate() {
        let (mut tx, _) = Transmitter::new(cfg(Strategy::Basic { n: 4 }), LinkInfo::default(), 3).unwrap();
        let mut actives = vec![];
        for _ in 0..16 {
            tx.emit(vec![]);
            let Roles::Single { active, .. } = tx.roles else { unreachable!() };
            if actives.last() != Some(&active) {
                actives.push(active);
            }
        }
        assert_eq!(&actives[..4], &[0, 1, 0, 1]);
    }

    // Every chain generation must disclose a contiguous, strictly increasing
    // index sequence. Chains born on the wire start at index 0; the chains
    // present at bootstrap resume above their snapshot anchor instead (the
    // anchor stands in for anything earlier, and receivers bridge any initial
    // distance by backtracking).
    #[test]
    fn every_chain_disclosure_is_gap_free() {
        let strategies = [
            Strategy::Basic { n: 5 },
            Strategy::Overlapped { n: 7, q: 3 },
            Strategy::DualFull { half_len: 4, j_keys: JKeys::Three },
            Strategy::DualFull { half_len: 4, j_keys: JKeys::Two },
            Strategy::DualSparse { n: 11, m: 3 },
            Strategy::DualSparse { n: 7, m: 1 },
        ];
        for strategy in strategies {
            let c = cfg(strategy);
            let (mut tx, snap) = Transmitter::new(c, LinkInfo::default(), 11).unwrap();
            let mut per_chain: std::collections::HashMap<(usize, u8), Vec<u16>> = Default::default();
            for _ in 0..6 * c.period_frames() {
                let f = tx.emit(vec![]);
                for (g, e) in f.present() {
                    per_chain.entry((g, e.c)).or_default().push(e.i);
                }
            }
            for ((g, gen), indices) in per_chain {
                let anchor = snap.slots[g].filter(|s| s.c == gen).map(|s| s.i);
                match anchor {
                    Some(a) => assert!(
                        indices[0] > a,
                        "{strategy:?}: bootstrapped slot {g} must resume above its anchor"
                    ),
                    None => assert_eq!(
                        indices[0], 0,
                        "{strategy:?}: slot {g} generation {gen} must start from its root"
                    ),
                }
                for w in indices.windows(2) {
                    assert_eq!(
                        w[1],
                        w[0] + 1,
                        "{strategy:?}: slot {g} generation {gen} skipped from {} to {}",
                        w[0],
                        w[1]
                    );
                }
            }
        }
    }

    #[test]
    fn efficiency_formulas() {
        let eff = |s| cfg(s).theoretical_efficiency();
        assert_eq!(eff(Strategy::Basic { n: 127 }), Ratio::new(127, 128));
        assert_eq!(eff(Strategy::Overlapped { n: 127, q: 3 }), Ratio::new(125, 128));
        assert_eq!(eff(Strategy::DualFull { half_len: 64, j_keys: JKeys::Two }), Ratio::new(1, 2));
        assert_eq!(eff(Strategy::DualFull { half_len: 64, j_keys: JKeys::Three }), Ratio::new(64, 129));
        assert_eq!(eff(Strategy::DualSparse { n: 127, m: 7 }), Ratio::new(7, 8));
    }

    #[test]
    fn config_validation() {
        let ok = |s| cfg(s).validate().unwrap();
        let err = |s| cfg(s).validate().unwrap_err();
        ok(Strategy::Basic { n: 1 });
        assert_eq!(err(Strategy::Basic { n: 0 }), ConfigError::ChainLength);
        ok(Strategy::Overlapped { n: 5, q: 3 }); // 2q = n + 1 boundary
        assert_eq!(err(Strategy::Overlapped { n: 5, q: 4 }), ConfigError::OverlapDepth { q: 4, n: 5 });
        assert_eq!(err(Strategy::Overlapped { n: 5, q: 0 }), ConfigError::OverlapDepth { q: 0, n: 5 });
        ok(Strategy::DualFull { half_len: 2, j_keys: JKeys::Two });
        assert_eq!(err(Strategy::DualFull { half_len: 1, j_keys: JKeys::Two }), ConfigError::HalfLength(1));
        ok(Strategy::DualSparse { n: 127, m: 7 });
        assert_eq!(err(Strategy::DualSparse { n: 127, m: 6 }), ConfigError::SparseShape { n: 127, m: 6 });
        // ratio r = 1 is a bare junction loop, not a usable layout
        assert_eq!(err(Strategy::DualSparse { n: 7, m: 7 }), ConfigError::SparseShape { n: 7, m: 7 });
        let bad_hash = StrategyConfig {
            strategy: Strategy::Basic { n: 4 },
            hash: HashConfig { key_bits: 20, ..Default::default() },
        };
        assert!(matches!(bad_hash.validate(), Err(ConfigError::Hash(_))));
    }

    #[test]
    fn dual_index_derivation() {
        assert_eq!(derive_dual_indices(1, 0, 64), Some((65, 0)));
        assert_eq!(derive_dual_indices(65, 0, 64), Some((1, 1)));
        assert_eq!(derive_dual_indices(64, 5, 64), Some((128, 5)));
        assert_eq!(derive_dual_indices(128, 5, 64), Some((64, 6)));
        assert_eq!(derive_dual_indices(0, 0, 64), None);
        assert_eq!(derive_dual_indices(129, 0, 64), None);
        assert_eq!(derive_dual_indices(70, 255, 64), Some((6, 0))); // generation wraps
    }

    #[test]
    fn same_seed_same_stream() {
        let c = cfg(Strategy::DualSparse { n: 11, m: 3 });
        let (mut t1, s1) = Transmitter::new(c, LinkInfo::default(), 99).unwrap();
        let (mut t2, s2) = Transmitter::new(c, LinkInfo::default(), 99).unwrap();
        assert_eq!(s1, s2);
        for _ in 0..30 {
            assert_eq!(t1.emit(b"x".to_vec()), t2.emit(b"x".to_vec()));
        }
        assert_eq!(t1.snapshot(), t2.snapshot());
    }
}
