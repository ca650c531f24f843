//! Adversary models for a compromised group member.
//!
//! The interesting attacker here is an insider: it holds the shared channel
//! MAC key, hears every frame, and can inject frames that pass the integrity
//! check. What it does not have is the transmitter's undisclosed chain keys,
//! so a forgery needs a key guess, a replayed old key, or a paid-for
//! preimage search against a disclosed anchor. These models quantify what
//! each of those costs and how the receiver holds up.

use log::warn;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::keychain::{hash_step, HashConfig, Key};
use crate::wire::{encode_frame, KeyEntry, LinkInfo, ScKey, UFrame};

/// How a masquerading insider fills the key field it cannot know.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyGuess {
    /// Uniformly random bytes of the configured key width.
    Random,
    /// Verbatim reuse of a previously disclosed key entry.
    ReplayOldKey,
}

/// Active attacks the channel simulation can inject.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", rename_all_fields = "kebab-case")]
pub enum AdversaryConfig {
    /// Forged frames that try to pass key validation.
    /// `injection_rate` is the expected forgeries per licit frame interval.
    Masquerade { injection_rate: f64, key_guess: KeyGuess },
    /// MAC-valid junk meant to waste receiver work and provoke timeouts,
    /// not to validate. Same rate semantics as masquerading.
    DosSpam { rate: f64 },
    /// Online preimage search against the freshest disclosed key, at
    /// `hash_rate` evaluations per second of simulated time. A hit yields a
    /// forgery the receiver cannot tell from a licit frame.
    BruteForce { hash_rate: f64 },
}

/// Insider attacker state threaded through a channel simulation.
///
/// `observe` must be called with every transmitted frame (the insider hears
/// the medium itself, so receiver-side losses do not blind it).
pub struct Adversary {
    cfg: AdversaryConfig,
    groups: usize,
    hash: HashConfig,
    link: LinkInfo,
    sc_key: ScKey,
    rng: ChaCha12Rng,
    /// Last live disclosure per slot, the anchor a receiver would hold.
    anchors: Vec<Option<KeyEntry>>,
    newest_slot: Option<usize>,
    /// Recent disclosures for replay attacks.
    log: Vec<(usize, KeyEntry)>,
    /// Freshness bump so successive forgeries never collide with each other.
    bump: u64,
    /// Fractional hash budget carried between intervals.
    carry: f64,
    /// A found preimage waiting to be spent, as a ready slot entry.
    recovered: Option<(usize, KeyEntry)>,
    candidates: KeyEnumerator,
    hashes_spent: u64,
}

const REPLAY_LOG_CAP: usize = 1024;
/// Upper bound on preimage work simulated per interval, to keep a
/// misconfigured hash rate from hanging the simulation.
const SEARCH_STEP_CAP: u64 = 1 << 26;

/// Preimage candidates enumerated from a random starting point: distinct
/// guesses, one hash each, the way an exhaustive attacker actually sweeps a
/// key space. Independent random draws would start repeating once the budget
/// rivals the space, which visibly depresses the hit rate at test widths.
struct KeyEnumerator {
    prefix: [u8; 32],
    counter: u128,
    width: usize,
}

impl KeyEnumerator {
    fn new(rng: &mut ChaCha12Rng, width: usize) -> Self {
        let mut prefix = [0u8; 32];
        rng.fill_bytes(&mut prefix);
        Self { prefix, counter: rng.random(), width }
    }

    fn next_key(&mut self) -> Key {
        let mut buf = self.prefix;
        let tail = self.width.min(16);
        let ctr = self.counter.to_be_bytes();
        buf[self.width - tail..self.width].copy_from_slice(&ctr[16 - tail..]);
        self.counter = self.counter.wrapping_add(1);
        Key::from_slice(&buf[..self.width]).expect("validated key width")
    }
}

impl Adversary {
    pub fn new(
        cfg: AdversaryConfig,
        groups: usize,
        hash: HashConfig,
        link: LinkInfo,
        sc_key: ScKey,
        mut rng: ChaCha12Rng,
    ) -> Self {
        let candidates = KeyEnumerator::new(&mut rng, hash.key_bytes());
        Self {
            cfg,
            groups,
            hash,
            link,
            sc_key,
            rng,
            anchors: vec![None; groups],
            newest_slot: None,
            log: Vec::new(),
            bump: 0,
            carry: 0.0,
            recovered: None,
            candidates,
            hashes_spent: 0,
        }
    }

    /// Records what a transmitted frame just disclosed.
    pub fn observe(&mut self, frame: &UFrame) {
        for (g, e) in frame.present() {
            if e.omega {
                self.anchors[g] = None;
                if self.newest_slot == Some(g) {
                    self.newest_slot = None;
                }
            } else {
                self.anchors[g] = Some(*e);
                self.newest_slot = Some(g);
            }
            if self.log.len() == REPLAY_LOG_CAP {
                let evict = self.rng.random_range(0..REPLAY_LOG_CAP);
                self.log.swap_remove(evict);
            }
            self.log.push((g, *e));
        }
    }

    /// Draws how many forgeries to inject in the next frame interval.
    pub fn injections_for_interval(&mut self) -> u32 {
        let rate = match self.cfg {
            AdversaryConfig::Masquerade { injection_rate, .. } => injection_rate,
            AdversaryConfig::DosSpam { rate } => rate,
            AdversaryConfig::BruteForce { .. } => return 0,
        };
        let whole = rate.trunc() as u32;
        whole + self.rng.random_bool(rate.fract()) as u32
    }

    /// Spends `dt_us` worth of preimage search against the newest anchor.
    /// Returns true when a preimage was found; the forgery is then held
    /// until the next [`Adversary::forge_frame`] call.
    pub fn search(&mut self, dt_us: u64) -> bool {
        let AdversaryConfig::BruteForce { hash_rate } = self.cfg else {
            return false;
        };
        let Some(target) = self.newest_slot.and_then(|g| self.anchors[g].map(|a| (g, a))) else {
            return false;
        };
        self.carry += hash_rate * dt_us as f64 / 1e6;
        let mut steps = self.carry.trunc() as u64;
        self.carry -= steps as f64;
        if steps > SEARCH_STEP_CAP {
            warn!("preimage search clipped to {SEARCH_STEP_CAP} steps this interval");
            steps = SEARCH_STEP_CAP;
        }

        let (slot, anchor) = target;
        for _ in 0..steps {
            let guess = self.candidates.next_key();
            self.hashes_spent += 1;
            if hash_step(&guess, &self.hash) == anchor.key {
                self.recovered = Some((
                    slot,
                    KeyEntry { omega: false, c: anchor.c, i: anchor.i.wrapping_add(1), key: guess },
                ));
                return true;
            }
        }
        false
    }

    /// Builds one MAC-valid forged frame, or None when the attacker has
    /// nothing to work from yet. `base_freshness` should be the highest
    /// freshness value seen on the wire; the forgery lands above it.
    pub fn forge_frame(&mut self, base_freshness: u64) -> Option<Vec<u8>> {
        let width = self.hash.key_bytes();
        let (slot, entry) = match self.cfg {
            AdversaryConfig::Masquerade { key_guess: KeyGuess::ReplayOldKey, .. } => {
                if self.log.is_empty() {
                    return None;
                }
                self.log[self.rng.random_range(0..self.log.len())]
            }
            AdversaryConfig::Masquerade { key_guess: KeyGuess::Random, .. }
            | AdversaryConfig::DosSpam { .. } => {
                let slot = self.newest_slot?;
                let anchor = self.anchors[slot]?;
                let guess = Key::random(&mut self.rng, width).expect("validated key width");
                (
                    slot,
                    KeyEntry {
                        omega: false,
                        c: anchor.c,
                        i: anchor.i.wrapping_add(1),
                        key: guess,
                    },
                )
            }
            AdversaryConfig::BruteForce { .. } => self.recovered.take()?,
        };

        let mut entries = vec![None; self.groups];
        entries[slot] = Some(entry);
        self.bump += 1;
        let frame = UFrame {
            link: self.link,
            freshness: base_freshness + self.bump,
            entries,
            message: vec![],
        };
        Some(encode_frame(&frame, &self.sc_key).expect("forged frame is structurally well-formed"))
    }

    /// Total preimage-search hash evaluations spent so far.
    pub fn hashes_spent(&self) -> u64 {
        self.hashes_spent
    }
}

/// Keys recovered by a successful preimage walk, newest first: `keys[0]`
/// hashes to the attacked anchor, `keys[1]` hashes to `keys[0]`, and so on.
/// Each entry lets the attacker forge one future disclosure.
#[derive(Clone, Debug)]
pub struct RecoveredChain {
    pub keys: Vec<Key>,
}

/// Tries to invert `target` by sweeping distinct candidates from a random
/// starting point, one hash evaluation per candidate, spending at most
/// `budget` evaluations. Hashing forward from earlier guesses would be
/// cheaper bookkeeping but samples the iterate distribution, which on a
/// truncated key space concentrates onto a shrinking image and visibly
/// depresses the hit rate below the closed-form prediction.
///
/// After a hit the leftover budget goes into extending the forgeable suffix
/// backwards, up to `depth` keys. Returns the suffix and the evaluations
/// actually spent.
pub fn bruteforce_attack(
    target: &Key,
    budget: u64,
    depth: usize,
    cfg: &HashConfig,
    rng: &mut ChaCha12Rng,
) -> (Option<RecoveredChain>, u64) {
    let mut candidates = KeyEnumerator::new(rng, cfg.key_bytes());
    let mut keys: Vec<Key> = Vec::new();
    let mut wanted = *target;
    let mut spent = 0;
    while spent < budget && keys.len() < depth.max(1) {
        let guess = candidates.next_key();
        spent += 1;
        if hash_step(&guess, cfg) == wanted {
            wanted = guess;
            keys.push(guess);
        }
    }
    if keys.is_empty() {
        (None, spent)
    } else {
        (Some(RecoveredChain { keys }), spent)
    }
}

/// Outcome of repeated brute-force attempts against independent chains.
#[derive(Clone, Debug, Serialize)]
pub struct AttackStats {
    pub lifetimes: u64,
    pub budget_per_lifetime: u64,
    pub hash_evals: u64,
    pub successes: u64,
    pub observed_success_rate: f64,
    pub predicted_success_rate: f64,
    /// Mean lifetimes between successful breaks; None when none succeeded.
    pub observed_mtbf_lifetimes: Option<f64>,
}

/// Probability that a `budget`-evaluation search inverts one `key_bits`-wide
/// hash value.
pub fn success_probability(budget: u64, key_bits: u16) -> f64 {
    let per_try = (-(key_bits as f64) * std::f64::consts::LN_2).exp();
    1.0 - (budget as f64 * (-per_try).ln_1p()).exp()
}

/// Runs `lifetimes` independent chain attacks and tallies the outcomes.
pub fn run_attack_campaign(
    lifetimes: u64,
    budget: u64,
    depth: usize,
    cfg: &HashConfig,
    seed: u64,
) -> AttackStats {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let width = cfg.key_bytes();
    let mut successes = 0;
    let mut hash_evals = 0;
    for _ in 0..lifetimes {
        let target = Key::random(&mut rng, width).expect("validated key width");
        let (hit, spent) = bruteforce_attack(&target, budget, depth, cfg, &mut rng);
        successes += hit.is_some() as u64;
        hash_evals += spent;
    }
    AttackStats {
        lifetimes,
        budget_per_lifetime: budget,
        hash_evals,
        successes,
        observed_success_rate: successes as f64 / lifetimes.max(1) as f64,
        predicted_success_rate: success_probability(budget, cfg.key_bits),
        observed_mtbf_lifetimes: (successes > 0).then(|| lifetimes as f64 / successes as f64),
    }
}

const SECONDS_PER_YEAR: f64 = 3.155_76e7;

/// Expected years between successful preimage breaks for an attacker
/// sustaining `hash_rate` evaluations per second against `key_bits`-wide
/// keys.
pub fn predicted_mtbf_years(hash_rate: f64, key_bits: u16) -> f64 {
    use num_bigint::BigUint;
    use num_traits::ToPrimitive;
    let space = BigUint::from(1u8) << key_bits as usize;
    space.to_f64().expect("2^key_bits fits an f64 exponent") / hash_rate / SECONDS_PER_YEAR
}
