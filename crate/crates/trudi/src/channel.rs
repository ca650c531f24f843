//! Discrete-event simulation of one transmitter and one receiver on a lossy
//! multicast channel.
//!
//! Time is integer microseconds. Each scenario wires together a strategy, a
//! frame timing model, a loss model, an optional adversary, and the receiver
//! and recovery settings, then plays the whole exchange out deterministically
//! from one seed. Events at the same instant settle in a fixed order:
//! recovery completion, then the licit frame, then injected frames, then
//! timeout checks.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{Adversary, AdversaryConfig};
use crate::receiver::{Outcome, Receiver, TimeoutRule};
use crate::transmitter::{ConfigError, StrategyConfig, Transmitter};
use crate::wire::{encode_frame, LinkInfo, ScKey};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario is not valid TOML: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{field} must be a probability in [0, 1], got {value}")]
    Probability { field: &'static str, value: f64 },
    #[error("{field} must be a finite non-negative rate, got {value}")]
    Rate { field: &'static str, value: f64 },
    #[error("timing intervals need 1 <= min-us <= max-us")]
    TimingRange,
}

/// When frames leave the transmitter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", rename_all_fields = "kebab-case")]
pub enum Timing {
    Periodic { period_us: u64 },
    /// Independent uniform gaps, for sporadic traffic.
    Sporadic { min_us: u64, max_us: u64 },
}

impl Timing {
    /// Mean inter-frame gap; the usual choice for the validation timeout.
    pub fn mean_us(&self) -> u64 {
        match *self {
            Timing::Periodic { period_us } => period_us,
            Timing::Sporadic { min_us, max_us } => min_us.midpoint(max_us),
        }
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let ok = match *self {
            Timing::Periodic { period_us } => period_us >= 1,
            Timing::Sporadic { min_us, max_us } => 1 <= min_us && min_us <= max_us,
        };
        ok.then_some(()).ok_or(ScenarioError::TimingRange)
    }

    fn next_gap(&self, rng: &mut ChaCha12Rng) -> u64 {
        match *self {
            Timing::Periodic { period_us } => period_us,
            Timing::Sporadic { min_us, max_us } => rng.random_range(min_us..=max_us),
        }
    }
}

/// Frame erasure models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", rename_all_fields = "kebab-case")]
pub enum LossModel {
    None,
    /// Independent loss with probability `p` per frame.
    Bernoulli { p: f64 },
    /// Two-state bursty channel: a good state and a bad state with their own
    /// loss rates. State transitions are sampled after every frame.
    GilbertElliott {
        #[serde(default = "default_p_enter")]
        p_enter: f64,
        #[serde(default = "default_p_exit")]
        p_exit: f64,
        #[serde(default = "default_loss_good")]
        loss_good: f64,
        #[serde(default = "default_loss_bad")]
        loss_bad: f64,
    },
    /// Drop exactly the listed frame ordinals (1-based), for reproducing a
    /// specific burst.
    Schedule { drops: Vec<u64> },
}

fn default_p_enter() -> f64 {
    0.01
}
fn default_p_exit() -> f64 {
    0.3
}
fn default_loss_good() -> f64 {
    0.001
}
fn default_loss_bad() -> f64 {
    0.9
}

impl Default for LossModel {
    fn default() -> Self {
        LossModel::None
    }
}

impl LossModel {
    fn validate(&self) -> Result<(), ScenarioError> {
        let check = |field, value: f64| {
            (0.0..=1.0)
                .contains(&value)
                .then_some(())
                .ok_or(ScenarioError::Probability { field, value })
        };
        match *self {
            LossModel::None | LossModel::Schedule { .. } => Ok(()),
            LossModel::Bernoulli { p } => check("loss.p", p),
            LossModel::GilbertElliott { p_enter, p_exit, loss_good, loss_bad } => {
                check("loss.p-enter", p_enter)?;
                check("loss.p-exit", p_exit)?;
                check("loss.loss-good", loss_good)?;
                check("loss.loss-bad", loss_bad)
            }
        }
    }
}

enum LossState {
    None,
    Bernoulli { p: f64 },
    GilbertElliott { p_enter: f64, p_exit: f64, loss_good: f64, loss_bad: f64, bad: bool },
    Schedule { drops: HashSet<u64> },
}

impl LossState {
    fn new(model: &LossModel) -> Self {
        match model {
            LossModel::None => LossState::None,
            LossModel::Bernoulli { p } => LossState::Bernoulli { p: *p },
            LossModel::GilbertElliott { p_enter, p_exit, loss_good, loss_bad } => {
                LossState::GilbertElliott {
                    p_enter: *p_enter,
                    p_exit: *p_exit,
                    loss_good: *loss_good,
                    loss_bad: *loss_bad,
                    bad: false,
                }
            }
            LossModel::Schedule { drops } => {
                LossState::Schedule { drops: drops.iter().copied().collect() }
            }
        }
    }

    fn drops(&mut self, ordinal: u64, rng: &mut ChaCha12Rng) -> bool {
        match self {
            LossState::None => false,
            LossState::Bernoulli { p } => rng.random_bool(*p),
            LossState::GilbertElliott { p_enter, p_exit, loss_good, loss_bad, bad } => {
                let p = if *bad { *loss_bad } else { *loss_good };
                let lost = rng.random_bool(p);
                let flip = rng.random_bool(if *bad { *p_exit } else { *p_enter });
                if flip {
                    *bad = !*bad;
                }
                lost
            }
            LossState::Schedule { drops } => drops.contains(&ordinal),
        }
    }
}

/// Receiver knobs; everything has a sensible default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ReceiverSettings {
    /// Validation timeout; defaults to a fixed timeout of one mean frame
    /// interval.
    #[serde(default)]
    pub timeout: Option<TimeoutRule>,
    /// Bound on the hash walk per key entry; defaults to the chain length.
    #[serde(default)]
    pub backtrack_cap: Option<u32>,
}

/// How long a re-initialization round trip takes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RecoverySettings {
    #[serde(default)]
    pub latency_us: u64,
}

/// One complete simulation setup, loadable from TOML.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub frame_count: u64,
    pub strategy: StrategyConfig,
    pub timing: Timing,
    #[serde(default)]
    pub receiver: ReceiverSettings,
    #[serde(default)]
    pub recovery: RecoverySettings,
    #[serde(default)]
    pub loss: LossModel,
    #[serde(default)]
    pub adversary: Option<AdversaryConfig>,
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(s)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.strategy.validate()?;
        self.timing.validate()?;
        self.loss.validate()?;
        match self.adversary {
            Some(AdversaryConfig::Masquerade { injection_rate: r, .. })
            | Some(AdversaryConfig::DosSpam { rate: r }) => {
                if !r.is_finite() || r < 0.0 {
                    return Err(ScenarioError::Rate { field: "adversary rate", value: r });
                }
            }
            Some(AdversaryConfig::BruteForce { hash_rate }) => {
                if !hash_rate.is_finite() || hash_rate < 0.0 {
                    return Err(ScenarioError::Rate {
                        field: "adversary.hash-rate",
                        value: hash_rate,
                    });
                }
            }
            None => {}
        }
        Ok(())
    }
}

/// Tallies from one simulation run. All licit/adversary distinctions come
/// from the harness knowing each frame's provenance, which the receiver
/// itself never does.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Metrics {
    /// Licit frames the transmitter emitted.
    pub frames_sent: u64,
    /// Licit frames that survived the loss model.
    pub frames_delivered: u64,
    /// Frames of any provenance fed to the receiver.
    pub frames_processed: u64,
    /// Injected frames fed to the receiver.
    pub adversary_frames: u64,
    /// Licit frames the receiver accepted.
    pub accepted: u64,
    pub rejected_origin: u64,
    pub rejected_integrity: u64,
    pub rejected_replay: u64,
    pub dropped_recovering: u64,
    /// Licit, delivered, examined, and still rejected.
    pub false_negatives: u64,
    /// Injected frames the receiver accepted.
    pub false_positives: u64,
    pub recoveries: u64,
    /// Time spent waiting for re-initialization.
    pub recovery_downtime_us: u64,
    /// Key entries across all emitted frames.
    pub keys_sent: u64,
    /// Chain-hash evaluations the receiver spent validating.
    pub hash_evals: u64,
    pub sim_time_us: u64,
}

impl Metrics {
    /// Measured key-transport efficiency: authenticated frames per
    /// transmitted key.
    pub fn measured_eta_kt(&self) -> Ratio<u64> {
        if self.keys_sent == 0 {
            Ratio::from_integer(0)
        } else {
            Ratio::new(self.frames_sent, self.keys_sent)
        }
    }
}

const CLASS_RECOVER: u8 = 0;
const CLASS_ARRIVAL: u8 = 1;
const CLASS_INJECT: u8 = 2;
const CLASS_TIMER: u8 = 3;

#[derive(PartialEq, Eq)]
enum EvKind {
    Arrival(u64),
    Inject,
    Timer,
    RecoverApply,
}

#[derive(PartialEq, Eq)]
struct Event {
    t: u64,
    class: u8,
    seq: u64,
    kind: EvKind,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.t, self.class, self.seq).cmp(&(other.t, other.class, other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn substream(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Plays a scenario out and returns the tallies.
pub fn run(scenario: &Scenario) -> Result<Metrics, ScenarioError> {
    scenario.validate()?;
    let mut timing_rng = substream(scenario.seed, 1);
    let mut loss_rng = substream(scenario.seed, 2);
    let adv_rng = substream(scenario.seed, 3);
    let mut key_rng = substream(scenario.seed, 4);
    let mut sched_rng = substream(scenario.seed, 5);

    let sc_key = ScKey::random(&mut key_rng);
    let (mut tx, snapshot) = Transmitter::new(scenario.strategy, LinkInfo::default(), scenario.seed)?;
    let t_bar = scenario.timing.mean_us();
    let timeout = scenario
        .receiver
        .timeout
        .unwrap_or(TimeoutRule::Fixed { t_to_us: t_bar });
    let mut rx = Receiver::new(
        &scenario.strategy,
        sc_key.clone(),
        timeout,
        scenario.receiver.backtrack_cap,
        &snapshot,
    )?;
    let mut adversary = scenario.adversary.map(|cfg| {
        Adversary::new(
            cfg,
            scenario.strategy.group_count(),
            scenario.strategy.hash,
            tx.link(),
            sc_key.clone(),
            adv_rng,
        )
    });
    let mut loss = LossState::new(&scenario.loss);

    let fc = scenario.frame_count;
    let mut arrivals = Vec::with_capacity(fc as usize);
    let mut t = 0u64;
    for _ in 0..fc {
        t += scenario.timing.next_gap(&mut timing_rng);
        arrivals.push(t);
    }
    let horizon = arrivals.last().copied().unwrap_or(0) + t_bar;

    let mut m = Metrics::default();
    let mut heap: BinaryHeap<std::cmp::Reverse<Event>> = BinaryHeap::new();
    let mut seq = 0u64;
    let push = |heap: &mut BinaryHeap<_>, seq: &mut u64, t, class, kind| {
        *seq += 1;
        heap.push(std::cmp::Reverse(Event { t, class, seq: *seq, kind }));
    };
    if fc > 0 {
        push(&mut heap, &mut seq, arrivals[0], CLASS_ARRIVAL, EvKind::Arrival(1));
    }

    // Deadline of the last timer event actually scheduled, to avoid
    // flooding the queue when spam re-observes the same armed timer.
    let mut pushed_deadline: Option<u64> = None;
    let mut recovering_since: Option<u64> = None;

    let tally = |m: &mut Metrics, licit: bool, out: &Outcome| {
        m.frames_processed += 1;
        if !licit {
            m.adversary_frames += 1;
        }
        match out {
            Outcome::Accepted { .. } => {
                if licit {
                    m.accepted += 1;
                } else {
                    m.false_positives += 1;
                }
            }
            Outcome::RejectedOrigin => {
                m.rejected_origin += 1;
                if licit {
                    m.false_negatives += 1;
                }
            }
            Outcome::RejectedIntegrity => {
                m.rejected_integrity += 1;
                if licit {
                    m.false_negatives += 1;
                }
            }
            Outcome::RejectedReplay => {
                m.rejected_replay += 1;
                if licit {
                    m.false_negatives += 1;
                }
            }
            Outcome::DroppedRecovering => m.dropped_recovering += 1,
        }
    };

    while let Some(std::cmp::Reverse(ev)) = heap.pop() {
        if ev.t > horizon {
            break;
        }
        match ev.kind {
            EvKind::Arrival(k) => {
                let frame = tx.emit(k.to_le_bytes().to_vec());
                m.frames_sent += 1;
                m.keys_sent += frame.present().count() as u64;
                if let Some(adv) = &mut adversary {
                    adv.observe(&frame);
                }
                if !loss.drops(k, &mut loss_rng) {
                    m.frames_delivered += 1;
                    let bytes = encode_frame(&frame, &sc_key).expect("licit frames encode");
                    let out = rx.process(&bytes, ev.t);
                    tally(&mut m, true, &out);
                    schedule_timer(&mut heap, &mut seq, &rx, &mut pushed_deadline);
                }
                let next_t = arrivals.get(k as usize).copied().unwrap_or(horizon);
                if let Some(adv) = &mut adversary {
                    let mut injections = adv.injections_for_interval();
                    injections += adv.search(next_t.saturating_sub(ev.t)) as u32;
                    for _ in 0..injections {
                        let ti = if next_t > ev.t + 1 {
                            sched_rng.random_range(ev.t + 1..next_t)
                        } else {
                            ev.t
                        };
                        push(&mut heap, &mut seq, ti, CLASS_INJECT, EvKind::Inject);
                    }
                }
                if k < fc {
                    push(&mut heap, &mut seq, arrivals[k as usize], CLASS_ARRIVAL, EvKind::Arrival(k + 1));
                }
            }
            EvKind::Inject => {
                let Some(adv) = &mut adversary else { continue };
                let Some(bytes) = adv.forge_frame(tx.freshness()) else { continue };
                let out = rx.process(&bytes, ev.t);
                tally(&mut m, false, &out);
                schedule_timer(&mut heap, &mut seq, &rx, &mut pushed_deadline);
            }
            EvKind::Timer => {
                if rx.poll_timeout(ev.t) {
                    m.recoveries += 1;
                    recovering_since = Some(ev.t);
                    push(
                        &mut heap,
                        &mut seq,
                        ev.t + scenario.recovery.latency_us,
                        CLASS_RECOVER,
                        EvKind::RecoverApply,
                    );
                }
            }
            EvKind::RecoverApply => {
                rx.apply_recovery(&tx.snapshot());
                if let Some(since) = recovering_since.take() {
                    m.recovery_downtime_us += ev.t - since;
                }
                pushed_deadline = None;
            }
        }
    }
    if let Some(since) = recovering_since {
        m.recovery_downtime_us += horizon.saturating_sub(since);
    }

    m.hash_evals = rx.hash_evals();
    m.sim_time_us = horizon;
    Ok(m)
}

fn schedule_timer(
    heap: &mut BinaryHeap<std::cmp::Reverse<Event>>,
    seq: &mut u64,
    rx: &Receiver,
    pushed: &mut Option<u64>,
) {
    match rx.timeout_deadline() {
        Some(d) if *pushed != Some(d) => {
            *seq += 1;
            heap.push(std::cmp::Reverse(Event { t: d, class: CLASS_TIMER, seq: *seq, kind: EvKind::Timer }));
            *pushed = Some(d);
        }
        Some(_) => {}
        None => *pushed = None,
    }
}

/// Analytic worst-burst guarantee each strategy is designed for, in frames.
pub fn max_tolerated_burst(strategy: &StrategyConfig) -> u16 {
    use crate::transmitter::{JKeys, Strategy};
    match strategy.strategy {
        Strategy::Basic { n } => n - 1,
        Strategy::Overlapped { n, .. } => n - 1,
        Strategy::DualFull { half_len, j_keys: JKeys::Two } => half_len - 1,
        Strategy::DualFull { half_len, j_keys: JKeys::Three } => half_len,
        Strategy::DualSparse { n, m } => {
            let r = (n + 1) / (m + 1);
            if m >= 3 {
                (r - 1) * m
            } else {
                r * m
            }
        }
    }
}

/// Survival outcome for one contiguous burst placement.
#[derive(Clone, Copy, Debug)]
pub struct BurstOutcome {
    pub start: u64,
    pub len: u64,
    pub survived: bool,
}

/// Exhaustive burst placement results for one strategy.
#[derive(Clone, Debug)]
pub struct BurstReport {
    pub period_frames: u64,
    pub outcomes: Vec<BurstOutcome>,
}

impl BurstReport {
    /// Longest burst that every placement survived.
    pub fn guaranteed_tolerance(&self) -> u64 {
        (1..=self.period_frames)
            .take_while(|&l| self.outcomes.iter().all(|o| o.len != l || o.survived))
            .last()
            .unwrap_or(0)
    }

    /// Longest burst that some placement survived.
    pub fn best_case_tolerance(&self) -> u64 {
        self.outcomes.iter().filter(|o| o.survived).map(|o| o.len).max().unwrap_or(0)
    }

    pub fn survived(&self, start: u64, len: u64) -> Option<bool> {
        self.outcomes.iter().find(|o| o.start == start && o.len == len).map(|o| o.survived)
    }
}

/// Sweeps every burst of 1..=P frames across every start position in the
/// second period, one lossless-otherwise simulation each, and records which
/// placements the receiver rode out without re-initialization. The timeout
/// is the mean frame interval, the suggested default.
pub fn burst_sweep(strategy: StrategyConfig, seed: u64) -> Result<BurstReport, ScenarioError> {
    let p = strategy.period_frames() as u64;
    let period_us = 1_000;
    let mut outcomes = Vec::with_capacity((p * p) as usize);
    for start in p + 1..=2 * p {
        for len in 1..=p {
            let scenario = Scenario {
                seed,
                frame_count: 5 * p,
                strategy,
                timing: Timing::Periodic { period_us },
                receiver: ReceiverSettings::default(),
                recovery: RecoverySettings { latency_us: period_us },
                loss: LossModel::Schedule { drops: (start..start + len).collect() },
                adversary: None,
            };
            let metrics = run(&scenario)?;
            outcomes.push(BurstOutcome { start, len, survived: metrics.recoveries == 0 });
        }
    }
    Ok(BurstReport { period_frames: p, outcomes })
}
