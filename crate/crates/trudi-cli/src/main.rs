//! Command-line front end: run scenarios and sweeps, drive attack
//! campaigns, evaluate the closed-form calculators, and emit the frozen
//! codec test vectors. Results go to standard output as JSON by default;
//! `--format csv` turns tabular results into CSV, `--output` redirects
//! either to a file.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use num_traits::ToPrimitive;
use serde_json::{json, Value};
use trudi::adversary::{predicted_mtbf_years, run_attack_campaign};
use trudi::channel::{burst_sweep, max_tolerated_burst, run, Scenario};
use trudi::keychain::{HashConfig, Key};
use trudi::transmitter::{JKeys, Strategy, StrategyConfig};
use trudi::wire::{encode_frame, KeyEntry, LinkInfo, ScKey, UFrame};

/// The codec vectors live with the library's tests; the binary carries a
/// copy so `vectors` works without the source tree.
const GOLDEN_VECTORS: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../trudi/tests/data/golden_frames.json"));

#[derive(Parser)]
#[command(name = "trudi", version, about = "Multicast origin-authentication simulator")]
struct Cli {
    /// Override the RNG seed (for `simulate`, the scenario file's seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write results to this file instead of standard output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file and report the run's tallies.
    Simulate {
        /// Scenario description, TOML.
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Drop every contiguous burst placement against a strategy and report
    /// which ones the receiver rides out without re-initialization.
    Sweep {
        /// Scenario file naming the strategy to sweep (loss and adversary
        /// settings in it are ignored).
        #[arg(long)]
        scenario: PathBuf,
        /// Only report bursts up to this length.
        #[arg(long)]
        horizon: Option<u64>,
    },
    /// Brute-force campaign against independent chains: repeated bounded
    /// preimage searches, tallied against the closed-form prediction.
    Attack {
        /// Independent chain lifetimes to attack.
        #[arg(long)]
        lifetimes: u64,
        /// Hash evaluations the attacker can afford per lifetime.
        #[arg(long)]
        budget: u64,
        /// Chain prefix length the attacker wants (keys per success).
        #[arg(long, default_value_t = 1)]
        depth: usize,
        #[arg(long, default_value_t = 128)]
        key_bits: u16,
    },
    /// Closed-form key-transport efficiency for one strategy.
    Efficiency {
        #[arg(long, value_enum)]
        strategy: StrategyKind,
        /// Chain length (basic, overlapped, dual-sparse).
        #[arg(long)]
        n: Option<u16>,
        /// Junction repetitions (overlapped).
        #[arg(long)]
        q: Option<u16>,
        /// Per-chain half period (dual-full).
        #[arg(long)]
        half_len: Option<u16>,
        /// Junction frame size for dual-full: two or three keys.
        #[arg(long, value_enum)]
        j_keys: Option<JKeysArg>,
        /// Cross-chain disclosure stride (dual-sparse).
        #[arg(long)]
        m: Option<u16>,
    },
    /// Expected years between brute-force breaks at a sustained hash rate.
    Mtbf {
        /// Attacker hash evaluations per second.
        #[arg(long)]
        rate: f64,
        /// Chain key width in bits.
        #[arg(long)]
        bits: u16,
    },
    /// Emit the frozen frame-encoding test vectors, re-encoded by this
    /// binary to prove the codec still reproduces them.
    Vectors,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyKind {
    Basic,
    Overlapped,
    DualFull,
    DualSparse,
}

#[derive(Clone, Copy, ValueEnum)]
enum JKeysArg {
    Two,
    Three,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("TRUDI_LOG")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let rendered = match &cli.command {
        Command::Simulate { scenario } => simulate(scenario, cli.seed, cli.format)?,
        Command::Sweep { scenario, horizon } => sweep(scenario, *horizon, cli.seed, cli.format)?,
        Command::Attack { lifetimes, budget, depth, key_bits } => {
            attack(*lifetimes, *budget, *depth, *key_bits, cli.seed, cli.format)?
        }
        Command::Efficiency { strategy, n, q, half_len, j_keys, m } => {
            efficiency(*strategy, *n, *q, *half_len, *j_keys, *m, cli.format)?
        }
        Command::Mtbf { rate, bits } => mtbf(*rate, *bits, cli.format)?,
        Command::Vectors => vectors(cli.format)?,
    };
    emit(&rendered, cli.output.as_deref())
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text)
            .with_context(|| format!("writing results to {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON rendering is infallible");
    s.push('\n');
    s
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<Scenario> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading scenario {}", path.display()))?;
    let mut scenario = Scenario::from_toml_str(&text)
        .with_context(|| format!("parsing scenario {}", path.display()))?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

fn simulate(path: &Path, seed: Option<u64>, format: Format) -> Result<String> {
    let scenario = load_scenario(path, seed)?;
    let metrics = run(&scenario)?;
    let eta = metrics.measured_eta_kt();
    let mut value = serde_json::to_value(&metrics).expect("metrics serialize");
    let obj = value.as_object_mut().expect("metrics serialize to an object");
    obj.insert(
        "measured_eta_kt".into(),
        json!(eta.to_f64().expect("ratio of u64 fits f64")),
    );
    obj.insert("measured_eta_kt_exact".into(), json!(eta.to_string()));
    Ok(match format {
        Format::Json => pretty(&value),
        Format::Csv => csv_from_object(&value),
    })
}

fn sweep(path: &Path, horizon: Option<u64>, seed: Option<u64>, format: Format) -> Result<String> {
    let scenario = load_scenario(path, None)?;
    let report = burst_sweep(scenario.strategy, seed.unwrap_or(scenario.seed))?;
    let keep = horizon.unwrap_or(u64::MAX);
    match format {
        Format::Json => {
            let outcomes: Vec<Value> = report
                .outcomes
                .iter()
                .filter(|o| o.len <= keep)
                .map(|o| json!({ "start": o.start, "len": o.len, "survived": o.survived }))
                .collect();
            Ok(pretty(&json!({
                "period_frames": report.period_frames,
                "advertised_tolerance": max_tolerated_burst(&scenario.strategy),
                "guaranteed_tolerance": report.guaranteed_tolerance(),
                "best_case_tolerance": report.best_case_tolerance(),
                "outcomes": outcomes,
            })))
        }
        Format::Csv => {
            let mut out = String::from("start,len,survived\n");
            for o in report.outcomes.iter().filter(|o| o.len <= keep) {
                out.push_str(&format!("{},{},{}\n", o.start, o.len, o.survived));
            }
            Ok(out)
        }
    }
}

fn attack(
    lifetimes: u64,
    budget: u64,
    depth: usize,
    key_bits: u16,
    seed: Option<u64>,
    format: Format,
) -> Result<String> {
    let cfg = HashConfig { key_bits, ..HashConfig::default() };
    cfg.validate()?;
    let stats = run_attack_campaign(lifetimes, budget, depth, &cfg, seed.unwrap_or(0));
    let value = serde_json::to_value(&stats).expect("attack stats serialize");
    Ok(match format {
        Format::Json => pretty(&value),
        Format::Csv => csv_from_object(&value),
    })
}

fn efficiency(
    kind: StrategyKind,
    n: Option<u16>,
    q: Option<u16>,
    half_len: Option<u16>,
    j_keys: Option<JKeysArg>,
    m: Option<u16>,
    format: Format,
) -> Result<String> {
    let strategy = match kind {
        StrategyKind::Basic => Strategy::Basic { n: require(n, "--n")? },
        StrategyKind::Overlapped => {
            Strategy::Overlapped { n: require(n, "--n")?, q: require(q, "--q")? }
        }
        StrategyKind::DualFull => Strategy::DualFull {
            half_len: require(half_len, "--half-len")?,
            j_keys: match j_keys.unwrap_or(JKeysArg::Three) {
                JKeysArg::Two => JKeys::Two,
                JKeysArg::Three => JKeys::Three,
            },
        },
        StrategyKind::DualSparse => {
            Strategy::DualSparse { n: require(n, "--n")?, m: require(m, "--m")? }
        }
    };
    let cfg = StrategyConfig { strategy, hash: HashConfig::default() };
    cfg.validate()?;
    let eta = cfg.theoretical_efficiency();
    let value = json!({
        "strategy": serde_json::to_value(strategy).expect("strategy serializes"),
        "eta_kt": eta.to_f64().expect("ratio of u64 fits f64"),
        "eta_kt_exact": eta.to_string(),
        "period_frames": cfg.period_frames(),
        "chain_len": cfg.chain_len(),
        "advertised_burst_tolerance": max_tolerated_burst(&cfg),
    });
    Ok(match format {
        Format::Json => pretty(&value),
        Format::Csv => csv_from_object(&value),
    })
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.with_context(|| format!("{flag} is required for this strategy"))
}

fn mtbf(rate: f64, bits: u16, format: Format) -> Result<String> {
    if !rate.is_finite() || rate <= 0.0 {
        bail!("--rate must be a positive finite hash rate, got {rate}");
    }
    HashConfig { key_bits: bits, ..HashConfig::default() }.validate()?;
    let value = json!({
        "hash_rate": rate,
        "key_bits": bits,
        "key_space": format!("2^{bits}"),
        "mtbf_years": predicted_mtbf_years(rate, bits),
    });
    Ok(match format {
        Format::Json => pretty(&value),
        Format::Csv => csv_from_object(&value),
    })
}

/// Re-encodes every frozen vector with the codec compiled into this binary
/// and emits them. A mismatch against the stored bytes means the codec
/// drifted, which is exactly what downstream implementers must not build
/// against, so it fails the command.
fn vectors(format: Format) -> Result<String> {
    if format == Format::Csv {
        bail!("vectors are nested structures; only --format json is supported");
    }
    let golden: Value = serde_json::from_str(GOLDEN_VECTORS).expect("embedded vectors parse");
    let mut out = Vec::new();
    for vector in golden.as_array().expect("embedded vectors are a list") {
        let name = vector["name"].as_str().expect("vector name");
        let sc_key = ScKey::new(
            hex_field(vector, "sc_key_hex")?
                .try_into()
                .ok()
                .context("sc_key_hex must be 32 bytes")?,
        );
        let frame = parse_frame(&vector["frame"])?;
        let encoded = encode_frame(&frame, &sc_key)
            .with_context(|| format!("encoding vector {name}"))?;
        let expected = vector["encoded_hex"].as_str().expect("stored encoding");
        if hex::encode(&encoded) != expected {
            bail!("codec drift: vector {name} no longer encodes to its frozen bytes");
        }
        out.push(vector.clone());
    }
    Ok(pretty(&Value::Array(out)))
}

fn parse_frame(v: &Value) -> Result<UFrame> {
    let entries = v["entries"]
        .as_array()
        .context("frame entries must be a list")?
        .iter()
        .map(|e| {
            if e.is_null() {
                return Ok(None);
            }
            let key_bytes = hex_field(e, "key_hex")?;
            Ok(Some(KeyEntry {
                omega: e["omega"].as_bool().context("entry omega")?,
                c: e["c"].as_u64().context("entry c")? as u8,
                i: e["i"].as_u64().context("entry i")? as u16,
                key: Key::from_slice(&key_bytes)?,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UFrame {
        link: LinkInfo {
            sc_id: v["sc_id"].as_u64().context("frame sc_id")? as u16,
            src_id: v["src_id"].as_u64().context("frame src_id")? as u16,
        },
        freshness: v["freshness"].as_u64().context("frame freshness")?,
        entries,
        message: hex_field(v, "message_hex")?,
    })
}

fn hex_field(v: &Value, field: &str) -> Result<Vec<u8>> {
    hex::decode(v[field].as_str().with_context(|| format!("missing {field}"))?)
        .with_context(|| format!("{field} is not valid hex"))
}

/// One-row CSV for flat result objects: header line of field names, then
/// the values.
fn csv_from_object(value: &Value) -> String {
    let obj = value.as_object().expect("tabular results are flat objects");
    let header: Vec<&str> = obj.keys().map(String::as_str).collect();
    let row: Vec<String> = obj
        .values()
        .map(|v| match v {
            Value::String(s) => csv_quote(s),
            Value::Null => String::new(),
            other => csv_quote(&other.to_string()),
        })
        .collect();
    format!("{}\n{}\n", header.join(","), row.join(","))
}

fn csv_quote(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}
