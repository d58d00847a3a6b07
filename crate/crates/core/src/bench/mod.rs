//! Key-size timing sweep: every DH size against every HMAC size, timed by
//! phase, written to CSV as it runs.

mod plot;

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::{Duration, Instant};

pub use plot::{emit_histogram, emit_scatter};

use crate::adversary::trial_seed;
use crate::bus::{Bus, BusConfig};
use crate::error::{Error, Result};
use crate::keyexchange::{SUPPORTED_DH_BITS, SUPPORTED_HMAC_BITS};
use crate::node::session::{NodePair, SessionSeeds};
use crate::node::{FailureReason, NodeConfig, Phase};

pub const CSV_HEADER: [&str; 9] = [
    "trial_id",
    "dh_bits",
    "hmac_bits",
    "params_mode",
    "t_param_gen",
    "t_handshake",
    "t_auth_roundtrip",
    "t_total",
    "outcome",
];

/// DH sizes run by default; 4096 needs an explicit opt-in in generate mode.
pub const DEFAULT_DH_BITS: [u32; 4] = [256, 512, 1024, 2048];
pub const DEFAULT_HMAC_BITS: [u32; 3] = SUPPORTED_HMAC_BITS;

const ROUND_TRIP_PAYLOAD: &[u8] = b"bench:telemetry";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchMode {
    Generate,
    WellKnown,
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchMode::Generate => "generate",
            BenchMode::WellKnown => "well_known",
        })
    }
}

impl FromStr for BenchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generate" => Ok(BenchMode::Generate),
            "well_known" | "well-known" => Ok(BenchMode::WellKnown),
            other => Err(Error::Parameter(format!("unknown params mode {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Timeout,
    Failed,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Ok => "ok",
            Outcome::Timeout => "timeout",
            Outcome::Failed => "failed",
        })
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(Outcome::Ok),
            "timeout" => Ok(Outcome::Timeout),
            "failed" => Ok(Outcome::Failed),
            other => Err(Error::Parameter(format!("unknown outcome {other}"))),
        }
    }
}

/// One timed session. Times are seconds, rounded to the microsecond.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub dh_bits: u32,
    pub hmac_bits: u32,
    pub params_mode: BenchMode,
    pub t_param_gen: f64,
    pub t_handshake: f64,
    pub t_auth_roundtrip: f64,
    pub t_total: f64,
    pub outcome: Outcome,
}

fn secs(d: Duration) -> f64 {
    (d.as_secs_f64() * 1e6).round() / 1e6
}

impl TrialRecord {
    fn fields(&self) -> [String; 9] {
        [
            self.trial_id.to_string(),
            self.dh_bits.to_string(),
            self.hmac_bits.to_string(),
            self.params_mode.to_string(),
            format!("{:.6}", self.t_param_gen),
            format!("{:.6}", self.t_handshake),
            format!("{:.6}", self.t_auth_roundtrip),
            format!("{:.6}", self.t_total),
            self.outcome.to_string(),
        ]
    }

    fn from_fields(row: &csv::StringRecord) -> Result<Self> {
        if row.len() != CSV_HEADER.len() {
            return Err(Error::Parameter(format!("expected 9 CSV fields, found {}", row.len())));
        }
        let num = |i: usize| -> Result<f64> {
            row[i].parse::<f64>().map_err(|e| Error::Parameter(format!("{}: {e}", CSV_HEADER[i])))
        };
        let int = |i: usize| -> Result<u64> {
            row[i].parse::<u64>().map_err(|e| Error::Parameter(format!("{}: {e}", CSV_HEADER[i])))
        };
        Ok(TrialRecord {
            trial_id: int(0)?,
            dh_bits: int(1)? as u32,
            hmac_bits: int(2)? as u32,
            params_mode: row[3].parse()?,
            t_param_gen: num(4)?,
            t_handshake: num(5)?,
            t_auth_roundtrip: num(6)?,
            t_total: num(7)?,
            outcome: row[8].parse()?,
        })
    }

    pub fn is_ok(&self) -> bool {
        self.outcome == Outcome::Ok
    }
}

/// Per-wait handshake timeout used by [`run_trial`].
pub fn default_timeout(mode: BenchMode) -> Duration {
    match mode {
        BenchMode::WellKnown => crate::bus::DEFAULT_TIMEOUT,
        // the peer may still be searching for its safe prime
        BenchMode::Generate => Duration::from_secs(3600),
    }
}

pub fn run_trial(dh_bits: u32, hmac_bits: u32, params_mode: BenchMode, seed: u64) -> Result<TrialRecord> {
    run_trial_with_timeout(dh_bits, hmac_bits, params_mode, seed, 0, default_timeout(params_mode))
}

/// Full two-node session on a fresh free-running bus, nodes on their own
/// threads, followed by one authenticated round trip.
pub fn run_trial_with_timeout(
    dh_bits: u32,
    hmac_bits: u32,
    params_mode: BenchMode,
    seed: u64,
    trial_id: u64,
    timeout: Duration,
) -> Result<TrialRecord> {
    let node_mode = NodeConfig::mode_for(dh_bits, params_mode == BenchMode::WellKnown)?;
    let mut a = NodeConfig::drone0(dh_bits, hmac_bits, node_mode);
    let mut b = NodeConfig::drone1(dh_bits, hmac_bits, node_mode);
    a.timeout = timeout;
    b.timeout = timeout;
    a.validate()?;
    b.validate()?;

    let bus = Bus::new(BusConfig { timeout, ..Default::default() });
    let pair = NodePair::new(&bus, a, b, SessionSeeds::from_seed(seed))?;

    let started = Instant::now();
    let mut pair = pair.handshake_threaded();
    let handshake_done = started.elapsed();
    let param_gen = pair.initiator.timings().param_gen.max(pair.responder.timings().param_gen);

    let mut auth = Duration::ZERO;
    let outcome = if pair.established() && pair.keys_agree() {
        let t = Instant::now();
        let result = pair.round_trip(ROUND_TRIP_PAYLOAD, timeout);
        auth = t.elapsed();
        match result {
            Ok((fwd, back)) if fwd.verdict.is_accepted() && back.verdict.is_accepted() => Outcome::Ok,
            Ok(_) => Outcome::Failed,
            Err(Error::Timeout(_)) => Outcome::Timeout,
            Err(_) => Outcome::Failed,
        }
    } else {
        let timed_out = [&pair.initiator, &pair.responder]
            .iter()
            .any(|n| n.phase() == Phase::Failed && matches!(n.state().failure, Some(FailureReason::Timeout(_))));
        if timed_out {
            Outcome::Timeout
        } else {
            Outcome::Failed
        }
    };
    let total = started.elapsed();

    let t_param_gen = secs(param_gen);
    let t_handshake = secs(handshake_done.saturating_sub(param_gen));
    let t_auth_roundtrip = secs(auth);
    // keep t_total >= t_param_gen + t_handshake after rounding
    let t_total = secs(total).max(secs(Duration::from_secs_f64(t_param_gen + t_handshake)));
    Ok(TrialRecord {
        trial_id,
        dh_bits,
        hmac_bits,
        params_mode,
        t_param_gen,
        t_handshake,
        t_auth_roundtrip,
        t_total,
        outcome,
    })
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub dh_bits: Vec<u32>,
    pub hmac_bits: Vec<u32>,
    pub repeats: u32,
    pub params_mode: BenchMode,
    pub seed: u64,
    /// Permit 4096-bit groups in generate mode.
    pub allow_4096: bool,
    pub timeout: Option<Duration>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            dh_bits: DEFAULT_DH_BITS.to_vec(),
            hmac_bits: DEFAULT_HMAC_BITS.to_vec(),
            repeats: 1,
            params_mode: BenchMode::Generate,
            seed: 0,
            allow_4096: false,
            timeout: None,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dh_bits.is_empty() || self.hmac_bits.is_empty() {
            return Err(Error::Parameter("DH and HMAC size lists must be non-empty".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Parameter("repeats must be at least 1".into()));
        }
        for bits in &self.dh_bits {
            if !SUPPORTED_DH_BITS.contains(bits) {
                return Err(Error::Parameter(format!("unsupported DH size {bits}")));
            }
        }
        for bits in &self.hmac_bits {
            if !SUPPORTED_HMAC_BITS.contains(bits) {
                return Err(Error::Parameter(format!("unsupported HMAC key size {bits}")));
            }
        }
        if self.params_mode == BenchMode::Generate && self.dh_bits.contains(&4096) && !self.allow_4096 {
            return Err(Error::Parameter(
                "4096-bit parameter generation can take well over 10 minutes; enable it explicitly".into(),
            ));
        }
        Ok(())
    }

    pub fn trial_count(&self) -> usize {
        self.dh_bits.len() * self.hmac_bits.len() * self.repeats as usize
    }
}

/// Run the sweep in dh-outer, hmac-inner, repeat-innermost order, writing
/// and flushing one CSV row per finished trial.
pub fn sweep(config: &SweepConfig, out: &mut dyn Write) -> Result<Vec<TrialRecord>> {
    sweep_with_progress(config, out, &mut |_| {})
}

pub fn sweep_with_progress(
    config: &SweepConfig,
    out: &mut dyn Write,
    on_trial: &mut dyn FnMut(&TrialRecord),
) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    let timeout = config.timeout.unwrap_or_else(|| default_timeout(config.params_mode));
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_HEADER)?;
    writer.flush()?;
    let mut records = Vec::with_capacity(config.trial_count());
    let mut trial_id = 0u64;
    for &dh in &config.dh_bits {
        for &hmac in &config.hmac_bits {
            for _ in 0..config.repeats {
                let rec = run_trial_with_timeout(
                    dh,
                    hmac,
                    config.params_mode,
                    trial_seed(config.seed, trial_id),
                    trial_id,
                    timeout,
                )?;
                writer.write_record(rec.fields())?;
                writer.flush()?;
                on_trial(&rec);
                records.push(rec);
                trial_id += 1;
            }
        }
    }
    Ok(records)
}

pub fn write_csv(records: &[TrialRecord], out: &mut dyn Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_HEADER)?;
    for r in records {
        writer.write_record(r.fields())?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv(input: &mut dyn Read) -> Result<Vec<TrialRecord>> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parameter("unexpected CSV header".into()));
    }
    reader.records().map(|row| TrialRecord::from_fields(&row?)).collect()
}

/// Median of `values`; `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 0 { (v[mid - 1] + v[mid]) / 2.0 } else { v[mid] })
}
