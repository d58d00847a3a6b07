//! Man-in-the-middle harness. Intercepts public-key messages on the bus and
//! either tampers with part of the public value or replaces it with a
//! valid key of the adversary's own.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::bus::{Bus, BusConfig, InterceptorHandle, Topic};
use crate::error::{Error, Result};
use crate::keyexchange::generate_keypair;
use crate::node::session::{NodePair, SessionSeeds};
use crate::node::wire::{decode_key_topic, KeyTopicMessage, PublicKeyMessage};
use crate::node::{EventKind, LogEvent, NodeConfig, ParamsMode};

pub const DEFAULT_TAMPER_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackMode {
    Tamper,
    Replace,
    /// Fair coin per intercepted message.
    Random,
}

impl FromStr for AttackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tamper" => Ok(AttackMode::Tamper),
            "replace" => Ok(AttackMode::Replace),
            "random" => Ok(AttackMode::Random),
            other => Err(Error::Parameter(format!("unknown attack mode {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttackKind {
    Tamper,
    Replace,
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackKind::Tamper => "tamper",
            AttackKind::Replace => "replace",
        })
    }
}

#[derive(Debug, Clone)]
pub struct AttackPlan {
    pub mode: AttackMode,
    /// Portion of key bytes altered by a tamper, in `(0, 1]`.
    pub tamper_fraction: f64,
    pub seed: u64,
    pub target_topics: Vec<Topic>,
}

impl AttackPlan {
    pub fn new(mode: AttackMode, seed: u64, target_topics: Vec<Topic>) -> Self {
        AttackPlan { mode, tamper_fraction: DEFAULT_TAMPER_FRACTION, seed, target_topics }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tamper_fraction > 0.0 && self.tamper_fraction <= 1.0) {
            return Err(Error::Parameter(format!("tamper fraction {} outside (0, 1]", self.tamper_fraction)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackRecord {
    pub trial_id: u64,
    pub chosen_attack: AttackKind,
    pub target_topic: Topic,
    pub original_digest: [u8; 32],
    pub mutated_digest: [u8; 32],
}

impl AttackRecord {
    pub const CSV_HEADER: &'static str = "trial_id,chosen_attack,target_topic,original_digest_hex,mutated_digest_hex";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.trial_id,
            self.chosen_attack,
            self.target_topic,
            hex::encode(self.original_digest),
            hex::encode(self.mutated_digest)
        )
    }
}

/// Header line followed by one row per record.
pub fn write_records_csv(records: &[AttackRecord], out: &mut dyn Write) -> Result<()> {
    writeln!(out, "{}", AttackRecord::CSV_HEADER)?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    out.flush()?;
    Ok(())
}

/// XOR `max(1, floor(fraction * len))` distinct byte positions with nonzero
/// random values.
pub fn tamper_key<R: Rng + ?Sized>(key_bytes: &[u8], fraction: f64, rng: &mut R) -> Result<Vec<u8>> {
    if key_bytes.is_empty() {
        return Err(Error::Parameter("cannot tamper with an empty key".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Parameter(format!("tamper fraction {fraction} outside (0, 1]")));
    }
    let count = ((fraction * key_bytes.len() as f64).floor() as usize).clamp(1, key_bytes.len());
    let mut out = key_bytes.to_vec();
    for pos in index::sample(rng, key_bytes.len(), count) {
        out[pos] ^= rng.gen_range(1..=255u8);
    }
    Ok(out)
}

/// Swap the public value in a public-key message for a fresh valid key in
/// the same group. Frames that do not parse are tampered with as a whole.
pub fn replace_key<R: Rng + ?Sized>(intercepted_frame: &[u8], rng: &mut R) -> Result<Vec<u8>> {
    let Some(msg) = parse_public_key(intercepted_frame) else {
        return tamper_key(intercepted_frame, DEFAULT_TAMPER_FRACTION, rng);
    };
    let Ok(params) = msg.params() else {
        return tamper_key(intercepted_frame, DEFAULT_TAMPER_FRACTION, rng);
    };
    loop {
        let forged = generate_keypair(&params, rng)?;
        if forged.public() != &msg.public {
            return Ok(PublicKeyMessage { public: forged.public().clone(), ..msg }.encode());
        }
    }
}

fn parse_public_key(frame: &[u8]) -> Option<PublicKeyMessage> {
    match decode_key_topic(frame) {
        Ok(KeyTopicMessage::PublicKey(m)) => Some(m),
        _ => None,
    }
}

/// Tamper with the public-value bytes of a key message, or with the whole
/// frame when it is not one.
fn tamper_frame<R: Rng + ?Sized>(frame: &[u8], fraction: f64, rng: &mut R) -> Result<Vec<u8>> {
    match parse_public_key(frame) {
        Some(msg) => {
            let altered = tamper_key(&msg.public_bytes(), fraction, rng)?;
            Ok(msg.with_public_bytes(&altered).encode())
        }
        None => tamper_key(frame, fraction, rng),
    }
}

pub fn choose_attack<R: Rng + ?Sized>(plan: &AttackPlan, rng: &mut R) -> AttackKind {
    match plan.mode {
        AttackMode::Tamper => AttackKind::Tamper,
        AttackMode::Replace => AttackKind::Replace,
        AttackMode::Random => {
            if rng.gen_bool(0.5) {
                AttackKind::Tamper
            } else {
                AttackKind::Replace
            }
        }
    }
}

fn is_confirmation(frame: &[u8]) -> bool {
    matches!(decode_key_topic(frame), Ok(KeyTopicMessage::Confirm(_)))
}

/// Interceptors installed on the plan's target topics. Records accumulate
/// in interception order; dropping the session detaches it.
pub struct AttackSession {
    handles: Vec<InterceptorHandle>,
    records: Arc<Mutex<Vec<AttackRecord>>>,
}

impl AttackSession {
    /// Each target topic gets its own random stream derived from
    /// `plan.seed`, so decisions do not depend on cross-topic timing.
    pub fn attach(plan: &AttackPlan, bus: &Bus, trial_id: u64) -> Result<Self> {
        plan.validate()?;
        let records = Arc::new(Mutex::new(Vec::new()));
        let mut handles = Vec::with_capacity(plan.target_topics.len());
        for (i, topic) in plan.target_topics.iter().enumerate() {
            let mut rng = ChaCha20Rng::seed_from_u64(plan.seed);
            rng.set_stream(i as u64 + 1);
            let plan = plan.clone();
            let sink = Arc::clone(&records);
            let interceptor = Box::new(move |topic: &Topic, bytes: &[u8]| -> Vec<u8> {
                if is_confirmation(bytes) {
                    return bytes.to_vec();
                }
                let kind = choose_attack(&plan, &mut rng);
                let mutated = match kind {
                    AttackKind::Tamper => tamper_frame(bytes, plan.tamper_fraction, &mut rng),
                    AttackKind::Replace => replace_key(bytes, &mut rng),
                };
                let Ok(mutated) = mutated else {
                    // only an empty frame gets here
                    return bytes.to_vec();
                };
                sink.lock().unwrap_or_else(|e| e.into_inner()).push(AttackRecord {
                    trial_id,
                    chosen_attack: kind,
                    target_topic: topic.clone(),
                    original_digest: Sha256::digest(bytes).into(),
                    mutated_digest: Sha256::digest(&mutated).into(),
                });
                mutated
            });
            // earlier handles drop on error, detaching them
            handles.push(bus.install_interceptor(topic, interceptor)?);
        }
        Ok(AttackSession { handles, records })
    }

    pub fn records(&self) -> Vec<AttackRecord> {
        self.records.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Remove every interceptor and return the records collected so far.
    pub fn detach(self) -> Vec<AttackRecord> {
        let records = self.records();
        for h in self.handles {
            h.remove();
        }
        records
    }
}

/// Which drone(s) receive altered keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Victims {
    Drone0,
    Drone1,
    Both,
}

impl Victims {
    pub fn ids(self) -> &'static [&'static str] {
        match self {
            Victims::Drone0 => &["drone0"],
            Victims::Drone1 => &["drone1"],
            Victims::Both => &["drone0", "drone1"],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Victims::Drone0 => "drone0",
            Victims::Drone1 => "drone1",
            Victims::Both => "both",
        }
    }
}

impl FromStr for Victims {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "drone0" => Ok(Victims::Drone0),
            "drone1" => Ok(Victims::Drone1),
            "both" => Ok(Victims::Both),
            other => Err(Error::Parameter(format!("unknown target {other}"))),
        }
    }
}

fn peer_of(id: &str) -> &'static str {
    if id == "drone0" {
        "drone1"
    } else {
        "drone0"
    }
}

/// Settings shared by every trial of an attack campaign.
#[derive(Debug, Clone)]
pub struct AttackTrialConfig {
    pub mode: AttackMode,
    pub tamper_fraction: f64,
    pub victims: Option<Victims>,
    /// Also attack the victims' authenticated-data inboxes.
    pub attack_data: bool,
    pub dh_bits: u32,
    pub hmac_bits: u32,
    pub params_mode: ParamsMode,
    pub payload: Vec<u8>,
}

impl Default for AttackTrialConfig {
    fn default() -> Self {
        AttackTrialConfig {
            mode: AttackMode::Random,
            tamper_fraction: DEFAULT_TAMPER_FRACTION,
            victims: Some(Victims::Both),
            attack_data: false,
            dh_bits: 2048,
            hmac_bits: 512,
            params_mode: ParamsMode::WellKnown(crate::keyexchange::GroupId::Modp2048),
            payload: b"telemetry".to_vec(),
        }
    }
}

impl AttackTrialConfig {
    fn target_topics(&self) -> Result<Vec<Topic>> {
        let mut topics = Vec::new();
        for victim in self.victims.map_or(&[][..], Victims::ids) {
            topics.push(Topic::public_key(peer_of(victim))?);
            if self.attack_data {
                topics.push(Topic::authenticated_data(victim)?);
            }
        }
        Ok(topics)
    }
}

/// Everything observed in one seeded trial.
#[derive(Debug, Clone)]
pub struct AttackTrial {
    pub trial_id: u64,
    pub victims: Option<Victims>,
    pub records: Vec<AttackRecord>,
    pub logs: BTreeMap<String, Vec<LogEvent>>,
    pub established: bool,
    pub keys_agree: bool,
    pub round_trip_ok: bool,
}

impl AttackTrial {
    /// First detection event logged by `node_id`.
    pub fn detection(&self, node_id: &str) -> Option<EventKind> {
        self.logs.get(node_id)?.iter().map(|e| e.event).find(|k| k.is_detection())
    }

    /// Drones whose incoming traffic was actually altered.
    pub fn affected(&self) -> Vec<&'static str> {
        ["drone0", "drone1"]
            .into_iter()
            .filter(|id| {
                self.records.iter().any(|r| {
                    r.target_topic.as_str() == format!("/{}/dh_public_key", peer_of(id))
                        || r.target_topic.as_str() == format!("/{id}/authenticated_data")
                })
            })
            .collect()
    }

    /// Every affected drone logged a detection event.
    pub fn detected(&self) -> bool {
        self.affected().iter().all(|id| self.detection(id).is_some())
    }

    /// A node holding a session key that differs from its peer's without
    /// having logged a detection. Must never happen.
    pub fn silent_mismatch(&self) -> bool {
        self.established && !self.keys_agree
    }

    pub fn report_row(&self) -> ReportRow {
        let attacks = ["drone0", "drone1"]
            .into_iter()
            .filter_map(|victim| {
                let topic = format!("/{}/dh_public_key", peer_of(victim));
                let kinds: Vec<String> = self
                    .records
                    .iter()
                    .filter(|r| r.target_topic.as_str() == topic)
                    .map(|r| r.chosen_attack.to_string())
                    .collect();
                (!kinds.is_empty()).then(|| format!("{victim}={}", kinds.join("+")))
            })
            .collect::<Vec<_>>();
        let events = ["drone0", "drone1"]
            .into_iter()
            .map(|id| format!("{id}={}", self.detection(id).map_or("none", EventKind::as_str)))
            .collect::<Vec<_>>();
        ReportRow {
            trial_id: self.trial_id,
            chosen_attack: if attacks.is_empty() { "none".into() } else { attacks.join(";") },
            target: self.victims.map_or("none", Victims::label).to_owned(),
            detected_by_drone0: self.detection("drone0").is_some(),
            detected_by_drone1: self.detection("drone1").is_some(),
            detection_event: events.join(";"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ReportRow {
    pub trial_id: u64,
    pub chosen_attack: String,
    pub target: String,
    pub detected_by_drone0: bool,
    pub detected_by_drone1: bool,
    pub detection_event: String,
}

/// Seed for trial `trial_id` of a campaign started with `seed`.
pub fn trial_seed(seed: u64, trial_id: u64) -> u64 {
    let digest = Sha256::new().chain_update(seed.to_be_bytes()).chain_update(trial_id.to_be_bytes()).finalize();
    u64::from_be_bytes(digest[..8].try_into().unwrap())
}

/// One complete drone0/drone1 session on a fresh deterministic bus, with
/// the adversary attached when `config.victims` is set.
pub fn run_trial(config: &AttackTrialConfig, trial_id: u64, seed: u64) -> Result<AttackTrial> {
    let seed = trial_seed(seed, trial_id);
    let seeds = SessionSeeds::from_seed(seed);
    let bus = Bus::new(BusConfig::deterministic(seeds.scheduler));
    let mut pair = NodePair::new(
        &bus,
        NodeConfig::drone0(config.dh_bits, config.hmac_bits, config.params_mode),
        NodeConfig::drone1(config.dh_bits, config.hmac_bits, config.params_mode),
        seeds,
    )?;
    let plan = AttackPlan {
        mode: config.mode,
        tamper_fraction: config.tamper_fraction,
        seed: seed.rotate_left(17),
        target_topics: config.target_topics()?,
    };
    let session = AttackSession::attach(&plan, &bus, trial_id)?;

    pair.handshake(&bus);
    let established = pair.established();
    let keys_agree = pair.keys_agree();
    let mut round_trip_ok = false;
    if established {
        if let Ok((fwd, back)) = pair.round_trip(&config.payload, Duration::from_millis(200)) {
            round_trip_ok = fwd.verdict.is_accepted() && back.verdict.is_accepted();
        }
    }
    let records = session.detach();

    let logs = [&pair.initiator, &pair.responder]
        .into_iter()
        .map(|n| (n.id().to_owned(), n.log().events().to_vec()))
        .collect();
    Ok(AttackTrial { trial_id, victims: config.victims, records, logs, established, keys_agree, round_trip_ok })
}
