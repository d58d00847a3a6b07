//! Drone endpoint: Diffie-Hellman handshake, key confirmation and
//! authenticated data exchange over the bus.
//!
//! Handshake order for each node:
//!
//! 1. obtain group parameters (generate or fixed) -> `ParamsReady`
//! 2. generate a key pair and publish it on `/<own>/dh_public_key` -> `PublishedKey`
//! 3. receive and validate the peer key from `/<peer>/dh_public_key` -> `PeerKeyReceived`
//! 4. derive the session key, publish `HMAC(key, "KEYCONF" || own_id)` on the own key topic
//! 5. verify the peer confirmation -> `SessionEstablished` or `ConfirmFailed`
//!
//! A responder in generate mode generates its own group, then adopts the
//! initiator's group from the first public-key message before step 2.

mod log;
pub mod session;
pub mod wire;

use std::fmt;
use std::time::{Duration, Instant};

use rand_chacha::ChaCha20Rng;

pub use self::log::{EventKind, EventLog, LogEvent};
use self::wire::{decode_key_topic, ConfirmMessage, ConfirmStatus, KeyTopicMessage, PublicKeyMessage};
use crate::authchannel::{self, Verdict};
use crate::bus::{Bus, Envelope, Subscription, Topic};
use crate::error::{Error, Result};
use crate::keyexchange::{
    compute_shared_secret, derive_session_key, generate_keypair, generate_params, validate_public_key,
    well_known_params, DhParams, GroupId, KeyPair, SessionKey, SUPPORTED_DH_BITS, SUPPORTED_HMAC_BITS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    InitiatorSender,
    ResponderReceiver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamsMode {
    Generate,
    WellKnown(GroupId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailurePolicy {
    AbortSession,
    LogAndContinue,
}

#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub node_id: String,
    pub peer_id: String,
    pub role: Role,
    pub dh_bits: u32,
    pub hmac_bits: u32,
    pub params_mode: ParamsMode,
    /// Generator used in generate mode.
    pub generator: u32,
    /// Applied to rejected data frames. Key-confirmation failures always abort.
    pub failure_policy: FailurePolicy,
    pub timeout: Duration,
}

impl NodeConfig {
    fn base(node_id: &str, peer_id: &str, role: Role, dh_bits: u32, hmac_bits: u32, params_mode: ParamsMode) -> Self {
        NodeConfig {
            node_id: node_id.to_owned(),
            peer_id: peer_id.to_owned(),
            role,
            dh_bits,
            hmac_bits,
            params_mode,
            generator: 2,
            failure_policy: FailurePolicy::LogAndContinue,
            timeout: crate::bus::DEFAULT_TIMEOUT,
        }
    }

    /// `drone0`, the initiator that sends authenticated data.
    pub fn drone0(dh_bits: u32, hmac_bits: u32, params_mode: ParamsMode) -> Self {
        Self::base("drone0", "drone1", Role::InitiatorSender, dh_bits, hmac_bits, params_mode)
    }

    /// `drone1`, the responder that receives authenticated data.
    pub fn drone1(dh_bits: u32, hmac_bits: u32, params_mode: ParamsMode) -> Self {
        Self::base("drone1", "drone0", Role::ResponderReceiver, dh_bits, hmac_bits, params_mode)
    }

    /// Fixed group for `dh_bits` in well-known mode, otherwise generate mode.
    pub fn mode_for(dh_bits: u32, well_known: bool) -> Result<ParamsMode> {
        if !well_known {
            return Ok(ParamsMode::Generate);
        }
        GroupId::for_bits(dh_bits)
            .map(ParamsMode::WellKnown)
            .ok_or_else(|| Error::Parameter(format!("no fixed group with {dh_bits} bits")))
    }

    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_DH_BITS.contains(&self.dh_bits) {
            return Err(Error::Parameter(format!("unsupported DH size {}", self.dh_bits)));
        }
        if !SUPPORTED_HMAC_BITS.contains(&self.hmac_bits) {
            return Err(Error::Parameter(format!("unsupported HMAC key size {}", self.hmac_bits)));
        }
        if let ParamsMode::WellKnown(group) = self.params_mode {
            if group.bits() != self.dh_bits {
                return Err(Error::Parameter(format!("{group} does not have {} bits", self.dh_bits)));
            }
        }
        if self.node_id == self.peer_id {
            return Err(Error::Config("node and peer ids must differ".into()));
        }
        Topic::public_key(&self.node_id)?;
        Topic::public_key(&self.peer_id)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Init,
    ParamsReady,
    PublishedKey,
    PeerKeyReceived,
    SessionEstablished,
    ConfirmFailed,
    Failed,
}

impl Phase {
    pub fn can_transition_to(self, next: Phase) -> bool {
        use Phase::*;
        matches!(
            (self, next),
            (Init, ParamsReady)
                | (ParamsReady, PublishedKey)
                | (PublishedKey, PeerKeyReceived)
                | (PeerKeyReceived, SessionEstablished)
                | (PeerKeyReceived, ConfirmFailed)
        ) || (next == Failed && self != Failed)
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::SessionEstablished | Phase::ConfirmFailed | Phase::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FailureReason {
    Timeout(String),
    PubkeyInvalid(String),
    KeyMismatch(String),
    PeerAborted,
    DataRejected(String),
    Internal(String),
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::Timeout(what) => write!(f, "timeout waiting for {what}"),
            FailureReason::PubkeyInvalid(why) => write!(f, "invalid peer public key: {why}"),
            FailureReason::KeyMismatch(why) => write!(f, "key confirmation failed: {why}"),
            FailureReason::PeerAborted => f.write_str("peer aborted the key exchange"),
            FailureReason::DataRejected(why) => write!(f, "authenticated data rejected: {why}"),
            FailureReason::Internal(why) => f.write_str(why),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NodeState {
    pub phase: Phase,
    /// Present only in `SessionEstablished`.
    pub session_key: Option<SessionKey>,
    /// Sequence number of the next frame this node sends.
    pub send_seq: u64,
    /// Lowest sequence number the next received frame may carry.
    pub recv_seq: u64,
    pub failure: Option<FailureReason>,
}

/// Result of handling one authenticated-data envelope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reception {
    pub verdict: Verdict,
    /// Withheld unless accepted.
    pub payload: Option<Vec<u8>>,
    pub seq: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    Advanced,
    Waiting,
    Finished,
}

/// Wall-clock time spent in each handshake stage.
#[derive(Debug, Clone, Copy, Default)]
pub struct NodeTimings {
    pub param_gen: Duration,
}

pub struct Node {
    config: NodeConfig,
    bus: Bus,
    rng: ChaCha20Rng,
    state: NodeState,
    log: EventLog,
    transitions: Vec<(Phase, Phase)>,
    timings: NodeTimings,
    own_key_topic: Topic,
    peer_data_topic: Topic,
    key_sub: Subscription,
    data_sub: Subscription,
    params: Option<DhParams>,
    keypair: Option<KeyPair>,
    pending_key: Option<SessionKey>,
    peer_key: Option<PublicKeyMessage>,
    peer_confirm: Option<ConfirmMessage>,
    /// A key-topic frame that failed to decode while waiting for input.
    garbled: Option<String>,
}

impl fmt::Debug for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Node")
            .field("id", &self.config.node_id)
            .field("phase", &self.state.phase)
            .finish_non_exhaustive()
    }
}

impl Node {
    /// Subscribe to the peer key topic and the own data inbox. Both nodes of
    /// a session must be created before either starts its handshake.
    pub fn new(config: NodeConfig, bus: &Bus, rng: ChaCha20Rng) -> Result<Self> {
        config.validate()?;
        let key_sub = bus.subscribe(&Topic::public_key(&config.peer_id)?);
        let data_sub = bus.subscribe(&Topic::authenticated_data(&config.node_id)?);
        Ok(Node {
            own_key_topic: Topic::public_key(&config.node_id)?,
            peer_data_topic: Topic::authenticated_data(&config.peer_id)?,
            log: EventLog::new(&config.node_id),
            config,
            bus: bus.clone(),
            rng,
            state: NodeState { phase: Phase::Init, session_key: None, send_seq: 0, recv_seq: 0, failure: None },
            transitions: Vec::new(),
            timings: NodeTimings::default(),
            key_sub,
            data_sub,
            params: None,
            keypair: None,
            pending_key: None,
            peer_key: None,
            peer_confirm: None,
            garbled: None,
        })
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn id(&self) -> &str {
        &self.config.node_id
    }

    pub fn state(&self) -> &NodeState {
        &self.state
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    pub fn session_key(&self) -> Option<&SessionKey> {
        self.state.session_key.as_ref()
    }

    pub fn params(&self) -> Option<&DhParams> {
        self.params.as_ref()
    }

    pub fn keypair(&self) -> Option<&KeyPair> {
        self.keypair.as_ref()
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn timings(&self) -> NodeTimings {
        self.timings
    }

    /// Every phase change so far, in order.
    pub fn transitions(&self) -> &[(Phase, Phase)] {
        &self.transitions
    }

    /// Write the event log, one line per event.
    pub fn emit_log(&self, sink: &mut dyn std::io::Write) -> Result<()> {
        self.log.emit(sink)?;
        Ok(())
    }

    fn enter(&mut self, next: Phase) {
        let current = self.state.phase;
        debug_assert!(current.can_transition_to(next), "illegal transition {current:?} -> {next:?}");
        self.transitions.push((current, next));
        self.state.phase = next;
        if next != Phase::SessionEstablished {
            self.state.session_key = None;
        }
    }

    fn fail(&mut self, reason: FailureReason) {
        if self.state.phase.is_terminal() && self.state.phase != Phase::SessionEstablished {
            return;
        }
        let before_key = matches!(self.state.phase, Phase::Init | Phase::ParamsReady | Phase::PublishedKey);
        self.log.record(EventKind::SessionAborted, reason.to_string());
        self.enter(Phase::Failed);
        self.state.failure = Some(reason);
        self.pending_key = None;
        if before_key {
            // keep the peer from waiting out its timeout
            let _ = self.bus.publish(&self.own_key_topic, &ConfirmMessage::abort(self.id()).encode());
        }
    }

    /// Give up waiting; used by drivers when no further input can arrive.
    pub fn fail_timeout(&mut self) {
        let what = match self.state.phase {
            Phase::Init | Phase::ParamsReady | Phase::PublishedKey => "peer public key",
            Phase::PeerKeyReceived => "peer key confirmation",
            _ => "peer",
        };
        self.fail(FailureReason::Timeout(what.to_owned()));
    }

    /// Pull any queued key-topic frames into the stash.
    fn drain_key_topic(&mut self) {
        while let Some(env) = self.key_sub.try_recv() {
            self.stash_key_frame(env);
        }
    }

    fn stash_key_frame(&mut self, env: Envelope) {
        match decode_key_topic(&env.bytes) {
            Ok(KeyTopicMessage::PublicKey(m)) => {
                if self.peer_key.is_none() {
                    self.peer_key = Some(m);
                }
            }
            Ok(KeyTopicMessage::Confirm(c)) => {
                if self.peer_confirm.is_none() {
                    self.peer_confirm = Some(c);
                }
            }
            Err(e) => {
                if self.garbled.is_none() {
                    self.garbled = Some(e.to_string());
                }
            }
        }
    }

    /// Advance the handshake by at most one phase without blocking.
    pub fn step(&mut self) -> Progress {
        if self.state.phase.is_terminal() {
            return Progress::Finished;
        }
        self.drain_key_topic();
        match self.try_step() {
            Ok(p) => p,
            Err(e) => {
                self.fail(FailureReason::Internal(e.to_string()));
                Progress::Advanced
            }
        }
    }

    fn try_step(&mut self) -> Result<Progress> {
        match self.state.phase {
            Phase::Init => self.obtain_params(),
            Phase::ParamsReady => self.publish_key(),
            Phase::PublishedKey => self.accept_peer_key(),
            Phase::PeerKeyReceived => self.check_confirmation(),
            _ => Ok(Progress::Finished),
        }
    }

    fn obtain_params(&mut self) -> Result<Progress> {
        let params = match self.config.params_mode {
            ParamsMode::WellKnown(group) => well_known_params(group),
            ParamsMode::Generate => {
                let started = Instant::now();
                let params = generate_params(self.config.dh_bits, self.config.generator, &mut self.rng)?;
                self.timings.param_gen = started.elapsed();
                params
            }
        };
        let detail = match params.group() {
            Some(group) => format!("group={group} bits={} g={}", params.bits(), params.g()),
            None => format!("group=generated bits={} g={}", params.bits(), params.g()),
        };
        self.params = Some(params);
        self.log.record(EventKind::ParamsReady, detail);
        self.enter(Phase::ParamsReady);
        Ok(Progress::Advanced)
    }

    fn adopts_peer_params(&self) -> bool {
        self.config.role == Role::ResponderReceiver && self.config.params_mode == ParamsMode::Generate
    }

    fn publish_key(&mut self) -> Result<Progress> {
        if self.adopts_peer_params() {
            if let Some(reason) = self.garbled.take() {
                self.reject_peer_key(reason);
                return Ok(Progress::Advanced);
            }
            if self.peer_confirm.as_ref().is_some_and(|c| c.status == ConfirmStatus::Abort) {
                self.fail(FailureReason::PeerAborted);
                return Ok(Progress::Advanced);
            }
            let Some(peer) = &self.peer_key else {
                return Ok(Progress::Waiting);
            };
            match peer.params() {
                Ok(params) if params.bits() == self.config.dh_bits && params.group().is_none() => {
                    self.params = Some(params);
                }
                Ok(_) => {
                    self.reject_peer_key("peer group does not match the configured size or mode".into());
                    return Ok(Progress::Advanced);
                }
                Err(e) => {
                    self.reject_peer_key(e.to_string());
                    return Ok(Progress::Advanced);
                }
            }
        }
        let params = self.params.as_ref().expect("params are set before publishing");
        let keypair = generate_keypair(params, &mut self.rng)?;
        let msg = PublicKeyMessage::new(&self.config.node_id, params, keypair.public());
        self.bus.publish(&self.own_key_topic, &msg.encode())?;
        self.log.record(
            EventKind::PubkeyPublished,
            format!("topic={} public={}", self.own_key_topic, short_hex(&msg.public_bytes())),
        );
        self.keypair = Some(keypair);
        self.enter(Phase::PublishedKey);
        Ok(Progress::Advanced)
    }

    fn reject_peer_key(&mut self, reason: String) {
        self.log.record(EventKind::PubkeyInvalid, format!("from={} {reason}", self.config.peer_id));
        self.fail(FailureReason::PubkeyInvalid(reason));
    }

    fn accept_peer_key(&mut self) -> Result<Progress> {
        if let Some(reason) = self.garbled.take() {
            self.reject_peer_key(reason);
            return Ok(Progress::Advanced);
        }
        let Some(peer) = self.peer_key.clone() else {
            if self.peer_confirm.as_ref().is_some_and(|c| c.status == ConfirmStatus::Abort) {
                self.fail(FailureReason::PeerAborted);
                return Ok(Progress::Advanced);
            }
            return Ok(Progress::Waiting);
        };
        let params = self.params.clone().expect("params are set before receiving");
        if peer.sender_id != self.config.peer_id {
            self.reject_peer_key(format!("unexpected sender {}", peer.sender_id));
            return Ok(Progress::Advanced);
        }
        if peer.p != *params.p() || peer.g != *params.g() || peer.bits != params.bits() {
            self.reject_peer_key("group parameters differ from ours".into());
            return Ok(Progress::Advanced);
        }
        let validity = validate_public_key(&params, &peer.public);
        if !validity.is_valid() {
            self.reject_peer_key(validity.to_string());
            return Ok(Progress::Advanced);
        }
        self.log.record(
            EventKind::PubkeyReceived,
            format!("from={} public={}", peer.sender_id, short_hex(&peer.public_bytes())),
        );
        self.enter(Phase::PeerKeyReceived);

        let keypair = self.keypair.as_ref().expect("keypair exists after publishing");
        let secret = compute_shared_secret(&params, keypair.private(), &peer.public)?;
        let key = derive_session_key(&secret, self.config.hmac_bits)?;
        self.log.record(
            EventKind::KeyExchangeComplete,
            format!("dh_bits={} hmac_bits={}", params.bits(), self.config.hmac_bits),
        );
        self.bus.publish(&self.own_key_topic, &ConfirmMessage::confirm(&self.config.node_id, &key).encode())?;
        self.pending_key = Some(key);
        Ok(Progress::Advanced)
    }

    fn check_confirmation(&mut self) -> Result<Progress> {
        let outcome = if let Some(reason) = self.garbled.take() {
            Err(format!("unreadable confirmation: {reason}"))
        } else if let Some(confirm) = &self.peer_confirm {
            let key = self.pending_key.as_ref().expect("pending key exists before confirmation");
            match confirm.status {
                ConfirmStatus::Abort => Err("peer aborted the key exchange".to_owned()),
                ConfirmStatus::Confirm if confirm.sender_id != self.config.peer_id => {
                    Err(format!("confirmation from unexpected sender {}", confirm.sender_id))
                }
                ConfirmStatus::Confirm if confirm.verifies_under(key) => Ok(()),
                ConfirmStatus::Confirm => Err("peer derived a different session key".to_owned()),
            }
        } else {
            return Ok(Progress::Waiting);
        };

        match outcome {
            Ok(()) => {
                self.log.record(EventKind::KeyConfirmOk, format!("peer={}", self.config.peer_id));
                self.enter(Phase::SessionEstablished);
                self.state.session_key = self.pending_key.take();
            }
            Err(why) => {
                self.log.record(EventKind::KeyMismatchDetected, why.clone());
                self.log.record(EventKind::SessionAborted, "key confirmation failed");
                self.enter(Phase::ConfirmFailed);
                self.state.failure = Some(FailureReason::KeyMismatch(why));
                self.pending_key = None;
            }
        }
        Ok(Progress::Advanced)
    }

    /// Run the handshake to completion, blocking on the bus for up to the
    /// configured timeout per wait.
    pub fn run_handshake(&mut self) -> &NodeState {
        let mut deadline = Instant::now() + self.config.timeout;
        loop {
            match self.step() {
                Progress::Finished => break,
                Progress::Advanced => deadline = Instant::now() + self.config.timeout,
                Progress::Waiting => {
                    if self.bus.deliver_next() {
                        continue;
                    }
                    let now = Instant::now();
                    if now >= deadline {
                        self.fail_timeout();
                        break;
                    }
                    let wait = if self.bus.is_deterministic() {
                        Duration::from_millis(1).min(deadline - now)
                    } else {
                        deadline - now
                    };
                    if let Ok(env) = self.key_sub.recv_timeout(wait) {
                        self.stash_key_frame(env);
                    }
                }
            }
        }
        &self.state
    }

    /// Sign `payload` and publish it to the peer's data inbox. Returns the
    /// sequence number used.
    pub fn send_authenticated(&mut self, payload: &[u8]) -> Result<u64> {
        let Some(key) = &self.state.session_key else {
            return Err(Error::State(format!("{} cannot send in phase {:?}", self.config.node_id, self.state.phase)));
        };
        let seq = self.state.send_seq;
        let msg = authchannel::sign(key, &self.config.node_id, seq, payload)?;
        self.bus.publish(&self.peer_data_topic, &authchannel::encode_frame(&msg)?)?;
        self.state.send_seq += 1;
        Ok(seq)
    }

    /// Verify one data envelope. Rejected payloads are never returned.
    pub fn receive_authenticated(&mut self, envelope: &Envelope) -> Reception {
        let rejected = Reception { verdict: Verdict::Rejected, payload: None, seq: None };
        let outcome = match &self.state.session_key {
            None => Err(format!("no established session (phase {:?})", self.state.phase)),
            Some(key) => match authchannel::decode_frame(&envelope.bytes) {
                Err(e) => Err(format!("bad frame: {e}")),
                Ok(msg) if msg.sender_id != self.config.peer_id => Err(format!("unexpected sender {}", msg.sender_id)),
                Ok(msg) if !authchannel::verify(key, &msg).is_accepted() => {
                    Err(format!("HMAC mismatch on seq={}", msg.seq))
                }
                Ok(msg) if msg.seq < self.state.recv_seq => {
                    Err(format!("replayed or reordered seq={} expected>={}", msg.seq, self.state.recv_seq))
                }
                Ok(msg) => Ok(msg),
            },
        };
        match outcome {
            Ok(msg) => {
                self.state.recv_seq = msg.seq + 1;
                self.log.record(
                    EventKind::AuthOk,
                    format!("from={} seq={} bytes={}", msg.sender_id, msg.seq, msg.payload.len()),
                );
                Reception { verdict: Verdict::Accepted, payload: Some(msg.payload), seq: Some(msg.seq) }
            }
            Err(why) => {
                self.log.record(EventKind::AuthFail, format!("{why}; data discarded"));
                if self.config.failure_policy == FailurePolicy::AbortSession
                    && self.state.phase == Phase::SessionEstablished
                {
                    self.fail(FailureReason::DataRejected(why));
                }
                rejected
            }
        }
    }

    /// Next envelope from the own data inbox, if one is already queued.
    pub fn try_recv_data(&mut self) -> Option<Reception> {
        let env = self.data_sub.try_recv()?;
        Some(self.receive_authenticated(&env))
    }

    /// Block until a data envelope arrives (delivering queued traffic on a
    /// deterministic bus) and verify it.
    pub fn recv_data(&mut self, timeout: Duration) -> Result<Reception> {
        let deadline = Instant::now() + timeout;
        loop {
            if let Some(r) = self.try_recv_data() {
                return Ok(r);
            }
            if self.bus.deliver_next() {
                continue;
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(Error::Timeout(format!("/{}/authenticated_data", self.config.node_id)));
            }
            let wait = if self.bus.is_deterministic() { Duration::from_millis(1) } else { deadline - now };
            if let Ok(env) = self.data_sub.recv_timeout(wait.min(deadline - now)) {
                return Ok(self.receive_authenticated(&env));
            }
        }
    }
}

/// First eight hex digits, for log details.
fn short_hex(bytes: &[u8]) -> String {
    let mut s = hex::encode(&bytes[..bytes.len().min(4)]);
    if bytes.len() > 4 {
        s.push_str("..");
    }
    s
}

/// Build a node and run its handshake on the calling thread.
pub fn run_handshake(config: NodeConfig, bus: &Bus, rng: ChaCha20Rng) -> Result<Node> {
    let mut node = Node::new(config, bus, rng)?;
    node.run_handshake();
    Ok(node)
}
