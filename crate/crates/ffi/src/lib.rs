//! C ABI over `authlink`.
//!
//! Conventions: every function returns an [`AuthlinkStatus`]; results come
//! back through out-pointers. Objects are opaque handles created by a
//! `*_new` function and released with the matching `*_free`. On failure a
//! message is kept per thread and can be read with [`authlink_last_error`].
//!
//! Buffers: callers pass `(ptr, capacity)` plus a `written` out-pointer. If
//! the capacity is too small the call fails with
//! `AUTHLINK_STATUS_BUFFER_TOO_SMALL` and `written` holds the needed size.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::time::Duration;

use authlink::adversary::{self, AttackMode, AttackTrialConfig, Victims};
use authlink::authchannel;
use authlink::bus::{Bus, BusConfig};
use authlink::keyexchange::{derive_session_key, SessionKey, SharedSecret};
use authlink::node::session::{NodePair, SessionSeeds};
use authlink::node::{NodeConfig, Phase};
use authlink::Error;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuthlinkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parameter = 3,
    KeyValidation = 4,
    Frame = 5,
    Timeout = 6,
    State = 7,
    Io = 8,
    BufferTooSmall = 9,
    /// Authentication failed; not an internal error.
    Rejected = 10,
    Panic = 11,
    Internal = 12,
}

/// Which node of a session a call refers to.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuthlinkNode {
    Drone0 = 0,
    Drone1 = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuthlinkAttackMode {
    Tamper = 0,
    Replace = 1,
    Random = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuthlinkTargets {
    Drone0 = 0,
    Drone1 = 1,
    Both = 2,
    None = 3,
}

/// Opaque in-process message bus.
pub struct AuthlinkBus {
    bus: Bus,
}

/// Opaque drone0/drone1 pair sharing one bus.
pub struct AuthlinkSession {
    bus: Bus,
    pair: Option<NodePair>,
}

pub const AUTHLINK_TAG_LEN: usize = 32;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> AuthlinkStatus {
    match err {
        Error::Parameter(_) | Error::Config(_) => AuthlinkStatus::Parameter,
        Error::KeyValidation(_) => AuthlinkStatus::KeyValidation,
        Error::Frame { .. } => AuthlinkStatus::Frame,
        Error::Timeout(_) => AuthlinkStatus::Timeout,
        Error::State(_) => AuthlinkStatus::State,
        Error::Io(_) | Error::Csv(_) => AuthlinkStatus::Io,
        _ => AuthlinkStatus::Internal,
    }
}

struct Fail(AuthlinkStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

type Outcome = std::result::Result<(), Fail>;

/// Run `f`, converting errors and panics into a status plus thread-local message.
fn guard(f: impl FnOnce() -> Outcome) -> AuthlinkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_error();
            AuthlinkStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside authlink");
            AuthlinkStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(AuthlinkStatus::NullPointer, format!("{what} is null"))
}

unsafe fn bytes<'a>(p: *const u8, len: usize, what: &str) -> Result<&'a [u8], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn cstr<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(AuthlinkStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Copy `data` into the caller's buffer, reporting the size either way.
unsafe fn copy_out(data: &[u8], out: *mut u8, capacity: usize, written: *mut usize) -> Outcome {
    let written = out_ref(written, "written")?;
    *written = data.len();
    if data.len() > capacity {
        return Err(Fail(
            AuthlinkStatus::BufferTooSmall,
            format!("need {} bytes, buffer holds {capacity}", data.len()),
        ));
    }
    if !data.is_empty() {
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), out, data.len());
    }
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn authlink_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn authlink_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// HMAC-SHA-256 of `data` under `key`; writes 32 bytes to `out_tag`.
#[no_mangle]
pub unsafe extern "C" fn authlink_hmac_sha256(
    key: *const u8,
    key_len: usize,
    data: *const u8,
    data_len: usize,
    out_tag: *mut u8,
) -> AuthlinkStatus {
    guard(|| {
        let key = bytes(key, key_len, "key")?;
        let data = bytes(data, data_len, "data")?;
        if out_tag.is_null() {
            return Err(null("out_tag"));
        }
        let tag = authchannel::hmac_sha256(key, data);
        ptr::copy_nonoverlapping(tag.as_ptr(), out_tag, AUTHLINK_TAG_LEN);
        Ok(())
    })
}

/// Constant-time check of a 32-byte tag. `Ok` if it matches, `Rejected` otherwise.
#[no_mangle]
pub unsafe extern "C" fn authlink_hmac_sha256_verify(
    key: *const u8,
    key_len: usize,
    data: *const u8,
    data_len: usize,
    tag: *const u8,
    tag_len: usize,
) -> AuthlinkStatus {
    guard(|| {
        let key = bytes(key, key_len, "key")?;
        let data = bytes(data, data_len, "data")?;
        let tag = bytes(tag, tag_len, "tag")?;
        if authchannel::verify_hmac_sha256(key, data, tag) {
            Ok(())
        } else {
            Err(Fail(AuthlinkStatus::Rejected, "tag mismatch".into()))
        }
    })
}

/// Session key of `hmac_bits / 8` bytes from a fixed-length encoded shared secret.
#[no_mangle]
pub unsafe extern "C" fn authlink_derive_session_key(
    secret: *const u8,
    secret_len: usize,
    hmac_bits: u32,
    out: *mut u8,
    capacity: usize,
    written: *mut usize,
) -> AuthlinkStatus {
    guard(|| {
        let secret = SharedSecret::from_encoded(bytes(secret, secret_len, "secret")?.to_vec());
        let key = derive_session_key(&secret, hmac_bits)?;
        copy_out(key.as_bytes(), out, capacity, written)
    })
}

/// Sign `payload` under `key` and write the complete wire frame.
#[no_mangle]
pub unsafe extern "C" fn authlink_frame_sign(
    key: *const u8,
    key_len: usize,
    sender_id: *const c_char,
    seq: u64,
    payload: *const u8,
    payload_len: usize,
    out: *mut u8,
    capacity: usize,
    written: *mut usize,
) -> AuthlinkStatus {
    guard(|| {
        let key = SessionKey::from_bytes(bytes(key, key_len, "key")?.to_vec());
        let sender = cstr(sender_id, "sender_id")?;
        let msg = authchannel::sign(&key, sender, seq, bytes(payload, payload_len, "payload")?)?;
        copy_out(&authchannel::encode_frame(&msg)?, out, capacity, written)
    })
}

/// Decode and verify a frame. On `Ok` the payload is copied out and its
/// sequence number stored in `out_seq`; a bad tag gives `Rejected`.
#[no_mangle]
pub unsafe extern "C" fn authlink_frame_verify(
    key: *const u8,
    key_len: usize,
    frame: *const u8,
    frame_len: usize,
    out_payload: *mut u8,
    capacity: usize,
    written: *mut usize,
    out_seq: *mut u64,
) -> AuthlinkStatus {
    guard(|| {
        let key = SessionKey::from_bytes(bytes(key, key_len, "key")?.to_vec());
        let msg = authchannel::decode_frame(bytes(frame, frame_len, "frame")?)?;
        if !authchannel::verify(&key, &msg).is_accepted() {
            return Err(Fail(AuthlinkStatus::Rejected, "frame failed authentication".into()));
        }
        copy_out(&msg.payload, out_payload, capacity, written)?;
        if let Some(seq) = out_seq.as_mut() {
            *seq = msg.seq;
        }
        Ok(())
    })
}

/// New bus. `deterministic != 0` queues messages and releases them in an
/// order fixed by `seed`; otherwise delivery is immediate.
#[no_mangle]
pub unsafe extern "C" fn authlink_bus_new(
    deterministic: bool,
    seed: u64,
    out: *mut *mut AuthlinkBus,
) -> AuthlinkStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let config = if deterministic { BusConfig::deterministic(seed) } else { BusConfig::default() };
        *out = Box::into_raw(Box::new(AuthlinkBus { bus: Bus::new(config) }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn authlink_bus_free(bus: *mut AuthlinkBus) {
    if !bus.is_null() {
        drop(Box::from_raw(bus));
    }
}

/// Create drone0 and drone1 on `bus`. `well_known != 0` uses the fixed
/// group of `dh_bits`; otherwise each node generates parameters.
#[no_mangle]
pub unsafe extern "C" fn authlink_session_new(
    bus: *const AuthlinkBus,
    dh_bits: u32,
    hmac_bits: u32,
    well_known: bool,
    seed: u64,
    out: *mut *mut AuthlinkSession,
) -> AuthlinkStatus {
    guard(|| {
        let bus = bus.as_ref().ok_or_else(|| null("bus"))?.bus.clone();
        let out = out_ref(out, "out")?;
        let mode = NodeConfig::mode_for(dh_bits, well_known)?;
        let (a, b) = (NodeConfig::drone0(dh_bits, hmac_bits, mode), NodeConfig::drone1(dh_bits, hmac_bits, mode));
        a.validate()?;
        b.validate()?;
        let pair = NodePair::new(&bus, a, b, SessionSeeds::from_seed(seed))?;
        *out = Box::into_raw(Box::new(AuthlinkSession { bus, pair: Some(pair) }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn authlink_session_free(session: *mut AuthlinkSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

unsafe fn pair<'a>(session: *mut AuthlinkSession) -> Result<(&'a Bus, &'a mut NodePair), Fail> {
    let s = session.as_mut().ok_or_else(|| null("session"))?;
    let pair = s.pair.as_mut().ok_or_else(|| Fail(AuthlinkStatus::State, "session is poisoned".into()))?;
    Ok((&s.bus, pair))
}

/// Run the key exchange and confirmation to completion. `Ok` only when
/// both nodes hold the same session key.
#[no_mangle]
pub unsafe extern "C" fn authlink_session_handshake(session: *mut AuthlinkSession) -> AuthlinkStatus {
    guard(|| {
        let s = session.as_mut().ok_or_else(|| null("session"))?;
        let mut pair = s.pair.take().ok_or_else(|| Fail(AuthlinkStatus::State, "session is poisoned".into()))?;
        if s.bus.is_deterministic() {
            pair.handshake(&s.bus);
        } else {
            pair = pair.handshake_threaded();
        }
        let established = pair.established() && pair.keys_agree();
        let failure = [&pair.initiator, &pair.responder]
            .iter()
            .find_map(|n| n.state().failure.as_ref().map(|f| (n.id().to_owned(), f.clone())));
        s.pair = Some(pair);
        if established {
            return Ok(());
        }
        Err(match failure {
            Some((id, authlink::node::FailureReason::Timeout(what))) => {
                Fail(AuthlinkStatus::Timeout, format!("{id}: timeout waiting for {what}"))
            }
            Some((id, reason)) => Fail(AuthlinkStatus::Rejected, format!("{id}: {reason}")),
            None => Fail(AuthlinkStatus::State, "handshake did not finish".into()),
        })
    })
}

/// `*out_established` is set when both nodes reached the established state.
#[no_mangle]
pub unsafe extern "C" fn authlink_session_established(
    session: *mut AuthlinkSession,
    out_established: *mut bool,
) -> AuthlinkStatus {
    guard(|| {
        let (_, pair) = pair(session)?;
        *out_ref(out_established, "out_established")? =
            [&pair.initiator, &pair.responder].iter().all(|n| n.phase() == Phase::SessionEstablished);
        Ok(())
    })
}

/// Copy one node's session key.
#[no_mangle]
pub unsafe extern "C" fn authlink_session_key(
    session: *mut AuthlinkSession,
    node: AuthlinkNode,
    out: *mut u8,
    capacity: usize,
    written: *mut usize,
) -> AuthlinkStatus {
    guard(|| {
        let (_, pair) = pair(session)?;
        let n = if node == AuthlinkNode::Drone0 { &pair.initiator } else { &pair.responder };
        let key =
            n.session_key().ok_or_else(|| Fail(AuthlinkStatus::State, format!("{} has no session key", n.id())))?;
        copy_out(key.as_bytes(), out, capacity, written)
    })
}

/// Sign and publish `payload` from `from` to its peer.
#[no_mangle]
pub unsafe extern "C" fn authlink_session_send(
    session: *mut AuthlinkSession,
    from: AuthlinkNode,
    payload: *const u8,
    payload_len: usize,
    out_seq: *mut u64,
) -> AuthlinkStatus {
    guard(|| {
        let (bus, pair) = pair(session)?;
        let n = if from == AuthlinkNode::Drone0 { &mut pair.initiator } else { &mut pair.responder };
        let seq = n.send_authenticated(bytes(payload, payload_len, "payload")?)?;
        if bus.is_deterministic() {
            bus.deliver_all();
        }
        if let Some(out) = out_seq.as_mut() {
            *out = seq;
        }
        Ok(())
    })
}

/// Wait up to `timeout_ms` for authenticated data at node `at`. Verified
/// payloads are copied out; a frame that fails verification gives `Rejected`.
#[no_mangle]
pub unsafe extern "C" fn authlink_session_receive(
    session: *mut AuthlinkSession,
    at: AuthlinkNode,
    timeout_ms: u64,
    out: *mut u8,
    capacity: usize,
    written: *mut usize,
) -> AuthlinkStatus {
    guard(|| {
        let (_, pair) = pair(session)?;
        let n = if at == AuthlinkNode::Drone0 { &mut pair.initiator } else { &mut pair.responder };
        let reception = n.recv_data(Duration::from_millis(timeout_ms))?;
        match reception.payload {
            Some(p) if reception.verdict.is_accepted() => copy_out(&p, out, capacity, written),
            _ => Err(Fail(AuthlinkStatus::Rejected, "data frame failed authentication".into())),
        }
    })
}

/// Run `trials` seeded man-in-the-middle trials over 2048-bit well-known
/// groups. `*out_detected` counts trials in which every attacked drone
/// logged a detection; with `AUTHLINK_TARGETS_NONE` it counts clean
/// sessions instead.
#[no_mangle]
pub unsafe extern "C" fn authlink_attack_run(
    mode: AuthlinkAttackMode,
    targets: AuthlinkTargets,
    tamper_fraction: f64,
    trials: u64,
    seed: u64,
    out_detected: *mut u64,
) -> AuthlinkStatus {
    guard(|| {
        let out = out_ref(out_detected, "out_detected")?;
        let config = AttackTrialConfig {
            mode: match mode {
                AuthlinkAttackMode::Tamper => AttackMode::Tamper,
                AuthlinkAttackMode::Replace => AttackMode::Replace,
                AuthlinkAttackMode::Random => AttackMode::Random,
            },
            tamper_fraction,
            victims: match targets {
                AuthlinkTargets::Drone0 => Some(Victims::Drone0),
                AuthlinkTargets::Drone1 => Some(Victims::Drone1),
                AuthlinkTargets::Both => Some(Victims::Both),
                AuthlinkTargets::None => None,
            },
            ..Default::default()
        };
        let mut count = 0;
        for trial_id in 0..trials {
            let trial = adversary::run_trial(&config, trial_id, seed)?;
            let good = if config.victims.is_some() {
                trial.detected()
            } else {
                trial.round_trip_ok && trial.logs.values().flatten().all(|e| !e.event.is_detection())
            };
            count += good as u64;
        }
        *out = count;
        Ok(())
    })
}
