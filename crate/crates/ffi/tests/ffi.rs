use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use authlink_ffi::*;

fn last_error() -> String {
    let p = authlink_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn hmac_matches_rfc4231_case_2() {
    let (key, data) = (b"Jefe", b"what do ya want for nothing?");
    let mut tag = [0u8; AUTHLINK_TAG_LEN];
    let st = unsafe { authlink_hmac_sha256(key.as_ptr(), key.len(), data.as_ptr(), data.len(), tag.as_mut_ptr()) };
    assert_eq!(st, AuthlinkStatus::Ok);
    assert_eq!(hex(&tag), "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843");

    let ok = unsafe {
        authlink_hmac_sha256_verify(key.as_ptr(), key.len(), data.as_ptr(), data.len(), tag.as_ptr(), tag.len())
    };
    assert_eq!(ok, AuthlinkStatus::Ok);
    tag[0] ^= 1;
    let bad = unsafe {
        authlink_hmac_sha256_verify(key.as_ptr(), key.len(), data.as_ptr(), data.len(), tag.as_ptr(), tag.len())
    };
    assert_eq!(bad, AuthlinkStatus::Rejected);
}

#[test]
fn null_pointers_are_reported_not_dereferenced() {
    let st = unsafe { authlink_hmac_sha256(ptr::null(), 4, ptr::null(), 0, ptr::null_mut()) };
    assert_eq!(st, AuthlinkStatus::NullPointer);
    assert!(last_error().contains("key"));
    let st = unsafe { authlink_bus_new(false, 0, ptr::null_mut()) };
    assert_eq!(st, AuthlinkStatus::NullPointer);
    unsafe {
        authlink_bus_free(ptr::null_mut());
        authlink_session_free(ptr::null_mut());
    }
}

#[test]
fn kdf_vector_and_short_buffer() {
    let secret = [0u8; 32];
    let mut out = [0u8; 64];
    let mut written = 0usize;
    let st = unsafe {
        authlink_derive_session_key(secret.as_ptr(), secret.len(), 512, out.as_mut_ptr(), out.len(), &mut written)
    };
    assert_eq!(st, AuthlinkStatus::Ok);
    assert_eq!(written, 64);
    assert_eq!(
        hex(&out),
        "2158a8906d5e2c2be001bac943ab9cab4063536e1c546b40221fdf8db031a4bb\
         e15f374423633701e04fe17c1d640b34f2e27b8f6aec00e24f1dcf50ad0920b3"
    );

    let mut small = [0u8; 16];
    let st = unsafe {
        authlink_derive_session_key(secret.as_ptr(), secret.len(), 1024, small.as_mut_ptr(), small.len(), &mut written)
    };
    assert_eq!(st, AuthlinkStatus::BufferTooSmall);
    assert_eq!(written, 128);

    let st = unsafe {
        authlink_derive_session_key(secret.as_ptr(), secret.len(), 12, out.as_mut_ptr(), out.len(), &mut written)
    };
    assert_eq!(st, AuthlinkStatus::Parameter);
}

#[test]
fn frames_round_trip_and_reject_tampering() {
    let key = [7u8; 64];
    let sender = CString::new("drone0").unwrap();
    let payload = b"altitude=120";
    let mut frame = vec![0u8; 256];
    let mut len = 0usize;
    let st = unsafe {
        authlink_frame_sign(
            key.as_ptr(),
            key.len(),
            sender.as_ptr(),
            9,
            payload.as_ptr(),
            payload.len(),
            frame.as_mut_ptr(),
            frame.len(),
            &mut len,
        )
    };
    assert_eq!(st, AuthlinkStatus::Ok);
    frame.truncate(len);
    assert_eq!(&frame[..4], b"AUVL");

    let verify = |frame: &[u8]| {
        let mut out = [0u8; 64];
        let (mut n, mut seq) = (0usize, 0u64);
        let st = unsafe {
            authlink_frame_verify(
                key.as_ptr(),
                key.len(),
                frame.as_ptr(),
                frame.len(),
                out.as_mut_ptr(),
                out.len(),
                &mut n,
                &mut seq,
            )
        };
        (st, out[..n.min(64)].to_vec(), seq)
    };
    let (st, out, seq) = verify(&frame);
    assert_eq!(st, AuthlinkStatus::Ok);
    assert_eq!((out.as_slice(), seq), (&payload[..], 9));

    let mut bad = frame.clone();
    *bad.last_mut().unwrap() ^= 0x80;
    assert_eq!(verify(&bad).0, AuthlinkStatus::Rejected);
    assert_eq!(verify(&frame[..10]).0, AuthlinkStatus::Frame);
}

fn session(deterministic: bool, seed: u64) -> (*mut AuthlinkBus, *mut AuthlinkSession) {
    let mut bus = ptr::null_mut();
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(authlink_bus_new(deterministic, seed, &mut bus), AuthlinkStatus::Ok);
        assert_eq!(authlink_session_new(bus, 512, 1024, true, seed, &mut s), AuthlinkStatus::Ok);
    }
    (bus, s)
}

#[test]
fn session_handshake_and_data_over_both_bus_kinds() {
    for deterministic in [true, false] {
        let (bus, s) = session(deterministic, 11);
        unsafe {
            assert_eq!(authlink_session_handshake(s), AuthlinkStatus::Ok);
            let mut established = false;
            assert_eq!(authlink_session_established(s, &mut established), AuthlinkStatus::Ok);
            assert!(established);

            let (mut k0, mut k1) = ([0u8; 128], [0u8; 128]);
            let (mut n0, mut n1) = (0usize, 0usize);
            assert_eq!(
                authlink_session_key(s, AuthlinkNode::Drone0, k0.as_mut_ptr(), 128, &mut n0),
                AuthlinkStatus::Ok
            );
            assert_eq!(
                authlink_session_key(s, AuthlinkNode::Drone1, k1.as_mut_ptr(), 128, &mut n1),
                AuthlinkStatus::Ok
            );
            assert_eq!((n0, n1), (128, 128));
            assert_eq!(k0, k1);

            let msg = b"waypoint 4";
            let mut seq = u64::MAX;
            assert_eq!(
                authlink_session_send(s, AuthlinkNode::Drone0, msg.as_ptr(), msg.len(), &mut seq),
                AuthlinkStatus::Ok
            );
            assert_eq!(seq, 0);
            let mut out = [0u8; 32];
            let mut n = 0usize;
            assert_eq!(
                authlink_session_receive(s, AuthlinkNode::Drone1, 1000, out.as_mut_ptr(), out.len(), &mut n),
                AuthlinkStatus::Ok
            );
            assert_eq!(&out[..n], msg);

            assert_eq!(
                authlink_session_receive(s, AuthlinkNode::Drone1, 10, out.as_mut_ptr(), out.len(), &mut n),
                AuthlinkStatus::Timeout
            );
            authlink_session_free(s);
            authlink_bus_free(bus);
        }
    }
}

#[test]
fn bad_sizes_are_parameter_errors() {
    let mut bus = ptr::null_mut();
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(authlink_bus_new(true, 0, &mut bus), AuthlinkStatus::Ok);
        assert_eq!(authlink_session_new(bus, 999, 512, true, 0, &mut s), AuthlinkStatus::Parameter);
        assert!(s.is_null());
        assert!(last_error().contains("999"));
        authlink_bus_free(bus);
    }
}

#[test]
fn attack_trials_are_all_detected() {
    let mut detected = 0u64;
    let st =
        unsafe { authlink_attack_run(AuthlinkAttackMode::Random, AuthlinkTargets::Both, 0.25, 20, 42, &mut detected) };
    assert_eq!(st, AuthlinkStatus::Ok);
    assert_eq!(detected, 20);
    let st =
        unsafe { authlink_attack_run(AuthlinkAttackMode::Random, AuthlinkTargets::None, 0.25, 5, 1, &mut detected) };
    assert_eq!(st, AuthlinkStatus::Ok);
    assert_eq!(detected, 5, "honest runs must all be clean");
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(authlink_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn generated_header_declares_every_entry_point() {
    let header_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/authlink.h");
    let header = std::fs::read_to_string(&header_path).expect("header is generated by the build script");
    for name in [
        "authlink_last_error",
        "authlink_hmac_sha256",
        "authlink_hmac_sha256_verify",
        "authlink_derive_session_key",
        "authlink_frame_sign",
        "authlink_frame_verify",
        "authlink_bus_new",
        "authlink_bus_free",
        "authlink_session_new",
        "authlink_session_handshake",
        "authlink_session_send",
        "authlink_session_receive",
        "authlink_session_free",
        "authlink_attack_run",
        "typedef struct AuthlinkBus AuthlinkBus",
        "AUTHLINK_STATUS_REJECTED = 10",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }

    // Compile it as C when a compiler is around.
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipped syntax check");
        return;
    };
    assert!(cc.status.success());
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(&header_path)
        .status()
        .unwrap();
    assert!(status.success(), "generated header is not valid C99");
}
