//! HMAC-SHA-256 message authentication and the authenticated-data wire frame.
//!
//! Frame layout, integers big-endian:
//!
//! ```text
//! "AUVL" | 0x01 | sender_len:u8 | sender (UTF-8) | seq:u64 | payload_len:u32 | payload | tag[32]
//! ```
//!
//! The tag covers every byte before it.

use hmac::{Hmac, KeyInit, Mac};
use sha2::Sha256;

use crate::error::{Error, Result};
use crate::keyexchange::SessionKey;

pub const FRAME_MAGIC: &[u8; 4] = b"AUVL";
pub const FRAME_VERSION: u8 = 0x01;
pub const TAG_LEN: usize = 32;
/// Largest payload accepted by [`sign`] and [`decode_frame`].
pub const MAX_PAYLOAD: usize = 1 << 20;

type HmacSha256 = Hmac<Sha256>;

/// Plain HMAC-SHA-256 with no framing.
pub fn hmac_sha256(key: &[u8], data: &[u8]) -> [u8; TAG_LEN] {
    let mut mac = HmacSha256::new_from_slice(key).expect("HMAC accepts keys of any length");
    mac.update(data);
    mac.finalize().into_bytes().into()
}

/// Constant-time check of `tag` against HMAC-SHA-256(key, data).
pub fn verify_hmac_sha256(key: &[u8], data: &[u8], tag: &[u8]) -> bool {
    let mut mac = HmacSha256::new_from_slice(key).expect("HMAC accepts keys of any length");
    mac.update(data);
    mac.verify_slice(tag).is_ok()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthenticatedMessage {
    pub sender_id: String,
    pub seq: u64,
    pub payload: Vec<u8>,
    pub tag: [u8; TAG_LEN],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accepted,
    Rejected,
}

impl Verdict {
    pub fn is_accepted(self) -> bool {
        self == Verdict::Accepted
    }
}

fn check_fields(sender_id: &str, payload: &[u8]) -> Result<()> {
    if sender_id.len() > u8::MAX as usize {
        return Err(Error::frame(5, "sender id longer than 255 bytes"));
    }
    if payload.len() > MAX_PAYLOAD {
        return Err(Error::frame(
            6 + sender_id.len() + 8,
            format!("payload of {} bytes exceeds the {MAX_PAYLOAD}-byte cap", payload.len()),
        ));
    }
    Ok(())
}

/// Frame bytes up to (not including) the tag.
fn authenticated_bytes(sender_id: &str, seq: u64, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 1 + 1 + sender_id.len() + 8 + 4 + payload.len() + TAG_LEN);
    out.extend_from_slice(FRAME_MAGIC);
    out.push(FRAME_VERSION);
    out.push(sender_id.len() as u8);
    out.extend_from_slice(sender_id.as_bytes());
    out.extend_from_slice(&seq.to_be_bytes());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    out
}

pub fn sign(key: &SessionKey, sender_id: &str, seq: u64, payload: &[u8]) -> Result<AuthenticatedMessage> {
    check_fields(sender_id, payload)?;
    let tag = hmac_sha256(key.as_bytes(), &authenticated_bytes(sender_id, seq, payload));
    Ok(AuthenticatedMessage { sender_id: sender_id.to_owned(), seq, payload: payload.to_vec(), tag })
}

pub fn verify(key: &SessionKey, msg: &AuthenticatedMessage) -> Verdict {
    if check_fields(&msg.sender_id, &msg.payload).is_err() {
        return Verdict::Rejected;
    }
    let data = authenticated_bytes(&msg.sender_id, msg.seq, &msg.payload);
    if verify_hmac_sha256(key.as_bytes(), &data, &msg.tag) {
        Verdict::Accepted
    } else {
        Verdict::Rejected
    }
}

pub fn encode_frame(msg: &AuthenticatedMessage) -> Result<Vec<u8>> {
    check_fields(&msg.sender_id, &msg.payload)?;
    let mut out = authenticated_bytes(&msg.sender_id, msg.seq, &msg.payload);
    out.extend_from_slice(&msg.tag);
    Ok(out)
}

/// Cursor over a byte slice that reports the offset of the first short read.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub(crate) fn pos(&self) -> usize {
        self.pos
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::frame(self.pos, format!("truncated {what}")));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn expect_magic(&mut self, magic: &[u8; 4], version: u8) -> Result<()> {
        let start = self.pos;
        if self.take(4, "magic").map_err(|_| Error::frame(start, "missing magic"))? != magic {
            return Err(Error::frame(start, "bad magic"));
        }
        let at = self.pos;
        let v = self.u8("version")?;
        if v != version {
            return Err(Error::frame(at, format!("unsupported version {v:#04x}")));
        }
        Ok(())
    }

    pub(crate) fn utf8(&mut self, len: usize, what: &str) -> Result<String> {
        let at = self.pos;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::frame(at, format!("{what} is not UTF-8")))
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::frame(self.pos, "trailing bytes after frame"));
        }
        Ok(())
    }
}

pub fn decode_frame(bytes: &[u8]) -> Result<AuthenticatedMessage> {
    let mut r = Reader::new(bytes);
    r.expect_magic(FRAME_MAGIC, FRAME_VERSION)?;
    let sender_len = r.u8("sender length")? as usize;
    let sender_id = r.utf8(sender_len, "sender id")?;
    let seq = r.u64("sequence number")?;
    let len_at = r.pos();
    let payload_len = r.u32("payload length")? as usize;
    if payload_len > MAX_PAYLOAD {
        return Err(Error::frame(len_at, format!("payload length {payload_len} exceeds cap")));
    }
    let payload = r.take(payload_len, "payload")?.to_vec();
    let tag: [u8; TAG_LEN] = r.take(TAG_LEN, "tag")?.try_into().unwrap();
    r.finish()?;
    Ok(AuthenticatedMessage { sender_id, seq, payload, tag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn key(b: u8) -> SessionKey {
        SessionKey::from_bytes(vec![b; 64])
    }

    #[test]
    fn rfc4231_case1_through_raw_entry_point() {
        let tag = hmac_sha256(&[0x0b; 20], b"Hi There");
        assert_eq!(hex::encode(tag), "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7");
    }

    #[test]
    fn sign_verify_round_trip_and_key_mismatch() {
        let msg = sign(&key(1), "drone0", 0, b"hello").unwrap();
        assert_eq!(verify(&key(1), &msg), Verdict::Accepted);
        assert_eq!(verify(&key(2), &msg), Verdict::Rejected);
        assert_eq!(sign(&key(1), "drone0", 0, b"hello").unwrap().tag, msg.tag);
    }

    #[test]
    fn tag_covers_header_fields() {
        let msg = sign(&key(1), "drone0", 4, b"x").unwrap();
        let mut other_seq = msg.clone();
        other_seq.seq = 5;
        assert!(!verify(&key(1), &other_seq).is_accepted());
        let mut other_sender = msg;
        other_sender.sender_id = "drone1".into();
        assert!(!verify(&key(1), &other_sender).is_accepted());
    }

    #[test]
    fn oversized_payload_is_a_frame_error() {
        let big = vec![0u8; MAX_PAYLOAD + 1];
        assert!(matches!(sign(&key(1), "drone0", 0, &big), Err(Error::Frame { .. })));
        assert!(sign(&key(1), "drone0", 0, &big[..MAX_PAYLOAD]).is_ok());
    }

    #[test]
    fn frame_layout_is_exact() {
        let msg = sign(&key(1), "d0", 258, b"hi").unwrap();
        let frame = encode_frame(&msg).unwrap();
        let mut expected = b"AUVL\x01\x02d0".to_vec();
        expected.extend_from_slice(&[0, 0, 0, 0, 0, 0, 1, 2]);
        expected.extend_from_slice(&[0, 0, 0, 2]);
        expected.extend_from_slice(b"hi");
        expected.extend_from_slice(&msg.tag);
        assert_eq!(frame, expected);
        assert_eq!(msg.tag, hmac_sha256(&[1; 64], &expected[..expected.len() - 32]));
    }

    #[test]
    fn decode_errors_report_offsets() {
        let msg = sign(&key(1), "drone0", 0, b"hello").unwrap();
        let frame = encode_frame(&msg).unwrap();
        assert_eq!(decode_frame(&frame).unwrap(), msg);

        match decode_frame(&[]) {
            Err(Error::Frame { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(decode_frame(&frame[..frame.len() - 1]), Err(Error::Frame { .. })));

        let mut bad_magic = frame.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode_frame(&bad_magic), Err(Error::Frame { offset: 0, .. })));

        let mut bad_version = frame.clone();
        bad_version[4] = 2;
        assert!(matches!(decode_frame(&bad_version), Err(Error::Frame { offset: 4, .. })));

        let mut trailing = frame;
        trailing.push(0);
        assert!(matches!(decode_frame(&trailing), Err(Error::Frame { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn decode_inverts_encode(
            sender in "[a-z0-9_]{0,32}",
            seq in any::<u64>(),
            payload in proptest::collection::vec(any::<u8>(), 0..256),
            tag in any::<[u8; 32]>(),
        ) {
            let msg = AuthenticatedMessage { sender_id: sender, seq, payload, tag };
            let frame = encode_frame(&msg).unwrap();
            prop_assert_eq!(decode_frame(&frame).unwrap(), msg);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1_000))]

        #[test]
        fn any_single_payload_bit_flip_is_rejected(
            payload in proptest::collection::vec(any::<u8>(), 1..128),
            bit in any::<usize>(),
        ) {
            let k = key(7);
            let mut msg = sign(&k, "drone0", 3, &payload).unwrap();
            let bit = bit % (payload.len() * 8);
            msg.payload[bit / 8] ^= 1 << (bit % 8);
            prop_assert_eq!(verify(&k, &msg), Verdict::Rejected);
        }

        #[test]
        fn any_single_tag_bit_flip_is_rejected(
            payload in proptest::collection::vec(any::<u8>(), 0..128),
            bit in 0usize..256,
        ) {
            let k = key(7);
            let mut msg = sign(&k, "drone0", 3, &payload).unwrap();
            msg.tag[bit / 8] ^= 1 << (bit % 8);
            prop_assert_eq!(verify(&k, &msg), Verdict::Rejected);
        }
    }
}
