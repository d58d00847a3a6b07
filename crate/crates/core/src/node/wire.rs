//! Messages carried on `/<node_id>/dh_public_key`.
//!
//! Public-key message, integers big-endian:
//!
//! ```text
//! "AUPK" | 0x01 | sender_len:u8 | sender | params_id:u8 | bits:u16
//!        | p_len:u16 | p | g_len:u16 | g | public_len:u16 | public
//! ```
//!
//! `params_id` is 0 for a generated group, otherwise [`GroupId::wire_id`].
//! `p` and `public` are fixed-width (`ceil(bits/8)` bytes).
//!
//! Key confirmation (or abort notice):
//!
//! ```text
//! "AUKC" | 0x01 | sender_len:u8 | sender | status:u8 | tag[32]
//! ```

use num_bigint::BigUint;

use crate::authchannel::{hmac_sha256, verify_hmac_sha256, Reader, TAG_LEN};
use crate::error::{Error, Result};
use crate::keyexchange::{encode_fixed, well_known_params, DhParams, GroupId, SessionKey};

pub const PUBKEY_MAGIC: &[u8; 4] = b"AUPK";
pub const CONFIRM_MAGIC: &[u8; 4] = b"AUKC";
pub const WIRE_VERSION: u8 = 0x01;

const CONFIRM_LABEL: &[u8] = b"KEYCONF";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKeyMessage {
    pub sender_id: String,
    pub group: Option<GroupId>,
    pub bits: u32,
    pub p: BigUint,
    pub g: BigUint,
    pub public: BigUint,
}

impl PublicKeyMessage {
    pub fn new(sender_id: &str, params: &DhParams, public: &BigUint) -> Self {
        PublicKeyMessage {
            sender_id: sender_id.to_owned(),
            group: params.group(),
            bits: params.bits(),
            p: params.p().clone(),
            g: params.g().clone(),
            public: public.clone(),
        }
    }

    fn width(&self) -> usize {
        (self.bits as usize).div_ceil(8)
    }

    pub fn encode(&self) -> Vec<u8> {
        let width = self.width();
        let g = self.g.to_bytes_be();
        let mut out = Vec::with_capacity(16 + self.sender_id.len() + 2 * width + g.len());
        out.extend_from_slice(PUBKEY_MAGIC);
        out.push(WIRE_VERSION);
        out.push(self.sender_id.len() as u8);
        out.extend_from_slice(self.sender_id.as_bytes());
        out.push(self.group.map_or(0, GroupId::wire_id));
        out.extend_from_slice(&(self.bits as u16).to_be_bytes());
        out.extend_from_slice(&(width as u16).to_be_bytes());
        out.extend_from_slice(&encode_fixed(&self.p, width));
        out.extend_from_slice(&(g.len() as u16).to_be_bytes());
        out.extend_from_slice(&g);
        out.extend_from_slice(&(width as u16).to_be_bytes());
        out.extend_from_slice(&encode_fixed(&self.public, width));
        out
    }

    /// Fixed-width big-endian bytes of the public value, as framed.
    pub fn public_bytes(&self) -> Vec<u8> {
        encode_fixed(&self.public, self.width())
    }

    /// Same message with the public value replaced by raw fixed-width bytes.
    pub fn with_public_bytes(&self, bytes: &[u8]) -> Self {
        PublicKeyMessage { public: BigUint::from_bytes_be(bytes), ..self.clone() }
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self> {
        let sender_len = r.u8("sender length")? as usize;
        let sender_id = r.utf8(sender_len, "sender id")?;
        let id_at = r.pos();
        let params_id = r.u8("params id")?;
        let group = match params_id {
            0 => None,
            id => {
                Some(GroupId::from_wire_id(id).ok_or_else(|| Error::frame(id_at, format!("unknown params id {id}")))?)
            }
        };
        let bits = r.u16("bit size")? as u32;
        let width = (bits as usize).div_ceil(8);
        let p_at = r.pos();
        let p_len = r.u16("modulus length")? as usize;
        if p_len != width {
            return Err(Error::frame(p_at, "modulus length does not match bit size"));
        }
        let p = BigUint::from_bytes_be(r.take(p_len, "modulus")?);
        let g_len = r.u16("generator length")? as usize;
        let g = BigUint::from_bytes_be(r.take(g_len, "generator")?);
        let pub_at = r.pos();
        let pub_len = r.u16("public length")? as usize;
        if pub_len != width {
            return Err(Error::frame(pub_at, "public value length does not match bit size"));
        }
        let public = BigUint::from_bytes_be(r.take(pub_len, "public value")?);
        r.finish()?;
        Ok(PublicKeyMessage { sender_id, group, bits, p, g, public })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_magic(PUBKEY_MAGIC, WIRE_VERSION)?;
        Self::decode_body(&mut r)
    }

    /// Rebuild the group this message announces. Fixed groups must match
    /// the built-in constants exactly.
    pub fn params(&self) -> Result<DhParams> {
        let params = match self.group {
            Some(group) => {
                let known = well_known_params(group);
                if known.p() != &self.p || known.g() != &self.g || known.bits() != self.bits {
                    return Err(Error::KeyValidation(format!("parameters do not match {group}")));
                }
                known
            }
            None => DhParams::new(self.p.clone(), self.g.clone()).map_err(|e| Error::KeyValidation(e.to_string()))?,
        };
        if params.bits() != self.bits {
            return Err(Error::KeyValidation("modulus bit length does not match announced size".into()));
        }
        Ok(params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfirmStatus {
    Confirm,
    /// The sender gave up on the exchange before it could confirm.
    Abort,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfirmMessage {
    pub sender_id: String,
    pub status: ConfirmStatus,
    pub tag: [u8; TAG_LEN],
}

fn confirm_input(node_id: &str) -> Vec<u8> {
    let mut data = CONFIRM_LABEL.to_vec();
    data.extend_from_slice(node_id.as_bytes());
    data
}

impl ConfirmMessage {
    /// `HMAC(session_key, "KEYCONF" || sender_id)`.
    pub fn confirm(sender_id: &str, key: &SessionKey) -> Self {
        ConfirmMessage {
            sender_id: sender_id.to_owned(),
            status: ConfirmStatus::Confirm,
            tag: hmac_sha256(key.as_bytes(), &confirm_input(sender_id)),
        }
    }

    pub fn abort(sender_id: &str) -> Self {
        ConfirmMessage { sender_id: sender_id.to_owned(), status: ConfirmStatus::Abort, tag: [0; TAG_LEN] }
    }

    /// Constant-time check that the sender derived `key`.
    pub fn verifies_under(&self, key: &SessionKey) -> bool {
        self.status == ConfirmStatus::Confirm
            && verify_hmac_sha256(key.as_bytes(), &confirm_input(&self.sender_id), &self.tag)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 1 + 1 + self.sender_id.len() + 1 + TAG_LEN);
        out.extend_from_slice(CONFIRM_MAGIC);
        out.push(WIRE_VERSION);
        out.push(self.sender_id.len() as u8);
        out.extend_from_slice(self.sender_id.as_bytes());
        out.push(match self.status {
            ConfirmStatus::Confirm => 0,
            ConfirmStatus::Abort => 1,
        });
        out.extend_from_slice(&self.tag);
        out
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self> {
        let sender_len = r.u8("sender length")? as usize;
        let sender_id = r.utf8(sender_len, "sender id")?;
        let at = r.pos();
        let status = match r.u8("status")? {
            0 => ConfirmStatus::Confirm,
            1 => ConfirmStatus::Abort,
            other => return Err(Error::frame(at, format!("unknown confirmation status {other}"))),
        };
        let tag = r.take(TAG_LEN, "tag")?.try_into().unwrap();
        r.finish()?;
        Ok(ConfirmMessage { sender_id, status, tag })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KeyTopicMessage {
    PublicKey(PublicKeyMessage),
    Confirm(ConfirmMessage),
}

pub fn decode_key_topic(bytes: &[u8]) -> Result<KeyTopicMessage> {
    if bytes.starts_with(PUBKEY_MAGIC) {
        return PublicKeyMessage::decode(bytes).map(KeyTopicMessage::PublicKey);
    }
    let mut r = Reader::new(bytes);
    r.expect_magic(CONFIRM_MAGIC, WIRE_VERSION)?;
    ConfirmMessage::decode_body(&mut r).map(KeyTopicMessage::Confirm)
}
