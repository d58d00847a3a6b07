//! Diffie-Hellman group management, key generation, shared-secret
//! computation and HMAC session-key derivation.

mod groups;
pub mod prime;

use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::One;
use rand::RngCore;
use sha2::{Digest, Sha256};

pub use groups::GroupId;

use crate::error::{Error, Result};

pub const SUPPORTED_DH_BITS: [u32; 5] = [256, 512, 1024, 2048, 4096];
pub const SUPPORTED_HMAC_BITS: [u32; 3] = [512, 1024, 2048];
pub const SUPPORTED_GENERATORS: [u32; 2] = [2, 5];

/// A Diffie-Hellman group: prime modulus `p`, generator `g` and the bit length of `p`.
#[derive(Clone, PartialEq, Eq)]
pub struct DhParams {
    p: BigUint,
    g: BigUint,
    bits: u32,
    group: Option<GroupId>,
}

impl DhParams {
    /// Build a group from an explicit modulus and generator.
    ///
    /// Only the cheap structural invariants are checked here (odd modulus,
    /// `2 <= g <= p-2`); use [`DhParams::check`] for primality.
    pub fn new(p: BigUint, g: BigUint) -> Result<Self> {
        if p.is_even() || p < BigUint::from(5u32) {
            return Err(Error::Parameter("modulus must be an odd number >= 5".into()));
        }
        let two = BigUint::from(2u32);
        if g < two || g > &p - &two {
            return Err(Error::Parameter("generator must lie in [2, p-2]".into()));
        }
        let bits = p.bits() as u32;
        Ok(DhParams { p, g, bits, group: None })
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// The fixed group these parameters came from, `None` for generated or custom groups.
    pub fn group(&self) -> Option<GroupId> {
        self.group
    }

    /// Byte length of any value encoded modulo `p`.
    pub fn byte_len(&self) -> usize {
        (self.bits as usize).div_ceil(8)
    }

    /// Full invariant check, including a probabilistic safe-prime test on `p`.
    pub fn check<R: RngCore + ?Sized>(&self, rng: &mut R) -> Result<()> {
        if self.p.bits() as u32 != self.bits || self.p.is_even() {
            return Err(Error::Parameter("modulus bit length mismatch".into()));
        }
        let two = BigUint::from(2u32);
        if self.g < two || self.g > &self.p - &two {
            return Err(Error::Parameter("generator out of range".into()));
        }
        if !prime::is_safe_prime(&self.p, rng)? {
            return Err(Error::Parameter("modulus is not a safe prime".into()));
        }
        Ok(())
    }
}

impl fmt::Debug for DhParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DhParams")
            .field("bits", &self.bits)
            .field("g", &self.g)
            .field("group", &self.group)
            .field("p", &format_args!("{:x}", self.p))
            .finish()
    }
}

/// Generate a fresh safe-prime group of `bits` bits for `generator` (2 or 5).
pub fn generate_params<R: RngCore + ?Sized>(bits: u32, generator: u32, rng: &mut R) -> Result<DhParams> {
    if !SUPPORTED_DH_BITS.contains(&bits) {
        return Err(Error::Parameter(format!("unsupported DH size {bits}; expected one of {SUPPORTED_DH_BITS:?}")));
    }
    if !SUPPORTED_GENERATORS.contains(&generator) {
        return Err(Error::Parameter(format!("unsupported generator {generator}; expected 2 or 5")));
    }
    let p = prime::generate_safe_prime(bits as u64, generator, rng)?;
    Ok(DhParams { p, g: BigUint::from(generator), bits, group: None })
}

/// One of the built-in groups, generator 2.
pub fn well_known_params(group: GroupId) -> DhParams {
    DhParams { p: group.prime(), g: BigUint::from(2u32), bits: group.bits(), group: Some(group) }
}

/// A node's secret exponent and the matching public value `g^private mod p`.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyPair {
    private: BigUint,
    public: BigUint,
}

impl KeyPair {
    /// Derive the pair for a chosen exponent. The exponent must lie in
    /// `[2, p-2]` and yield a non-degenerate public value.
    pub fn from_private(params: &DhParams, private: BigUint) -> Result<Self> {
        check_exponent(params, &private)?;
        let public = params.g.modpow(&private, &params.p);
        if !validate_public_key(params, &public).is_valid() {
            return Err(Error::Parameter("exponent yields a degenerate public value".into()));
        }
        Ok(KeyPair { private, public })
    }

    pub fn private(&self) -> &BigUint {
        &self.private
    }

    pub fn public(&self) -> &BigUint {
        &self.public
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("private", &"<redacted>")
            .field("public", &format_args!("{:x}", self.public))
            .finish()
    }
}

fn check_exponent(params: &DhParams, exponent: &BigUint) -> Result<()> {
    let two = BigUint::from(2u32);
    if exponent < &two || exponent > &(&params.p - &two) {
        return Err(Error::Parameter("private exponent must lie in [2, p-2]".into()));
    }
    Ok(())
}

/// Sample a private exponent uniformly from `[2, p-2]`, resampling if the
/// public value would be degenerate.
pub fn generate_keypair<R: RngCore + ?Sized>(params: &DhParams, rng: &mut R) -> Result<KeyPair> {
    let two = BigUint::from(2u32);
    let high = &params.p - &two;
    loop {
        let private = prime::random_in_range(&two, &high, rng)?;
        let public = params.g.modpow(&private, &params.p);
        if validate_public_key(params, &public).is_valid() {
            return Ok(KeyPair { private, public });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyValidity {
    Valid,
    /// 0, 1 or p-1.
    Degenerate,
    /// p or larger.
    OutOfRange,
}

impl KeyValidity {
    pub fn is_valid(self) -> bool {
        self == KeyValidity::Valid
    }
}

impl fmt::Display for KeyValidity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KeyValidity::Valid => "valid",
            KeyValidity::Degenerate => "degenerate public value",
            KeyValidity::OutOfRange => "public value not reduced modulo p",
        })
    }
}

/// Accepts exactly the candidates in `[2, p-2]`.
pub fn validate_public_key(params: &DhParams, candidate: &BigUint) -> KeyValidity {
    let one = BigUint::one();
    let p_minus_1 = &params.p - &one;
    if candidate >= &params.p {
        KeyValidity::OutOfRange
    } else if candidate <= &one || candidate == &p_minus_1 {
        KeyValidity::Degenerate
    } else {
        KeyValidity::Valid
    }
}

/// `peer_public^own_private mod p` plus its fixed-width big-endian encoding.
#[derive(Clone, PartialEq, Eq)]
pub struct SharedSecret {
    value: BigUint,
    encoded: Vec<u8>,
}

impl SharedSecret {
    /// Wrap an already fixed-length encoded secret.
    pub fn from_encoded(encoded: Vec<u8>) -> Self {
        SharedSecret { value: BigUint::from_bytes_be(&encoded), encoded }
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    /// Always `ceil(bits/8)` bytes, left-padded with zeros.
    pub fn encoded(&self) -> &[u8] {
        &self.encoded
    }
}

impl fmt::Debug for SharedSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SharedSecret").field("len", &self.encoded.len()).finish_non_exhaustive()
    }
}

/// Left-pad the big-endian bytes of `value` to `len` bytes.
pub fn encode_fixed(value: &BigUint, len: usize) -> Vec<u8> {
    let raw = value.to_bytes_be();
    let raw = if raw == [0] { Vec::new() } else { raw };
    let mut out = vec![0u8; len.saturating_sub(raw.len())];
    out.extend_from_slice(&raw);
    out
}

pub fn compute_shared_secret(params: &DhParams, own_private: &BigUint, peer_public: &BigUint) -> Result<SharedSecret> {
    let validity = validate_public_key(params, peer_public);
    if !validity.is_valid() {
        return Err(Error::KeyValidation(validity.to_string()));
    }
    check_exponent(params, own_private)?;
    let value = peer_public.modpow(own_private, &params.p);
    let encoded = encode_fixed(&value, params.byte_len());
    Ok(SharedSecret { value, encoded })
}

/// HMAC key material derived from a shared secret.
#[derive(Clone, PartialEq, Eq)]
pub struct SessionKey {
    bytes: Vec<u8>,
    bits: u32,
}

impl SessionKey {
    /// Wrap raw key bytes. Intended for tests and foreign callers that
    /// already hold key material.
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        let bits = (bytes.len() * 8) as u32;
        SessionKey { bytes, bits }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// First 8 hex digits of SHA-256 over the key, safe to log.
    pub fn fingerprint(&self) -> String {
        hex::encode(&Sha256::digest(&self.bytes)[..4])
    }
}

impl fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SessionKey").field("bits", &self.bits).field("fingerprint", &self.fingerprint()).finish()
    }
}

/// Counter-mode SHA-256 expansion: `T_i = SHA-256(secret || i_be32)` for
/// `i = 1, 2, ...`, truncated to `hmac_bits / 8` bytes.
pub fn derive_session_key(secret: &SharedSecret, hmac_bits: u32) -> Result<SessionKey> {
    if hmac_bits == 0 || hmac_bits % 8 != 0 {
        return Err(Error::Parameter(format!("HMAC key size {hmac_bits} is not a positive multiple of 8")));
    }
    let len = (hmac_bits / 8) as usize;
    let mut bytes = Vec::with_capacity(len + 32);
    let mut counter: u32 = 1;
    while bytes.len() < len {
        let mut hasher = Sha256::new();
        hasher.update(secret.encoded());
        hasher.update(counter.to_be_bytes());
        bytes.extend_from_slice(&hasher.finalize());
        counter += 1;
    }
    bytes.truncate(len);
    Ok(SessionKey { bytes, bits: hmac_bits })
}
