//! Miller-Rabin testing and safe-prime search.
//!
//! The search walks candidates `p ≡ rem (mod step)` so that the requested
//! generator lands in the prime-order subgroup of size `(p-1)/2`, and sieves
//! both `p` and `(p-1)/2` against small primes before any modular
//! exponentiation is attempted.

use std::sync::OnceLock;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::RngCore;

use crate::error::{Error, Result};

/// 4^-40 = 2^-80 worst-case error per test.
pub const MILLER_RABIN_ROUNDS: usize = 40;

const SIEVE_LIMIT: u32 = 1 << 20;

/// Candidates sieved per random starting point.
const SEARCH_WINDOW: u32 = 1 << 16;

fn small_primes() -> &'static [u32] {
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let n = SIEVE_LIMIT as usize;
        let mut composite = vec![false; n];
        let mut out = Vec::new();
        for i in 2..n {
            if !composite[i] {
                out.push(i as u32);
                let mut j = i * i;
                while j < n {
                    composite[j] = true;
                    j += i;
                }
            }
        }
        out
    })
}

fn fill<R: RngCore + ?Sized>(rng: &mut R, buf: &mut [u8]) -> Result<()> {
    rng.try_fill_bytes(buf).map_err(|e| Error::Entropy(e.to_string()))
}

/// Uniform sample from `[0, bound)` by masked rejection sampling.
pub fn random_below<R: RngCore + ?Sized>(bound: &BigUint, rng: &mut R) -> Result<BigUint> {
    if bound.is_zero() {
        return Err(Error::Parameter("empty sampling range".into()));
    }
    let bits = bound.bits();
    let len = bits.div_ceil(8) as usize;
    let excess = (len as u64 * 8 - bits) as u32;
    let mask = 0xffu8 >> excess;
    let mut buf = vec![0u8; len];
    loop {
        fill(rng, &mut buf)?;
        buf[0] &= mask;
        let candidate = BigUint::from_bytes_be(&buf);
        if &candidate < bound {
            return Ok(candidate);
        }
    }
}

/// Uniform sample from the inclusive range `[low, high]`.
pub fn random_in_range<R: RngCore + ?Sized>(low: &BigUint, high: &BigUint, rng: &mut R) -> Result<BigUint> {
    if high < low {
        return Err(Error::Parameter("empty sampling range".into()));
    }
    let span = high - low + BigUint::one();
    Ok(low + random_below(&span, rng)?)
}

/// Random integer with exactly `bits` significant bits.
fn random_with_bits<R: RngCore + ?Sized>(bits: u64, rng: &mut R) -> Result<BigUint> {
    let len = bits.div_ceil(8) as usize;
    let mut buf = vec![0u8; len];
    fill(rng, &mut buf)?;
    let excess = (len as u64 * 8 - bits) as u32;
    buf[0] &= 0xff >> excess;
    buf[0] |= 0x80 >> excess;
    Ok(BigUint::from_bytes_be(&buf))
}

/// Probabilistic primality test: trial division by small primes followed by
/// `rounds` Miller-Rabin rounds with bases drawn from `rng`.
pub fn is_probable_prime<R: RngCore + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> Result<bool> {
    let two = BigUint::from(2u32);
    if n < &two {
        return Ok(false);
    }
    for &sp in small_primes().iter().take(256) {
        let sp_big = BigUint::from(sp);
        if n == &sp_big {
            return Ok(true);
        }
        if (n % sp).is_zero() {
            return Ok(false);
        }
    }

    let one = BigUint::one();
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    let upper = n - &two;

    'witness: for _ in 0..rounds {
        let a = random_in_range(&two, &upper, rng)?;
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n_minus_1 {
                continue 'witness;
            }
            if x == one {
                return Ok(false);
            }
        }
        return Ok(false);
    }
    Ok(true)
}

/// `2^(n-1) mod n == 1`, the cheap pre-filter run before full Miller-Rabin.
fn passes_fermat_base2(n: &BigUint) -> bool {
    let one = BigUint::one();
    BigUint::from(2u32).modpow(&(n - &one), n) == one
}

/// Residue class that makes `generator` a quadratic residue modulo a safe
/// prime, so it generates the subgroup of order `(p-1)/2`.
pub(crate) fn residue_class(generator: u32) -> Result<(u32, u32)> {
    match generator {
        2 => Ok((24, 23)),
        5 => Ok((60, 59)),
        other => Err(Error::Parameter(format!("unsupported generator {other}; expected 2 or 5"))),
    }
}

/// `base mod r` for a small `r`, from the little-endian 64-bit limbs of `base`.
fn mod_small(limbs: &[u64], r: u32) -> u32 {
    let r = r as u128;
    limbs.iter().rev().fold(0u128, |acc, &d| ((acc << 64) | d as u128) % r) as u32
}

/// Inverse of `a` modulo the prime `r` (`a` not divisible by `r`).
fn inv_mod(a: u32, r: u32) -> u32 {
    let (mut t, mut new_t) = (0i64, 1i64);
    let (mut rem, mut new_rem) = (r as i64, a as i64);
    while new_rem != 0 {
        let q = rem / new_rem;
        (t, new_t) = (new_t, t - q * new_t);
        (rem, new_rem) = (new_rem, rem - q * new_rem);
    }
    t.rem_euclid(r as i64) as u32
}

/// Search for a safe prime `p` with exactly `bits` bits and `(p-1)/2` prime.
///
/// Candidates are `base + step*k` for `k` in a window; a sieve over the
/// window strikes every `k` where `p ≡ 0` or `p ≡ 1` (i.e. `(p-1)/2 ≡ 0`)
/// modulo a small prime, so only survivors reach modular exponentiation.
pub fn generate_safe_prime<R: RngCore + ?Sized>(bits: u64, generator: u32, rng: &mut R) -> Result<BigUint> {
    if bits < 16 {
        return Err(Error::Parameter(format!("safe prime of {bits} bits is too small")));
    }
    let (step, rem) = residue_class(generator)?;
    // only primes below sqrt((p-1)/2), so a struck candidate is never the prime itself
    let limit = if bits >= 42 { u64::MAX } else { 1u64 << ((bits - 2) / 2) };
    let sieve: Vec<u32> = small_primes().iter().copied().filter(|&r| step % r != 0 && (r as u64) < limit).collect();
    let step_big = BigUint::from(step);
    let window = SEARCH_WINDOW as usize;
    let mut struck = vec![false; window];

    loop {
        let start = random_with_bits(bits, rng)?;
        let offset = (&start % step).to_u32().unwrap_or(0);
        let base = start - offset + rem;
        if base.bits() != bits {
            continue;
        }

        struck.fill(false);
        let limbs = base.to_u64_digits();
        for &r in &sieve {
            let b = mod_small(&limbs, r) as u64;
            let inv = inv_mod(step % r, r) as u64;
            let r64 = r as u64;
            // k with base + step*k ≡ target (mod r)
            for target in [0u64, 1] {
                let mut k = ((target + r64 - b) % r64 * inv % r64) as usize;
                while k < window {
                    struck[k] = true;
                    k += r as usize;
                }
            }
        }

        for k in (0..window).filter(|&k| !struck[k]) {
            let candidate = &base + &step_big * BigUint::from(k);
            if candidate.bits() != bits {
                break;
            }
            let q: BigUint = (&candidate - BigUint::one()) >> 1;
            if !passes_fermat_base2(&q) || !passes_fermat_base2(&candidate) {
                continue;
            }
            if is_probable_prime(&q, MILLER_RABIN_ROUNDS, rng)?
                && is_probable_prime(&candidate, MILLER_RABIN_ROUNDS, rng)?
            {
                return Ok(candidate);
            }
        }
    }
}

/// `true` when `p` and `(p-1)/2` both pass [`is_probable_prime`].
pub fn is_safe_prime<R: RngCore + ?Sized>(p: &BigUint, rng: &mut R) -> Result<bool> {
    if p.is_even() || p < &BigUint::from(5u32) {
        return Ok(false);
    }
    let q: BigUint = (p - BigUint::one()) >> 1;
    Ok(is_probable_prime(&q, MILLER_RABIN_ROUNDS, rng)? && is_probable_prime(p, MILLER_RABIN_ROUNDS, rng)?)
}
