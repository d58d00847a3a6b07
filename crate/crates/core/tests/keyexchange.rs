use authlink::keyexchange::{
    compute_shared_secret, derive_session_key, encode_fixed, generate_keypair, generate_params, validate_public_key,
    well_known_params, DhParams, GroupId, KeyPair, KeyValidity, SharedSecret,
};
use authlink::Error;
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn is_prime(n: u64) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0)
}

/// Repeated multiplication; no shortcuts.
fn naive_pow(base: u64, exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    for _ in 0..exp {
        acc = acc * base % m;
    }
    acc
}

fn big(n: u64) -> BigUint {
    BigUint::from(n)
}

#[test]
fn toy_group_matches_hand_computation() {
    let params = DhParams::new(big(23), big(5)).unwrap();
    let a = KeyPair::from_private(&params, big(6)).unwrap();
    let b = KeyPair::from_private(&params, big(15)).unwrap();
    assert_eq!(a.public(), &big(8));
    assert_eq!(b.public(), &big(19));
    let s_ab = compute_shared_secret(&params, a.private(), b.public()).unwrap();
    let s_ba = compute_shared_secret(&params, b.private(), a.public()).unwrap();
    assert_eq!(s_ab.value(), &big(2));
    assert_eq!(s_ab, s_ba);
    assert_eq!(s_ab.encoded(), &[2]);
}

#[test]
fn small_primes_agree_with_naive_oracle() {
    let primes: Vec<u64> = (5..1u64 << 16).filter(|&n| is_prime(n)).collect();
    assert!(primes.len() > 6000);
    let mut rng = ChaCha20Rng::seed_from_u64(0x5eed);
    let mut checked = 0;
    // every 50th prime across the whole range
    for &p in primes.iter().step_by(50) {
        let g = rng.gen_range(2..=p - 2);
        let params = DhParams::new(big(p), big(g)).unwrap();
        for _ in 0..3 {
            let (x, y) = (rng.gen_range(2..=p - 2), rng.gen_range(2..=p - 2));
            let (gx, gy) = (naive_pow(g, x, p), naive_pow(g, y, p));
            let expected = naive_pow(gx, y, p);
            assert_eq!(naive_pow(gy, x, p), expected);

            let (Ok(a), Ok(b)) = (KeyPair::from_private(&params, big(x)), KeyPair::from_private(&params, big(y)))
            else {
                // degenerate public value (1 or p-1); validation must say so
                assert!(gx <= 1 || gx == p - 1 || gy <= 1 || gy == p - 1);
                continue;
            };
            assert_eq!(a.public(), &big(gx));
            assert_eq!(b.public(), &big(gy));
            let s = compute_shared_secret(&params, a.private(), b.public()).unwrap();
            assert_eq!(s.value(), &big(expected), "p={p} g={g} x={x} y={y}");
            assert_eq!(compute_shared_secret(&params, b.private(), a.public()).unwrap(), s);
            assert_eq!(s.encoded().len(), params.byte_len());
            checked += 1;
        }
    }
    assert!(checked >= 100, "only {checked} pairs checked");
}

#[test]
fn full_size_groups_agree() {
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let mut sessions = 0;
    for group in GroupId::ALL {
        let params = well_known_params(group);
        for _ in 0..4 {
            let a = generate_keypair(&params, &mut rng).unwrap();
            let b = generate_keypair(&params, &mut rng).unwrap();
            let s1 = compute_shared_secret(&params, a.private(), b.public()).unwrap();
            let s2 = compute_shared_secret(&params, b.private(), a.public()).unwrap();
            assert_eq!(s1, s2);
            assert_eq!(s1.encoded().len(), group.bits() as usize / 8);
            for hmac_bits in [512, 1024, 2048] {
                assert_eq!(derive_session_key(&s1, hmac_bits).unwrap(), derive_session_key(&s2, hmac_bits).unwrap());
            }
            sessions += 1;
        }
    }
    assert!(sessions >= 20);
}

#[test]
fn generated_parameters_agree() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for generator in [2, 5] {
        let params = generate_params(256, generator, &mut rng).unwrap();
        params.check(&mut rng).unwrap();
        assert_eq!(params.bits(), 256);
        assert_eq!(params.g(), &big(generator as u64));
        let a = generate_keypair(&params, &mut rng).unwrap();
        let b = generate_keypair(&params, &mut rng).unwrap();
        assert_eq!(
            compute_shared_secret(&params, a.private(), b.public()).unwrap(),
            compute_shared_secret(&params, b.private(), a.public()).unwrap()
        );
    }
}

#[test]
fn well_known_groups_are_safe_primes() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    for group in GroupId::ALL {
        let params = well_known_params(group);
        assert_eq!(params.p().bits() as u32, group.bits());
        params.check(&mut rng).unwrap_or_else(|e| panic!("{group}: {e}"));
    }
}

#[test]
fn secrets_with_leading_zero_bytes_keep_full_width() {
    let params = well_known_params(GroupId::Fixed256);
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let a = generate_keypair(&params, &mut rng).unwrap();
    let found = (0..20_000).find_map(|_| {
        let b = generate_keypair(&params, &mut rng).unwrap();
        let s = compute_shared_secret(&params, a.private(), b.public()).unwrap();
        (s.value().bits() <= 248).then_some(s)
    });
    let s = found.expect("a short secret appears about once in 256 draws");
    assert_eq!(s.encoded().len(), 32);
    assert_eq!(s.encoded()[0], 0);
    assert_eq!(BigUint::from_bytes_be(s.encoded()), *s.value());

    assert_eq!(encode_fixed(&big(1), 4), vec![0, 0, 0, 1]);
    assert_eq!(encode_fixed(&big(0x0102), 2), vec![1, 2]);
}

#[test]
fn public_key_bounds() {
    let params = DhParams::new(big(23), big(5)).unwrap();
    for (x, want) in [
        (0, KeyValidity::Degenerate),
        (1, KeyValidity::Degenerate),
        (2, KeyValidity::Valid),
        (21, KeyValidity::Valid),
        (22, KeyValidity::Degenerate),
        (23, KeyValidity::OutOfRange),
        (1000, KeyValidity::OutOfRange),
    ] {
        assert_eq!(validate_public_key(&params, &big(x)), want, "x={x}");
    }
    let a = KeyPair::from_private(&params, big(6)).unwrap();
    for bad in [0, 1, 22, 23] {
        assert!(matches!(compute_shared_secret(&params, a.private(), &big(bad)), Err(Error::KeyValidation(_))));
    }
}

#[test]
fn kdf_known_answers() {
    // SHA-256(secret || 00000001) || SHA-256(secret || 00000002), truncated
    let toy = derive_session_key(&SharedSecret::from_encoded(vec![2]), 512).unwrap();
    assert_eq!(
        hex::encode(toy.as_bytes()),
        "67c60c6612920fc8c68c55d63eadb34b0812235d7b2bf4f13f5692ed8f0cd856\
         5fb807ce100c90d2837ccfc94d8f8ba5d35cd3d6fafcd2f41f245b596e360057"
    );
    let zeros = derive_session_key(&SharedSecret::from_encoded(vec![0; 32]), 512).unwrap();
    assert_eq!(
        hex::encode(zeros.as_bytes()),
        "2158a8906d5e2c2be001bac943ab9cab4063536e1c546b40221fdf8db031a4bb\
         e15f374423633701e04fe17c1d640b34f2e27b8f6aec00e24f1dcf50ad0920b3"
    );
    for bits in [512, 1024, 2048] {
        let k = derive_session_key(&SharedSecret::from_encoded(vec![9; 256]), bits).unwrap();
        assert_eq!(k.as_bytes().len() * 8, bits as usize);
        assert_eq!(k.bits(), bits);
    }
    // longer keys extend shorter ones
    let long = derive_session_key(&SharedSecret::from_encoded(vec![2]), 2048).unwrap();
    assert_eq!(&long.as_bytes()[..64], toy.as_bytes());
}

#[test]
fn unsupported_sizes_are_rejected() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    assert!(matches!(generate_params(999, 2, &mut rng), Err(Error::Parameter(_))));
    assert!(matches!(generate_params(2028, 2, &mut rng), Err(Error::Parameter(_))));
    assert!(matches!(generate_params(256, 3, &mut rng), Err(Error::Parameter(_))));
    assert!(GroupId::for_bits(2028).is_none());
    assert!(DhParams::new(big(24), big(5)).is_err());
    assert!(DhParams::new(big(23), big(22)).is_err());
}

#[test]
fn keypairs_are_reproducible_from_seed() {
    let params = well_known_params(GroupId::Modp2048);
    let a = generate_keypair(&params, &mut ChaCha20Rng::seed_from_u64(77)).unwrap();
    let b = generate_keypair(&params, &mut ChaCha20Rng::seed_from_u64(77)).unwrap();
    assert_eq!(a, b);
    let c = generate_keypair(&params, &mut ChaCha20Rng::seed_from_u64(78)).unwrap();
    assert_ne!(a.public(), c.public());
}
