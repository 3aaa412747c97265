//! Additively homomorphic public-key encryption (Paillier, `g = n + 1`).
//!
//! Ciphertexts carry the fingerprint of the key they were produced under, so
//! mixing ciphertexts across keys is an error instead of silent garbage.
//! Addition is modulo `n`; callers that need exact sums must keep totals
//! below [`HePublicKey::modulus`].

use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::encoding::{DecodeError, Reader, Writer};
use crate::fingerprint16;

/// Keys below this modulus size are accepted but flagged as non-production.
pub const PRODUCTION_BITS: u32 = 2048;
pub const MIN_BITS: u32 = 16;

const FINGERPRINT_TAG: &str = "veilsum/he-pk/v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HeError {
    #[error("modulus bit length {0} must be even and at least {MIN_BITS}")]
    InvalidBitLength(u32),
    #[error("primes must be distinct odd primes")]
    InvalidPrimes,
    #[error("plaintext is not in [0, n)")]
    PlaintextOutOfRange,
    #[error("encryption nonce must be in [1, n) and coprime to n")]
    InvalidNonce,
    #[error("ciphertext was produced under a different key")]
    FingerprintMismatch,
    #[error("ciphertext value is outside [1, n^2) or not coprime to n")]
    MalformedCiphertext,
    #[error("cannot aggregate an empty list of ciphertexts")]
    Empty,
}

#[derive(Clone, PartialEq, Eq)]
pub struct HePublicKey {
    n: BigUint,
    n_squared: BigUint,
    bit_length: u32,
    fingerprint: [u8; 16],
}

#[derive(Clone)]
pub struct HePrivateKey {
    lambda: BigUint,
    mu: BigUint,
    public: HePublicKey,
}

#[derive(Clone, PartialEq, Eq)]
pub struct HeCiphertext {
    value: BigUint,
    key_fingerprint: [u8; 16],
}

impl fmt::Debug for HePublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HePublicKey")
            .field("bit_length", &self.bit_length)
            .field("fingerprint", &hex::encode(self.fingerprint))
            .finish()
    }
}

impl fmt::Debug for HePrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HePrivateKey")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

impl fmt::Debug for HeCiphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "HeCiphertext({}..)",
            self.value
                .to_str_radix(16)
                .chars()
                .take(16)
                .collect::<String>()
        )
    }
}

/// Generates a key pair whose modulus has exactly `bit_length` bits, built
/// from two distinct primes of `bit_length / 2` bits each.
pub fn keygen<R: RngCore + CryptoRng>(
    bit_length: u32,
    rng: &mut R,
) -> Result<(HePublicKey, HePrivateKey), HeError> {
    if bit_length < MIN_BITS || !bit_length.is_multiple_of(2) {
        return Err(HeError::InvalidBitLength(bit_length));
    }
    let half = (bit_length / 2) as u64;
    loop {
        let p = random_prime(half, rng);
        let q = random_prime(half, rng);
        if p == q {
            continue;
        }
        let n = &p * &q;
        if n.bits() != bit_length as u64 {
            continue;
        }
        if let Ok(pair) = from_primes(&p, &q) {
            return Ok(pair);
        }
    }
}

// Top two bits set so the product of two such primes has full width.
fn random_prime<R: RngCore + CryptoRng>(bits: u64, rng: &mut R) -> BigUint {
    loop {
        let mut candidate = rng.gen_biguint(bits);
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(bits - 2, true);
        candidate.set_bit(0, true);
        if glass_pumpkin::prime::check_with(&candidate, rng) {
            return candidate;
        }
    }
}

/// Builds a key pair from explicit primes. Used for toy keys in tests.
pub fn from_primes(p: &BigUint, q: &BigUint) -> Result<(HePublicKey, HePrivateKey), HeError> {
    let two = BigUint::from(2u8);
    if p == q || p <= &two || q <= &two || p.is_even() || q.is_even() {
        return Err(HeError::InvalidPrimes);
    }
    let n = p * q;
    let one = BigUint::one();
    if !n.gcd(&((p - &one) * (q - &one))).is_one() {
        return Err(HeError::InvalidPrimes);
    }
    let public = HePublicKey::from_modulus(n);
    let lambda = (p - &one).lcm(&(q - &one));
    // g = n + 1, so g^lambda mod n^2 = 1 + lambda*n and L(.) = lambda mod n.
    let g_lambda = (&public.n + &one).modpow(&lambda, &public.n_squared);
    let l = l_function(&g_lambda, &public.n);
    let mu = mod_inverse(&l, &public.n).ok_or(HeError::InvalidPrimes)?;
    Ok((public.clone(), HePrivateKey { lambda, mu, public }))
}

fn l_function(u: &BigUint, n: &BigUint) -> BigUint {
    (u - BigUint::one()) / n
}

pub(crate) fn mod_inverse(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    a.modinv(m)
}

impl HePublicKey {
    fn from_modulus(n: BigUint) -> Self {
        let n_squared = &n * &n;
        let bit_length = n.bits() as u32;
        let mut w = Writer::new();
        w.biguint(&n);
        let fingerprint = fingerprint16(FINGERPRINT_TAG, &w.finish());
        Self {
            n,
            n_squared,
            bit_length,
            fingerprint,
        }
    }

    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub fn bit_length(&self) -> u32 {
        self.bit_length
    }

    pub fn fingerprint(&self) -> [u8; 16] {
        self.fingerprint
    }

    pub fn is_production(&self) -> bool {
        self.bit_length >= PRODUCTION_BITS
    }

    /// Encrypts `m` with a fresh uniformly random nonce.
    pub fn encrypt<R: RngCore + CryptoRng>(
        &self,
        m: &BigUint,
        rng: &mut R,
    ) -> Result<HeCiphertext, HeError> {
        if m >= &self.n {
            return Err(HeError::PlaintextOutOfRange);
        }
        let one = BigUint::one();
        let r = loop {
            let r = rng.gen_biguint_range(&one, &self.n);
            if r.gcd(&self.n).is_one() {
                break r;
            }
        };
        self.encrypt_with_nonce(m, &r)
    }

    /// `c = (1 + n)^m * r^n mod n^2` for an explicit nonce `r`.
    pub fn encrypt_with_nonce(&self, m: &BigUint, r: &BigUint) -> Result<HeCiphertext, HeError> {
        if m >= &self.n {
            return Err(HeError::PlaintextOutOfRange);
        }
        if r.is_zero() || r >= &self.n || !r.gcd(&self.n).is_one() {
            return Err(HeError::InvalidNonce);
        }
        // (1 + n)^m = 1 + m*n (mod n^2)
        let gm = (BigUint::one() + m * &self.n) % &self.n_squared;
        let rn = r.modpow(&self.n, &self.n_squared);
        Ok(HeCiphertext {
            value: (gm * rn) % &self.n_squared,
            key_fingerprint: self.fingerprint,
        })
    }

    fn check(&self, c: &HeCiphertext) -> Result<(), HeError> {
        if c.key_fingerprint != self.fingerprint {
            return Err(HeError::FingerprintMismatch);
        }
        if c.value.is_zero() || c.value >= self.n_squared || !c.value.gcd(&self.n).is_one() {
            return Err(HeError::MalformedCiphertext);
        }
        Ok(())
    }

    /// Homomorphic addition: decrypts to `(m1 + m2) mod n`.
    pub fn add(&self, c1: &HeCiphertext, c2: &HeCiphertext) -> Result<HeCiphertext, HeError> {
        self.check(c1)?;
        self.check(c2)?;
        Ok(HeCiphertext {
            value: (&c1.value * &c2.value) % &self.n_squared,
            key_fingerprint: self.fingerprint,
        })
    }

    /// Left fold of [`add`](Self::add) over a nonempty list.
    pub fn add_many(&self, cs: &[HeCiphertext]) -> Result<HeCiphertext, HeError> {
        let (first, rest) = cs.split_first().ok_or(HeError::Empty)?;
        self.check(first)?;
        rest.iter()
            .try_fold(first.clone(), |acc, c| self.add(&acc, c))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.biguint(&self.n);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let n = r.biguint()?;
        r.finish()?;
        if n.bits() < MIN_BITS as u64 || n.is_even() {
            return Err(DecodeError::Invalid("HE modulus"));
        }
        Ok(Self::from_modulus(n))
    }
}

impl HePrivateKey {
    pub fn public(&self) -> &HePublicKey {
        &self.public
    }

    pub fn decrypt(&self, c: &HeCiphertext) -> Result<BigUint, HeError> {
        let pk = &self.public;
        pk.check(c)?;
        let u = c.value.modpow(&self.lambda, &pk.n_squared);
        Ok((l_function(&u, &pk.n) * &self.mu) % &pk.n)
    }

    pub fn lambda(&self) -> &BigUint {
        &self.lambda
    }

    pub fn mu(&self) -> &BigUint {
        &self.mu
    }
}

impl HeCiphertext {
    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn key_fingerprint(&self) -> [u8; 16] {
        self.key_fingerprint
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.key_fingerprint).biguint(&self.value);
        w.finish()
    }

    /// Structural decoding only; range and coprimality are checked against a
    /// key by the operations that consume the ciphertext.
    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let key_fingerprint = r.array::<16>()?;
        let value = r.biguint()?;
        r.finish()?;
        Ok(Self {
            value,
            key_fingerprint,
        })
    }

    #[cfg(test)]
    pub(crate) fn from_parts(value: BigUint, key_fingerprint: [u8; 16]) -> Self {
        Self {
            value,
            key_fingerprint,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn toy() -> (HePublicKey, HePrivateKey) {
        from_primes(&BigUint::from(5u8), &BigUint::from(7u8)).unwrap()
    }

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn toy_key_arithmetic() {
        let (pk, sk) = toy();
        assert_eq!(pk.modulus(), &big(35));
        assert_eq!(sk.lambda(), &big(12));
        // mu * L(g^lambda mod n^2) = 1 mod n
        let g_lambda = big(36).modpow(&big(12), &big(1225));
        assert_eq!(
            (l_function(&g_lambda, &big(35)) * sk.mu()) % big(35),
            big(1)
        );
    }

    #[test]
    fn zero_with_unit_nonce_is_one() {
        let (pk, sk) = toy();
        let c = pk.encrypt_with_nonce(&big(0), &big(1)).unwrap();
        assert_eq!(c.value(), &big(1));
        assert_eq!(sk.decrypt(&c).unwrap(), big(0));
    }

    // Independent small-modulus oracle: textbook Paillier with explicit
    // lambda/mu computed by brute force.
    fn oracle_encrypt(n: u64, m: u64, r: u64) -> u64 {
        let n2 = n * n;
        let mut gm = 1u64;
        for _ in 0..m {
            gm = gm * (n + 1) % n2;
        }
        let mut rn = 1u64;
        for _ in 0..n {
            rn = rn * r % n2;
        }
        gm * rn % n2
    }

    fn oracle_decrypt(n: u64, lambda: u64, c: u64) -> u64 {
        let n2 = n * n;
        let mut u = 1u64;
        for _ in 0..lambda {
            u = u * c % n2;
        }
        let l = (u - 1) / n;
        let mut g = 1u64;
        for _ in 0..lambda {
            g = g * (n + 1) % n2;
        }
        let lg = (g - 1) / n;
        let mu = (1..n).find(|x| lg * x % n == 1).unwrap();
        l * mu % n
    }

    #[test]
    fn toy_modulus_matches_oracle_exhaustively() {
        let (pk, sk) = toy();
        for m in 0..35u64 {
            for r in (1..35u64).filter(|r| r % 5 != 0 && r % 7 != 0) {
                let c = pk.encrypt_with_nonce(&big(m), &big(r)).unwrap();
                assert_eq!(c.value(), &big(oracle_encrypt(35, m, r)));
                assert_eq!(oracle_decrypt(35, 12, oracle_encrypt(35, m, r)), m);
                assert_eq!(sk.decrypt(&c).unwrap(), big(m));
            }
        }
    }

    #[test]
    fn twelve_roundtrips_under_toy_key() {
        let (pk, sk) = toy();
        let mut rng = stream(1, "he-test");
        let c = pk.encrypt(&big(12), &mut rng).unwrap();
        assert_eq!(sk.decrypt(&c).unwrap(), big(12));
    }

    #[test]
    fn wraparound_modulo_n() {
        let (pk, sk) = toy();
        let mut rng = stream(2, "he-test");
        let c = pk
            .add(
                &pk.encrypt(&big(34), &mut rng).unwrap(),
                &pk.encrypt(&big(2), &mut rng).unwrap(),
            )
            .unwrap();
        assert_eq!(sk.decrypt(&c).unwrap(), big(1));
    }

    #[test]
    fn keygen_rejects_bad_lengths() {
        let mut rng = stream(3, "he-test");
        assert_eq!(
            keygen(15, &mut rng).unwrap_err(),
            HeError::InvalidBitLength(15)
        );
        assert_eq!(
            keygen(14, &mut rng).unwrap_err(),
            HeError::InvalidBitLength(14)
        );
        assert_eq!(
            keygen(17, &mut rng).unwrap_err(),
            HeError::InvalidBitLength(17)
        );
    }

    #[test]
    fn keygen_is_deterministic_and_exact_width() {
        let (a, _) = keygen(256, &mut stream(4, "k")).unwrap();
        let (b, _) = keygen(256, &mut stream(4, "k")).unwrap();
        let (c, _) = keygen(256, &mut stream(5, "k")).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.bit_length(), 256);
        assert_eq!(a.modulus().bits(), 256);
        assert!(!a.is_production());
        let (tiny, _) = keygen(16, &mut stream(4, "k")).unwrap();
        assert_eq!(tiny.modulus().bits(), 16);
    }

    #[test]
    fn boundary_plaintexts_roundtrip() {
        let mut rng = stream(6, "he-test");
        let (pk, sk) = keygen(512, &mut rng).unwrap();
        let n = pk.modulus().clone();
        for m in [big(0), big(1), &n - 1u8] {
            let c = pk.encrypt(&m, &mut rng).unwrap();
            assert_eq!(sk.decrypt(&c).unwrap(), m);
        }
        assert_eq!(
            pk.encrypt(&n, &mut rng).unwrap_err(),
            HeError::PlaintextOutOfRange
        );
    }

    #[test]
    fn encryption_is_randomized() {
        let mut rng = stream(7, "he-test");
        let (pk, _) = keygen(256, &mut rng).unwrap();
        let mut seen = std::collections::HashSet::new();
        for _ in 0..100 {
            assert!(seen.insert(pk.encrypt(&big(5), &mut rng).unwrap().encode()));
        }
    }

    #[test]
    fn add_examples() {
        let mut rng = stream(8, "he-test");
        let (pk, sk) = keygen(256, &mut rng).unwrap();
        let e = |m: u64, rng: &mut _| pk.encrypt(&big(m), rng).unwrap();
        let c = pk.add(&e(3, &mut rng), &e(5, &mut rng)).unwrap();
        assert_eq!(sk.decrypt(&c).unwrap(), big(8));
        let c = pk.add(&e(77, &mut rng), &e(0, &mut rng)).unwrap();
        assert_eq!(sk.decrypt(&c).unwrap(), big(77));

        let single = e(9, &mut rng);
        assert_eq!(pk.add_many(std::slice::from_ref(&single)).unwrap(), single);
        let sum = pk
            .add_many(&[e(10, &mut rng), e(20, &mut rng), e(30, &mut rng)])
            .unwrap();
        assert_eq!(sk.decrypt(&sum).unwrap(), big(60));
        let zeros: Vec<_> = (0..5).map(|_| e(0, &mut rng)).collect();
        assert_eq!(sk.decrypt(&pk.add_many(&zeros).unwrap()).unwrap(), big(0));
        assert_eq!(pk.add_many(&[]).unwrap_err(), HeError::Empty);
    }

    #[test]
    fn cross_key_mixing_is_detected() {
        let mut rng = stream(9, "he-test");
        let (pk1, sk1) = keygen(256, &mut rng).unwrap();
        let (pk2, _) = keygen(256, &mut rng).unwrap();
        let a = pk1.encrypt(&big(1), &mut rng).unwrap();
        let b = pk2.encrypt(&big(1), &mut rng).unwrap();
        assert_eq!(pk1.add(&a, &b).unwrap_err(), HeError::FingerprintMismatch);
        assert_eq!(pk2.add(&a, &a).unwrap_err(), HeError::FingerprintMismatch);
        assert_eq!(sk1.decrypt(&b).unwrap_err(), HeError::FingerprintMismatch);
        assert_eq!(
            pk1.add_many(&[a.clone(), b]).unwrap_err(),
            HeError::FingerprintMismatch
        );
    }

    #[test]
    fn non_coprime_ciphertext_rejected() {
        let (pk, sk) = toy();
        let c = HeCiphertext::from_parts(big(5), pk.fingerprint());
        assert_eq!(sk.decrypt(&c).unwrap_err(), HeError::MalformedCiphertext);
        let c = HeCiphertext::from_parts(big(0), pk.fingerprint());
        assert_eq!(sk.decrypt(&c).unwrap_err(), HeError::MalformedCiphertext);
    }

    #[test]
    fn encodings_roundtrip() {
        let mut rng = stream(10, "he-test");
        let (pk, _) = keygen(128, &mut rng).unwrap();
        assert_eq!(HePublicKey::decode(&pk.encode()).unwrap(), pk);
        let c = pk.encrypt(&big(3), &mut rng).unwrap();
        assert_eq!(HeCiphertext::decode(&c.encode()).unwrap(), c);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn homomorphic_sum(a in any::<u64>(), b in any::<u64>(), seed in any::<u64>()) {
            let mut rng = stream(seed, "he-prop");
            let (pk, sk) = keygen(160, &mut rng).unwrap();
            let n = pk.modulus();
            let (a, b) = (big(a) % n, big(b) % n);
            let c = pk.add(&pk.encrypt(&a, &mut rng).unwrap(), &pk.encrypt(&b, &mut rng).unwrap()).unwrap();
            prop_assert_eq!(sk.decrypt(&c).unwrap(), (a + b) % n);
        }
    }
}
