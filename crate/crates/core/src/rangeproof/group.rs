use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use crate::encoding::{DecodeError, Reader, Writer};
use crate::Profile;

const H_TAG: &str = "veilsum/h/v1";

/// 256-bit safe prime found by scanning upward from `SHA-256("veilsum/group/test/v1")`.
const TEST_P: &str = "808b2aae4ca76466ce9b5d8d87b20d27e82577589c5128512bfb9484bb755c33";

/// RFC 7919 ffdhe2048; 2 generates the prime-order subgroup of quadratic residues.
const FULL_P: &str = concat!(
    "FFFFFFFFFFFFFFFFADF85458A2BB4A9AAFDC5620273D3CF1D8B9C583CE2D3695A9E13641146433FBCC939DCE249B3EF97D",
    "2FE363630C75D8F681B202AEC4617AD3DF1ED5D5FD65612433F51F5F066ED0856365553DED1AF3B557135E7F57C935984F",
    "0C70E0E68B77E2A689DAF3EFE8721DF158A136ADE73530ACCA4F483A797ABC0AB182B324FB61D108A94BB2C8E3FBB96ADA",
    "B760D7F4681D4F42A3DE394DF4AE56EDE76372BB190B07A7C8EE0A6D709E02FCE1CDF7E2ECC03404CD28342F619172FE9C",
    "E98583FF8E4F1232EEF28183C3FE3B1B4C6FAD733BB5FCBC2EC22005C58EF1837D1683B2C6F34A26C1B2EFFA886B423861",
    "285C97FFFFFFFFFFFFFFFF"
);

/// Prime-order subgroup of `Z_p^*` for a safe prime `p = 2q + 1`, with two
/// generators whose relative discrete log is unknown.
#[derive(Clone, PartialEq, Eq)]
pub struct GroupParams {
    profile: Profile,
    p: BigUint,
    q: BigUint,
    g: BigUint,
    h: BigUint,
    element_len: usize,
    scalar_len: usize,
}

impl std::fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GroupParams")
            .field("profile", &self.profile)
            .field("order_bits", &self.q.bits())
            .finish()
    }
}

impl GroupParams {
    pub fn setup(profile: Profile) -> Self {
        let (p_hex, g) = match profile {
            Profile::Test => (TEST_P, 4u32),
            Profile::Full => (FULL_P, 2u32),
        };
        let p = BigUint::parse_bytes(p_hex.as_bytes(), 16).expect("valid constant");
        let q: BigUint = (&p - 1u32) >> 1u32;
        let element_len = p.bits().div_ceil(8) as usize;
        let scalar_len = q.bits().div_ceil(8) as usize;
        let mut params = Self {
            profile,
            p,
            q,
            g: BigUint::from(g),
            h: BigUint::zero(),
            element_len,
            scalar_len,
        };
        params.h = params.hash_to_group(H_TAG, &params.encode_element_raw(&params.g));
        params
    }

    /// Squares a wide hash of the input so the result lands in the
    /// quadratic-residue subgroup with no known discrete log.
    fn hash_to_group(&self, tag: &str, data: &[u8]) -> BigUint {
        for counter in 0u32.. {
            let mut wide = Vec::with_capacity(self.element_len + 32);
            let mut block = 0u32;
            while wide.len() < self.element_len + 16 {
                let mut h = Sha256::new();
                h.update(tag.as_bytes());
                h.update(counter.to_be_bytes());
                h.update(block.to_be_bytes());
                h.update(data);
                wide.extend_from_slice(&h.finalize());
                block += 1;
            }
            let x = BigUint::from_bytes_be(&wide) % &self.p;
            let candidate = x.modpow(&BigUint::from(2u8), &self.p);
            if !candidate.is_zero() && !candidate.is_one() {
                return candidate;
            }
        }
        unreachable!()
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn order(&self) -> &BigUint {
        &self.q
    }

    pub fn modulus(&self) -> &BigUint {
        &self.p
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    pub fn h(&self) -> &BigUint {
        &self.h
    }

    pub fn element_len(&self) -> usize {
        self.element_len
    }

    pub fn scalar_len(&self) -> usize {
        self.scalar_len
    }

    pub(crate) fn mul(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a * b) % &self.p
    }

    pub(crate) fn exp(&self, base: &BigUint, e: &BigUint) -> BigUint {
        base.modpow(e, &self.p)
    }

    pub(crate) fn inv(&self, a: &BigUint) -> BigUint {
        a.modinv(&self.p).expect("group elements are invertible")
    }

    /// `g^a * h^b`
    pub(crate) fn commit_raw(&self, a: &BigUint, b: &BigUint) -> BigUint {
        self.mul(&self.exp(&self.g, a), &self.exp(&self.h, b))
    }

    pub(crate) fn g_pow_u64(&self, e: u64) -> BigUint {
        self.exp(&self.g, &BigUint::from(e))
    }

    pub fn is_element(&self, x: &BigUint) -> bool {
        !x.is_zero() && x < &self.p && self.exp(x, &self.q).is_one()
    }

    pub(crate) fn neg_scalar(&self, s: &BigUint) -> BigUint {
        (&self.q - (s % &self.q)) % &self.q
    }

    pub(crate) fn random_scalar<R: RngCore + CryptoRng>(&self, rng: &mut R) -> BigUint {
        rng.gen_biguint_below(&self.q)
    }

    pub(crate) fn encode_element_raw(&self, x: &BigUint) -> Vec<u8> {
        crate::encoding::to_fixed_be(x, self.element_len)
    }

    pub(crate) fn write_element(&self, w: &mut Writer, x: &BigUint) {
        w.biguint_fixed(x, self.element_len);
    }

    pub(crate) fn write_scalar(&self, w: &mut Writer, s: &BigUint) {
        w.biguint_fixed(s, self.scalar_len);
    }

    pub(crate) fn read_element(&self, r: &mut Reader<'_>) -> Result<BigUint, DecodeError> {
        let x = r.biguint_fixed(self.element_len)?;
        if !self.is_element(&x) {
            return Err(DecodeError::Invalid("not a subgroup element"));
        }
        Ok(x)
    }

    pub(crate) fn read_scalar(&self, r: &mut Reader<'_>) -> Result<BigUint, DecodeError> {
        let s = r.biguint_fixed(self.scalar_len)?;
        if s >= self.q {
            return Err(DecodeError::Invalid("scalar not reduced"));
        }
        Ok(s)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.biguint(&self.p)
            .biguint(&self.q)
            .biguint(&self.g)
            .biguint(&self.h);
        w.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn setup_is_deterministic_with_distinct_generators() {
        for profile in [Profile::Test, Profile::Full] {
            let a = GroupParams::setup(profile);
            assert_eq!(a, GroupParams::setup(profile));
            assert_ne!(a.g(), a.h());
            assert!(a.exp(a.g(), a.order()).is_one());
            assert!(a.exp(a.h(), a.order()).is_one());
            assert!(a.is_element(a.g()) && a.is_element(a.h()));
        }
    }

    #[test]
    fn orders_are_prime_and_large_enough() {
        let mut rng = crate::rng::stream(0, "group-test");
        let test = GroupParams::setup(Profile::Test);
        assert_eq!(test.order().bits(), 255);
        assert!(glass_pumpkin::safe_prime::check_with(
            test.modulus(),
            &mut rng
        ));
        let full = GroupParams::setup(Profile::Full);
        assert!(full.order().bits() >= 250);
        assert!(glass_pumpkin::prime::check_with(full.order(), &mut rng));
    }

    #[test]
    fn non_residues_are_not_elements() {
        let params = GroupParams::setup(Profile::Test);
        // p - 1 has order 2.
        let minus_one = params.modulus() - 1u32;
        assert!(!params.is_element(&minus_one));
        assert!(!params.is_element(&BigUint::zero()));
        assert!(!params.is_element(params.modulus()));
    }
}
