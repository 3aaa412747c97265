//! Bit-decomposition proof that a Pedersen-committed value lies in `(lo, hi]`.
//!
//! With `a = v - lo - 1` and `b = hi - v`, the prover commits to every bit of
//! `a` and `b`, proves each bit commitment opens to 0 or 1 (a two-branch OR of
//! Schnorr proofs), and proves the weighted bit products match `C / g^(lo+1)`
//! and `g^hi / C` up to a known `h` exponent. Because `a + b = hi - lo - 1`
//! and both are below `2^k` with `2^(k+1) < q`, the relation holds over the
//! integers and pins `v` inside the interval. All sub-proofs share one
//! Fiat-Shamir challenge over the full transcript.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use super::{GroupParams, Interval, PedersenCommitment, RangeProofError};
use crate::encoding::{DecodeError, Reader, Writer};

pub const FS_TAG: &str = "veilsum/fs/v1";
pub const MAX_BIT_WIDTH: u32 = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
struct BitProof {
    e0: BigUint,
    e1: BigUint,
    z0: BigUint,
    z1: BigUint,
}

/// Proof of knowledge of `x` with `target = h^x`.
#[derive(Clone, Debug, PartialEq, Eq)]
struct ConsistencyProof {
    t: BigUint,
    z: BigUint,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MembershipProof {
    bit_width: u32,
    low_bits: Vec<BigUint>,
    high_bits: Vec<BigUint>,
    low_or: Vec<BitProof>,
    high_or: Vec<BitProof>,
    low_consistency: ConsistencyProof,
    high_consistency: ConsistencyProof,
}

struct SideWitness {
    blindings: Vec<BigUint>,
    bits: Vec<bool>,
    // Exponent of h left after dividing the target by the weighted bit product.
    residual: BigUint,
    or_nonces: Vec<BigUint>,
    or_sim: Vec<(BigUint, BigUint)>,
    consistency_nonce: BigUint,
}

fn check_width(params: &GroupParams, k: u32) -> bool {
    (1..=MAX_BIT_WIDTH).contains(&k) && params.order().bits() > u64::from(k) + 1
}

/// `C / g^(lo+1)` and `g^hi / C`: the elements the low and high bit vectors
/// must reconstruct.
fn side_targets(params: &GroupParams, c: &BigUint, interval: Interval) -> (BigUint, BigUint) {
    let low = params.mul(c, &params.inv(&params.g_pow_u64(interval.lo + 1)));
    let high = params.mul(&params.g_pow_u64(interval.hi), &params.inv(c));
    (low, high)
}

/// `prod A_i^(2^i)` by Horner's rule.
fn weighted_product(params: &GroupParams, bits: &[BigUint]) -> BigUint {
    bits.iter().rev().fold(BigUint::one(), |acc, a| {
        params.mul(&params.mul(&acc, &acc), a)
    })
}

fn or_branch_bases(params: &GroupParams, a: &BigUint) -> [BigUint; 2] {
    [a.clone(), params.mul(a, &params.inv(params.g()))]
}

/// `h^z * y^(-e)`
fn schnorr_commitment(params: &GroupParams, y: &BigUint, e: &BigUint, z: &BigUint) -> BigUint {
    params.mul(
        &params.exp(params.h(), z),
        &params.exp(y, &params.neg_scalar(e)),
    )
}

struct TranscriptInput<'a> {
    commitment: &'a BigUint,
    interval: Interval,
    bit_width: u32,
    low_bits: &'a [BigUint],
    high_bits: &'a [BigUint],
    or_commitments: &'a [[BigUint; 2]],
    low_t: &'a BigUint,
    high_t: &'a BigUint,
}

fn challenge(params: &GroupParams, input: &TranscriptInput<'_>) -> BigUint {
    let mut w = Writer::new();
    w.str(FS_TAG).bytes(&params.encode());
    params.write_element(&mut w, input.commitment);
    w.u64(input.interval.lo)
        .u64(input.interval.hi)
        .u32(input.bit_width);
    for x in input.low_bits.iter().chain(input.high_bits) {
        params.write_element(&mut w, x);
    }
    for [t0, t1] in input.or_commitments {
        params.write_element(&mut w, t0);
        params.write_element(&mut w, t1);
    }
    params.write_element(&mut w, input.low_t);
    params.write_element(&mut w, input.high_t);
    BigUint::from_bytes_be(&Sha256::digest(w.finish())) % params.order()
}

fn decompose(x: u64, k: u32) -> Vec<bool> {
    (0..k).map(|i| (x >> i) & 1 == 1).collect()
}

pub fn prove_membership<R: RngCore + CryptoRng>(
    params: &GroupParams,
    v: u64,
    r: &BigUint,
    interval: Interval,
    bit_width: u32,
    rng: &mut R,
) -> Result<MembershipProof, RangeProofError> {
    if !interval.contains(v) {
        return Err(RangeProofError::ValueOutsideInterval { value: v, interval });
    }
    if r >= params.order() || BigUint::from(interval.hi) >= *params.order() {
        return Err(RangeProofError::OutOfRange);
    }
    let needed = interval.required_bit_width();
    if bit_width < needed {
        return Err(RangeProofError::BitWidthTooSmall {
            needed,
            given: bit_width,
        });
    }
    if !check_width(params, bit_width) {
        return Err(RangeProofError::BitWidthTooLarge(bit_width));
    }
    let k = bit_width;
    let commitment = params.commit_raw(&BigUint::from(v), r);
    let a = v - interval.lo - 1;
    let b = interval.hi - v;

    // low side target exponent of h is r, high side is -r.
    let mut sides = Vec::with_capacity(2);
    let mut bit_commitments: Vec<Vec<BigUint>> = Vec::with_capacity(2);
    for (value, target_blinding) in [(a, r.clone()), (b, params.neg_scalar(r))] {
        let bits = decompose(value, k);
        let blindings: Vec<BigUint> = (0..k).map(|_| params.random_scalar(rng)).collect();
        let commitments: Vec<BigUint> = bits
            .iter()
            .zip(&blindings)
            .map(|(&bit, s)| params.commit_raw(&BigUint::from(u8::from(bit)), s))
            .collect();
        let weighted = blindings
            .iter()
            .enumerate()
            .fold(BigUint::zero(), |acc, (i, s)| acc + (s << i));
        let residual = (target_blinding + params.neg_scalar(&weighted)) % params.order();
        sides.push(SideWitness {
            blindings,
            bits,
            residual,
            or_nonces: Vec::with_capacity(k as usize),
            or_sim: Vec::with_capacity(k as usize),
            consistency_nonce: params.random_scalar(rng),
        });
        bit_commitments.push(commitments);
    }

    // First moves of every OR proof: real branch h^w, simulated branch
    // h^z * Y^(-e) with (e, z) drawn up front.
    let mut or_commitments = Vec::with_capacity(2 * k as usize);
    for (side, commitments) in sides.iter_mut().zip(&bit_commitments) {
        for (i, a_i) in commitments.iter().enumerate() {
            let bases = or_branch_bases(params, a_i);
            let real = usize::from(side.bits[i]);
            let w = params.random_scalar(rng);
            let e_sim = params.random_scalar(rng);
            let z_sim = params.random_scalar(rng);
            let mut pair = [BigUint::zero(), BigUint::zero()];
            pair[real] = params.exp(params.h(), &w);
            pair[1 - real] = schnorr_commitment(params, &bases[1 - real], &e_sim, &z_sim);
            side.or_nonces.push(w);
            side.or_sim.push((e_sim, z_sim));
            or_commitments.push(pair);
        }
    }
    let low_t = params.exp(params.h(), &sides[0].consistency_nonce);
    let high_t = params.exp(params.h(), &sides[1].consistency_nonce);

    let e = challenge(
        params,
        &TranscriptInput {
            commitment: &commitment,
            interval,
            bit_width: k,
            low_bits: &bit_commitments[0],
            high_bits: &bit_commitments[1],
            or_commitments: &or_commitments,
            low_t: &low_t,
            high_t: &high_t,
        },
    );

    let q = params.order();
    let mut or_proofs: Vec<Vec<BitProof>> = Vec::with_capacity(2);
    let mut consistency = Vec::with_capacity(2);
    for side in &sides {
        let proofs = (0..k as usize)
            .map(|i| {
                let real = usize::from(side.bits[i]);
                let (e_sim, z_sim) = &side.or_sim[i];
                let e_real = (&e + params.neg_scalar(e_sim)) % q;
                let z_real = (&side.or_nonces[i] + &e_real * &side.blindings[i]) % q;
                let mut es = [BigUint::zero(), BigUint::zero()];
                let mut zs = [BigUint::zero(), BigUint::zero()];
                es[real] = e_real;
                zs[real] = z_real;
                es[1 - real] = e_sim.clone();
                zs[1 - real] = z_sim.clone();
                let [e0, e1] = es;
                let [z0, z1] = zs;
                BitProof { e0, e1, z0, z1 }
            })
            .collect();
        or_proofs.push(proofs);
        consistency.push((&side.consistency_nonce + &e * &side.residual) % q);
    }

    let mut bit_commitments = bit_commitments.into_iter();
    let mut or_proofs = or_proofs.into_iter();
    let mut consistency = consistency.into_iter();
    Ok(MembershipProof {
        bit_width: k,
        low_bits: bit_commitments.next().unwrap(),
        high_bits: bit_commitments.next().unwrap(),
        low_or: or_proofs.next().unwrap(),
        high_or: or_proofs.next().unwrap(),
        low_consistency: ConsistencyProof {
            t: low_t,
            z: consistency.next().unwrap(),
        },
        high_consistency: ConsistencyProof {
            t: high_t,
            z: consistency.next().unwrap(),
        },
    })
}

/// Returns `true` iff the proof shows the value committed in `commitment`
/// lies in `interval`. Never sees the value or blinding.
pub fn verify_membership(
    params: &GroupParams,
    commitment: &PedersenCommitment,
    interval: Interval,
    proof: &MembershipProof,
) -> bool {
    let k = proof.bit_width;
    if interval.lo >= interval.hi
        || BigUint::from(interval.hi) >= *params.order()
        || !check_width(params, k)
        || [
            proof.low_bits.len(),
            proof.high_bits.len(),
            proof.low_or.len(),
            proof.high_or.len(),
        ]
        .iter()
        .any(|&n| n != k as usize)
    {
        return false;
    }
    let c = commitment.point();
    let mut or_commitments = Vec::with_capacity(2 * k as usize);
    for (bits, ors) in [
        (&proof.low_bits, &proof.low_or),
        (&proof.high_bits, &proof.high_or),
    ] {
        for (a_i, bp) in bits.iter().zip(ors) {
            let [y0, y1] = or_branch_bases(params, a_i);
            or_commitments.push([
                schnorr_commitment(params, &y0, &bp.e0, &bp.z0),
                schnorr_commitment(params, &y1, &bp.e1, &bp.z1),
            ]);
        }
    }
    let e = challenge(
        params,
        &TranscriptInput {
            commitment: c,
            interval,
            bit_width: k,
            low_bits: &proof.low_bits,
            high_bits: &proof.high_bits,
            or_commitments: &or_commitments,
            low_t: &proof.low_consistency.t,
            high_t: &proof.high_consistency.t,
        },
    );
    let q = params.order();
    let split_ok = proof
        .low_or
        .iter()
        .chain(&proof.high_or)
        .all(|bp| (&bp.e0 + &bp.e1) % q == e);
    if !split_ok {
        return false;
    }

    let (low_target, high_target) = side_targets(params, c, interval);
    [
        (low_target, &proof.low_bits, &proof.low_consistency),
        (high_target, &proof.high_bits, &proof.high_consistency),
    ]
    .into_iter()
    .all(|(target, bits, cp)| {
        let residual = params.mul(&target, &params.inv(&weighted_product(params, bits)));
        params.exp(params.h(), &cp.z) == params.mul(&cp.t, &params.exp(&residual, &e))
    })
}

impl MembershipProof {
    pub fn bit_width(&self) -> u32 {
        self.bit_width
    }

    pub fn write(&self, params: &GroupParams, w: &mut Writer) {
        w.u32(self.bit_width);
        for x in self.low_bits.iter().chain(&self.high_bits) {
            params.write_element(w, x);
        }
        for bp in self.low_or.iter().chain(&self.high_or) {
            for s in [&bp.e0, &bp.e1, &bp.z0, &bp.z1] {
                params.write_scalar(w, s);
            }
        }
        for cp in [&self.low_consistency, &self.high_consistency] {
            params.write_element(w, &cp.t);
            params.write_scalar(w, &cp.z);
        }
    }

    pub fn encode(&self, params: &GroupParams) -> Vec<u8> {
        let mut w = Writer::new();
        self.write(params, &mut w);
        w.finish()
    }

    /// Decodes and validates every element (subgroup membership) and scalar
    /// (reduced mod q).
    pub fn read(params: &GroupParams, r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let k = r.u32()?;
        if !check_width(params, k) {
            return Err(DecodeError::Invalid("bit width"));
        }
        let n = k as usize;
        let elements = |count: usize, r: &mut Reader<'_>| -> Result<Vec<BigUint>, DecodeError> {
            (0..count).map(|_| params.read_element(r)).collect()
        };
        let low_bits = elements(n, r)?;
        let high_bits = elements(n, r)?;
        let bit_proofs = |r: &mut Reader<'_>| -> Result<Vec<BitProof>, DecodeError> {
            (0..n)
                .map(|_| {
                    Ok(BitProof {
                        e0: params.read_scalar(r)?,
                        e1: params.read_scalar(r)?,
                        z0: params.read_scalar(r)?,
                        z1: params.read_scalar(r)?,
                    })
                })
                .collect()
        };
        let low_or = bit_proofs(r)?;
        let high_or = bit_proofs(r)?;
        let consistency = |r: &mut Reader<'_>| -> Result<ConsistencyProof, DecodeError> {
            Ok(ConsistencyProof {
                t: params.read_element(r)?,
                z: params.read_scalar(r)?,
            })
        };
        let low_consistency = consistency(r)?;
        let high_consistency = consistency(r)?;
        Ok(Self {
            bit_width: k,
            low_bits,
            high_bits,
            low_or,
            high_or,
            low_consistency,
            high_consistency,
        })
    }

    pub fn decode(params: &GroupParams, bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let proof = Self::read(params, &mut r)?;
        r.finish()?;
        Ok(proof)
    }
}
