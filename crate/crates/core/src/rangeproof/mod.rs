//! Pedersen commitments and zero-knowledge interval-membership proofs.
//!
//! The prover answers a [`RangeStatement`] (disjoint half-open intervals) with
//! a [`ProofBundle`]: a commitment to the value plus one membership proof for
//! the interval containing it. The verifier labels that interval `true` and,
//! by disjointness, every other interval `false`.

mod group;
mod proof;

use std::fmt;

use num_bigint::BigUint;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{DecodeError, Reader, Writer};

pub use group::GroupParams;
pub use proof::{prove_membership, verify_membership, MembershipProof, FS_TAG, MAX_BIT_WIDTH};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RangeProofError {
    #[error("value {value} is not in {interval}")]
    ValueOutsideInterval { value: u64, interval: Interval },
    #[error("bit width {given} too small, interval needs {needed}")]
    BitWidthTooSmall { needed: u32, given: u32 },
    #[error("bit width {0} exceeds what the group order supports")]
    BitWidthTooLarge(u32),
    #[error("value or blinding not below the group order")]
    OutOfRange,
    #[error("invalid statement: {0}")]
    StatementInvalid(String),
}

/// Half-open interval `(lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub lo: u64,
    pub hi: u64,
}

impl Interval {
    pub fn new(lo: u64, hi: u64) -> Result<Self, RangeProofError> {
        if lo >= hi {
            return Err(RangeProofError::StatementInvalid(format!(
                "empty interval ({lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, v: u64) -> bool {
        self.lo < v && v <= self.hi
    }

    /// Bit length of `hi - lo`: the smallest `k` with `hi - lo < 2^k`.
    pub fn required_bit_width(&self) -> u32 {
        64 - (self.hi - self.lo).leading_zeros()
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}]", self.lo, self.hi)
    }
}

/// Nonempty, sorted, pairwise-disjoint intervals.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Interval>", into = "Vec<Interval>")]
pub struct RangeStatement {
    intervals: Vec<Interval>,
}

impl RangeStatement {
    pub fn new(intervals: Vec<Interval>) -> Result<Self, RangeProofError> {
        if intervals.is_empty() {
            return Err(RangeProofError::StatementInvalid("no intervals".into()));
        }
        for (i, iv) in intervals.iter().enumerate() {
            if iv.lo >= iv.hi {
                return Err(RangeProofError::StatementInvalid(format!(
                    "interval {i} {iv} is empty"
                )));
            }
        }
        for (i, pair) in intervals.windows(2).enumerate() {
            if pair[0].lo >= pair[1].lo {
                return Err(RangeProofError::StatementInvalid(format!(
                    "intervals {i} and {} are not sorted by lower bound",
                    i + 1
                )));
            }
            if pair[0].hi > pair[1].lo {
                return Err(RangeProofError::StatementInvalid(format!(
                    "intervals {i} {} and {} {} overlap",
                    pair[0],
                    i + 1,
                    pair[1]
                )));
            }
        }
        Ok(Self { intervals })
    }

    pub fn from_pairs(pairs: &[(u64, u64)]) -> Result<Self, RangeProofError> {
        Self::new(pairs.iter().map(|&(lo, hi)| Interval { lo, hi }).collect())
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn position(&self, v: u64) -> Option<usize> {
        self.intervals.iter().position(|iv| iv.contains(v))
    }

    pub fn default_bit_width(&self) -> u32 {
        self.intervals
            .iter()
            .map(Interval::required_bit_width)
            .max()
            .unwrap_or(1)
    }

    pub fn write(&self, w: &mut Writer) {
        w.u32(self.intervals.len() as u32);
        for iv in &self.intervals {
            w.u64(iv.lo).u64(iv.hi);
        }
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let n = r.u32()? as usize;
        if n == 0 || n > 1024 {
            return Err(DecodeError::Invalid("statement length"));
        }
        let intervals = (0..n)
            .map(|_| {
                Ok(Interval {
                    lo: r.u64()?,
                    hi: r.u64()?,
                })
            })
            .collect::<Result<Vec<_>, DecodeError>>()?;
        Self::new(intervals).map_err(|_| DecodeError::Invalid("statement"))
    }
}

impl TryFrom<Vec<Interval>> for RangeStatement {
    type Error = RangeProofError;

    fn try_from(v: Vec<Interval>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<RangeStatement> for Vec<Interval> {
    fn from(s: RangeStatement) -> Self {
        s.intervals
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct PedersenCommitment {
    point: BigUint,
}

impl fmt::Debug for PedersenCommitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "PedersenCommitment({}..)",
            self.point
                .to_str_radix(16)
                .chars()
                .take(16)
                .collect::<String>()
        )
    }
}

impl PedersenCommitment {
    pub fn point(&self) -> &BigUint {
        &self.point
    }

    pub fn combine(&self, params: &GroupParams, other: &Self) -> Self {
        Self {
            point: params.mul(&self.point, &other.point),
        }
    }

    pub fn write(&self, params: &GroupParams, w: &mut Writer) {
        params.write_element(w, &self.point);
    }

    pub fn read(params: &GroupParams, r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            point: params.read_element(r)?,
        })
    }
}

/// `C = g^v * h^r`
pub fn commit(
    params: &GroupParams,
    v: u64,
    r: &BigUint,
) -> Result<PedersenCommitment, RangeProofError> {
    commit_big(params, &BigUint::from(v), r)
}

pub fn commit_big(
    params: &GroupParams,
    v: &BigUint,
    r: &BigUint,
) -> Result<PedersenCommitment, RangeProofError> {
    if v >= params.order() || r >= params.order() {
        return Err(RangeProofError::OutOfRange);
    }
    Ok(PedersenCommitment {
        point: params.commit_raw(v, r),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProofBundle {
    pub commitment: PedersenCommitment,
    /// Index of the interval containing the value, with its proof; `None`
    /// when no interval matches.
    pub matched: Option<(usize, MembershipProof)>,
}

impl ProofBundle {
    pub fn matched_index(&self) -> Option<usize> {
        self.matched.as_ref().map(|(i, _)| *i)
    }

    pub fn write(&self, params: &GroupParams, w: &mut Writer) {
        self.commitment.write(params, w);
        match &self.matched {
            None => {
                w.u8(0);
            }
            Some((index, proof)) => {
                w.u8(1).u32(*index as u32);
                proof.write(params, w);
            }
        }
    }

    pub fn read(params: &GroupParams, r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let commitment = PedersenCommitment::read(params, r)?;
        let matched = match r.u8()? {
            0 => None,
            1 => {
                let index = r.u32()? as usize;
                Some((index, MembershipProof::read(params, r)?))
            }
            tag => {
                return Err(DecodeError::InvalidTag {
                    what: "proof bundle",
                    tag,
                })
            }
        };
        Ok(Self {
            commitment,
            matched,
        })
    }

    pub fn encode(&self, params: &GroupParams) -> Vec<u8> {
        let mut w = Writer::new();
        self.write(params, &mut w);
        w.finish()
    }

    pub fn decode(params: &GroupParams, bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let b = Self::read(params, &mut r)?;
        r.finish()?;
        Ok(b)
    }
}

/// Outcome of verifying a bundle against a statement.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// One label per interval; exactly one is `true`.
    Labels(Vec<bool>),
    NoMatch,
    Rejected,
}

impl Verdict {
    pub fn matched_index(&self) -> Option<usize> {
        match self {
            Verdict::Labels(l) => l.iter().position(|&b| b),
            _ => None,
        }
    }
}

/// Commits to `v` under fresh blinding and proves membership in whichever
/// statement interval contains it.
pub fn respond<R: RngCore + CryptoRng>(
    params: &GroupParams,
    v: u64,
    statement: &RangeStatement,
    rng: &mut R,
) -> Result<ProofBundle, RangeProofError> {
    let statement = RangeStatement::new(statement.intervals.clone())?;
    let r = params.random_scalar(rng);
    let commitment = commit(params, v, &r)?;
    let matched = match statement.position(v) {
        None => None,
        Some(i) => {
            let k = statement.default_bit_width();
            Some((
                i,
                prove_membership(params, v, &r, statement.intervals[i], k, rng)?,
            ))
        }
    };
    Ok(ProofBundle {
        commitment,
        matched,
    })
}

pub fn verify_bundle(
    params: &GroupParams,
    bundle: &ProofBundle,
    statement: &RangeStatement,
) -> Result<Verdict, RangeProofError> {
    let statement = RangeStatement::new(statement.intervals.clone())?;
    Ok(match &bundle.matched {
        None => Verdict::NoMatch,
        Some((i, proof)) => match statement.intervals.get(*i) {
            Some(&iv) if verify_membership(params, &bundle.commitment, iv, proof) => {
                Verdict::Labels((0..statement.len()).map(|j| j == *i).collect())
            }
            _ => Verdict::Rejected,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::Profile;
    use num_traits::One;

    fn params() -> GroupParams {
        GroupParams::setup(Profile::Test)
    }

    #[test]
    fn commitment_basics() {
        let p = params();
        let zero = BigUint::from(0u8);
        assert!(commit(&p, 0, &zero).unwrap().point().is_one());
        let mut rng = stream(1, "commit");
        let (r1, r2) = (p.random_scalar(&mut rng), p.random_scalar(&mut rng));
        assert_ne!(commit(&p, 5, &r1).unwrap(), commit(&p, 5, &r2).unwrap());
        assert_eq!(
            commit(&p, 5, p.order()).unwrap_err(),
            RangeProofError::OutOfRange
        );
        assert!(commit_big(&p, p.order(), &zero).is_err());
    }

    #[test]
    fn statement_validation() {
        assert!(RangeStatement::from_pairs(&[(0, 50), (50, 100)]).is_ok());
        assert!(RangeStatement::from_pairs(&[]).is_err());
        assert!(RangeStatement::from_pairs(&[(0, 60), (50, 100)]).is_err());
        assert!(RangeStatement::from_pairs(&[(50, 100), (0, 50)]).is_err());
        assert!(RangeStatement::from_pairs(&[(5, 5)]).is_err());
        let s = RangeStatement::from_pairs(&[(100, 200), (200, 300)]).unwrap();
        assert_eq!(s.default_bit_width(), 7);
        assert_eq!(s.position(200), Some(0));
        assert_eq!(s.position(201), Some(1));
        assert_eq!(s.position(100), None);
    }

    #[test]
    fn respond_examples() {
        let p = params();
        let mut rng = stream(2, "respond");
        let s = RangeStatement::from_pairs(&[(100, 200), (200, 300)]).unwrap();
        let b = respond(&p, 150, &s, &mut rng).unwrap();
        assert_eq!(b.matched_index(), Some(0));
        assert_eq!(
            verify_bundle(&p, &b, &s).unwrap(),
            Verdict::Labels(vec![true, false])
        );

        let s2 = RangeStatement::from_pairs(&[(0, 50), (50, 100)]).unwrap();
        let b = respond(&p, 60, &s2, &mut rng).unwrap();
        assert_eq!(b.matched_index(), Some(1));
        assert_eq!(
            verify_bundle(&p, &b, &s2).unwrap(),
            Verdict::Labels(vec![false, true])
        );

        let s3 = RangeStatement::from_pairs(&[(0, 100)]).unwrap();
        let b = respond(&p, 0, &s3, &mut rng).unwrap();
        assert_eq!(b.matched_index(), None);
        assert_eq!(verify_bundle(&p, &b, &s3).unwrap(), Verdict::NoMatch);
    }

    #[test]
    fn tampered_index_is_rejected() {
        let p = params();
        let mut rng = stream(3, "respond");
        let s = RangeStatement::from_pairs(&[(100, 200), (200, 300)]).unwrap();
        let mut b = respond(&p, 150, &s, &mut rng).unwrap();
        if let Some((i, _)) = &mut b.matched {
            *i = 1;
        }
        assert_eq!(verify_bundle(&p, &b, &s).unwrap(), Verdict::Rejected);
        if let Some((i, _)) = &mut b.matched {
            *i = 7;
        }
        assert_eq!(verify_bundle(&p, &b, &s).unwrap(), Verdict::Rejected);
    }

    #[test]
    fn bundle_encoding_roundtrips() {
        let p = params();
        let mut rng = stream(4, "respond");
        let s = RangeStatement::from_pairs(&[(0, 50), (50, 100)]).unwrap();
        for v in [0, 42] {
            let b = respond(&p, v, &s, &mut rng).unwrap();
            assert_eq!(ProofBundle::decode(&p, &b.encode(&p)).unwrap(), b);
        }
    }

    #[test]
    fn statement_serde_validates() {
        let ok: RangeStatement =
            serde_json::from_str(r#"[{"lo":0,"hi":5},{"lo":5,"hi":9}]"#).unwrap();
        assert_eq!(ok.len(), 2);
        assert!(
            serde_json::from_str::<RangeStatement>(r#"[{"lo":0,"hi":6},{"lo":5,"hi":9}]"#).is_err()
        );
    }
}
