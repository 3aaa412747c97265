//! Privacy-preserving verification of aggregate user assets.
//!
//! Trusted sources upload Paillier-encrypted per-account amounts through a
//! simulated public ledger; a blind relayer sums them homomorphically; a proof
//! service decrypts only the total and proves which of the operator's
//! disjoint tiers contains it; the operator verifies the proof and binds the
//! result to the applicant's sealed address. [`adversary`] reconstructs what
//! any single compromised entity learned during a run and checks it against
//! the expected leakage bounds.

pub mod actors;
pub mod adversary;
pub mod encoding;
pub mod envelope;
pub mod he;
pub mod ledger;
pub mod rangeproof;
pub mod rng;
pub mod scenario;
pub mod transcript;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Nonnegative asset amount in minimal currency units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AssetAmount(pub u64);

impl fmt::Display for AssetAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Key-size profile. `Test` keys are small enough for exhaustive test suites
/// and are watermarked as non-production wherever they appear.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Test,
    Full,
}

impl Profile {
    pub fn he_bits(self) -> u32 {
        match self {
            Profile::Test => 1024,
            Profile::Full => 2048,
        }
    }

    pub fn rsa_bits(self) -> usize {
        match self {
            Profile::Test => 1024,
            Profile::Full => 2048,
        }
    }

    pub fn is_production(self) -> bool {
        matches!(self, Profile::Full)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Test => "test",
            Profile::Full => "full",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown profile {0:?} (expected \"test\" or \"full\")")]
pub struct UnknownProfile(pub String);

impl FromStr for Profile {
    type Err = UnknownProfile;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "test" => Ok(Profile::Test),
            "full" => Ok(Profile::Full),
            other => Err(UnknownProfile(other.to_string())),
        }
    }
}

/// First 16 bytes of `SHA-256(tag || bytes)`.
pub(crate) fn fingerprint16(tag: &str, bytes: &[u8]) -> [u8; 16] {
    let mut h = Sha256::new();
    h.update(tag.as_bytes());
    h.update(bytes);
    let digest = h.finalize();
    digest[..16].try_into().unwrap()
}
