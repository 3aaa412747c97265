//! Kind-specific ledger payload bodies and their canonical encodings.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::RecordKind;
use crate::encoding::{DecodeError, Reader, Writer};
use crate::envelope::{SealedEnvelope, Signature};
use crate::he::HeCiphertext;
use crate::rangeproof::{GroupParams, ProofBundle, RangeStatement};

pub const NONCE_LEN: usize = 32;
const TOKEN_ID_TAG: &str = "veilsum/token-id/v1";

/// The user's address sealed once to the operator, carried verbatim as the
/// session correlation handle. Stored as the envelope's canonical bytes so
/// comparisons are byte-exact.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CaddrToken(Vec<u8>);

impl CaddrToken {
    pub fn from_envelope(env: &SealedEnvelope) -> Self {
        Self(env.encode())
    }

    pub fn envelope(&self) -> SealedEnvelope {
        SealedEnvelope::decode(&self.0).expect("validated at construction")
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }

    /// Short stable identifier (hex of a 16-byte hash) for logs and views.
    pub fn id(&self) -> String {
        hex::encode(crate::fingerprint16(TOKEN_ID_TAG, &self.0))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        SealedEnvelope::decode(bytes)?;
        Ok(Self(bytes.to_vec()))
    }

    fn write(&self, w: &mut Writer) {
        w.bytes(&self.0);
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Self::from_bytes(r.bytes()?)
    }
}

impl fmt::Debug for CaddrToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CaddrToken({})", &self.id()[..12])
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceAccount {
    pub source_id: String,
    pub account_id: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenialReason {
    AddressMismatch,
    ProofInvalid,
    NoMatch,
    Timeout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Tier(u32),
    Denied(DenialReason),
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Tier(i) => write!(f, "tier {i}"),
            Outcome::Denied(r) => write!(f, "denied ({r:?})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    Timeout,
    FingerprintMismatch,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProofResponseBody {
    Bundle(Box<ProofBundle>),
    NoAggregate,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    SessionManifest {
        caddr_token: CaddrToken,
        expected: Vec<SourceAccount>,
    },
    AuthChallenge {
        source_id: String,
        sealed_nonce: SealedEnvelope,
    },
    /// Reveals the (now spent) nonce so the response is publicly auditable.
    AuthResponse {
        source_id: String,
        nonce: [u8; NONCE_LEN],
        signature: Signature,
    },
    AssetUpload {
        source_id: String,
        caddr_token: CaddrToken,
        sealed_ciphertext: SealedEnvelope,
    },
    AggregateResult {
        caddr_token: CaddrToken,
        ciphertext: HeCiphertext,
    },
    SessionAborted {
        caddr_token: CaddrToken,
        reason: AbortReason,
        missing_sources: Vec<String>,
    },
    /// Applicant identity (signature key + signature) sealed to the operator.
    ServiceApplication {
        caddr_token: CaddrToken,
        sealed_identity: SealedEnvelope,
    },
    ProofRequest {
        application_height: u64,
        caddr_token: CaddrToken,
        statement: RangeStatement,
    },
    ProofResponse {
        request_height: u64,
        caddr_token: CaddrToken,
        body: ProofResponseBody,
    },
    /// The applicant's address stays with the operator; only the outcome is
    /// published.
    ServiceDecision {
        request_height: u64,
        outcome: Outcome,
    },
}

fn write_strings(w: &mut Writer, items: &[String]) {
    w.u32(items.len() as u32);
    for s in items {
        w.str(s);
    }
}

fn read_strings(r: &mut Reader<'_>) -> Result<Vec<String>, DecodeError> {
    let n = r.u32()?;
    if n > 4096 {
        return Err(DecodeError::Invalid("list length"));
    }
    (0..n).map(|_| r.string()).collect()
}

fn write_outcome(w: &mut Writer, o: Outcome) {
    match o {
        Outcome::Tier(i) => {
            w.u8(0).u32(i);
        }
        Outcome::Denied(reason) => {
            let tag = match reason {
                DenialReason::AddressMismatch => 1,
                DenialReason::ProofInvalid => 2,
                DenialReason::NoMatch => 3,
                DenialReason::Timeout => 4,
            };
            w.u8(tag);
        }
    }
}

fn read_outcome(r: &mut Reader<'_>) -> Result<Outcome, DecodeError> {
    Ok(match r.u8()? {
        0 => Outcome::Tier(r.u32()?),
        1 => Outcome::Denied(DenialReason::AddressMismatch),
        2 => Outcome::Denied(DenialReason::ProofInvalid),
        3 => Outcome::Denied(DenialReason::NoMatch),
        4 => Outcome::Denied(DenialReason::Timeout),
        tag => {
            return Err(DecodeError::InvalidTag {
                what: "outcome",
                tag,
            })
        }
    })
}

impl Payload {
    pub fn kind(&self) -> RecordKind {
        match self {
            Payload::SessionManifest { .. } => RecordKind::SessionManifest,
            Payload::AuthChallenge { .. } => RecordKind::AuthChallenge,
            Payload::AuthResponse { .. } => RecordKind::AuthResponse,
            Payload::AssetUpload { .. } => RecordKind::AssetUpload,
            Payload::AggregateResult { .. } => RecordKind::AggregateResult,
            Payload::SessionAborted { .. } => RecordKind::SessionAborted,
            Payload::ServiceApplication { .. } => RecordKind::ServiceApplication,
            Payload::ProofRequest { .. } => RecordKind::ProofRequest,
            Payload::ProofResponse { .. } => RecordKind::ProofResponse,
            Payload::ServiceDecision { .. } => RecordKind::ServiceDecision,
        }
    }

    /// Token carried by this payload, if its kind carries one.
    pub fn caddr_token(&self) -> Option<&CaddrToken> {
        match self {
            Payload::SessionManifest { caddr_token, .. }
            | Payload::AssetUpload { caddr_token, .. }
            | Payload::AggregateResult { caddr_token, .. }
            | Payload::SessionAborted { caddr_token, .. }
            | Payload::ServiceApplication { caddr_token, .. }
            | Payload::ProofRequest { caddr_token, .. }
            | Payload::ProofResponse { caddr_token, .. } => Some(caddr_token),
            _ => None,
        }
    }

    pub fn encode(&self, params: &GroupParams) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            Payload::SessionManifest {
                caddr_token,
                expected,
            } => {
                caddr_token.write(&mut w);
                w.u32(expected.len() as u32);
                for sa in expected {
                    w.str(&sa.source_id).str(&sa.account_id);
                }
            }
            Payload::AuthChallenge {
                source_id,
                sealed_nonce,
            } => {
                w.str(source_id).bytes(&sealed_nonce.encode());
            }
            Payload::AuthResponse {
                source_id,
                nonce,
                signature,
            } => {
                w.str(source_id).raw(nonce).bytes(&signature.0);
            }
            Payload::AssetUpload {
                source_id,
                caddr_token,
                sealed_ciphertext,
            } => {
                w.str(source_id);
                caddr_token.write(&mut w);
                w.bytes(&sealed_ciphertext.encode());
            }
            Payload::AggregateResult {
                caddr_token,
                ciphertext,
            } => {
                caddr_token.write(&mut w);
                w.bytes(&ciphertext.encode());
            }
            Payload::SessionAborted {
                caddr_token,
                reason,
                missing_sources,
            } => {
                caddr_token.write(&mut w);
                w.u8(match reason {
                    AbortReason::Timeout => 0,
                    AbortReason::FingerprintMismatch => 1,
                });
                write_strings(&mut w, missing_sources);
            }
            Payload::ServiceApplication {
                caddr_token,
                sealed_identity,
            } => {
                caddr_token.write(&mut w);
                w.bytes(&sealed_identity.encode());
            }
            Payload::ProofRequest {
                application_height,
                caddr_token,
                statement,
            } => {
                w.u64(*application_height);
                caddr_token.write(&mut w);
                statement.write(&mut w);
            }
            Payload::ProofResponse {
                request_height,
                caddr_token,
                body,
            } => {
                w.u64(*request_height);
                caddr_token.write(&mut w);
                match body {
                    ProofResponseBody::NoAggregate => {
                        w.u8(0);
                    }
                    ProofResponseBody::Bundle(bundle) => {
                        w.u8(1);
                        bundle.write(params, &mut w);
                    }
                }
            }
            Payload::ServiceDecision {
                request_height,
                outcome,
            } => {
                w.u64(*request_height);
                write_outcome(&mut w, *outcome);
            }
        }
        w.finish()
    }

    pub fn decode(
        kind: RecordKind,
        bytes: &[u8],
        params: &GroupParams,
    ) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let payload = match kind {
            RecordKind::SessionManifest => {
                let caddr_token = CaddrToken::read(&mut r)?;
                let n = r.u32()?;
                if n == 0 || n > 4096 {
                    return Err(DecodeError::Invalid("manifest source count"));
                }
                let expected = (0..n)
                    .map(|_| {
                        Ok(SourceAccount {
                            source_id: r.string()?,
                            account_id: r.string()?,
                        })
                    })
                    .collect::<Result<Vec<_>, DecodeError>>()?;
                Payload::SessionManifest {
                    caddr_token,
                    expected,
                }
            }
            RecordKind::AuthChallenge => Payload::AuthChallenge {
                source_id: r.string()?,
                sealed_nonce: SealedEnvelope::decode(r.bytes()?)?,
            },
            RecordKind::AuthResponse => Payload::AuthResponse {
                source_id: r.string()?,
                nonce: r.array::<NONCE_LEN>()?,
                signature: Signature(r.bytes()?.to_vec()),
            },
            RecordKind::AssetUpload => Payload::AssetUpload {
                source_id: r.string()?,
                caddr_token: CaddrToken::read(&mut r)?,
                sealed_ciphertext: SealedEnvelope::decode(r.bytes()?)?,
            },
            RecordKind::AggregateResult => Payload::AggregateResult {
                caddr_token: CaddrToken::read(&mut r)?,
                ciphertext: HeCiphertext::decode(r.bytes()?)?,
            },
            RecordKind::SessionAborted => Payload::SessionAborted {
                caddr_token: CaddrToken::read(&mut r)?,
                reason: match r.u8()? {
                    0 => AbortReason::Timeout,
                    1 => AbortReason::FingerprintMismatch,
                    tag => {
                        return Err(DecodeError::InvalidTag {
                            what: "abort reason",
                            tag,
                        })
                    }
                },
                missing_sources: read_strings(&mut r)?,
            },
            RecordKind::ServiceApplication => Payload::ServiceApplication {
                caddr_token: CaddrToken::read(&mut r)?,
                sealed_identity: SealedEnvelope::decode(r.bytes()?)?,
            },
            RecordKind::ProofRequest => Payload::ProofRequest {
                application_height: r.u64()?,
                caddr_token: CaddrToken::read(&mut r)?,
                statement: RangeStatement::read(&mut r)?,
            },
            RecordKind::ProofResponse => Payload::ProofResponse {
                request_height: r.u64()?,
                caddr_token: CaddrToken::read(&mut r)?,
                body: match r.u8()? {
                    0 => ProofResponseBody::NoAggregate,
                    1 => ProofResponseBody::Bundle(Box::new(ProofBundle::read(params, &mut r)?)),
                    tag => {
                        return Err(DecodeError::InvalidTag {
                            what: "proof response",
                            tag,
                        })
                    }
                },
            },
            RecordKind::ServiceDecision => Payload::ServiceDecision {
                request_height: r.u64()?,
                outcome: read_outcome(&mut r)?,
            },
        };
        r.finish()?;
        Ok(payload)
    }
}
