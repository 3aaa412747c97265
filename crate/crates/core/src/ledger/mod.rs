//! Simulated public append-only ledger.
//!
//! Every protocol message is a [`LedgerRecord`]; heights are dense from zero
//! and records are immutable once appended. There are no blocks or consensus:
//! the ledger is a public, ordered bulletin board. Logical time advances by
//! one on every append and on every idle scheduler round ([`Ledger::tick`]),
//! which is what session timeouts are measured against.

pub mod payload;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::encoding::DecodeError;
use crate::rangeproof::GroupParams;

pub use payload::{
    AbortReason, CaddrToken, DenialReason, Outcome, Payload, ProofResponseBody, SourceAccount,
    NONCE_LEN,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("malformed {kind} payload: {source}")]
    MalformedPayload {
        kind: RecordKind,
        source: DecodeError,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RecordKind {
    SessionManifest,
    AuthChallenge,
    AuthResponse,
    AssetUpload,
    AggregateResult,
    SessionAborted,
    ServiceApplication,
    ProofRequest,
    ProofResponse,
    ServiceDecision,
}

impl RecordKind {
    pub const ALL: [RecordKind; 10] = [
        RecordKind::SessionManifest,
        RecordKind::AuthChallenge,
        RecordKind::AuthResponse,
        RecordKind::AssetUpload,
        RecordKind::AggregateResult,
        RecordKind::SessionAborted,
        RecordKind::ServiceApplication,
        RecordKind::ProofRequest,
        RecordKind::ProofResponse,
        RecordKind::ServiceDecision,
    ];
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(&format!("{self:?}"))
    }
}

impl FromStr for RecordKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RecordKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| format!("unknown record kind {s:?}"))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct SessionId(pub [u8; 16]);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SessionId({self})")
    }
}

impl From<SessionId> for String {
    fn from(s: SessionId) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for SessionId {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        let bytes = hex::decode(&s).map_err(|e| format!("session id {s:?}: {e}"))?;
        Ok(SessionId(bytes.try_into().map_err(|_| {
            format!("session id {s:?} must be 16 bytes")
        })?))
    }
}

/// Record author: a role tag such as `relayer`, `source:<id>` or the
/// anonymous `user`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Author(pub String);

impl Author {
    pub fn new(tag: impl Into<String>) -> Self {
        Self(tag.into())
    }
}

impl fmt::Display for Author {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerRecord {
    height: u64,
    kind: RecordKind,
    session_id: SessionId,
    author: Author,
    payload: Vec<u8>,
    logical_time: u64,
}

/// One dump line. Field order is the on-disk key order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordLine {
    pub height: u64,
    pub kind: RecordKind,
    pub session_id: SessionId,
    pub author: Author,
    pub payload_hex: String,
    pub logical_time: u64,
}

impl LedgerRecord {
    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn kind(&self) -> RecordKind {
        self.kind
    }

    pub fn session_id(&self) -> SessionId {
        self.session_id
    }

    pub fn author(&self) -> &Author {
        &self.author
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn logical_time(&self) -> u64 {
        self.logical_time
    }

    pub fn decode(&self, params: &GroupParams) -> Result<Payload, DecodeError> {
        Payload::decode(self.kind, &self.payload, params)
    }

    pub fn to_line(&self) -> RecordLine {
        RecordLine {
            height: self.height,
            kind: self.kind,
            session_id: self.session_id,
            author: self.author.clone(),
            payload_hex: hex::encode(&self.payload),
            logical_time: self.logical_time,
        }
    }

    /// Rebuilds a record from a dump line without validating the payload.
    pub fn from_line(line: &RecordLine) -> Result<Self, hex::FromHexError> {
        Ok(Self {
            height: line.height,
            kind: line.kind,
            session_id: line.session_id,
            author: line.author.clone(),
            payload: hex::decode(&line.payload_hex)?,
            logical_time: line.logical_time,
        })
    }

    pub fn digest(&self) -> [u8; 32] {
        let line = serde_json::to_vec(&self.to_line()).expect("record serializes");
        Sha256::digest(line).into()
    }
}

#[derive(Clone, Debug)]
pub struct Ledger {
    params: GroupParams,
    records: Vec<LedgerRecord>,
    clock: u64,
}

impl Ledger {
    pub fn new(params: GroupParams) -> Self {
        Self {
            params,
            records: Vec::new(),
            clock: 0,
        }
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    /// Appends after checking the payload decodes for `kind`; returns the
    /// new record's height. A rejected append leaves the ledger unchanged.
    pub fn append(
        &mut self,
        kind: RecordKind,
        session_id: SessionId,
        author: Author,
        payload: Vec<u8>,
    ) -> Result<u64, LedgerError> {
        Payload::decode(kind, &payload, &self.params)
            .map_err(|source| LedgerError::MalformedPayload { kind, source })?;
        let height = self.records.len() as u64;
        self.clock += 1;
        self.records.push(LedgerRecord {
            height,
            kind,
            session_id,
            author,
            payload,
            logical_time: self.clock,
        });
        Ok(height)
    }

    pub fn append_payload(
        &mut self,
        session_id: SessionId,
        author: Author,
        payload: &Payload,
    ) -> Result<u64, LedgerError> {
        let bytes = payload.encode(&self.params);
        self.append(payload.kind(), session_id, author, bytes)
    }

    /// Advances logical time without appending (an empty round).
    pub fn tick(&mut self) {
        self.clock += 1;
    }

    pub fn now(&self) -> u64 {
        self.clock
    }

    pub fn height(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    pub fn get(&self, height: u64) -> Option<&LedgerRecord> {
        self.records.get(usize::try_from(height).ok()?)
    }

    pub fn query(&self, session_id: SessionId, kind: Option<RecordKind>) -> Vec<&LedgerRecord> {
        self.records
            .iter()
            .filter(|r| r.session_id == session_id && kind.is_none_or(|k| r.kind == k))
            .collect()
    }

    pub fn poll(&self, from_height: u64) -> &[LedgerRecord] {
        let start = usize::try_from(from_height)
            .unwrap_or(usize::MAX)
            .min(self.records.len());
        &self.records[start..]
    }

    pub fn dump_lines(&self) -> Vec<RecordLine> {
        self.records.iter().map(LedgerRecord::to_line).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::Signature;
    use crate::Profile;
    use proptest::prelude::*;

    fn ledger() -> Ledger {
        Ledger::new(GroupParams::setup(Profile::Test))
    }

    fn response(i: u8) -> Payload {
        Payload::AuthResponse {
            source_id: format!("s{i}"),
            nonce: [i; 32],
            signature: Signature(vec![i; 8]),
        }
    }

    fn sid(i: u8) -> SessionId {
        SessionId([i; 16])
    }

    #[test]
    fn heights_are_dense() {
        let mut l = ledger();
        assert_eq!(
            l.append_payload(sid(1), Author::new("user"), &response(0))
                .unwrap(),
            0
        );
        assert_eq!(
            l.append_payload(sid(1), Author::new("user"), &response(1))
                .unwrap(),
            1
        );
        assert_eq!(l.height(), 2);
        assert_eq!(l.records()[1].logical_time(), 2);
    }

    #[test]
    fn payload_roundtrips_byte_exact() {
        let mut l = ledger();
        let bytes = response(7).encode(l.params());
        let h = l
            .append(
                RecordKind::AuthResponse,
                sid(2),
                Author::new("user"),
                bytes.clone(),
            )
            .unwrap();
        assert_eq!(l.get(h).unwrap().payload(), bytes.as_slice());
        assert_eq!(l.get(h).unwrap().decode(l.params()).unwrap(), response(7));
    }

    #[test]
    fn malformed_payload_rejected() {
        let mut l = ledger();
        let err = l.append(
            RecordKind::AssetUpload,
            sid(1),
            Author::new("x"),
            vec![1, 2, 3],
        );
        assert!(matches!(
            err,
            Err(LedgerError::MalformedPayload {
                kind: RecordKind::AssetUpload,
                ..
            })
        ));
        // Valid body under the wrong kind is also rejected.
        let body = response(1).encode(l.params());
        assert!(l
            .append(RecordKind::ServiceDecision, sid(1), Author::new("x"), body)
            .is_err());
        assert_eq!(l.height(), 0);
        assert_eq!(l.now(), 0);
    }

    #[test]
    fn query_filters() {
        let mut l = ledger();
        assert!(l.query(sid(9), None).is_empty());
        for i in 0..3 {
            l.append_payload(sid(1), Author::new("user"), &response(i))
                .unwrap();
            l.append_payload(
                sid(2),
                Author::new("operator"),
                &Payload::ServiceDecision {
                    request_height: u64::from(i),
                    outcome: Outcome::Tier(0),
                },
            )
            .unwrap();
        }
        let hits = l.query(sid(1), Some(RecordKind::AuthResponse));
        assert_eq!(
            hits.iter().map(|r| r.height()).collect::<Vec<_>>(),
            vec![0, 2, 4]
        );
        assert_eq!(l.query(sid(2), None).len(), 3);
        assert!(l.query(sid(2), Some(RecordKind::AuthResponse)).is_empty());
    }

    #[test]
    fn poll_basics() {
        let mut l = ledger();
        for i in 0..5 {
            l.append_payload(sid(1), Author::new("user"), &response(i))
                .unwrap();
        }
        assert_eq!(l.poll(0).len(), 5);
        assert!(l.poll(5).is_empty());
        assert!(l.poll(99).is_empty());
    }

    #[test]
    fn tick_advances_time_only() {
        let mut l = ledger();
        l.tick();
        l.tick();
        assert_eq!(l.height(), 0);
        let h = l
            .append_payload(sid(1), Author::new("user"), &response(0))
            .unwrap();
        assert_eq!(l.get(h).unwrap().logical_time(), 3);
    }

    #[test]
    fn dump_line_key_order() {
        let mut l = ledger();
        l.append_payload(sid(3), Author::new("relayer"), &response(1))
            .unwrap();
        let line = serde_json::to_string(&l.dump_lines()[0]).unwrap();
        let keys: Vec<_> = [
            "height",
            "kind",
            "session_id",
            "author",
            "payload_hex",
            "logical_time",
        ]
        .iter()
        .map(|k| line.find(&format!("\"{k}\"")).unwrap())
        .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]), "{line}");
        let parsed: RecordLine = serde_json::from_str(&line).unwrap();
        assert_eq!(LedgerRecord::from_line(&parsed).unwrap(), l.records()[0]);
    }

    proptest! {
        #[test]
        fn polls_partition_the_stream(batches in proptest::collection::vec(0usize..6, 1..10)) {
            let mut l = ledger();
            let mut cursor = 0u64;
            let mut seen = Vec::new();
            for (b, n) in batches.iter().enumerate() {
                for i in 0..*n {
                    l.append_payload(sid(b as u8), Author::new("user"), &response(i as u8)).unwrap();
                }
                let batch = l.poll(cursor);
                seen.extend(batch.iter().map(|r| r.height()));
                cursor = l.height();
            }
            prop_assert_eq!(seen, (0..l.height()).collect::<Vec<_>>());
        }
    }
}
