//! Protocol participants and the deterministic scheduler that drives them
//! over a shared [`Ledger`].
//!
//! Every actor sees the ledger only through `poll`; each has its own cursor
//! and its own RNG stream, so a run is a pure function of the scenario.

mod observe;
mod operator;
mod relayer;
mod source;
mod user;
mod world;
mod zkpsp;

pub use observe::{
    AddressVia, CallCounters, CiphertextOrigin, Event, KeyRole, Observation, ObservationLog,
};
pub use operator::{OperatorAgent, ServiceDecision};
pub use relayer::RelayerAgent;
pub use source::TrustedSourceAgent;
pub use user::{UserAgent, UserSessionResult};
pub use world::{EntityInfo, World, WorldError};
pub use zkpsp::ZkpspAgent;

use crate::encoding::{DecodeError, Reader, Writer};
use crate::envelope::{SigPublicKey, Signature};
use crate::ledger::{Author, CaddrToken, Ledger, LedgerRecord, Payload, SessionId};

const AUTH_TAG: &str = "veilsum/auth/v1";
const APPLY_TAG: &str = "veilsum/apply/v1";

pub const RELAYER: &str = "relayer";
pub const ZKPSP: &str = "zkpsp";
pub const OPERATOR: &str = "operator";
/// Manifests are authored anonymously so the ledger does not name users.
pub const ANONYMOUS_USER: &str = "user";

pub fn source_entity(source_id: &str) -> String {
    format!("source:{source_id}")
}

pub fn user_entity(name: &str) -> String {
    format!("user:{name}")
}

/// Message a user signs to answer a source's challenge.
pub fn auth_message(nonce: &[u8], session_id: SessionId, source_id: &str) -> Vec<u8> {
    let mut w = Writer::new();
    w.str(AUTH_TAG)
        .bytes(nonce)
        .raw(&session_id.0)
        .str(source_id);
    w.finish()
}

/// Message an applicant signs with its address key when applying.
pub fn application_message(session_id: SessionId, token: &CaddrToken) -> Vec<u8> {
    let mut w = Writer::new();
    w.str(APPLY_TAG).raw(&session_id.0).bytes(token.as_bytes());
    w.finish()
}

/// Plaintext of a sealed service application.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ApplicantIdentity {
    pub sig_public: SigPublicKey,
    pub signature: Signature,
}

impl ApplicantIdentity {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(&self.sig_public.encode()).bytes(&self.signature.0);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let sig_public = SigPublicKey::decode(r.bytes()?)?;
        let signature = Signature(r.bytes()?.to_vec());
        r.finish()?;
        Ok(Self {
            sig_public,
            signature,
        })
    }
}

pub(crate) struct Ctx<'a> {
    pub ledger: &'a mut Ledger,
    pub log: &'a mut ObservationLog,
}

impl Ctx<'_> {
    pub fn append(&mut self, session_id: SessionId, author: &str, payload: &Payload) -> u64 {
        self.ledger
            .append_payload(session_id, Author::new(author), payload)
            .expect("actors only emit well-formed payloads")
    }
}

pub(crate) trait Actor {
    fn on_record(&mut self, record: &LedgerRecord, payload: &Payload, ctx: &mut Ctx<'_>);

    /// Runs once per scheduling turn after new records are processed.
    fn after_poll(&mut self, _ctx: &mut Ctx<'_>) {}

    fn has_pending_work(&self) -> bool {
        false
    }
}
