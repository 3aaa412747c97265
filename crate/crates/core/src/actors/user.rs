use std::collections::BTreeMap;

use rand::RngCore;

use super::{application_message, auth_message, Actor, ApplicantIdentity, Ctx, ANONYMOUS_USER};
use crate::envelope::{self, Address, EncPublicKey, EntityKeys, Signature};
use crate::ledger::{
    CaddrToken, LedgerRecord, Outcome, Payload, SessionId, SourceAccount, NONCE_LEN,
};
use crate::rng::ProtocolRng;

/// How a user behaves. Malicious variants model the two substitution
/// attacks: claiming someone else's accounts, and re-using someone else's
/// aggregate when applying.
#[derive(Clone, Debug)]
pub(crate) enum Behaviour {
    Honest,
    Phase1Substitution {
        victim_address: Address,
        victim_accounts: Vec<SourceAccount>,
    },
    Phase2Substitution,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserSessionResult {
    pub session_id: SessionId,
    pub token: CaddrToken,
    pub aborted: bool,
    pub outcome: Option<Outcome>,
}

#[derive(Clone, Debug)]
struct Session {
    token: CaddrToken,
    applied: bool,
    request_height: Option<u64>,
    result: UserSessionResult,
}

/// A user. `chain_keys` own the on-chain address; `credential_keys` are the
/// owner keys registered with the user's sources. Keeping them apart means a
/// source never handles anything that derives the address.
pub struct UserAgent {
    entity: String,
    chain_keys: EntityKeys,
    credential_keys: EntityKeys,
    address: Address,
    accounts: Vec<SourceAccount>,
    operator_enc: EncPublicKey,
    behaviour: Behaviour,
    rng: ProtocolRng,
    sessions: BTreeMap<SessionId, Session>,
    application_heights: BTreeMap<u64, SessionId>,
}

impl UserAgent {
    pub(crate) fn new(
        entity: String,
        chain_keys: EntityKeys,
        credential_keys: EntityKeys,
        accounts: Vec<SourceAccount>,
        operator_enc: EncPublicKey,
        behaviour: Behaviour,
        rng: ProtocolRng,
    ) -> Self {
        let address = envelope::address_of(&chain_keys.sig_public);
        Self {
            entity,
            chain_keys,
            credential_keys,
            address,
            accounts,
            operator_enc,
            behaviour,
            rng,
            sessions: BTreeMap::new(),
            application_heights: BTreeMap::new(),
        }
    }

    pub fn entity(&self) -> &str {
        &self.entity
    }

    pub fn address(&self) -> Address {
        self.address
    }

    pub fn credential_keys(&self) -> &EntityKeys {
        &self.credential_keys
    }

    pub fn is_honest(&self) -> bool {
        matches!(self.behaviour, Behaviour::Honest)
    }

    pub fn results(&self) -> Vec<UserSessionResult> {
        self.sessions.values().map(|s| s.result.clone()).collect()
    }

    fn fresh_session_id(&mut self) -> SessionId {
        let mut id = [0u8; 16];
        self.rng.fill_bytes(&mut id);
        SessionId(id)
    }

    fn track(&mut self, session_id: SessionId, token: CaddrToken) {
        let result = UserSessionResult {
            session_id,
            token: token.clone(),
            aborted: false,
            outcome: None,
        };
        self.sessions.insert(
            session_id,
            Session {
                token,
                applied: false,
                request_height: None,
                result,
            },
        );
    }

    /// Opens a session: seals the address (or the victim's) once and lists
    /// the accounts to aggregate.
    pub(crate) fn start(&mut self, ctx: &mut Ctx<'_>) {
        let (address, expected) = match &self.behaviour {
            Behaviour::Honest => (self.address, self.accounts.clone()),
            Behaviour::Phase1Substitution {
                victim_address,
                victim_accounts,
            } => (*victim_address, victim_accounts.clone()),
            Behaviour::Phase2Substitution => return,
        };
        let session_id = self.fresh_session_id();
        let sealed = envelope::seal(&self.operator_enc, &address.0, &mut self.rng);
        let token = CaddrToken::from_envelope(&sealed);
        self.track(session_id, token.clone());
        ctx.append(
            session_id,
            ANONYMOUS_USER,
            &Payload::SessionManifest {
                caddr_token: token,
                expected,
            },
        );
    }

    fn apply(&mut self, session_id: SessionId, token: CaddrToken, ctx: &mut Ctx<'_>) {
        let message = application_message(session_id, &token);
        let identity = ApplicantIdentity {
            sig_public: self.chain_keys.sig_public.clone(),
            signature: envelope::sign(&self.chain_keys.sig_private, &message, &mut self.rng),
        };
        let sealed_identity = envelope::seal(&self.operator_enc, &identity.encode(), &mut self.rng);
        let height = ctx.append(
            session_id,
            ANONYMOUS_USER,
            &Payload::ServiceApplication {
                caddr_token: token,
                sealed_identity,
            },
        );
        self.application_heights.insert(height, session_id);
        if let Some(s) = self.sessions.get_mut(&session_id) {
            s.applied = true;
        }
    }

    fn answer_challenge(
        &mut self,
        record: &LedgerRecord,
        source_id: &str,
        sealed: &envelope::SealedEnvelope,
        ctx: &mut Ctx<'_>,
    ) {
        let session_id = record.session_id();
        let (nonce, signing_key) = match envelope::open(&self.credential_keys.enc_private, sealed) {
            Ok(bytes) if bytes.len() == NONCE_LEN && self.is_honest() => (
                bytes.try_into().expect("length checked"),
                &self.credential_keys.sig_private,
            ),
            _ if self.is_honest() => return,
            // The challenge went to the victim; guess a nonce and sign with
            // whatever key is at hand.
            _ => {
                let mut guess = [0u8; NONCE_LEN];
                self.rng.fill_bytes(&mut guess);
                (guess, &self.credential_keys.sig_private)
            }
        };
        let message = auth_message(&nonce, session_id, source_id);
        let signature: Signature = envelope::sign(signing_key, &message, &mut self.rng);
        ctx.append(
            session_id,
            ANONYMOUS_USER,
            &Payload::AuthResponse {
                source_id: source_id.to_string(),
                nonce,
                signature,
            },
        );
    }
}

impl Actor for UserAgent {
    fn on_record(&mut self, record: &LedgerRecord, payload: &Payload, ctx: &mut Ctx<'_>) {
        let session_id = record.session_id();
        let own = self.sessions.contains_key(&session_id);
        match payload {
            Payload::AuthChallenge {
                source_id,
                sealed_nonce,
            } if own => {
                self.answer_challenge(record, source_id, sealed_nonce, ctx);
            }
            Payload::AggregateResult { caddr_token, .. } => {
                if let Some(s) = self.sessions.get(&session_id) {
                    if self.is_honest() && !s.applied && &s.token == caddr_token {
                        self.apply(session_id, caddr_token.clone(), ctx);
                    }
                } else if matches!(self.behaviour, Behaviour::Phase2Substitution)
                    && self.sessions.is_empty()
                {
                    let stolen = caddr_token.clone();
                    let new_session = self.fresh_session_id();
                    self.track(new_session, stolen.clone());
                    self.apply(new_session, stolen, ctx);
                }
            }
            Payload::SessionAborted { caddr_token, .. } => {
                if let Some(s) = self.sessions.get_mut(&session_id) {
                    if &s.token == caddr_token {
                        s.result.aborted = true;
                    }
                }
            }
            Payload::ProofRequest {
                application_height, ..
            } => {
                if let Some(sid) = self.application_heights.get(application_height) {
                    if let Some(s) = self.sessions.get_mut(sid) {
                        s.request_height = Some(record.height());
                    }
                }
            }
            Payload::ServiceDecision {
                request_height,
                outcome,
            } => {
                for s in self.sessions.values_mut() {
                    if s.request_height == Some(*request_height) {
                        s.result.outcome = Some(*outcome);
                    }
                }
            }
            _ => {}
        }
    }
}
