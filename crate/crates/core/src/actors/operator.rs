use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{application_message, Actor, AddressVia, ApplicantIdentity, Ctx, Event, KeyRole};
use crate::encoding::Writer;
use crate::envelope::{self, Address, EntityKeys};
use crate::he::{HeCiphertext, HePrivateKey};
use crate::ledger::{
    CaddrToken, DenialReason, LedgerRecord, Outcome, Payload, ProofResponseBody, SessionId,
};
use crate::rangeproof::{self, GroupParams, RangeStatement, Verdict};
use crate::AssetAmount;

/// The operator's private record of a decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceDecision {
    pub address: Address,
    pub outcome: Outcome,
}

impl ServiceDecision {
    /// Canonical bytes, used to compare decisions across runs.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.address.0);
        match self.outcome {
            Outcome::Tier(i) => w.u8(0).u32(i),
            Outcome::Denied(r) => w.u8(1).u8(r as u8),
        };
        w.finish()
    }
}

#[derive(Clone, Debug)]
struct Application {
    session_id: SessionId,
    address: Address,
    token: CaddrToken,
}

/// Service operator: publishes tiers, verifies proofs and binds each
/// verdict to the applicant by opening the address token.
pub struct OperatorAgent {
    entity: String,
    keys: EntityKeys,
    params: GroupParams,
    tiers: RangeStatement,
    requests: BTreeMap<u64, Application>,
    decisions: BTreeMap<Address, ServiceDecision>,
    decision_log: Vec<(SessionId, ServiceDecision)>,
    leaked_he_key: Option<HePrivateKey>,
    seen_aggregates: BTreeMap<CaddrToken, HeCiphertext>,
}

impl OperatorAgent {
    pub(crate) fn new(
        keys: EntityKeys,
        params: GroupParams,
        tiers: RangeStatement,
        leaked_he_key: Option<HePrivateKey>,
    ) -> Self {
        Self {
            entity: super::OPERATOR.to_string(),
            keys,
            params,
            tiers,
            requests: BTreeMap::new(),
            decisions: BTreeMap::new(),
            decision_log: Vec::new(),
            leaked_he_key,
            seen_aggregates: BTreeMap::new(),
        }
    }

    pub fn keys(&self) -> &EntityKeys {
        &self.keys
    }

    pub fn tiers(&self) -> &RangeStatement {
        &self.tiers
    }

    /// Latest decision per applicant address.
    pub fn decisions(&self) -> &BTreeMap<Address, ServiceDecision> {
        &self.decisions
    }

    /// Every decision in ledger order, with the applicant's session.
    pub fn decision_log(&self) -> &[(SessionId, ServiceDecision)] {
        &self.decision_log
    }

    pub(crate) fn announce_keys(&self, ctx: &mut Ctx<'_>) {
        ctx.log.record(
            &self.entity,
            Event::KeyHeld {
                key: KeyRole::OperatorEnc,
            },
        );
        ctx.log.record(
            &self.entity,
            Event::KeyHeld {
                key: KeyRole::OwnSig,
            },
        );
        if self.leaked_he_key.is_some() {
            ctx.log.record(
                &self.entity,
                Event::KeyHeld {
                    key: KeyRole::HeDecryption,
                },
            );
        }
    }

    fn open_address(&self, token: &CaddrToken, ctx: &mut Ctx<'_>) -> Option<Address> {
        ctx.log.count(&self.entity, |c| c.envelope_open += 1);
        let bytes = envelope::open(&self.keys.enc_private, &token.envelope()).ok()?;
        let address = Address(bytes.try_into().ok()?);
        ctx.log.record(
            &self.entity,
            Event::AddressLearned {
                token: token.id(),
                address,
                via: AddressVia::Token,
            },
        );
        Some(address)
    }

    fn on_application(
        &mut self,
        record: &LedgerRecord,
        token: &CaddrToken,
        sealed: &envelope::SealedEnvelope,
        ctx: &mut Ctx<'_>,
    ) {
        ctx.log
            .record(&self.entity, Event::TokenSeen { token: token.id() });
        ctx.log.count(&self.entity, |c| c.envelope_open += 1);
        let Ok(bytes) = envelope::open(&self.keys.enc_private, sealed) else {
            return;
        };
        let Ok(identity) = ApplicantIdentity::decode(&bytes) else {
            return;
        };
        let session_id = record.session_id();
        if !envelope::verify(
            &identity.sig_public,
            &application_message(session_id, token),
            &identity.signature,
        ) {
            return;
        }
        let address = envelope::address_of(&identity.sig_public);
        ctx.log.record(
            &self.entity,
            Event::AddressLearned {
                token: token.id(),
                address,
                via: AddressVia::Application,
            },
        );
        let request_height = ctx.append(
            session_id,
            &self.entity,
            &Payload::ProofRequest {
                application_height: record.height(),
                caddr_token: token.clone(),
                statement: self.tiers.clone(),
            },
        );
        self.requests.insert(
            request_height,
            Application {
                session_id,
                address,
                token: token.clone(),
            },
        );
    }

    fn decide(
        &mut self,
        app: &Application,
        body: &ProofResponseBody,
        ctx: &mut Ctx<'_>,
    ) -> Outcome {
        if self.open_address(&app.token, ctx) != Some(app.address) {
            return Outcome::Denied(DenialReason::AddressMismatch);
        }
        let bundle = match body {
            ProofResponseBody::NoAggregate => return Outcome::Denied(DenialReason::Timeout),
            ProofResponseBody::Bundle(b) => b,
        };
        let verdict = rangeproof::verify_bundle(&self.params, bundle, &self.tiers)
            .unwrap_or(Verdict::Rejected);
        ctx.log.record(
            &self.entity,
            Event::VerdictComputed {
                token: app.token.id(),
                verdict: verdict.clone(),
            },
        );
        match verdict {
            Verdict::Labels(_) => {
                Outcome::Tier(verdict.matched_index().expect("labels have one match") as u32)
            }
            Verdict::NoMatch => Outcome::Denied(DenialReason::NoMatch),
            Verdict::Rejected => Outcome::Denied(DenialReason::ProofInvalid),
        }
    }

    fn learn_total(&self, token: &CaddrToken, ctx: &mut Ctx<'_>) {
        let (Some(sk), Some(c)) = (&self.leaked_he_key, self.seen_aggregates.get(token)) else {
            return;
        };
        ctx.log.count(&self.entity, |c| c.he_decrypt += 1);
        if let Some(total) = sk.decrypt(c).ok().and_then(|m| u64::try_from(&m).ok()) {
            ctx.log.record(
                &self.entity,
                Event::TotalDecrypted {
                    token: token.id(),
                    amount: AssetAmount(total),
                },
            );
        }
    }
}

impl Actor for OperatorAgent {
    fn on_record(&mut self, record: &LedgerRecord, payload: &Payload, ctx: &mut Ctx<'_>) {
        match payload {
            Payload::ServiceApplication {
                caddr_token,
                sealed_identity,
            } => {
                self.on_application(record, caddr_token, sealed_identity, ctx);
            }
            Payload::AggregateResult {
                caddr_token,
                ciphertext,
            } if self.leaked_he_key.is_some() => {
                self.seen_aggregates
                    .entry(caddr_token.clone())
                    .or_insert_with(|| ciphertext.clone());
            }
            Payload::ProofResponse {
                request_height,
                caddr_token,
                body,
            } => {
                let Some(app) = self.requests.remove(request_height) else {
                    return;
                };
                let outcome = if caddr_token != &app.token {
                    Outcome::Denied(DenialReason::AddressMismatch)
                } else {
                    self.decide(&app, body, ctx)
                };
                self.learn_total(&app.token, ctx);
                ctx.append(
                    app.session_id,
                    &self.entity,
                    &Payload::ServiceDecision {
                        request_height: *request_height,
                        outcome,
                    },
                );
                let decision = ServiceDecision {
                    address: app.address,
                    outcome,
                };
                self.decisions.insert(app.address, decision);
                self.decision_log.push((app.session_id, decision));
            }
            _ => {}
        }
    }
}
