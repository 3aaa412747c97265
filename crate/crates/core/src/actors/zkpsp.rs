use std::collections::BTreeMap;

use super::{Actor, AddressVia, CiphertextOrigin, Ctx, Event, KeyRole};
use crate::envelope::{self, Address, EncPrivateKey};
use crate::he::{HeCiphertext, HePrivateKey, HePublicKey};
use crate::ledger::{CaddrToken, LedgerRecord, Payload, ProofResponseBody};
use crate::rangeproof::{self, GroupParams, RangeStatement};
use crate::rng::ProtocolRng;
use crate::AssetAmount;

/// Proof service: the only holder of the HE decryption key. Decrypts an
/// aggregate only when asked for a proof, and publishes nothing but a
/// commitment and a membership proof.
pub struct ZkpspAgent {
    entity: String,
    he_public: HePublicKey,
    he_private: HePrivateKey,
    params: GroupParams,
    rng: ProtocolRng,
    aggregates: BTreeMap<CaddrToken, HeCiphertext>,
    leaked_operator_key: Option<EncPrivateKey>,
}

impl ZkpspAgent {
    pub(crate) fn new(
        he_private: HePrivateKey,
        params: GroupParams,
        rng: ProtocolRng,
        leaked_operator_key: Option<EncPrivateKey>,
    ) -> Self {
        Self {
            entity: super::ZKPSP.to_string(),
            he_public: he_private.public().clone(),
            he_private,
            params,
            rng,
            aggregates: BTreeMap::new(),
            leaked_operator_key,
        }
    }

    pub fn he_public(&self) -> &HePublicKey {
        &self.he_public
    }

    pub(crate) fn announce_keys(&self, ctx: &mut Ctx<'_>) {
        ctx.log.record(
            &self.entity,
            Event::KeyHeld {
                key: KeyRole::HeDecryption,
            },
        );
        if self.leaked_operator_key.is_some() {
            ctx.log.record(
                &self.entity,
                Event::KeyHeld {
                    key: KeyRole::OperatorEnc,
                },
            );
        }
    }

    fn on_aggregate(&mut self, token: &CaddrToken, ciphertext: &HeCiphertext, ctx: &mut Ctx<'_>) {
        if self.aggregates.contains_key(token) {
            return;
        }
        ctx.log
            .record(&self.entity, Event::TokenSeen { token: token.id() });
        ctx.log.record(
            &self.entity,
            Event::CiphertextHeld {
                token: token.id(),
                origin: CiphertextOrigin::Aggregate,
            },
        );
        if let Some(sk) = &self.leaked_operator_key {
            ctx.log.count(&self.entity, |c| c.envelope_open += 1);
            if let Ok(bytes) = envelope::open(sk, &token.envelope()) {
                if let Ok(raw) = <[u8; 20]>::try_from(bytes.as_slice()) {
                    ctx.log.record(
                        &self.entity,
                        Event::AddressLearned {
                            token: token.id(),
                            address: Address(raw),
                            via: AddressVia::Token,
                        },
                    );
                }
            }
        }
        self.aggregates.insert(token.clone(), ciphertext.clone());
    }

    fn prove(
        &mut self,
        token: &CaddrToken,
        statement: &RangeStatement,
        ctx: &mut Ctx<'_>,
    ) -> ProofResponseBody {
        let Some(aggregate) = self.aggregates.get(token) else {
            return ProofResponseBody::NoAggregate;
        };
        ctx.log.count(&self.entity, |c| c.he_decrypt += 1);
        let Ok(total) = self.he_private.decrypt(aggregate) else {
            return ProofResponseBody::NoAggregate;
        };
        let Ok(total) = u64::try_from(&total) else {
            return ProofResponseBody::NoAggregate;
        };
        ctx.log.record(
            &self.entity,
            Event::TotalDecrypted {
                token: token.id(),
                amount: AssetAmount(total),
            },
        );
        ctx.log.count(&self.entity, |c| c.proof_respond += 1);
        match rangeproof::respond(&self.params, total, statement, &mut self.rng) {
            Ok(bundle) => {
                ctx.log.record(
                    &self.entity,
                    Event::ProofGenerated {
                        token: token.id(),
                        matched_index: bundle.matched_index(),
                    },
                );
                ProofResponseBody::Bundle(Box::new(bundle))
            }
            Err(_) => ProofResponseBody::NoAggregate,
        }
    }
}

impl Actor for ZkpspAgent {
    fn on_record(&mut self, record: &LedgerRecord, payload: &Payload, ctx: &mut Ctx<'_>) {
        match payload {
            Payload::AggregateResult {
                caddr_token,
                ciphertext,
            } => self.on_aggregate(caddr_token, ciphertext, ctx),
            Payload::ProofRequest {
                caddr_token,
                statement,
                ..
            } => {
                let body = self.prove(caddr_token, statement, ctx);
                ctx.append(
                    record.session_id(),
                    &self.entity,
                    &Payload::ProofResponse {
                        request_height: record.height(),
                        caddr_token: caddr_token.clone(),
                        body,
                    },
                );
            }
            _ => {}
        }
    }
}
