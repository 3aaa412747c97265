use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use rand::RngCore;

use super::{auth_message, Actor, AddressVia, Ctx, Event, KeyRole};
use crate::envelope::{self, Address, EncPrivateKey, EncPublicKey, EntityKeys, SigPublicKey};
use crate::he::HePublicKey;
use crate::ledger::{CaddrToken, LedgerRecord, Payload, SessionId, NONCE_LEN};
use crate::rng::ProtocolRng;
use crate::AssetAmount;

/// A registry entry: the balance and the owner's registered credential keys.
#[derive(Clone, Debug)]
pub(crate) struct RegisteredAccount {
    pub amount: AssetAmount,
    pub owner_enc: EncPublicKey,
    pub owner_sig: SigPublicKey,
}

#[derive(Clone, Debug)]
struct Challenge {
    account_id: String,
    nonce: [u8; NONCE_LEN],
    token: CaddrToken,
}

/// Holds per-account balances. Uploads a ciphertext under the proof
/// service's HE key, sealed to the relayer, only after the account owner
/// answers a fresh challenge.
pub struct TrustedSourceAgent {
    entity: String,
    source_id: String,
    keys: EntityKeys,
    registry: BTreeMap<String, RegisteredAccount>,
    relayer_enc: EncPublicKey,
    he_public: HePublicKey,
    rng: ProtocolRng,
    challenges: BTreeMap<SessionId, Challenge>,
    finished: BTreeSet<SessionId>,
    failed: BTreeSet<SessionId>,
    leaked_operator_key: Option<EncPrivateKey>,
}

impl TrustedSourceAgent {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        entity: String,
        source_id: String,
        keys: EntityKeys,
        registry: BTreeMap<String, RegisteredAccount>,
        relayer_enc: EncPublicKey,
        he_public: HePublicKey,
        rng: ProtocolRng,
        leaked_operator_key: Option<EncPrivateKey>,
    ) -> Self {
        Self {
            entity,
            source_id,
            keys,
            registry,
            relayer_enc,
            he_public,
            rng,
            challenges: BTreeMap::new(),
            finished: BTreeSet::new(),
            failed: BTreeSet::new(),
            leaked_operator_key,
        }
    }

    pub fn entity(&self) -> &str {
        &self.entity
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn keys(&self) -> &EntityKeys {
        &self.keys
    }

    /// Sessions this source refused locally (unknown account).
    pub fn failed_sessions(&self) -> impl Iterator<Item = &SessionId> {
        self.failed.iter()
    }

    #[cfg(test)]
    pub(crate) fn forget_accounts(&mut self) {
        self.registry.clear();
    }

    pub(crate) fn announce_keys(&self, ctx: &mut Ctx<'_>) {
        ctx.log.record(
            &self.entity,
            Event::KeyHeld {
                key: KeyRole::OwnEnc,
            },
        );
        ctx.log.record(
            &self.entity,
            Event::KeyHeld {
                key: KeyRole::OwnSig,
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

    fn on_manifest(
        &mut self,
        session_id: SessionId,
        token: &CaddrToken,
        account_id: &str,
        ctx: &mut Ctx<'_>,
    ) {
        if self.challenges.contains_key(&session_id) || self.failed.contains(&session_id) {
            return;
        }
        ctx.log
            .record(&self.entity, Event::TokenSeen { token: token.id() });
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
        let Some(account) = self.registry.get(account_id) else {
            self.failed.insert(session_id);
            return;
        };
        let mut nonce = [0u8; NONCE_LEN];
        self.rng.fill_bytes(&mut nonce);
        let sealed_nonce = envelope::seal(&account.owner_enc, &nonce, &mut self.rng);
        self.challenges.insert(
            session_id,
            Challenge {
                account_id: account_id.to_string(),
                nonce,
                token: token.clone(),
            },
        );
        ctx.append(
            session_id,
            &self.entity,
            &Payload::AuthChallenge {
                source_id: self.source_id.clone(),
                sealed_nonce,
            },
        );
    }

    fn on_response(
        &mut self,
        session_id: SessionId,
        nonce: &[u8; NONCE_LEN],
        signature: &envelope::Signature,
        ctx: &mut Ctx<'_>,
    ) {
        if self.finished.contains(&session_id) {
            return;
        }
        let Some(challenge) = self.challenges.get(&session_id).cloned() else {
            return;
        };
        self.finished.insert(session_id);
        let account = &self.registry[&challenge.account_id];
        let message = auth_message(nonce, session_id, &self.source_id);
        if nonce != &challenge.nonce || !envelope::verify(&account.owner_sig, &message, signature) {
            ctx.log.record(
                &self.entity,
                Event::MaliciousUserDetected {
                    session_id,
                    source_id: self.source_id.clone(),
                },
            );
            return;
        }
        let amount = account.amount;
        ctx.log.record(
            &self.entity,
            Event::AccountAmount {
                token: challenge.token.id(),
                account_id: challenge.account_id.clone(),
                amount,
            },
        );
        let ciphertext = self
            .he_public
            .encrypt(&BigUint::from(amount.0), &mut self.rng)
            .expect("validated amounts are below the HE modulus");
        let sealed_ciphertext =
            envelope::seal(&self.relayer_enc, &ciphertext.encode(), &mut self.rng);
        ctx.append(
            session_id,
            &self.entity,
            &Payload::AssetUpload {
                source_id: self.source_id.clone(),
                caddr_token: challenge.token,
                sealed_ciphertext,
            },
        );
    }
}

impl Actor for TrustedSourceAgent {
    fn on_record(&mut self, record: &LedgerRecord, payload: &Payload, ctx: &mut Ctx<'_>) {
        match payload {
            Payload::SessionManifest {
                caddr_token,
                expected,
            } => {
                if let Some(entry) = expected.iter().find(|e| e.source_id == self.source_id) {
                    let account_id = entry.account_id.clone();
                    self.on_manifest(record.session_id(), caddr_token, &account_id, ctx);
                }
            }
            Payload::AuthResponse {
                source_id,
                nonce,
                signature,
            } if source_id == &self.source_id => {
                self.on_response(record.session_id(), nonce, signature, ctx);
            }
            _ => {}
        }
    }
}
