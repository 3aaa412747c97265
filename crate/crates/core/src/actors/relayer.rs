use std::collections::BTreeMap;

use super::{Actor, CiphertextOrigin, Ctx, Event, KeyRole};
use crate::envelope::{self, EntityKeys};
use crate::he::{HeCiphertext, HePrivateKey, HePublicKey};
use crate::ledger::{AbortReason, CaddrToken, LedgerRecord, Payload, SessionId};
use crate::AssetAmount;

#[derive(Clone, Debug)]
struct Pending {
    token: CaddrToken,
    expected: Vec<String>,
    uploads: BTreeMap<String, HeCiphertext>,
    last_progress: u64,
}

/// Blind aggregator: opens uploads, checks they are under the proof
/// service's HE key, and sums them homomorphically once every expected
/// source has uploaded. Aborts sessions that stall or mix keys.
pub struct RelayerAgent {
    entity: String,
    keys: EntityKeys,
    he_public: HePublicKey,
    timeout_heights: u64,
    pending: BTreeMap<SessionId, Pending>,
    leaked_he_key: Option<HePrivateKey>,
}

impl RelayerAgent {
    pub(crate) fn new(
        keys: EntityKeys,
        he_public: HePublicKey,
        timeout_heights: u64,
        leaked_he_key: Option<HePrivateKey>,
    ) -> Self {
        Self {
            entity: super::RELAYER.to_string(),
            keys,
            he_public,
            timeout_heights,
            pending: BTreeMap::new(),
            leaked_he_key,
        }
    }

    pub fn keys(&self) -> &EntityKeys {
        &self.keys
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
        if self.leaked_he_key.is_some() {
            ctx.log.record(
                &self.entity,
                Event::KeyHeld {
                    key: KeyRole::HeDecryption,
                },
            );
        }
    }

    fn abort(&mut self, session_id: SessionId, reason: AbortReason, ctx: &mut Ctx<'_>) {
        let Some(p) = self.pending.remove(&session_id) else {
            return;
        };
        let missing_sources = p
            .expected
            .iter()
            .filter(|s| !p.uploads.contains_key(*s))
            .cloned()
            .collect();
        ctx.append(
            session_id,
            &self.entity,
            &Payload::SessionAborted {
                caddr_token: p.token,
                reason,
                missing_sources,
            },
        );
    }

    fn on_upload(
        &mut self,
        record: &LedgerRecord,
        source_id: &str,
        token: &CaddrToken,
        sealed: &envelope::SealedEnvelope,
        ctx: &mut Ctx<'_>,
    ) {
        let session_id = record.session_id();
        let Some(p) = self.pending.get(&session_id) else {
            return;
        };
        if &p.token != token
            || !p.expected.iter().any(|s| s == source_id)
            || p.uploads.contains_key(source_id)
        {
            return;
        }
        ctx.log.count(&self.entity, |c| c.envelope_open += 1);
        let Ok(bytes) = envelope::open(&self.keys.enc_private, sealed) else {
            return;
        };
        let Ok(ciphertext) = HeCiphertext::decode(&bytes) else {
            return;
        };
        ctx.log.record(
            &self.entity,
            Event::CiphertextHeld {
                token: token.id(),
                origin: CiphertextOrigin::Upload,
            },
        );
        if ciphertext.key_fingerprint() != self.he_public.fingerprint() {
            self.abort(session_id, AbortReason::FingerprintMismatch, ctx);
            return;
        }
        let p = self.pending.get_mut(&session_id).expect("checked above");
        p.uploads.insert(source_id.to_string(), ciphertext);
        p.last_progress = record.logical_time();
        if p.uploads.len() < p.expected.len() {
            return;
        }
        let p = self.pending.remove(&session_id).expect("checked above");
        let parts: Vec<HeCiphertext> = p.uploads.into_values().collect();
        let aggregate = self
            .he_public
            .add_many(&parts)
            .expect("fingerprints checked");
        ctx.log.record(
            &self.entity,
            Event::CiphertextHeld {
                token: token.id(),
                origin: CiphertextOrigin::Aggregate,
            },
        );
        if let Some(sk) = &self.leaked_he_key {
            ctx.log.count(&self.entity, |c| c.he_decrypt += 1);
            if let Ok(m) = sk.decrypt(&aggregate) {
                if let Ok(total) = u64::try_from(&m) {
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
        ctx.append(
            session_id,
            &self.entity,
            &Payload::AggregateResult {
                caddr_token: p.token,
                ciphertext: aggregate,
            },
        );
    }
}

impl Actor for RelayerAgent {
    fn on_record(&mut self, record: &LedgerRecord, payload: &Payload, ctx: &mut Ctx<'_>) {
        match payload {
            Payload::SessionManifest {
                caddr_token,
                expected,
            } => {
                let session_id = record.session_id();
                if self.pending.contains_key(&session_id) {
                    return;
                }
                ctx.log.record(
                    &self.entity,
                    Event::TokenSeen {
                        token: caddr_token.id(),
                    },
                );
                let mut sources: Vec<String> =
                    expected.iter().map(|e| e.source_id.clone()).collect();
                sources.sort();
                sources.dedup();
                self.pending.insert(
                    session_id,
                    Pending {
                        token: caddr_token.clone(),
                        expected: sources,
                        uploads: BTreeMap::new(),
                        last_progress: record.logical_time(),
                    },
                );
            }
            Payload::AssetUpload {
                source_id,
                caddr_token,
                sealed_ciphertext,
            } => {
                self.on_upload(record, source_id, caddr_token, sealed_ciphertext, ctx);
            }
            _ => {}
        }
    }

    fn after_poll(&mut self, ctx: &mut Ctx<'_>) {
        let now = ctx.ledger.now();
        let stale: Vec<SessionId> = self
            .pending
            .iter()
            .filter(|(_, p)| now.saturating_sub(p.last_progress) >= self.timeout_heights)
            .map(|(id, _)| *id)
            .collect();
        for id in stale {
            self.abort(id, AbortReason::Timeout, ctx);
        }
    }

    fn has_pending_work(&self) -> bool {
        !self.pending.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actors::ObservationLog;
    use crate::ledger::{Author, Ledger, SourceAccount};
    use crate::rangeproof::GroupParams;
    use crate::rng::stream;
    use crate::{he, Profile};
    use num_bigint::BigUint;

    #[test]
    fn foreign_he_key_aborts_session() {
        let mut rng = stream(1, "relayer-test");
        let params = GroupParams::setup(Profile::Test);
        let user_keys = envelope::keygen(Profile::Test, &mut rng).unwrap();
        let relayer_keys = envelope::keygen(Profile::Test, &mut rng).unwrap();
        let (pk_z, _) = he::keygen(512, &mut rng).unwrap();
        let (pk_other, _) = he::keygen(512, &mut rng).unwrap();
        let relayer_enc = relayer_keys.enc_public.clone();
        let mut relayer = RelayerAgent::new(relayer_keys, pk_z, 64, None);
        let mut ledger = Ledger::new(params.clone());
        let mut log = ObservationLog::default();

        let session = SessionId([3; 16]);
        let token =
            CaddrToken::from_envelope(&envelope::seal(&user_keys.enc_public, &[0; 20], &mut rng));
        let manifest = Payload::SessionManifest {
            caddr_token: token.clone(),
            expected: vec![SourceAccount {
                source_id: "bank".into(),
                account_id: "a".into(),
            }],
        };
        ledger
            .append_payload(session, Author::new("user"), &manifest)
            .unwrap();
        let c = pk_other.encrypt(&BigUint::from(5u8), &mut rng).unwrap();
        let upload = Payload::AssetUpload {
            source_id: "bank".into(),
            caddr_token: token,
            sealed_ciphertext: envelope::seal(&relayer_enc, &c.encode(), &mut rng),
        };
        ledger
            .append_payload(session, Author::new("source:bank"), &upload)
            .unwrap();

        for height in 0..2 {
            let record = ledger.get(height).unwrap().clone();
            let payload = record.decode(&params).unwrap();
            relayer.on_record(
                &record,
                &payload,
                &mut Ctx {
                    ledger: &mut ledger,
                    log: &mut log,
                },
            );
        }
        let last = ledger.records().last().unwrap();
        match last.decode(&params).unwrap() {
            Payload::SessionAborted {
                reason,
                missing_sources,
                ..
            } => {
                assert_eq!(reason, AbortReason::FingerprintMismatch);
                assert_eq!(missing_sources, vec!["bank".to_string()]);
            }
            other => panic!("expected abort, got {other:?}"),
        }
        assert!(!relayer.has_pending_work());
    }
}
