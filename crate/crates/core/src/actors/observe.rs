//! Instrumentation: what each entity held, saw and computed during a run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::envelope::Address;
use crate::ledger::SessionId;
use crate::rangeproof::Verdict;
use crate::AssetAmount;

/// Private keys an entity can hold. `HeDecryption` is the proof service's
/// Paillier key; `OperatorEnc` is the key that opens address tokens.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyRole {
    OwnEnc,
    OwnSig,
    HeDecryption,
    OperatorEnc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AddressVia {
    /// Opened from a sealed application identity.
    Application,
    /// Opened from an address token.
    Token,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiphertextOrigin {
    Upload,
    Aggregate,
}

/// Tokens are referenced by [`crate::ledger::CaddrToken::id`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    KeyHeld {
        key: KeyRole,
    },
    AccountAmount {
        token: String,
        account_id: String,
        amount: AssetAmount,
    },
    TotalDecrypted {
        token: String,
        amount: AssetAmount,
    },
    AddressLearned {
        token: String,
        address: Address,
        via: AddressVia,
    },
    TokenSeen {
        token: String,
    },
    CiphertextHeld {
        token: String,
        origin: CiphertextOrigin,
    },
    ProofGenerated {
        token: String,
        matched_index: Option<usize>,
    },
    VerdictComputed {
        token: String,
        verdict: Verdict,
    },
    MaliciousUserDetected {
        session_id: SessionId,
        source_id: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub entity: String,
    #[serde(flatten)]
    pub event: Event,
}

/// Calls to the operations that can reveal secrets, counted independently
/// of the observation log so the two can be cross-checked.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounters {
    pub he_decrypt: u64,
    pub envelope_open: u64,
    pub proof_respond: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ObservationLog {
    entries: Vec<Observation>,
    counters: BTreeMap<String, CallCounters>,
}

impl ObservationLog {
    pub fn from_parts(entries: Vec<Observation>, counters: BTreeMap<String, CallCounters>) -> Self {
        Self { entries, counters }
    }

    pub fn record(&mut self, entity: &str, event: Event) {
        self.entries.push(Observation {
            entity: entity.to_string(),
            event,
        });
    }

    pub(crate) fn count(&mut self, entity: &str, f: impl FnOnce(&mut CallCounters)) {
        f(self.counters.entry(entity.to_string()).or_default());
    }

    pub fn entries(&self) -> &[Observation] {
        &self.entries
    }

    pub fn for_entity<'a>(&'a self, entity: &'a str) -> impl Iterator<Item = &'a Event> + 'a {
        self.entries
            .iter()
            .filter(move |o| o.entity == entity)
            .map(|o| &o.event)
    }

    pub fn counters(&self) -> &BTreeMap<String, CallCounters> {
        &self.counters
    }

    pub fn counters_for(&self, entity: &str) -> CallCounters {
        self.counters.get(entity).copied().unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_json_is_flat() {
        let o = Observation {
            entity: "relayer".into(),
            event: Event::TokenSeen { token: "ab".into() },
        };
        let json = serde_json::to_string(&o).unwrap();
        assert_eq!(
            json,
            r#"{"entity":"relayer","event":"token_seen","token":"ab"}"#
        );
        assert_eq!(serde_json::from_str::<Observation>(&json).unwrap(), o);
    }

    #[test]
    fn counters_accumulate_per_entity() {
        let mut log = ObservationLog::default();
        log.count("zkpsp", |c| c.he_decrypt += 1);
        log.count("zkpsp", |c| c.he_decrypt += 1);
        log.count("operator", |c| c.envelope_open += 1);
        assert_eq!(log.counters_for("zkpsp").he_decrypt, 2);
        assert_eq!(log.counters_for("operator").envelope_open, 1);
        assert_eq!(log.counters_for("relayer"), CallCounters::default());
    }
}
