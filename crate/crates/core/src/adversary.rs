//! Compromise analysis: rebuild what one entity (or a coalition) learned in
//! a run, check it against that entity's leakage bound, and try to link
//! addresses to amounts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::actors::{self, CiphertextOrigin, Event, KeyRole, World, WorldError};
use crate::envelope::Address;
use crate::ledger::{DenialReason, LedgerRecord, Outcome, RecordKind};
use crate::rangeproof::Verdict;
use crate::scenario::{Malice, NegativeControl, ScenarioConfig, UserConfig};
use crate::transcript::Transcript;
use crate::AssetAmount;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    Source(String),
    Relayer,
    Zkpsp,
    Operator,
}

impl Target {
    pub fn entity(&self) -> String {
        match self {
            Target::Source(id) => actors::source_entity(id),
            Target::Relayer => actors::RELAYER.to_string(),
            Target::Zkpsp => actors::ZKPSP.to_string(),
            Target::Operator => actors::OPERATOR.to_string(),
        }
    }

    /// Every compromisable entity named in a transcript's key directory.
    pub fn all_in(transcript: &Transcript) -> Vec<Target> {
        let mut out: Vec<Target> = transcript
            .entities
            .iter()
            .filter_map(|e| {
                e.entity
                    .strip_prefix("source:")
                    .map(|id| Target::Source(id.to_string()))
            })
            .collect();
        out.extend([Target::Relayer, Target::Zkpsp, Target::Operator]);
        out
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.entity())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown target {0:?} (expected relayer, zkpsp, operator or source:<id>)")]
pub struct UnknownTarget(pub String);

impl FromStr for Target {
    type Err = UnknownTarget;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relayer" => Ok(Target::Relayer),
            "zkpsp" => Ok(Target::Zkpsp),
            "operator" => Ok(Target::Operator),
            _ => match s.strip_prefix("source:") {
                Some(id) if !id.is_empty() => Ok(Target::Source(id.to_string())),
                _ => Err(UnknownTarget(s.to_string())),
            },
        }
    }
}

/// Everything one entity (or a coalition) held or computed. Tokens are
/// referenced by their short id.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EntityView {
    pub entities: BTreeSet<String>,
    /// (token, account id, amount) for per-account plaintexts.
    pub plaintext_amounts: BTreeSet<(String, String, AssetAmount)>,
    pub exact_totals: BTreeMap<String, AssetAmount>,
    pub plain_addresses: BTreeMap<String, Address>,
    pub caddr_tokens: BTreeSet<String>,
    pub held_ciphertexts: BTreeSet<(String, CiphertextOrigin)>,
    pub interval_labels: BTreeMap<String, Verdict>,
    pub private_keys_held: BTreeSet<KeyRole>,
}

impl EntityView {
    /// Union of two views: what a coalition of both entities knows.
    pub fn merge(&self, other: &EntityView) -> EntityView {
        let mut v = self.clone();
        v.entities.extend(other.entities.iter().cloned());
        v.plaintext_amounts
            .extend(other.plaintext_amounts.iter().cloned());
        v.exact_totals
            .extend(other.exact_totals.iter().map(|(k, a)| (k.clone(), *a)));
        v.plain_addresses
            .extend(other.plain_addresses.iter().map(|(k, a)| (k.clone(), *a)));
        v.caddr_tokens.extend(other.caddr_tokens.iter().cloned());
        v.held_ciphertexts
            .extend(other.held_ciphertexts.iter().cloned());
        v.interval_labels.extend(
            other
                .interval_labels
                .iter()
                .map(|(k, l)| (k.clone(), l.clone())),
        );
        v.private_keys_held
            .extend(other.private_keys_held.iter().copied());
        v
    }
}

/// Reconstructs the target's view from the run's observation log.
pub fn compromise(transcript: &Transcript, target: &Target) -> EntityView {
    let entity = target.entity();
    let mut view = EntityView::default();
    view.entities.insert(entity.clone());
    for event in transcript.log.for_entity(&entity) {
        match event {
            Event::KeyHeld { key } => {
                view.private_keys_held.insert(*key);
            }
            Event::AccountAmount {
                token,
                account_id,
                amount,
            } => {
                view.plaintext_amounts
                    .insert((token.clone(), account_id.clone(), *amount));
            }
            Event::TotalDecrypted { token, amount } => {
                view.exact_totals.insert(token.clone(), *amount);
            }
            Event::AddressLearned { token, address, .. } => {
                view.plain_addresses.insert(token.clone(), *address);
            }
            Event::TokenSeen { token } => {
                view.caddr_tokens.insert(token.clone());
            }
            Event::CiphertextHeld { token, origin } => {
                view.held_ciphertexts.insert((token.clone(), *origin));
            }
            Event::VerdictComputed { token, verdict } => {
                view.interval_labels.insert(token.clone(), verdict.clone());
            }
            Event::ProofGenerated { .. } | Event::MaliciousUserDetected { .. } => {}
        }
    }
    view
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BoundViolation {
    pub entity: String,
    pub field: &'static str,
    pub detail: String,
}

impl fmt::Display for BoundViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({})", self.entity, self.field, self.detail)
    }
}

/// Checks a single entity's view against what that role may learn:
///
/// | role     | may hold                                   |
/// |----------|--------------------------------------------|
/// | source   | its own per-account amounts                |
/// | relayer  | ciphertexts only                           |
/// | zkpsp    | exact totals, HE decryption key            |
/// | operator | addresses and interval labels              |
pub fn assert_view_bounds(target: &Target, view: &EntityView) -> Result<(), Vec<BoundViolation>> {
    let entity = target.entity();
    let mut out = Vec::new();
    let mut flag = |field: &'static str, detail: String| {
        out.push(BoundViolation {
            entity: entity.clone(),
            field,
            detail,
        });
    };
    let (amounts_ok, totals_ok, addresses_ok, he_key_ok, operator_key_ok) = match target {
        Target::Source(_) => (true, false, false, false, false),
        Target::Relayer => (false, false, false, false, false),
        Target::Zkpsp => (false, true, false, true, false),
        Target::Operator => (false, false, true, false, true),
    };
    if !amounts_ok && !view.plaintext_amounts.is_empty() {
        flag(
            "plaintext_amounts",
            format!("{} per-account amounts", view.plaintext_amounts.len()),
        );
    }
    if !totals_ok && !view.exact_totals.is_empty() {
        flag(
            "exact_totals",
            format!("{} totals", view.exact_totals.len()),
        );
    }
    if !addresses_ok && !view.plain_addresses.is_empty() {
        flag(
            "plain_addresses",
            format!("{} addresses", view.plain_addresses.len()),
        );
    }
    if !he_key_ok && view.private_keys_held.contains(&KeyRole::HeDecryption) {
        flag("private_keys_held", "HE decryption key".into());
    }
    if !operator_key_ok && view.private_keys_held.contains(&KeyRole::OperatorEnc) {
        flag("private_keys_held", "operator encryption key".into());
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LinkageClaim {
    pub token: String,
    pub address: Address,
    pub amount: AssetAmount,
    /// True when `amount` is the exact aggregate, false for one account.
    pub is_total: bool,
}

/// Tries to pair a plaintext address with an exact amount through any token
/// the view knows both for. Returns the first claim found.
pub fn attempt_linkage(view: &EntityView) -> Option<LinkageClaim> {
    for (token, address) in &view.plain_addresses {
        if let Some(amount) = view.exact_totals.get(token) {
            return Some(LinkageClaim {
                token: token.clone(),
                address: *address,
                amount: *amount,
                is_total: true,
            });
        }
        if let Some((_, _, amount)) = view.plaintext_amounts.iter().find(|(t, _, _)| t == token) {
            return Some(LinkageClaim {
                token: token.clone(),
                address: *address,
                amount: *amount,
                is_total: false,
            });
        }
    }
    None
}

/// Looks for plaintext encodings of `amounts` (8-byte big/little endian and
/// ASCII decimal) in ledger payloads. Returns (height, amount) hits.
pub fn scan_ledger_for_amounts(records: &[LedgerRecord], amounts: &[u64]) -> Vec<(u64, u64)> {
    let mut hits = Vec::new();
    for r in records {
        let payload = r.payload();
        for &a in amounts {
            let patterns = [
                a.to_be_bytes().to_vec(),
                a.to_le_bytes().to_vec(),
                a.to_string().into_bytes(),
            ];
            if patterns
                .iter()
                .any(|p| payload.windows(p.len()).any(|w| w == p.as_slice()))
            {
                hits.push((r.height(), a));
            }
        }
    }
    hits
}

/// A secret-revealing call that left no matching observation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AuditGap {
    pub entity: String,
    pub operation: &'static str,
    pub calls: u64,
    pub logged: u64,
}

/// Cross-checks the independent call counters against the observation log:
/// every decryption and proof must be logged, and every successful open
/// must account for at most one call.
pub fn completeness_audit(transcript: &Transcript) -> Vec<AuditGap> {
    let log = &transcript.log;
    let mut entities: BTreeSet<&str> = log.counters().keys().map(String::as_str).collect();
    entities.extend(log.entries().iter().map(|o| o.entity.as_str()));
    let mut gaps = Vec::new();
    for entity in entities {
        let c = log.counters_for(entity);
        let count =
            |f: &dyn Fn(&Event) -> bool| log.for_entity(entity).filter(|e| f(e)).count() as u64;
        let totals = count(&|e| matches!(e, Event::TotalDecrypted { .. }));
        let proofs = count(&|e| matches!(e, Event::ProofGenerated { .. }));
        let opened = count(&|e| {
            matches!(
                e,
                Event::AddressLearned { .. }
                    | Event::CiphertextHeld {
                        origin: CiphertextOrigin::Upload,
                        ..
                    }
            )
        });
        let mut check = |operation, calls: u64, logged: u64, exact: bool| {
            if (exact && calls != logged) || calls < logged {
                gaps.push(AuditGap {
                    entity: entity.to_string(),
                    operation,
                    calls,
                    logged,
                });
            }
        };
        check("he_decrypt", c.he_decrypt, totals, true);
        check("proof_respond", c.proof_respond, proofs, true);
        check("envelope_open", c.envelope_open, opened, false);
    }
    gaps
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<Transcript, WorldError> {
    let mut world = World::build(config)?;
    world.run();
    Ok(Transcript::from_world(&world))
}

fn run_world(config: &ScenarioConfig) -> Result<World, WorldError> {
    let mut world = World::build(config)?;
    world.run();
    Ok(world)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MaliciousSuiteReport {
    pub attacker: String,
    /// Sources flagged the forged responses and nothing was uploaded for
    /// the attacker's session, which was aborted without a decision.
    pub phase1_refused: bool,
    /// The attacker's application with a copied token was denied for an
    /// address mismatch.
    pub phase2_outcome: Option<Outcome>,
    /// Honest users' decisions are byte-identical to the attack-free run.
    pub honest_unchanged_phase1: bool,
    pub honest_unchanged_phase2: bool,
}

impl MaliciousSuiteReport {
    pub fn passed(&self) -> bool {
        self.phase1_refused
            && self.phase2_outcome == Some(Outcome::Denied(DenialReason::AddressMismatch))
            && self.honest_unchanged_phase1
            && self.honest_unchanged_phase2
    }
}

fn honest_decisions(world: &World) -> BTreeMap<Address, Vec<u8>> {
    world
        .users()
        .iter()
        .filter(|u| u.is_honest())
        .map(|u| {
            let bytes = world
                .operator()
                .decisions()
                .get(&u.address())
                .map(|d| d.encode())
                .unwrap_or_default();
            (u.address(), bytes)
        })
        .collect()
}

/// Runs `base` unchanged, then with an added attacker performing each
/// substitution attack against `victim`, and compares the outcomes.
pub fn run_malicious_suite(
    base: &ScenarioConfig,
    victim: &str,
) -> Result<MaliciousSuiteReport, WorldError> {
    let mut attacker = "mallory".to_string();
    while base.user(&attacker).is_some() {
        attacker.push('_');
    }
    let with_attacker = |malice: Malice| {
        let mut c = base.clone();
        c.users.push(UserConfig {
            name: attacker.clone(),
            accounts: BTreeMap::new(),
            malice: Some(malice),
        });
        c
    };

    let baseline = run_world(base)?;
    let phase1 = run_world(&with_attacker(Malice::Phase1Substitution {
        target: victim.to_string(),
    }))?;
    let phase2 = run_world(&with_attacker(Malice::Phase2Substitution))?;
    let reference = honest_decisions(&baseline);

    let p1_user = phase1.user(&attacker).expect("attacker present");
    let p1_sessions = p1_user.results();
    let p1_ids: BTreeSet<_> = p1_sessions.iter().map(|s| s.session_id).collect();
    let detected = phase1
        .log()
        .entries()
        .iter()
        .any(|o| matches!(&o.event, Event::MaliciousUserDetected { session_id, .. } if p1_ids.contains(session_id)));
    let uploads = phase1
        .ledger()
        .records()
        .iter()
        .any(|r| r.kind() == RecordKind::AssetUpload && p1_ids.contains(&r.session_id()));
    let phase1_refused = detected
        && !uploads
        && !p1_sessions.is_empty()
        && p1_sessions.iter().all(|s| s.aborted && s.outcome.is_none());

    let phase2_outcome = phase2
        .user(&attacker)
        .and_then(|u| u.results().first().and_then(|s| s.outcome));

    Ok(MaliciousSuiteReport {
        attacker,
        phase1_refused,
        phase2_outcome,
        honest_unchanged_phase1: honest_decisions(&phase1) == reference,
        honest_unchanged_phase2: honest_decisions(&phase2) == reference,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NegativeControlReport {
    pub control: NegativeControl,
    pub target: String,
    pub violations: Vec<BoundViolation>,
    pub linkage: Option<LinkageClaim>,
}

pub fn control_target(control: NegativeControl, config: &ScenarioConfig) -> Target {
    match control {
        NegativeControl::SourceLearnsAddress => Target::Source(config.sources[0].id.clone()),
        NegativeControl::RelayerDecryptsSums => Target::Relayer,
        NegativeControl::ZkpspLearnsAddress => Target::Zkpsp,
        NegativeControl::OperatorLearnsTotal => Target::Operator,
    }
}

/// Runs each deliberately leaky variant; every one must trip the bound
/// checks, which shows the checks are able to fail.
pub fn run_negative_controls(
    base: &ScenarioConfig,
) -> Result<Vec<NegativeControlReport>, WorldError> {
    NegativeControl::ALL
        .iter()
        .map(|&control| {
            let mut config = base.clone();
            config.negative_control = Some(control);
            let transcript = run_scenario(&config)?;
            let target = control_target(control, &config);
            let view = compromise(&transcript, &target);
            Ok(NegativeControlReport {
                control,
                target: target.entity(),
                violations: assert_view_bounds(&target, &view).err().unwrap_or_default(),
                linkage: attempt_linkage(&view),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::demo_scenario;

    #[test]
    fn target_parsing() {
        assert_eq!("relayer".parse::<Target>().unwrap(), Target::Relayer);
        assert_eq!(
            "source:bank".parse::<Target>().unwrap(),
            Target::Source("bank".into())
        );
        assert!("source:".parse::<Target>().is_err());
        assert!("user:alice".parse::<Target>().is_err());
    }

    #[test]
    fn honest_demo_respects_bounds() {
        let t = run_scenario(&demo_scenario(3)).unwrap();
        for target in Target::all_in(&t) {
            let view = compromise(&t, &target);
            assert_eq!(assert_view_bounds(&target, &view), Ok(()), "{target}");
            assert_eq!(attempt_linkage(&view), None, "{target}");
        }
        assert!(completeness_audit(&t).is_empty());
        let zkpsp = compromise(&t, &Target::Zkpsp);
        assert_eq!(
            zkpsp.exact_totals.values().copied().collect::<Vec<_>>(),
            vec![AssetAmount(60)]
        );
        let operator = compromise(&t, &Target::Operator);
        assert_eq!(operator.plain_addresses.len(), 1);
        assert_eq!(
            operator.interval_labels.values().next(),
            Some(&Verdict::Labels(vec![false, true]))
        );
    }

    #[test]
    fn coalition_links_address_to_total() {
        let t = run_scenario(&demo_scenario(3)).unwrap();
        let coalition = compromise(&t, &Target::Zkpsp).merge(&compromise(&t, &Target::Operator));
        let claim = attempt_linkage(&coalition).unwrap();
        assert_eq!(claim.amount, AssetAmount(60));
        assert!(claim.is_total);
    }

    #[test]
    fn audit_detects_unlogged_decryption() {
        let mut t = run_scenario(&demo_scenario(3)).unwrap();
        let mut counters = t.log.counters().clone();
        counters.get_mut("zkpsp").unwrap().he_decrypt += 1;
        t.log = crate::actors::ObservationLog::from_parts(t.log.entries().to_vec(), counters);
        let gaps = completeness_audit(&t);
        assert_eq!(gaps.len(), 1);
        assert_eq!(gaps[0].operation, "he_decrypt");
    }

    #[test]
    fn ledger_scan_finds_planted_amounts() {
        let t = run_scenario(&demo_scenario(3)).unwrap();
        let big = [0x0123_4567_89ab_u64, 9_999_999];
        assert!(scan_ledger_for_amounts(&t.records, &big).is_empty());
        let mut line = t.records[0].to_line();
        line.payload_hex.push_str("00000123456789ab");
        let planted = LedgerRecord::from_line(&line).unwrap();
        assert_eq!(scan_ledger_for_amounts(&[planted], &big), vec![(0, big[0])]);
    }
}
