use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::source::RegisteredAccount;
use super::user::Behaviour;
use super::{
    source_entity, user_entity, Actor, Ctx, ObservationLog, OperatorAgent, RelayerAgent,
    TrustedSourceAgent, UserAgent, ZkpspAgent, OPERATOR, RELAYER, ZKPSP,
};
use crate::envelope::{self, EntityKeys};
use crate::he::{self, HePrivateKey, HePublicKey};
use crate::ledger::{Ledger, Payload, RecordKind, SourceAccount};
use crate::rangeproof::GroupParams;
use crate::rng::{self, ProtocolRng};
use crate::scenario::{ConfigError, Malice, NegativeControl, ScenarioConfig};
use crate::Profile;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("key generation failed for {entity}: {message}")]
    KeyGeneration { entity: String, message: String },
}

/// Public key directory entry, hex-encoded canonical bytes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityInfo {
    pub entity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enc_public: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sig_public: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub he_public: Option<String>,
}

impl EntityInfo {
    fn from_keys(entity: String, keys: &EntityKeys) -> Self {
        Self {
            entity,
            enc_public: Some(hex::encode(keys.enc_public.encode())),
            sig_public: Some(hex::encode(keys.sig_public.encode())),
            he_public: None,
        }
    }
}

/// All actors plus the ledger, driven round-robin until quiescent.
///
/// Order within a round: users, sources, relayer, proof service, operator.
/// Logical time advances by one per append and by one per idle round while
/// the relayer still waits on a session, so timeouts are deterministic.
pub struct World {
    config: ScenarioConfig,
    profile: Profile,
    ledger: Ledger,
    log: ObservationLog,
    payloads: Vec<Payload>,
    users: Vec<UserAgent>,
    sources: Vec<TrustedSourceAgent>,
    relayer: RelayerAgent,
    zkpsp: ZkpspAgent,
    operator: OperatorAgent,
    cursors: Vec<u64>,
    directory: Vec<EntityInfo>,
    started: bool,
}

fn entity_rng(seed: u64, entity: &str) -> ProtocolRng {
    rng::stream(seed, &format!("actor/{entity}"))
}

fn generate_keys(
    profile: Profile,
    seed: u64,
    labels: &[String],
) -> Result<(BTreeMap<String, EntityKeys>, HePublicKey, HePrivateKey), WorldError> {
    let mut out = BTreeMap::new();
    for label in labels {
        let keys = envelope::keygen(profile, &mut rng::stream(seed, &format!("keys/{label}")))
            .map_err(|e| WorldError::KeyGeneration {
                entity: label.clone(),
                message: e.to_string(),
            })?;
        out.insert(label.clone(), keys);
    }
    let (he_pk, he_sk) = he::keygen(profile.he_bits(), &mut rng::stream(seed, "keys/zkpsp/he"))
        .map_err(|e| WorldError::KeyGeneration {
            entity: ZKPSP.into(),
            message: e.to_string(),
        })?;
    Ok((out, he_pk, he_sk))
}

impl World {
    pub fn build(config: &ScenarioConfig) -> Result<Self, WorldError> {
        let profile = config.validate()?;
        let seed = config.seed;
        let params = GroupParams::setup(profile);
        let tiers = config.statement()?;

        let chain = |name: &str| format!("{}/chain", user_entity(name));
        let credential = |name: &str| format!("{}/credential", user_entity(name));
        let mut labels = Vec::new();
        for u in &config.users {
            labels.push(chain(&u.name));
            labels.push(credential(&u.name));
        }
        labels.extend(config.sources.iter().map(|s| source_entity(&s.id)));
        labels.push(RELAYER.into());
        labels.push(OPERATOR.into());
        let (mut keys, he_public, he_private) = generate_keys(profile, seed, &labels)?;

        let control = config.negative_control;
        let operator_keys = keys.remove(OPERATOR).expect("generated");
        let relayer_keys = keys.remove(RELAYER).expect("generated");
        let leak_operator_key =
            |c: NegativeControl| (control == Some(c)).then(|| operator_keys.enc_private.clone());
        let leak_he_key = |c: NegativeControl| (control == Some(c)).then(|| he_private.clone());

        let mut directory = Vec::new();
        let accounts_of = |name: &str| -> Vec<SourceAccount> {
            config
                .user(name)
                .map(|u| {
                    u.accounts
                        .iter()
                        .map(|(s, a)| SourceAccount {
                            source_id: s.clone(),
                            account_id: a.clone(),
                        })
                        .collect()
                })
                .unwrap_or_default()
        };

        let mut users = Vec::new();
        for u in &config.users {
            let entity = user_entity(&u.name);
            let behaviour = match &u.malice {
                None => Behaviour::Honest,
                Some(Malice::Phase1Substitution { target }) => Behaviour::Phase1Substitution {
                    victim_address: envelope::address_of(&keys[&chain(target)].sig_public),
                    victim_accounts: accounts_of(target),
                },
                Some(Malice::Phase2Substitution) => Behaviour::Phase2Substitution,
            };
            let credential_keys = keys[&credential(&u.name)].clone();
            directory.push(EntityInfo::from_keys(entity.clone(), &credential_keys));
            users.push(UserAgent::new(
                entity.clone(),
                keys[&chain(&u.name)].clone(),
                credential_keys,
                accounts_of(&u.name),
                operator_keys.enc_public.clone(),
                behaviour,
                entity_rng(seed, &entity),
            ));
        }

        let mut sources = Vec::new();
        for s in &config.sources {
            let entity = source_entity(&s.id);
            let registry = s
                .accounts
                .iter()
                .map(|a| {
                    let owner = &keys[&credential(&a.owner)];
                    let entry = RegisteredAccount {
                        amount: crate::AssetAmount(a.amount),
                        owner_enc: owner.enc_public.clone(),
                        owner_sig: owner.sig_public.clone(),
                    };
                    (a.id.clone(), entry)
                })
                .collect();
            let source_keys = keys[&entity].clone();
            directory.push(EntityInfo::from_keys(entity.clone(), &source_keys));
            sources.push(TrustedSourceAgent::new(
                entity.clone(),
                s.id.clone(),
                source_keys,
                registry,
                relayer_keys.enc_public.clone(),
                he_public.clone(),
                entity_rng(seed, &entity),
                leak_operator_key(NegativeControl::SourceLearnsAddress),
            ));
        }

        directory.push(EntityInfo::from_keys(RELAYER.into(), &relayer_keys));
        directory.push(EntityInfo {
            entity: ZKPSP.into(),
            enc_public: None,
            sig_public: None,
            he_public: Some(hex::encode(he_public.encode())),
        });
        directory.push(EntityInfo::from_keys(OPERATOR.into(), &operator_keys));

        let relayer = RelayerAgent::new(
            relayer_keys,
            he_public,
            config.timeout_heights,
            leak_he_key(NegativeControl::RelayerDecryptsSums),
        );
        let zkpsp = ZkpspAgent::new(
            he_private.clone(),
            params.clone(),
            entity_rng(seed, ZKPSP),
            leak_operator_key(NegativeControl::ZkpspLearnsAddress),
        );
        let operator = OperatorAgent::new(
            operator_keys.clone(),
            params.clone(),
            tiers,
            leak_he_key(NegativeControl::OperatorLearnsTotal),
        );

        let actor_count = users.len() + sources.len() + 3;
        Ok(Self {
            config: config.clone(),
            profile,
            ledger: Ledger::new(params),
            log: ObservationLog::default(),
            payloads: Vec::new(),
            users,
            sources,
            relayer,
            zkpsp,
            operator,
            cursors: vec![0; actor_count],
            directory,
            started: false,
        })
    }

    /// Runs until no actor has anything left to do.
    pub fn run(&mut self) {
        if !self.started {
            self.started = true;
            let mut ctx = Ctx {
                ledger: &mut self.ledger,
                log: &mut self.log,
            };
            for s in &self.sources {
                s.announce_keys(&mut ctx);
            }
            self.relayer.announce_keys(&mut ctx);
            self.zkpsp.announce_keys(&mut ctx);
            self.operator.announce_keys(&mut ctx);
            for u in &mut self.users {
                u.start(&mut ctx);
            }
        }
        let idle_limit = self
            .config
            .timeout_heights
            .saturating_mul(2)
            .saturating_add(16);
        let mut idle_rounds = 0u64;
        loop {
            let before = self.ledger.height();
            self.round();
            if self.ledger.height() != before {
                idle_rounds = 0;
                continue;
            }
            if !self.relayer.has_pending_work() || idle_rounds >= idle_limit {
                break;
            }
            self.ledger.tick();
            idle_rounds += 1;
        }
    }

    fn round(&mut self) {
        let Self {
            ledger,
            log,
            payloads,
            cursors,
            users,
            sources,
            relayer,
            zkpsp,
            operator,
            ..
        } = self;
        let mut actors: Vec<&mut dyn Actor> = Vec::with_capacity(cursors.len());
        actors.extend(users.iter_mut().map(|u| u as &mut dyn Actor));
        actors.extend(sources.iter_mut().map(|s| s as &mut dyn Actor));
        actors.push(relayer);
        actors.push(zkpsp);
        actors.push(operator);
        for (actor, cursor) in actors.into_iter().zip(cursors.iter_mut()) {
            step(actor, cursor, ledger, log, payloads);
        }
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn log(&self) -> &ObservationLog {
        &self.log
    }

    pub fn users(&self) -> &[UserAgent] {
        &self.users
    }

    pub fn user(&self, name: &str) -> Option<&UserAgent> {
        let entity = user_entity(name);
        self.users.iter().find(|u| u.entity() == entity)
    }

    pub fn sources(&self) -> &[TrustedSourceAgent] {
        &self.sources
    }

    pub fn relayer(&self) -> &RelayerAgent {
        &self.relayer
    }

    pub fn zkpsp(&self) -> &ZkpspAgent {
        &self.zkpsp
    }

    pub fn operator(&self) -> &OperatorAgent {
        &self.operator
    }

    pub fn directory(&self) -> &[EntityInfo] {
        &self.directory
    }

    pub fn aborted_sessions(&self) -> usize {
        self.ledger
            .records()
            .iter()
            .filter(|r| r.kind() == RecordKind::SessionAborted)
            .count()
    }
}

fn step(
    actor: &mut dyn Actor,
    cursor: &mut u64,
    ledger: &mut Ledger,
    log: &mut ObservationLog,
    payloads: &mut Vec<Payload>,
) {
    while let Some(record) = ledger.get(*cursor).cloned() {
        let index = *cursor as usize;
        *cursor += 1;
        while payloads.len() <= index {
            let r = &ledger.records()[payloads.len()];
            payloads.push(
                r.decode(ledger.params())
                    .expect("ledger validates payloads"),
            );
        }
        let payload = payloads[index].clone();
        actor.on_record(&record, &payload, &mut Ctx { ledger, log });
    }
    actor.after_poll(&mut Ctx { ledger, log });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actors::Event;
    use crate::ledger::{AbortReason, DenialReason, Outcome};
    use crate::scenario::{demo_scenario, UserConfig};

    fn run(config: &ScenarioConfig) -> World {
        let mut world = World::build(config).unwrap();
        world.run();
        world
    }

    fn kinds(world: &World) -> Vec<RecordKind> {
        world.ledger().records().iter().map(|r| r.kind()).collect()
    }

    #[test]
    fn demo_reaches_tier_one() {
        let world = run(&demo_scenario(11));
        let alice = world.user("alice").unwrap();
        let results = alice.results();
        assert_eq!(results.len(), 1);
        assert_eq!(results[0].outcome, Some(Outcome::Tier(1)));
        assert_eq!(kinds(&world).last(), Some(&RecordKind::ServiceDecision));
        let count = |k| kinds(&world).iter().filter(|&&x| x == k).count();
        assert_eq!(count(RecordKind::AssetUpload), 3);
        assert_eq!(count(RecordKind::AuthChallenge), 3);
        assert_eq!(count(RecordKind::AggregateResult), 1);
        let decision = world.operator().decisions()[&alice.address()];
        assert_eq!(decision.outcome, Outcome::Tier(1));
    }

    #[test]
    fn runs_are_reproducible() {
        let a = run(&demo_scenario(5));
        let b = run(&demo_scenario(5));
        assert_eq!(a.ledger().dump_lines(), b.ledger().dump_lines());
        assert_eq!(a.log(), b.log());
        let c = run(&demo_scenario(6));
        assert_ne!(a.ledger().dump_lines(), c.ledger().dump_lines());
    }

    #[test]
    fn unknown_account_times_out() {
        let mut config = demo_scenario(2);
        config.timeout_heights = 10;
        let mut world = World::build(&config).unwrap();
        // The exchange forgets the account after setup.
        world.sources[1].forget_accounts();
        world.run();
        let aborted: Vec<_> = world
            .ledger()
            .records()
            .iter()
            .filter_map(|r| match r.decode(world.ledger().params()).unwrap() {
                Payload::SessionAborted {
                    reason,
                    missing_sources,
                    ..
                } => Some((reason, missing_sources)),
                _ => None,
            })
            .collect();
        assert_eq!(
            aborted,
            vec![(AbortReason::Timeout, vec!["exchange".to_string()])]
        );
        assert_eq!(world.aborted_sessions(), 1);
        assert!(world.user("alice").unwrap().results()[0].aborted);
        assert!(world.operator().decisions().is_empty());
    }

    fn two_users(seed: u64) -> ScenarioConfig {
        let mut config = demo_scenario(seed);
        config.sources[0]
            .accounts
            .push(crate::scenario::AccountConfig {
                id: "bank-mallory".into(),
                owner: "mallory".into(),
                amount: 1,
            });
        let mut accounts = BTreeMap::new();
        accounts.insert("bank".to_string(), "bank-mallory".to_string());
        config.users.push(UserConfig {
            name: "mallory".into(),
            accounts,
            malice: None,
        });
        config
    }

    #[test]
    fn phase1_substitution_is_refused() {
        let mut config = two_users(9);
        config.timeout_heights = 12;
        config.users[1].malice = Some(Malice::Phase1Substitution {
            target: "alice".into(),
        });
        let world = run(&config);
        let detected = world
            .log()
            .entries()
            .iter()
            .filter(|o| matches!(o.event, Event::MaliciousUserDetected { .. }))
            .count();
        assert_eq!(detected, 3);
        let mallory = world.user("mallory").unwrap().results();
        assert!(mallory[0].aborted);
        assert_eq!(mallory[0].outcome, None);
        assert_eq!(
            world.user("alice").unwrap().results()[0].outcome,
            Some(Outcome::Tier(1))
        );
        // Only alice's session produced uploads.
        let uploads = kinds(&world)
            .iter()
            .filter(|&&k| k == RecordKind::AssetUpload)
            .count();
        assert_eq!(uploads, 3);
    }

    #[test]
    fn phase2_substitution_is_denied() {
        let mut config = two_users(9);
        config.users[1].malice = Some(Malice::Phase2Substitution);
        let world = run(&config);
        let mallory = world.user("mallory").unwrap();
        let results = mallory.results();
        assert_eq!(results.len(), 1);
        assert_eq!(
            results[0].outcome,
            Some(Outcome::Denied(DenialReason::AddressMismatch))
        );
        let alice = world.user("alice").unwrap();
        assert_eq!(
            world.operator().decisions()[&alice.address()].outcome,
            Outcome::Tier(1)
        );
        assert_eq!(
            world.operator().decisions()[&mallory.address()].outcome,
            Outcome::Denied(DenialReason::AddressMismatch)
        );
    }
}
