//! Closed-loop runs through the public API: phase ordering on the ledger,
//! token reuse, address confidentiality and concurrent sessions.

use std::collections::BTreeMap;

use veilsum::actors::World;
use veilsum::ledger::{CaddrToken, Outcome, Payload, RecordKind};
use veilsum::scenario::{demo_scenario, AccountConfig, ScenarioConfig, UserConfig};
use veilsum::transcript::{self, Transcript};

fn run(config: &ScenarioConfig) -> World {
    let mut world = World::build(config).unwrap();
    world.run();
    world
}

fn payloads(world: &World) -> Vec<(RecordKind, String, Payload)> {
    let params = world.ledger().params();
    world
        .ledger()
        .records()
        .iter()
        .map(|r| (r.kind(), r.author().to_string(), r.decode(params).unwrap()))
        .collect()
}

fn token_of(p: &Payload) -> Option<&CaddrToken> {
    match p {
        Payload::SessionManifest { caddr_token, .. }
        | Payload::AssetUpload { caddr_token, .. }
        | Payload::AggregateResult { caddr_token, .. }
        | Payload::SessionAborted { caddr_token, .. }
        | Payload::ServiceApplication { caddr_token, .. }
        | Payload::ProofRequest { caddr_token, .. }
        | Payload::ProofResponse { caddr_token, .. } => Some(caddr_token),
        _ => None,
    }
}

#[test]
fn demo_follows_the_three_phases_in_order() {
    let world = run(&demo_scenario(101));
    let records = payloads(&world);
    let first = |k: RecordKind| records.iter().position(|(kind, ..)| *kind == k).unwrap();
    let last = |k: RecordKind| records.iter().rposition(|(kind, ..)| *kind == k).unwrap();

    assert_eq!(first(RecordKind::SessionManifest), 0);
    assert!(last(RecordKind::AssetUpload) < first(RecordKind::AggregateResult));
    assert!(first(RecordKind::AggregateResult) < first(RecordKind::ServiceApplication));
    assert!(first(RecordKind::ServiceApplication) < first(RecordKind::ProofRequest));
    assert!(first(RecordKind::ProofRequest) < first(RecordKind::ProofResponse));
    assert_eq!(records.last().unwrap().0, RecordKind::ServiceDecision);

    // Each source uploads only after its own challenge was answered.
    for (i, (kind, author, payload)) in records.iter().enumerate() {
        if let Payload::AssetUpload { source_id, .. } = payload {
            assert_eq!(*kind, RecordKind::AssetUpload);
            assert_eq!(author, &format!("source:{source_id}"));
            let answered = records[..i]
                .iter()
                .any(|(_, _, p)| matches!(p, Payload::AuthResponse { source_id: s, .. } if s == source_id));
            assert!(answered, "upload from {source_id} without a response");
        }
    }
}

#[test]
fn token_is_reused_byte_identical_within_a_session() {
    let world = run(&demo_scenario(102));
    let tokens: Vec<Vec<u8>> = payloads(&world)
        .iter()
        .filter_map(|(_, _, p)| token_of(p))
        .map(|t| t.as_bytes().to_vec())
        .collect();
    assert!(tokens.len() >= 7);
    assert!(tokens.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn address_never_reaches_the_ledger() {
    let world = run(&demo_scenario(103));
    let address = world.user("alice").unwrap().address();
    let raw = address.0;
    let hex = address.to_hex();
    for record in world.ledger().records() {
        let bytes = record.payload();
        assert!(
            !bytes.windows(raw.len()).any(|w| w == raw),
            "raw address at height {}",
            record.height()
        );
        let line = serde_json::to_string(&record.to_line()).unwrap();
        assert!(
            !line.contains(&hex),
            "hex address at height {}",
            record.height()
        );
    }
}

#[test]
fn concurrent_users_get_their_own_tiers() {
    let mut config = demo_scenario(104);
    config.operator.tiers = vec![[0, 50], [50, 100], [100, 1000]];
    for (name, amount) in [("bob", 45), ("carol", 500)] {
        config.sources[1].accounts.push(AccountConfig {
            id: format!("ex-{name}"),
            owner: name.into(),
            amount,
        });
        let mut accounts = BTreeMap::new();
        accounts.insert(config.sources[1].id.clone(), format!("ex-{name}"));
        config.users.push(UserConfig {
            name: name.into(),
            accounts,
            malice: None,
        });
    }
    let world = run(&config);
    let outcome = |name: &str| world.user(name).unwrap().results()[0].outcome;
    assert_eq!(outcome("alice"), Some(Outcome::Tier(1)));
    assert_eq!(outcome("bob"), Some(Outcome::Tier(0)));
    assert_eq!(outcome("carol"), Some(Outcome::Tier(2)));
    assert_eq!(world.operator().decisions().len(), 3);
    assert_eq!(world.aborted_sessions(), 0);

    let text = Transcript::from_world(&world).render();
    let report = transcript::verify(&text).unwrap();
    assert_eq!(report.sessions, 3);
    assert_eq!(report.decisions.len(), 3);
}
