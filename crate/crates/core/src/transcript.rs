//! Run transcripts: JSON lines holding run metadata, the public key
//! directory, instrumentation, the operator's decisions and the full ledger.
//!
//! Line order is fixed: one `meta` line, then `entity`, `observation`,
//! `counters`, `decision` and `record` lines. The meta digest is SHA-256 over
//! the whole text with the digest value blanked, so any edit is detected.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::actors::{
    self, CallCounters, EntityInfo, Observation, ObservationLog, World, OPERATOR, RELAYER, ZKPSP,
};
use crate::envelope::{self, Address, EncPublicKey, SigPublicKey};
use crate::he::HePublicKey;
use crate::ledger::{
    AbortReason, Author, CaddrToken, DenialReason, LedgerRecord, Outcome, Payload,
    ProofResponseBody, RecordLine, SessionId,
};
use crate::rangeproof::{self, GroupParams, RangeStatement, Verdict};
use crate::rng::RNG_VERSION;
use crate::scenario::NegativeControl;
use crate::Profile;

pub const TOOL: &str = concat!("veilsum/", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub tool: String,
    pub rng: String,
    pub seed: u64,
    pub profile: Profile,
    pub non_production: bool,
    pub timeout_heights: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_control: Option<NegativeControl>,
    pub digest: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountersLine {
    pub entity: String,
    #[serde(flatten)]
    pub counters: CallCounters,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionLine {
    pub session_id: SessionId,
    pub address: Address,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum Line {
    Meta(Meta),
    Entity(EntityInfo),
    Observation(Observation),
    Counters(CountersLine),
    Decision(DecisionLine),
    Record(RecordLine),
}

impl Line {
    fn rank(&self) -> u8 {
        match self {
            Line::Meta(_) => 0,
            Line::Entity(_) => 1,
            Line::Observation(_) => 2,
            Line::Counters(_) => 3,
            Line::Decision(_) => 4,
            Line::Record(_) => 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transcript {
    pub meta: Meta,
    pub entities: Vec<EntityInfo>,
    pub log: ObservationLog,
    pub decisions: Vec<DecisionLine>,
    pub records: Vec<LedgerRecord>,
}

/// Failure to read or verify a transcript. `height` names the offending
/// ledger record when there is one.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub struct TranscriptError {
    pub line: Option<usize>,
    pub height: Option<u64>,
    pub message: String,
}

impl fmt::Display for TranscriptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.height, self.line) {
            (Some(h), _) => write!(f, "record {h}: {}", self.message),
            (None, Some(l)) => write!(f, "line {l}: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

fn at_line(line: usize, message: impl Into<String>) -> TranscriptError {
    TranscriptError {
        line: Some(line),
        height: None,
        message: message.into(),
    }
}

fn at_record(height: u64, message: impl Into<String>) -> TranscriptError {
    TranscriptError {
        line: None,
        height: Some(height),
        message: message.into(),
    }
}

fn general(message: impl Into<String>) -> TranscriptError {
    TranscriptError {
        line: None,
        height: None,
        message: message.into(),
    }
}

fn digest_hex(text_with_blank_digest: &str) -> String {
    hex::encode(Sha256::digest(text_with_blank_digest.as_bytes()))
}

fn to_json(line: &Line) -> String {
    serde_json::to_string(line).expect("transcript lines serialize")
}

impl Transcript {
    pub fn from_world(world: &World) -> Self {
        let config = world.config();
        let profile = world.profile();
        let meta = Meta {
            tool: TOOL.to_string(),
            rng: RNG_VERSION.to_string(),
            seed: config.seed,
            profile,
            non_production: !profile.is_production(),
            timeout_heights: config.timeout_heights,
            negative_control: config.negative_control,
            digest: String::new(),
        };
        let decisions = world
            .operator()
            .decision_log()
            .iter()
            .map(|(session_id, d)| DecisionLine {
                session_id: *session_id,
                address: d.address,
                outcome: d.outcome,
            })
            .collect();
        Self {
            meta,
            entities: world.directory().to_vec(),
            log: world.log().clone(),
            decisions,
            records: world.ledger().records().to_vec(),
        }
    }

    /// Serializes to JSON lines with a freshly computed digest.
    pub fn render(&self) -> String {
        let mut meta = self.meta.clone();
        meta.digest = String::new();
        let mut text = to_json(&Line::Meta(meta.clone()));
        text.push('\n');
        for e in &self.entities {
            text.push_str(&to_json(&Line::Entity(e.clone())));
            text.push('\n');
        }
        for o in self.log.entries() {
            text.push_str(&to_json(&Line::Observation(o.clone())));
            text.push('\n');
        }
        for (entity, counters) in self.log.counters() {
            text.push_str(&to_json(&Line::Counters(CountersLine {
                entity: entity.clone(),
                counters: *counters,
            })));
            text.push('\n');
        }
        for d in &self.decisions {
            text.push_str(&to_json(&Line::Decision(d.clone())));
            text.push('\n');
        }
        for r in &self.records {
            text.push_str(&to_json(&Line::Record(r.to_line())));
            text.push('\n');
        }
        let digest = digest_hex(&text);
        text.replacen(r#""digest":"""#, &format!(r#""digest":"{digest}""#), 1)
    }

    /// Parses a transcript and checks its digest. Does not check protocol
    /// semantics; see [`verify`].
    pub fn parse(text: &str) -> Result<Self, TranscriptError> {
        let t = Self::parse_lines(text)?;
        check_digest(text, &t.meta)?;
        Ok(t)
    }

    fn parse_lines(text: &str) -> Result<Self, TranscriptError> {
        let mut meta: Option<Meta> = None;
        let mut entities = Vec::new();
        let mut observations = Vec::new();
        let mut counters = BTreeMap::new();
        let mut decisions = Vec::new();
        let mut records = Vec::new();
        let mut last_rank = 0u8;
        for (i, raw) in text.split_terminator('\n').enumerate() {
            let n = i + 1;
            let line: Line = serde_json::from_str(raw)
                .map_err(|e| at_line(n, format!("malformed line: {e}")))?;
            let rank = line.rank();
            if (i == 0) != (rank == 0) || rank < last_rank {
                return Err(at_line(n, "line out of order"));
            }
            last_rank = rank;
            match line {
                Line::Meta(m) => meta = Some(m),
                Line::Entity(e) => entities.push(e),
                Line::Observation(o) => observations.push(o),
                Line::Counters(c) => {
                    if counters.insert(c.entity.clone(), c.counters).is_some() {
                        return Err(at_line(n, format!("duplicate counters for {}", c.entity)));
                    }
                }
                Line::Decision(d) => decisions.push(d),
                Line::Record(r) => {
                    let height = r.height;
                    let record = LedgerRecord::from_line(&r)
                        .map_err(|e| at_record(height, format!("payload hex: {e}")))?;
                    records.push(record);
                }
            }
        }
        let meta = meta.ok_or_else(|| general("empty transcript"))?;
        Ok(Self {
            meta,
            entities,
            log: ObservationLog::from_parts(observations, counters),
            decisions,
            records,
        })
    }

    pub fn entity(&self, name: &str) -> Option<&EntityInfo> {
        self.entities.iter().find(|e| e.entity == name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyReport {
    pub records: usize,
    pub sessions: usize,
    pub aborted: usize,
    pub decisions: Vec<(SessionId, Outcome)>,
}

struct Directory {
    he_public: HePublicKey,
    relayer_fp: [u8; 16],
    operator_fp: [u8; 16],
    sources: BTreeSet<String>,
    /// User credential keys by encryption-key fingerprint.
    credentials: BTreeMap<[u8; 16], SigPublicKey>,
}

fn directory(t: &Transcript) -> Result<Directory, TranscriptError> {
    let bad = |what: &str| general(format!("key directory: {what}"));
    let enc_fp = |info: &EntityInfo| -> Result<[u8; 16], TranscriptError> {
        let hex_key = info
            .enc_public
            .as_deref()
            .ok_or_else(|| bad(&format!("{} has no encryption key", info.entity)))?;
        let bytes = hex::decode(hex_key).map_err(|_| bad("bad hex"))?;
        Ok(EncPublicKey::decode(&bytes)
            .map_err(|_| bad("bad encryption key"))?
            .fingerprint())
    };
    let zkpsp = t
        .entity(ZKPSP)
        .ok_or_else(|| bad("missing proof service"))?;
    let he_bytes = hex::decode(
        zkpsp
            .he_public
            .as_deref()
            .ok_or_else(|| bad("missing HE key"))?,
    )
    .map_err(|_| bad("bad hex"))?;
    let he_public = HePublicKey::decode(&he_bytes).map_err(|_| bad("bad HE key"))?;
    let relayer_fp = enc_fp(t.entity(RELAYER).ok_or_else(|| bad("missing relayer"))?)?;
    let operator_fp = enc_fp(t.entity(OPERATOR).ok_or_else(|| bad("missing operator"))?)?;
    let mut sources = BTreeSet::new();
    let mut credentials = BTreeMap::new();
    for e in &t.entities {
        if let Some(id) = e.entity.strip_prefix("source:") {
            sources.insert(id.to_string());
        } else if e.entity.starts_with("user:") {
            let sig_hex = e
                .sig_public
                .as_deref()
                .ok_or_else(|| bad("user without signature key"))?;
            let sig = SigPublicKey::decode(&hex::decode(sig_hex).map_err(|_| bad("bad hex"))?)
                .map_err(|_| bad("bad signature key"))?;
            credentials.insert(enc_fp(e)?, sig);
        }
    }
    Ok(Directory {
        he_public,
        relayer_fp,
        operator_fp,
        sources,
        credentials,
    })
}

#[derive(Default)]
struct SessionState {
    token: Option<CaddrToken>,
    expected: Vec<String>,
    /// source -> recipient fingerprint of its challenge
    challenges: BTreeMap<String, [u8; 16]>,
    responded: BTreeMap<String, bool>,
    uploaded: BTreeSet<String>,
    closed: bool,
}

struct RequestState {
    session_id: SessionId,
    token: CaddrToken,
    statement: RangeStatement,
    response: Option<Option<Verdict>>,
    decided: bool,
}

fn check_digest(text: &str, meta: &Meta) -> Result<(), TranscriptError> {
    let blanked = text.replacen(
        &format!(r#""digest":"{}""#, meta.digest),
        r#""digest":"""#,
        1,
    );
    if digest_hex(&blanked) != meta.digest {
        return Err(at_line(1, "digest mismatch"));
    }
    Ok(())
}

/// Parses `text` and re-checks every ledger record: structure, keys and
/// signatures, aggregation completeness, proofs and decisions. The digest is
/// checked last so that semantic errors are reported with their height.
pub fn verify(text: &str) -> Result<VerifyReport, TranscriptError> {
    let t = Transcript::parse_lines(text)?;
    let report = verify_parsed(&t)?;
    check_digest(text, &t.meta)?;
    Ok(report)
}

pub fn verify_parsed(t: &Transcript) -> Result<VerifyReport, TranscriptError> {
    let meta = &t.meta;
    if meta.rng != RNG_VERSION {
        return Err(at_line(1, format!("unsupported rng {:?}", meta.rng)));
    }
    if meta.non_production != !meta.profile.is_production() {
        return Err(at_line(1, "non_production flag disagrees with profile"));
    }
    let params = GroupParams::setup(meta.profile);
    let dir = directory(t)?;
    if dir.he_public.bit_length() != meta.profile.he_bits() {
        return Err(general("HE key size does not match profile"));
    }

    let mut sessions: BTreeMap<SessionId, SessionState> = BTreeMap::new();
    let mut aggregated: BTreeSet<CaddrToken> = BTreeSet::new();
    let mut applications: BTreeMap<u64, (SessionId, CaddrToken)> = BTreeMap::new();
    let mut requests: BTreeMap<u64, RequestState> = BTreeMap::new();
    let mut decided_outcomes: BTreeMap<SessionId, Vec<Outcome>> = BTreeMap::new();
    let mut statement: Option<RangeStatement> = None;
    let mut decisions = Vec::new();
    let mut aborted = 0;
    let mut last_time = 0u64;

    for (index, record) in t.records.iter().enumerate() {
        let h = record.height();
        let err = |m: String| at_record(h, m);
        if h != index as u64 {
            return Err(err(format!("expected height {index}")));
        }
        if record.logical_time() <= last_time {
            return Err(err("logical time not increasing".into()));
        }
        last_time = record.logical_time();
        let payload = record
            .decode(&params)
            .map_err(|e| err(format!("payload: {e}")))?;
        let sid = record.session_id();
        let author = record.author();
        let expect_author = |want: &str| -> Result<(), TranscriptError> {
            if author != &Author::new(want) {
                return Err(at_record(
                    h,
                    format!("author {author} where {want} expected"),
                ));
            }
            Ok(())
        };
        match &payload {
            Payload::SessionManifest {
                caddr_token,
                expected,
            } => {
                expect_author(actors::ANONYMOUS_USER)?;
                if sessions.contains_key(&sid) {
                    return Err(err("duplicate session".into()));
                }
                if caddr_token.envelope().recipient_fingerprint != dir.operator_fp {
                    return Err(err("token not sealed to operator".into()));
                }
                if expected.is_empty() {
                    return Err(err("manifest lists no accounts".into()));
                }
                let mut ids: Vec<String> = expected.iter().map(|e| e.source_id.clone()).collect();
                ids.sort();
                ids.dedup();
                if ids.len() != expected.len() {
                    return Err(err("manifest lists a source twice".into()));
                }
                if let Some(unknown) = ids.iter().find(|s| !dir.sources.contains(*s)) {
                    return Err(err(format!("unknown source {unknown:?}")));
                }
                sessions.insert(
                    sid,
                    SessionState {
                        token: Some(caddr_token.clone()),
                        expected: ids,
                        ..Default::default()
                    },
                );
            }
            Payload::AuthChallenge {
                source_id,
                sealed_nonce,
            } => {
                expect_author(&actors::source_entity(source_id))?;
                let s = sessions
                    .get_mut(&sid)
                    .ok_or_else(|| err("challenge without manifest".into()))?;
                if s.closed || !s.expected.contains(source_id) {
                    return Err(err("challenge from a source not in the manifest".into()));
                }
                if !dir
                    .credentials
                    .contains_key(&sealed_nonce.recipient_fingerprint)
                {
                    return Err(err("challenge not sealed to a registered user key".into()));
                }
                if s.challenges
                    .insert(source_id.clone(), sealed_nonce.recipient_fingerprint)
                    .is_some()
                {
                    return Err(err("duplicate challenge".into()));
                }
            }
            Payload::AuthResponse {
                source_id,
                nonce,
                signature,
            } => {
                expect_author(actors::ANONYMOUS_USER)?;
                let s = sessions
                    .get_mut(&sid)
                    .ok_or_else(|| err("response without manifest".into()))?;
                let fp = *s
                    .challenges
                    .get(source_id)
                    .ok_or_else(|| err("response without challenge".into()))?;
                if s.responded.contains_key(source_id) {
                    return Err(err("duplicate response".into()));
                }
                let key = &dir.credentials[&fp];
                let valid =
                    envelope::verify(key, &actors::auth_message(nonce, sid, source_id), signature);
                s.responded.insert(source_id.clone(), valid);
            }
            Payload::AssetUpload {
                source_id,
                caddr_token,
                sealed_ciphertext,
            } => {
                expect_author(&actors::source_entity(source_id))?;
                let s = sessions
                    .get_mut(&sid)
                    .ok_or_else(|| err("upload without manifest".into()))?;
                if s.closed {
                    return Err(err("upload after session closed".into()));
                }
                if s.responded.get(source_id) != Some(&true) {
                    return Err(err("upload without a valid authentication response".into()));
                }
                if s.token.as_ref() != Some(caddr_token) {
                    return Err(err("upload token differs from manifest".into()));
                }
                if sealed_ciphertext.recipient_fingerprint != dir.relayer_fp {
                    return Err(err("upload not sealed to relayer".into()));
                }
                if !s.uploaded.insert(source_id.clone()) {
                    return Err(err("duplicate upload".into()));
                }
            }
            Payload::AggregateResult {
                caddr_token,
                ciphertext,
            } => {
                expect_author(RELAYER)?;
                let s = sessions
                    .get_mut(&sid)
                    .ok_or_else(|| err("aggregate without manifest".into()))?;
                if s.closed {
                    return Err(err("aggregate after session closed".into()));
                }
                if s.token.as_ref() != Some(caddr_token) {
                    return Err(err("aggregate token differs from manifest".into()));
                }
                let missing: Vec<&String> = s
                    .expected
                    .iter()
                    .filter(|x| !s.uploaded.contains(*x))
                    .collect();
                if !missing.is_empty() {
                    return Err(err(format!("aggregate before uploads from {missing:?}")));
                }
                if ciphertext.key_fingerprint() != dir.he_public.fingerprint() {
                    return Err(err("aggregate under a foreign HE key".into()));
                }
                s.closed = true;
                aggregated.insert(caddr_token.clone());
            }
            Payload::SessionAborted {
                caddr_token,
                reason,
                missing_sources,
            } => {
                expect_author(RELAYER)?;
                let s = sessions
                    .get_mut(&sid)
                    .ok_or_else(|| err("abort without manifest".into()))?;
                if s.closed {
                    return Err(err("abort after session closed".into()));
                }
                if s.token.as_ref() != Some(caddr_token) {
                    return Err(err("abort token differs from manifest".into()));
                }
                let missing: Vec<String> = s
                    .expected
                    .iter()
                    .filter(|x| !s.uploaded.contains(*x))
                    .cloned()
                    .collect();
                let consistent = match reason {
                    AbortReason::Timeout => missing_sources == &missing,
                    AbortReason::FingerprintMismatch => {
                        missing_sources.iter().all(|m| s.expected.contains(m))
                            && missing.iter().all(|m| missing_sources.contains(m))
                    }
                };
                if !consistent {
                    return Err(err("abort lists the wrong missing sources".into()));
                }
                s.closed = true;
                aborted += 1;
            }
            Payload::ServiceApplication {
                caddr_token,
                sealed_identity,
            } => {
                expect_author(actors::ANONYMOUS_USER)?;
                if !aggregated.contains(caddr_token) {
                    return Err(err("application for a token with no aggregate".into()));
                }
                if sealed_identity.recipient_fingerprint != dir.operator_fp {
                    return Err(err("application not sealed to operator".into()));
                }
                applications.insert(h, (sid, caddr_token.clone()));
            }
            Payload::ProofRequest {
                application_height,
                caddr_token,
                statement: st,
            } => {
                expect_author(OPERATOR)?;
                let (app_sid, app_token) =
                    applications.remove(application_height).ok_or_else(|| {
                        err(format!(
                            "no open application at height {application_height}"
                        ))
                    })?;
                if app_sid != sid || &app_token != caddr_token {
                    return Err(err("request does not match its application".into()));
                }
                match &statement {
                    Some(s) if s != st => return Err(err("operator changed its tiers".into())),
                    _ => statement = Some(st.clone()),
                }
                requests.insert(
                    h,
                    RequestState {
                        session_id: sid,
                        token: caddr_token.clone(),
                        statement: st.clone(),
                        response: None,
                        decided: false,
                    },
                );
            }
            Payload::ProofResponse {
                request_height,
                caddr_token,
                body,
            } => {
                expect_author(ZKPSP)?;
                let req = requests
                    .get_mut(request_height)
                    .ok_or_else(|| err(format!("no request at height {request_height}")))?;
                if req.response.is_some() {
                    return Err(err("duplicate response".into()));
                }
                if req.session_id != sid || &req.token != caddr_token {
                    return Err(err("response does not match its request".into()));
                }
                req.response = Some(match body {
                    ProofResponseBody::NoAggregate => {
                        if aggregated.contains(caddr_token) {
                            return Err(err("proof service ignored an existing aggregate".into()));
                        }
                        None
                    }
                    ProofResponseBody::Bundle(bundle) => {
                        let verdict = rangeproof::verify_bundle(&params, bundle, &req.statement)
                            .map_err(|e| err(format!("statement: {e}")))?;
                        if verdict == Verdict::Rejected {
                            return Err(err("proof does not verify".into()));
                        }
                        Some(verdict)
                    }
                });
            }
            Payload::ServiceDecision {
                request_height,
                outcome,
            } => {
                expect_author(OPERATOR)?;
                let req = requests
                    .get_mut(request_height)
                    .ok_or_else(|| err(format!("no request at height {request_height}")))?;
                if req.session_id != sid {
                    return Err(err("decision filed under another session".into()));
                }
                let Some(response) = &req.response else {
                    return Err(err("decision before proof response".into()));
                };
                if req.decided {
                    return Err(err("duplicate decision".into()));
                }
                req.decided = true;
                let expected = match response {
                    None => Outcome::Denied(DenialReason::Timeout),
                    Some(Verdict::NoMatch) => Outcome::Denied(DenialReason::NoMatch),
                    Some(v) => Outcome::Tier(
                        v.matched_index().expect("accepted verdicts have a label") as u32,
                    ),
                };
                // Address binding is checked by the operator against sealed
                // data, so a mismatch denial is always admissible here.
                if *outcome != expected
                    && *outcome != Outcome::Denied(DenialReason::AddressMismatch)
                {
                    return Err(err(format!(
                        "decision {outcome} contradicts the proof ({expected})"
                    )));
                }
                decided_outcomes.entry(sid).or_default().push(*outcome);
                decisions.push((sid, *outcome));
            }
        }
    }

    let mut remaining = decided_outcomes.clone();
    for d in &t.decisions {
        let slot = remaining.get_mut(&d.session_id).and_then(|v| {
            let i = v.iter().position(|o| *o == d.outcome)?;
            Some(v.remove(i))
        });
        if slot.is_none() {
            return Err(general(format!(
                "decision line for session {} has no matching record",
                d.session_id
            )));
        }
    }
    if remaining.values().any(|v| !v.is_empty()) {
        return Err(general("decision records without decision lines"));
    }

    Ok(VerifyReport {
        records: t.records.len(),
        sessions: sessions.len(),
        aborted,
        decisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::demo_scenario;

    fn demo_text() -> String {
        let mut world = World::build(&demo_scenario(4)).unwrap();
        world.run();
        Transcript::from_world(&world).render()
    }

    #[test]
    fn render_parse_roundtrip() {
        let text = demo_text();
        let t = Transcript::parse(&text).unwrap();
        assert_eq!(t.render(), text);
        assert!(t.meta.non_production);
        let last = text.lines().last().unwrap();
        assert!(last.contains(r#""kind":"ServiceDecision""#), "{last}");
    }

    #[test]
    fn verify_accepts_demo() {
        let report = verify(&demo_text()).unwrap();
        assert_eq!(report.decisions.len(), 1);
        assert_eq!(report.decisions[0].1, Outcome::Tier(1));
        assert_eq!(report.aborted, 0);
    }

    #[test]
    fn any_digest_byte_change_is_caught() {
        let text = demo_text();
        let start = text.find(r#""digest":""#).unwrap() + 10;
        for i in start..start + 64 {
            let mut bytes = text.clone().into_bytes();
            bytes[i] = if bytes[i] == b'0' { b'1' } else { b'0' };
            let err = verify(std::str::from_utf8(&bytes).unwrap()).unwrap_err();
            assert_eq!(err.message, "digest mismatch");
        }
    }

    #[test]
    fn semantic_errors_name_the_height() {
        let text = demo_text();
        let t = Transcript::parse(&text).unwrap();
        // Swap the decision outcome for a different tier.
        let mut forged = t.clone();
        let last = forged.records.len() - 1;
        let line = forged.records[last].to_line();
        let params = GroupParams::setup(Profile::Test);
        let payload = Payload::ServiceDecision {
            request_height: 0,
            outcome: Outcome::Tier(0),
        };
        let fixed = match forged.records[last].decode(&params).unwrap() {
            Payload::ServiceDecision { request_height, .. } => Payload::ServiceDecision {
                request_height,
                outcome: Outcome::Tier(0),
            },
            _ => payload,
        };
        let mut new_line = line.clone();
        new_line.payload_hex = hex::encode(fixed.encode(&params));
        forged.records[last] = LedgerRecord::from_line(&new_line).unwrap();
        let err = verify(&forged.render()).unwrap_err();
        assert_eq!(err.height, Some(last as u64), "{err}");
    }
}
