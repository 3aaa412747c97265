//! Scenario configuration: entities, registries, tiers, seeds.
//!
//! ```toml
//! seed = 7
//! profile = "test"          # optional; falls back to VEILSUM_PROFILE, then "test"
//! timeout_heights = 64      # optional
//!
//! [operator]
//! tiers = [[0, 50], [50, 100]]   # half-open (lo, hi], sorted and disjoint
//!
//! [[sources]]
//! id = "bank"
//! accounts = [{ id = "acct-1", owner = "alice", amount = 10 }]
//!
//! [[users]]
//! name = "alice"
//! accounts = { bank = "acct-1" }  # source id -> account id
//! # malice = { kind = "phase1_substitution", target = "bob" }
//! # malice = { kind = "phase2_substitution" }
//! ```
//!
//! Owner keys are derived from the scenario seed and the owner's name, so a
//! registry only needs to name the owner.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rangeproof::{GroupParams, Interval, RangeStatement};
use crate::{rng, Profile};

pub const DEFAULT_TIMEOUT_HEIGHTS: u64 = 64;
pub const PROFILE_ENV: &str = "VEILSUM_PROFILE";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Profile>,
    #[serde(default = "default_timeout")]
    pub timeout_heights: u64,
    pub operator: OperatorConfig,
    pub sources: Vec<SourceConfig>,
    pub users: Vec<UserConfig>,
    /// Deliberately leaky build used to show the leakage checks have teeth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_control: Option<NegativeControl>,
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_HEIGHTS
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub tiers: Vec<[u64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub id: String,
    pub accounts: Vec<AccountConfig>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccountConfig {
    pub id: String,
    pub owner: String,
    pub amount: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    pub name: String,
    #[serde(default)]
    pub accounts: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub malice: Option<Malice>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Malice {
    /// Opens a session with a token sealing `target`'s address and claims
    /// `target`'s accounts, then answers challenges it cannot open.
    Phase1Substitution { target: String },
    /// Re-uses another session's token when applying for service.
    Phase2Substitution,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeControl {
    /// Sources hold the operator's key and open address tokens.
    SourceLearnsAddress,
    /// The relayer holds the HE private key and decrypts aggregates.
    RelayerDecryptsSums,
    /// The proof service holds the operator's key and opens tokens.
    ZkpspLearnsAddress,
    /// The operator holds the HE private key and decrypts aggregates.
    OperatorLearnsTotal,
}

impl NegativeControl {
    pub const ALL: [NegativeControl; 4] = [
        NegativeControl::SourceLearnsAddress,
        NegativeControl::RelayerDecryptsSums,
        NegativeControl::ZkpspLearnsAddress,
        NegativeControl::OperatorLearnsTotal,
    ];
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Explicit config value, else `VEILSUM_PROFILE`, else test.
    pub fn resolved_profile(&self) -> Result<Profile, ConfigError> {
        if let Some(p) = self.profile {
            return Ok(p);
        }
        match std::env::var(PROFILE_ENV) {
            Ok(v) => v
                .parse()
                .map_err(|e: crate::UnknownProfile| invalid(PROFILE_ENV, e.to_string())),
            Err(_) => Ok(Profile::Test),
        }
    }

    pub fn statement(&self) -> Result<RangeStatement, ConfigError> {
        let intervals = self
            .operator
            .tiers
            .iter()
            .enumerate()
            .map(|(i, [lo, hi])| {
                Interval::new(*lo, *hi)
                    .map_err(|e| invalid(format!("operator.tiers[{i}]"), e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        RangeStatement::new(intervals).map_err(|e| invalid("operator.tiers", e.to_string()))
    }

    pub fn source(&self, id: &str) -> Option<&SourceConfig> {
        self.sources.iter().find(|s| s.id == id)
    }

    pub fn user(&self, name: &str) -> Option<&UserConfig> {
        self.users.iter().find(|u| u.name == name)
    }

    /// Plaintext total of a user's listed accounts (the oracle the protocol
    /// must reproduce without revealing it).
    pub fn plaintext_total(&self, user: &str) -> Option<u64> {
        let u = self.user(user)?;
        u.accounts.iter().try_fold(0u64, |acc, (source, account)| {
            let a = self
                .source(source)?
                .accounts
                .iter()
                .find(|a| &a.id == account)?;
            acc.checked_add(a.amount)
        })
    }

    pub fn expected_tier(&self, user: &str) -> Option<Option<usize>> {
        let total = self.plaintext_total(user)?;
        Some(self.statement().ok()?.position(total))
    }

    /// Checks every precondition the protocol modules rely on. Errors name
    /// the offending field path.
    pub fn validate(&self) -> Result<Profile, ConfigError> {
        let profile = self.resolved_profile()?;
        if self.timeout_heights == 0 {
            return Err(invalid("timeout_heights", "must be at least 1"));
        }
        self.statement()?;
        if self.sources.is_empty() {
            return Err(invalid(
                "sources",
                "at least one trusted source is required",
            ));
        }
        if self.users.is_empty() {
            return Err(invalid("users", "at least one user is required"));
        }

        let user_names: BTreeSet<&str> = self.users.iter().map(|u| u.name.as_str()).collect();
        if user_names.len() != self.users.len() {
            return Err(invalid("users", "duplicate user name"));
        }
        let mut source_ids = BTreeSet::new();
        for (i, s) in self.sources.iter().enumerate() {
            if s.id.is_empty() || !source_ids.insert(s.id.as_str()) {
                return Err(invalid(
                    format!("sources[{i}].id"),
                    "empty or duplicate source id",
                ));
            }
            let mut account_ids = BTreeSet::new();
            for (j, a) in s.accounts.iter().enumerate() {
                let path = format!("sources[{i}].accounts[{j}]");
                if !account_ids.insert(a.id.as_str()) {
                    return Err(invalid(format!("{path}.id"), "duplicate account id"));
                }
                if !user_names.contains(a.owner.as_str()) {
                    return Err(invalid(
                        format!("{path}.owner"),
                        format!("unknown user {:?}", a.owner),
                    ));
                }
            }
        }

        let he_floor = BigUint::from(1u8) << (profile.he_bits() - 1);
        let group_order = GroupParams::setup(profile).order().clone();
        for (i, u) in self.users.iter().enumerate() {
            let path = format!("users[{i}]");
            match &u.malice {
                Some(Malice::Phase1Substitution { target }) => {
                    if target == &u.name || !user_names.contains(target.as_str()) {
                        return Err(invalid(
                            format!("{path}.malice.target"),
                            "must name another user",
                        ));
                    }
                }
                Some(Malice::Phase2Substitution) => {}
                None if u.accounts.is_empty() => {
                    return Err(invalid(
                        format!("{path}.accounts"),
                        "honest users need at least one account",
                    ));
                }
                None => {}
            }
            for (source, account) in &u.accounts {
                let apath = format!("{path}.accounts.{source}");
                let s = self
                    .source(source)
                    .ok_or_else(|| invalid(&apath, "unknown source"))?;
                let a = s
                    .accounts
                    .iter()
                    .find(|a| &a.id == account)
                    .ok_or_else(|| invalid(&apath, format!("no account {account:?} at source")))?;
                if a.owner != u.name {
                    return Err(invalid(
                        &apath,
                        format!("account is owned by {:?}", a.owner),
                    ));
                }
            }
            let total = self
                .plaintext_total(&u.name)
                .ok_or_else(|| invalid(format!("{path}.accounts"), "total overflows 64 bits"))?;
            let total = BigUint::from(total);
            if total >= he_floor || total >= group_order {
                return Err(invalid(
                    format!("{path}.accounts"),
                    "total exceeds HE modulus or group order",
                ));
            }
        }
        Ok(profile)
    }
}

#[derive(Clone, Debug)]
pub struct RandomScenarioOptions {
    pub min_sources: usize,
    pub max_sources: usize,
    pub min_amount: u64,
    pub max_amount: u64,
    pub min_tiers: usize,
    pub max_tiers: usize,
}

impl Default for RandomScenarioOptions {
    fn default() -> Self {
        Self {
            min_sources: 1,
            max_sources: 8,
            min_amount: 0,
            max_amount: u64::from(u32::MAX),
            min_tiers: 2,
            max_tiers: 5,
        }
    }
}

/// One honest user ("alice") with one account at each of 1-8 sources and
/// 2-5 random disjoint tiers that may or may not contain her total.
pub fn random_scenario(seed: u64, opts: &RandomScenarioOptions) -> ScenarioConfig {
    let mut rng = rng::stream(seed, "scenario-generator");
    let n_sources = rng.gen_range(opts.min_sources..=opts.max_sources);
    let mut sources = Vec::with_capacity(n_sources);
    let mut accounts = BTreeMap::new();
    let mut total = 0u64;
    for i in 0..n_sources {
        let amount = rng.gen_range(opts.min_amount..=opts.max_amount);
        total += amount;
        let id = format!("source-{i}");
        let account = format!("acct-{i}-{}", rng.gen_range(1000..10000));
        accounts.insert(id.clone(), account.clone());
        sources.push(SourceConfig {
            id,
            accounts: vec![AccountConfig {
                id: account,
                owner: "alice".into(),
                amount,
            }],
        });
    }

    let n_tiers = rng.gen_range(opts.min_tiers..=opts.max_tiers);
    let span = total.saturating_mul(2).max(16);
    let mut cuts = BTreeSet::new();
    while cuts.len() < n_tiers + 1 {
        cuts.insert(rng.gen_range(0..=span));
    }
    let cuts: Vec<u64> = cuts.into_iter().collect();
    let mut tiers: Vec<[u64; 2]> = cuts.windows(2).map(|w| [w[0], w[1]]).collect();
    // Occasionally punch a gap so some totals fall between tiers.
    if tiers.len() > 2 && rng.gen_bool(0.3) {
        let drop = rng.gen_range(0..tiers.len());
        tiers.remove(drop);
    }
    tiers.shuffle(&mut rng);
    tiers.sort();

    ScenarioConfig {
        seed,
        profile: Some(Profile::Test),
        timeout_heights: DEFAULT_TIMEOUT_HEIGHTS,
        operator: OperatorConfig { tiers },
        sources,
        users: vec![UserConfig {
            name: "alice".into(),
            accounts,
            malice: None,
        }],
        negative_control: None,
    }
}

/// The three-source demo: amounts 10/20/30, tiers (0,50] and (50,100].
pub fn demo_scenario(seed: u64) -> ScenarioConfig {
    let sources = [("bank", 10), ("exchange", 20), ("auditor", 30)]
        .into_iter()
        .map(|(id, amount)| SourceConfig {
            id: id.into(),
            accounts: vec![AccountConfig {
                id: format!("{id}-alice"),
                owner: "alice".into(),
                amount,
            }],
        })
        .collect::<Vec<_>>();
    let accounts = sources
        .iter()
        .map(|s| (s.id.clone(), s.accounts[0].id.clone()))
        .collect();
    ScenarioConfig {
        seed,
        profile: Some(Profile::Test),
        timeout_heights: DEFAULT_TIMEOUT_HEIGHTS,
        operator: OperatorConfig {
            tiers: vec![[0, 50], [50, 100]],
        },
        sources,
        users: vec![UserConfig {
            name: "alice".into(),
            accounts,
            malice: None,
        }],
        negative_control: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_validates_and_sums() {
        let s = demo_scenario(1);
        assert_eq!(s.validate().unwrap(), Profile::Test);
        assert_eq!(s.plaintext_total("alice"), Some(60));
        assert_eq!(s.expected_tier("alice"), Some(Some(1)));
    }

    #[test]
    fn toml_roundtrip() {
        let s = demo_scenario(3);
        assert_eq!(ScenarioConfig::from_toml(&s.to_toml()).unwrap(), s);
    }

    fn path_of(e: ConfigError) -> String {
        match e {
            ConfigError::Invalid { path, .. } => path,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validation_names_fields() {
        let mut s = demo_scenario(1);
        s.operator.tiers = vec![[0, 60], [50, 100]];
        assert_eq!(path_of(s.validate().unwrap_err()), "operator.tiers");

        let mut s = demo_scenario(1);
        s.sources.clear();
        s.users[0].accounts.clear();
        assert_eq!(path_of(s.validate().unwrap_err()), "sources");

        let mut s = demo_scenario(1);
        s.sources[0].accounts[0].owner = "mallory".into();
        assert_eq!(
            path_of(s.validate().unwrap_err()),
            "sources[0].accounts[0].owner"
        );

        let mut s = demo_scenario(1);
        s.users[0].accounts.insert("nowhere".into(), "x".into());
        assert_eq!(
            path_of(s.validate().unwrap_err()),
            "users[0].accounts.nowhere"
        );

        let mut s = demo_scenario(1);
        s.timeout_heights = 0;
        assert_eq!(path_of(s.validate().unwrap_err()), "timeout_heights");

        let mut s = demo_scenario(1);
        for src in &mut s.sources {
            src.accounts[0].amount = u64::MAX / 2;
        }
        assert_eq!(path_of(s.validate().unwrap_err()), "users[0].accounts");
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = demo_scenario(1)
            .to_toml()
            .replace("seed = 1", "seed = 1\nsed = 2");
        assert!(matches!(
            ScenarioConfig::from_toml(&text),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn random_scenarios_are_valid_and_reproducible() {
        let opts = RandomScenarioOptions::default();
        let mut matched = 0;
        for seed in 0..200 {
            let s = random_scenario(seed, &opts);
            assert_eq!(s, random_scenario(seed, &opts));
            s.validate().unwrap();
            assert!((1..=8).contains(&s.sources.len()));
            assert!((2..=5).contains(&s.operator.tiers.len()));
            if s.expected_tier("alice").unwrap().is_some() {
                matched += 1;
            }
        }
        // Both matched and unmatched totals occur.
        assert!(matched > 20 && matched < 200, "{matched}");
    }
}
