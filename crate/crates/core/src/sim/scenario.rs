//! Scenario schema and validation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixed::{Fixed, TokenAmount};
use crate::ledger::GroupId;
use crate::rarity::{self, RarityLadder, RarityLevel};
use crate::rewards::{GroupParams, InflationState};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct ScenarioError {
    pub path: String,
    pub message: String,
}

impl ScenarioError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError { path: path.into(), message: message.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub steps: u64,
    pub external_gov_price: GovPrice,
    #[serde(default)]
    pub inflation: InflationConfig,
    pub groups: Vec<GroupConfig>,
    #[serde(default)]
    pub agents: Vec<AgentConfig>,
    /// Keep the per-event log (needed for `rewards.csv`).
    #[serde(default = "yes")]
    pub record_events: bool,
}

fn yes() -> bool {
    true
}

/// Fiat per governance token: a constant, or a step function given as
/// `[{from_step, price}]` sorted by `from_step`, the first at step 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GovPrice {
    Constant(Fixed),
    Schedule(Vec<PricePoint>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricePoint {
    pub from_step: u64,
    pub price: Fixed,
}

impl GovPrice {
    pub fn at(&self, step: u64) -> Fixed {
        match self {
            GovPrice::Constant(p) => *p,
            GovPrice::Schedule(points) => {
                points.iter().take_while(|pt| pt.from_step <= step).last().map(|pt| pt.price).unwrap_or(Fixed::ZERO)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InflationConfig {
    #[serde(alias = "T")]
    pub period: u64,
    pub clamp: [Fixed; 2],
    #[serde(default = "one")]
    pub initial: Fixed,
}

fn one() -> Fixed {
    Fixed::ONE
}

impl Default for InflationConfig {
    fn default() -> Self {
        let d = InflationState::default();
        let (min, max) = d.clamp_bounds();
        InflationConfig { period: d.period(), clamp: [min, max], initial: Fixed::ONE }
    }
}

impl InflationConfig {
    pub fn state(&self, launch_step: u64) -> Result<InflationState, ScenarioError> {
        InflationState::new(self.period, self.clamp[0], self.clamp[1])
            .map(|s| s.with_factor(self.initial).starting_at(launch_step))
            .map_err(|e| ScenarioError::new("inflation", e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    pub base_value: TokenAmount,
    pub levels: Vec<RarityLevel>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub ladder: LadderConfig,
    pub cp_total: TokenAmount,
    pub q: Fixed,
    pub gov_liquidity: TokenAmount,
    pub ideal_ratio: Fixed,
    #[serde(default)]
    pub fee_rate: Fixed,
    /// NFTs minted at launch, dealt round-robin to the upgraders that play
    /// this group (to the treasury when there are none).
    #[serde(default)]
    pub initial_mint: u64,
    #[serde(default)]
    pub initial_rarity: u32,
    #[serde(default)]
    pub launch_step: u64,
    /// Allow a ladder that breaks the expectation condition at `I = 1`.
    #[serde(default)]
    pub inflationary: bool,
}

impl GroupConfig {
    pub fn ladder(&self) -> Result<RarityLadder, rarity::RarityError> {
        RarityLadder::new(self.ladder.base_value, self.ladder.levels.clone())
    }

    pub fn params(&self) -> Result<GroupParams, rarity::RarityError> {
        Ok(GroupParams {
            ladder: self.ladder()?,
            cp_total: self.cp_total,
            q: self.q,
            gov_liquidity: self.gov_liquidity,
            ideal_ratio: self.ideal_ratio,
            fee_rate: self.fee_rate,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentConfig {
    Upgrader {
        policy: UpgradePolicy,
        /// Groups played; all groups when omitted.
        #[serde(default)]
        groups: Option<Vec<u32>>,
        /// Buy one base-rarity NFT per group per step when CP allows.
        #[serde(default)]
        rebuy: bool,
    },
    Trader {
        group: u32,
        #[serde(default)]
        gov: TokenAmount,
        #[serde(default)]
        cp: TokenAmount,
        /// Chance of trading in a given step.
        activity: Fixed,
        /// Largest share of the input balance swapped at once.
        max_fraction: Fixed,
    },
    Arbitrageur {
        #[serde(default)]
        groups: Option<Vec<u32>>,
        /// Fiat per step; unlimited when omitted.
        #[serde(default)]
        budget: Option<Fixed>,
        /// Relative deviation below which no trade is made.
        #[serde(default = "default_min_deviation")]
        min_deviation: Fixed,
    },
}

fn default_min_deviation() -> Fixed {
    Fixed::from_raw(100_000_000_000) // 1e-7
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UpgradePolicy {
    Always,
    /// Attempt only while the ladder is inflation-safe at the current `I` and
    /// the expected next value is at least `threshold * cp_i`.
    ExpectedValue {
        threshold: Fixed,
    },
}

impl AgentConfig {
    pub fn plays(&self, group: u32) -> bool {
        match self {
            AgentConfig::Upgrader { groups, .. } | AgentConfig::Arbitrageur { groups, .. } => {
                groups.as_ref().is_none_or(|g| g.contains(&group))
            }
            AgentConfig::Trader { group: g, .. } => *g == group,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AgentConfig::Upgrader { .. } => "upgrader",
            AgentConfig::Trader { .. } => "trader",
            AgentConfig::Arbitrageur { .. } => "arbitrageur",
        }
    }
}

/// Expectation-condition verdict for one group at `I = 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GroupValidation {
    pub group: GroupId,
    pub inflationary: bool,
    pub check: rarity::InflationCheck,
}

impl GroupValidation {
    pub fn accepted(&self) -> bool {
        self.inflationary || self.check.is_safe()
    }
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(s);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ScenarioError::new(path, e.into_inner().to_string())
        })
    }

    /// Like [`Scenario::from_json`], for a document already parsed (e.g.
    /// after overrides were applied).
    pub fn from_value(v: serde_json::Value) -> Result<Self, ScenarioError> {
        serde_path_to_error::deserialize(v).map_err(|e| {
            let path = e.path().to_string();
            ScenarioError::new(path, e.into_inner().to_string())
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Structural checks; ladder checks are reported by [`Scenario::ladder_checks`].
    pub fn check_structure(&self) -> Result<(), ScenarioError> {
        if self.groups.is_empty() {
            return Err(ScenarioError::new("groups", "at least one group is required"));
        }
        self.inflation.state(0)?;
        match &self.external_gov_price {
            GovPrice::Constant(p) if p.is_zero() => {
                return Err(ScenarioError::new("external_gov_price", "must be positive"));
            }
            GovPrice::Schedule(points) => {
                if points.first().map(|p| p.from_step) != Some(0) {
                    return Err(ScenarioError::new("external_gov_price", "schedule must start at step 0"));
                }
                for (i, w) in points.windows(2).enumerate() {
                    if w[1].from_step <= w[0].from_step {
                        return Err(ScenarioError::new(format!("external_gov_price.{}", i + 1), "steps must increase"));
                    }
                }
                if let Some(i) = points.iter().position(|p| p.price.is_zero()) {
                    return Err(ScenarioError::new(format!("external_gov_price.{i}.price"), "must be positive"));
                }
            }
            _ => {}
        }
        for (i, g) in self.groups.iter().enumerate() {
            let path = format!("groups.{i}");
            let ladder = g.ladder().map_err(|e| ScenarioError::new(format!("{path}.ladder"), e.to_string()))?;
            crate::amm::init_pool(GroupId(i as u32), g.cp_total, g.q, g.gov_liquidity, g.ideal_ratio)
                .map_err(|e| ScenarioError::new(&path, e.to_string()))?;
            if g.fee_rate >= Fixed::ONE {
                return Err(ScenarioError::new(format!("{path}.fee_rate"), "must be below 1"));
            }
            if g.initial_rarity > ladder.max_rarity() {
                return Err(ScenarioError::new(format!("{path}.initial_rarity"), "beyond the ladder"));
            }
        }
        let n = self.groups.len() as u32;
        for (i, a) in self.agents.iter().enumerate() {
            let path = format!("agents.{i}");
            let groups: Vec<u32> = match a {
                AgentConfig::Upgrader { groups, .. } | AgentConfig::Arbitrageur { groups, .. } => groups.clone().unwrap_or_default(),
                AgentConfig::Trader { group, .. } => vec![*group],
            };
            if let Some(g) = groups.iter().find(|&&g| g >= n) {
                return Err(ScenarioError::new(&path, format!("unknown group {g}")));
            }
            if let AgentConfig::Trader { activity, max_fraction, .. } = a {
                if *activity > Fixed::ONE {
                    return Err(ScenarioError::new(format!("{path}.activity"), "must be at most 1"));
                }
                if *max_fraction > Fixed::ONE {
                    return Err(ScenarioError::new(format!("{path}.max_fraction"), "must be at most 1"));
                }
            }
        }
        Ok(())
    }

    pub fn ladder_checks(&self) -> Vec<GroupValidation> {
        self.groups
            .iter()
            .enumerate()
            .filter_map(|(i, g)| {
                let ladder = g.ladder().ok()?;
                Some(GroupValidation {
                    group: GroupId(i as u32),
                    inflationary: g.inflationary,
                    check: rarity::check_inflation_condition(&ladder, Fixed::ONE),
                })
            })
            .collect()
    }

    /// Full validation: structure, then every unflagged ladder must be
    /// inflation-safe at `I = 1`.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.check_structure()?;
        for v in self.ladder_checks() {
            if !v.accepted() {
                let levels: Vec<String> = v.check.violations().map(|l| l.level.to_string()).collect();
                return Err(ScenarioError::new(
                    format!("groups.{}.ladder", v.group.0),
                    format!("level(s) {} exceed the rarity factor ceiling", levels.join(", ")),
                ));
            }
        }
        Ok(())
    }
}
