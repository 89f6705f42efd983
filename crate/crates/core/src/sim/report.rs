//! Per-run output: the step series, the event log, and the summary.

use serde::Serialize;

use crate::amm::SwapSide;
use crate::fixed::{Fixed, TokenAmount};
use crate::ledger::{GroupId, NftId};
use crate::rarity::UpgradeOutcome;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationReport {
    pub seed: u64,
    pub steps: u64,
    /// One record per step, `0..=steps`; step 0 is the launched state.
    pub series: Vec<StepRecord>,
    pub events: Vec<Event>,
    pub summary: RunSummary,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StepRecord {
    pub step: u64,
    pub gov_price: Fixed,
    /// Cumulative, in fiat.
    pub arbitrage_profit: Fixed,
    /// Launched groups only, by id.
    pub groups: Vec<GroupRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GroupRecord {
    pub group: GroupId,
    pub spot_ratio: Fixed,
    pub ideal_ratio: Fixed,
    pub deviation: Fixed,
    pub inflation: Fixed,
    pub cp_reserve: TokenAmount,
    pub gov_reserve: TokenAmount,
    /// Pool invariant at 36 fractional digits.
    pub k: String,
    pub reward_reserve: TokenAmount,
    /// CP held by agents and the treasury.
    pub cp_users: TokenAmount,
    pub circulating: Vec<u64>,
    pub minted: u64,
    pub burned: u64,
    /// `sum_i circulating_i * cp_i`, in CP.
    pub nft_value: TokenAmount,
    /// `(nft_value + cp_users) * spot_ratio`, in governance tokens.
    pub system_value: TokenAmount,
}

impl GroupRecord {
    pub fn circulating_total(&self) -> u64 {
        self.circulating.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Event {
    pub step: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    GroupLaunch { group: GroupId, reserve_balance: TokenAmount },
    InflationUpdate { group: GroupId, factor: Fixed, reserve_balance: TokenAmount },
    Upgrade { agent: usize, group: GroupId, outcome: UpgradeOutcome, inflation: Fixed, reserve_balance: TokenAmount },
    BurnBlocked { agent: usize, group: GroupId, nft: NftId, needed: TokenAmount, available: TokenAmount },
    Purchase { agent: usize, group: GroupId, nft: NftId, price: TokenAmount, inflation: Fixed, reserve_balance: TokenAmount },
    Swap { agent: usize, group: GroupId, side: SwapSide, amount_in: TokenAmount, amount_out: TokenAmount },
    Arbitrage { agent: usize, group: GroupId, side: SwapSide, amount_in: TokenAmount, amount_out: TokenAmount, profit: Fixed },
}

/// Upgrade attempts out of one rarity level.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AttemptStats {
    pub from_rarity: u32,
    pub attempts: u64,
    pub successes: u64,
    pub failures: u64,
    /// Sum over attempts of (value after - cp_i), value after being
    /// `cp_{i+1}` on success and the reward on failure.
    pub value_change_sum: f64,
    pub value_change_sq_sum: f64,
}

impl AttemptStats {
    pub fn mean(&self) -> f64 {
        if self.attempts == 0 {
            return 0.0;
        }
        self.value_change_sum / self.attempts as f64
    }

    /// Standard error of the mean value change.
    pub fn std_error(&self) -> f64 {
        let n = self.attempts as f64;
        if self.attempts < 2 {
            return 0.0;
        }
        let mean = self.value_change_sum / n;
        let var = (self.value_change_sq_sum - n * mean * mean).max(0.0) / (n - 1.0);
        (var / n).sqrt()
    }

    pub fn merge(&mut self, other: &AttemptStats) {
        self.attempts += other.attempts;
        self.successes += other.successes;
        self.failures += other.failures;
        self.value_change_sum += other.value_change_sum;
        self.value_change_sq_sum += other.value_change_sq_sum;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupSummary {
    pub group: GroupId,
    pub launch_step: u64,
    pub final_spot_ratio: Fixed,
    pub ideal_ratio: Fixed,
    pub final_deviation: Fixed,
    pub final_inflation: Fixed,
    /// NFTs that entered at rarity 0 (launch mint and purchases).
    pub entered_at_base: u64,
    /// Burns by the level whose upgrade failed; index 0 is level 1.
    pub burn_histogram: Vec<u64>,
    pub at_top: u64,
    pub attempts: Vec<AttemptStats>,
    pub blocked_burns: u64,
    pub purchases: u64,
    pub purchase_proceeds: TokenAmount,
    pub rewards_paid: TokenAmount,
    pub swaps: u64,
    pub arbitrage_trades: u64,
    pub rounding_excess: String,
    pub system_value_start: TokenAmount,
    pub system_value_end: TokenAmount,
    /// `system_value_end - system_value_start`.
    pub drift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub steps: u64,
    pub groups: Vec<GroupSummary>,
    pub arbitrage_profit: Fixed,
    pub total_burns: u64,
    /// Steps at which every conservation check ran and held.
    pub checked_steps: u64,
}

impl SimulationReport {
    pub fn summary_line(&self) -> String {
        let ratios: Vec<String> = self.summary.groups.iter().map(|g| format!("g{}={}", g.group.0, g.final_spot_ratio)).collect();
        let drift: f64 = self.summary.groups.iter().map(|g| g.drift).sum();
        format!(
            "steps={} spot[{}] burns={} arbitrage_profit={} drift={:.6}",
            self.steps,
            ratios.join(" "),
            self.summary.total_burns,
            self.summary.arbitrage_profit,
            drift
        )
    }
}
