//! The step loop and the agents.
//!
//! Each step runs the DAO, then upgraders, then traders, then arbitrageurs,
//! each group of agents in roster order, and ends with a conservation audit
//! and a series record.

use rand::Rng;
use thiserror::Error;

use crate::amm::{AmmError, AmmPool, SwapSide};
use crate::fixed::{self, Fixed, TokenAmount, Wide};
use crate::ledger::{AccountId, GroupId, Ledger, LedgerError, TokenId};
use crate::rarity::{self, UpgradeKind};
use crate::rewards::{self, InflationState, NftGroup, RewardError};
use crate::rng;

use super::report::*;
use super::scenario::{AgentConfig, Scenario, ScenarioError, UpgradePolicy};

pub const AGENT_ACCOUNT_TAG: u8 = 1;
pub const VENUE_ACCOUNT_TAG: u8 = 4;
pub const TREASURY_ACCOUNT_TAG: u8 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("step {step}: {source}")]
    Reward { step: u64, source: RewardError },
    #[error("step {step}: conservation check failed: {message}")]
    Invariant { step: u64, message: String },
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;

pub fn agent_account(index: usize) -> AccountId {
    AccountId::derived(AGENT_ACCOUNT_TAG, index as u64)
}

pub fn venue_account() -> AccountId {
    AccountId::derived(VENUE_ACCOUNT_TAG, 0)
}

pub fn treasury_account() -> AccountId {
    AccountId::derived(TREASURY_ACCOUNT_TAG, 0)
}

/// A launched group with its inflation schedule and run statistics.
#[derive(Clone, Debug)]
pub struct GroupState {
    pub group: NftGroup,
    pub inflation: InflationState,
    launch_step: u64,
    initial_k: Wide,
    stats: GroupStats,
}

#[derive(Clone, Debug, Default)]
struct GroupStats {
    attempts: Vec<AttemptStats>,
    burn_histogram: Vec<u64>,
    blocked_burns: u64,
    purchases: u64,
    purchase_proceeds: TokenAmount,
    rewards_paid: TokenAmount,
    swaps: u64,
    arbitrage_trades: u64,
    system_value_start: TokenAmount,
}

pub struct Simulation {
    scenario: Scenario,
    pub ledger: Ledger,
    groups: Vec<Option<GroupState>>,
    step: u64,
    arbitrage_profit: Fixed,
    checked_steps: u64,
    series: Vec<StepRecord>,
    events: Vec<Event>,
}

fn reward_err(step: u64) -> impl Fn(RewardError) -> SimError {
    move |source| SimError::Reward { step, source }
}

fn at(step: u64, e: impl Into<RewardError>) -> SimError {
    SimError::Reward { step, source: e.into() }
}

impl Simulation {
    /// Validates the scenario, launches the step-0 groups, funds the traders
    /// and records step 0.
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let mut sim = Simulation {
            groups: vec![None; scenario.groups.len()],
            scenario,
            ledger: Ledger::new(),
            step: 0,
            arbitrage_profit: Fixed::ZERO,
            checked_steps: 0,
            series: Vec::new(),
            events: Vec::new(),
        };
        sim.ledger.create_token(TokenId::Governance).map_err(|e| at(0, e))?;
        for (i, agent) in sim.scenario.agents.iter().enumerate() {
            if let AgentConfig::Trader { gov, .. } = agent {
                if !gov.is_zero() {
                    sim.ledger.mint_tokens(TokenId::Governance, agent_account(i), *gov).map_err(|e| at(0, e))?;
                }
            }
        }
        sim.launch_due_groups()?;
        sim.audit()?;
        sim.record();
        Ok(sim)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn group(&self, id: GroupId) -> Option<&GroupState> {
        self.groups.get(id.0 as usize)?.as_ref()
    }

    pub fn group_mut(&mut self, id: GroupId) -> Option<&mut GroupState> {
        self.groups.get_mut(id.0 as usize)?.as_mut()
    }

    /// Ledger and a launched group's state, borrowed together for direct
    /// manipulation (e.g. a scripted swap).
    pub fn ledger_and_group(&mut self, id: GroupId) -> Option<(&mut Ledger, &mut GroupState)> {
        let g = self.groups.get_mut(id.0 as usize)?.as_mut()?;
        Some((&mut self.ledger, g))
    }

    pub fn series(&self) -> &[StepRecord] {
        &self.series
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.scenario.steps
    }

    /// Advances one step.
    pub fn step(&mut self) -> Result<()> {
        self.step += 1;
        self.dao_step()?;
        for i in 0..self.scenario.agents.len() {
            if matches!(self.scenario.agents[i], AgentConfig::Upgrader { .. }) {
                self.upgrader_step(i)?;
            }
        }
        for i in 0..self.scenario.agents.len() {
            if matches!(self.scenario.agents[i], AgentConfig::Trader { .. }) {
                self.trader_step(i)?;
            }
        }
        for i in 0..self.scenario.agents.len() {
            if matches!(self.scenario.agents[i], AgentConfig::Arbitrageur { .. }) {
                self.arbitrageur_step(i)?;
            }
        }
        self.audit()?;
        self.record();
        Ok(())
    }

    pub fn run_to_end(mut self) -> Result<SimulationReport> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(self.finish())
    }

    fn push_event(&mut self, kind: EventKind) {
        if self.scenario.record_events {
            self.events.push(Event { step: self.step, kind });
        }
    }

    fn launched(&self) -> impl Iterator<Item = &GroupState> {
        self.groups.iter().flatten()
    }

    fn launch_due_groups(&mut self) -> Result<()> {
        let step = self.step;
        for idx in 0..self.scenario.groups.len() {
            let cfg = &self.scenario.groups[idx];
            if cfg.launch_step != step || self.groups[idx].is_some() {
                continue;
            }
            let id = GroupId(idx as u32);
            let params = cfg.params().map_err(|e| at(step, e))?;
            let group = NftGroup::launch(&mut self.ledger, id, params).map_err(reward_err(step))?;
            let inflation = self.scenario.inflation.state(step)?;

            let holders: Vec<AccountId> = self
                .scenario
                .agents
                .iter()
                .enumerate()
                .filter(|(_, a)| matches!(a, AgentConfig::Upgrader { .. }) && a.plays(idx as u32))
                .map(|(i, _)| agent_account(i))
                .collect();
            for j in 0..cfg.initial_mint {
                let owner = if holders.is_empty() { treasury_account() } else { holders[(j % holders.len() as u64) as usize] };
                self.ledger.mint_nft(id, owner, cfg.initial_rarity).map_err(|e| at(step, e))?;
            }
            for (i, agent) in self.scenario.agents.iter().enumerate() {
                if let AgentConfig::Trader { group, cp, .. } = agent {
                    if *group == idx as u32 && !cp.is_zero() {
                        self.ledger.mint_tokens(TokenId::Cp(id), agent_account(i), *cp).map_err(|e| at(step, e))?;
                    }
                }
            }

            let levels = group.ladder().max_rarity() as usize;
            let stats = GroupStats {
                attempts: (0..levels as u32).map(|r| AttemptStats { from_rarity: r, ..Default::default() }).collect(),
                burn_histogram: vec![0; levels],
                ..Default::default()
            };
            let reserve_balance = group.reserve_balance(&self.ledger);
            let mut state = GroupState { initial_k: group.pool.k(), group, inflation, launch_step: step, stats };
            state.stats.system_value_start = self.group_record(&state).system_value;
            self.groups[idx] = Some(state);
            self.push_event(EventKind::GroupLaunch { group: id, reserve_balance });
        }
        Ok(())
    }

    /// Launches scheduled groups, then recomputes `I` for every group whose
    /// period has elapsed.
    fn dao_step(&mut self) -> Result<()> {
        let step = self.step;
        self.launch_due_groups()?;
        let mut updates = Vec::new();
        for g in self.groups.iter_mut().flatten() {
            if g.inflation.is_due(step) {
                let factor = g.inflation.update(&g.group.pool, step).map_err(reward_err(step))?;
                updates.push((g.group.id(), factor, g.group.reserve_balance(&self.ledger)));
            }
        }
        for (group, factor, reserve_balance) in updates {
            self.push_event(EventKind::InflationUpdate { group, factor, reserve_balance });
        }
        Ok(())
    }

    fn upgrader_step(&mut self, agent: usize) -> Result<()> {
        let step = self.step;
        let (policy, rebuy) = match &self.scenario.agents[agent] {
            AgentConfig::Upgrader { policy, rebuy, .. } => (policy.clone(), *rebuy),
            _ => unreachable!(),
        };
        let account = agent_account(agent);
        let mut rng = rng::agent_rng(self.scenario.seed, agent as u64, step);

        // per group: which levels the policy is willing to attempt
        let mut allowed: Vec<Option<Vec<bool>>> = vec![None; self.groups.len()];
        for g in self.groups.iter().flatten() {
            let gid = g.group.id().0;
            if !self.scenario.agents[agent].plays(gid) {
                continue;
            }
            let ladder = g.group.ladder();
            let levels = match &policy {
                UpgradePolicy::Always => vec![true; ladder.max_rarity() as usize],
                UpgradePolicy::ExpectedValue { threshold } => {
                    let check = rarity::check_inflation_condition(ladder, g.inflation.factor());
                    let safe = check.is_safe();
                    check.levels.iter().map(|l| safe && l.current.mul_floor(*threshold).is_ok_and(|t| l.expected_next >= t)).collect()
                }
            };
            allowed[gid as usize] = Some(levels);
        }

        let owned: Vec<_> = self.ledger.nfts_of(account).collect();
        for nft in owned {
            let record = self.ledger.nft(nft).map_err(|e| at(step, e))?;
            let (gid, from) = (record.group, record.rarity_index);
            let Some(levels) = allowed[gid.0 as usize].as_ref() else { continue };
            if !levels.get(from as usize).copied().unwrap_or(false) {
                continue;
            }
            let g = self.groups[gid.0 as usize].as_mut().expect("allowed implies launched");
            let draw = rng::unit_draw(&mut rng);
            match rarity::attempt_upgrade_with_draw(&mut self.ledger, &g.group, account, nft, &g.inflation, draw) {
                Ok(outcome) => {
                    let ladder = g.group.ladder();
                    let before = ladder.value_at(from).map_err(|e| at(step, e))?;
                    let after = match outcome.kind {
                        UpgradeKind::Success { new_rarity } => ladder.value_at(new_rarity).map_err(|e| at(step, e))?,
                        UpgradeKind::Failure { reward } => reward,
                    };
                    let delta = (after.raw() as i128 - before.raw() as i128) as f64 / fixed::SCALE as f64;
                    let s = &mut g.stats.attempts[from as usize];
                    s.attempts += 1;
                    s.value_change_sum += delta;
                    s.value_change_sq_sum += delta * delta;
                    match outcome.kind {
                        UpgradeKind::Success { .. } => s.successes += 1,
                        UpgradeKind::Failure { reward } => {
                            s.failures += 1;
                            g.stats.burn_histogram[from as usize] += 1;
                            g.stats.rewards_paid = g.stats.rewards_paid.checked_add(reward).map_err(|e| at(step, e))?;
                        }
                    }
                    let (inflation, reserve_balance) = (g.inflation.factor(), g.group.reserve_balance(&self.ledger));
                    self.push_event(EventKind::Upgrade { agent, group: gid, outcome, inflation, reserve_balance });
                }
                Err(RewardError::InsufficientReserve { needed, available }) => {
                    g.stats.blocked_burns += 1;
                    self.push_event(EventKind::BurnBlocked { agent, group: gid, nft, needed, available });
                }
                Err(e) => return Err(at(step, e)),
            }
        }

        if rebuy {
            for (idx, mask) in allowed.iter().enumerate() {
                if mask.is_none() {
                    continue;
                }
                let g = self.groups[idx].as_mut().expect("allowed implies launched");
                let price = g.group.ladder().base_value();
                if self.ledger.balance(g.group.cp_token(), account) < price {
                    continue;
                }
                let nft = rewards::purchase_nft(&mut self.ledger, &g.group, account, 0).map_err(reward_err(step))?;
                g.stats.purchases += 1;
                g.stats.purchase_proceeds = g.stats.purchase_proceeds.checked_add(price).map_err(|e| at(step, e))?;
                let (inflation, reserve_balance) = (g.inflation.factor(), g.group.reserve_balance(&self.ledger));
                self.push_event(EventKind::Purchase { agent, group: GroupId(idx as u32), nft, price, inflation, reserve_balance });
            }
        }
        Ok(())
    }

    fn trader_step(&mut self, agent: usize) -> Result<()> {
        let step = self.step;
        let AgentConfig::Trader { group, activity, max_fraction, .. } = self.scenario.agents[agent].clone() else { unreachable!() };
        let Some(g) = self.groups[group as usize].as_mut() else { return Ok(()) };
        let account = agent_account(agent);
        let mut rng = rng::agent_rng(self.scenario.seed, agent as u64, step);
        if rng::unit_draw(&mut rng) >= activity {
            return Ok(());
        }
        let side = if rng.gen::<bool>() { SwapSide::CpToGov } else { SwapSide::GovToCp };
        let fraction = rng::unit_draw(&mut rng).mul_floor(max_fraction).map_err(|e| at(step, e))?;
        let balance = self.ledger.balance(side.input_token(g.group.id()), account);
        let amount = balance.mul_floor(fraction).map_err(|e| at(step, e))?;
        if amount.is_zero() {
            return Ok(());
        }
        match g.group.pool.execute_swap(&mut self.ledger, account, side, amount) {
            Ok(q) => {
                g.stats.swaps += 1;
                let id = g.group.id();
                self.push_event(EventKind::Swap { agent, group: id, side, amount_in: q.amount_in, amount_out: q.amount_out });
                Ok(())
            }
            Err(AmmError::OutputTooSmall(_)) => Ok(()),
            Err(e) => Err(at(step, e)),
        }
    }

    fn arbitrageur_step(&mut self, agent: usize) -> Result<()> {
        let step = self.step;
        let AgentConfig::Arbitrageur { budget, min_deviation, .. } = self.scenario.agents[agent].clone() else { unreachable!() };
        let account = agent_account(agent);
        let gov_price = self.scenario.external_gov_price.at(step);
        for idx in 0..self.groups.len() {
            if !self.scenario.agents[agent].plays(idx as u32) {
                continue;
            }
            let Some(g) = self.groups[idx].as_mut() else { continue };
            let Some(plan) = plan_arbitrage(&g.group.pool, gov_price, budget, min_deviation).map_err(|e| at(step, e))? else {
                continue;
            };
            let id = g.group.id();
            let token_in = plan.quote.side.input_token(id);
            let token_out = plan.quote.side.output_token(id);
            venue_sell(&mut self.ledger, token_in, account, plan.quote.amount_in).map_err(|e| at(step, e))?;
            g.group.pool.apply_quote(&mut self.ledger, account, &plan.quote).map_err(|e| at(step, e))?;
            self.ledger.transfer_tokens(token_out, account, venue_account(), plan.quote.amount_out).map_err(|e| at(step, e))?;
            g.stats.swaps += 1;
            g.stats.arbitrage_trades += 1;
            self.arbitrage_profit = self.arbitrage_profit.checked_add(plan.profit).map_err(|e| at(step, e))?;
            self.push_event(EventKind::Arbitrage {
                agent,
                group: id,
                side: plan.quote.side,
                amount_in: plan.quote.amount_in,
                amount_out: plan.quote.amount_out,
                profit: plan.profit,
            });
        }
        Ok(())
    }

    /// Conservation checks over every launched group.
    fn audit(&mut self) -> Result<()> {
        let step = self.step;
        let fail = |message: String| SimError::Invariant { step, message };
        let ledger = &self.ledger;

        let gov = ledger.token_supply(TokenId::Governance).map_err(|e| at(step, e))?;
        let gov_total = ledger.total_balance(TokenId::Governance).map_err(|e| at(step, e))?;
        if gov_total != gov.circulating() {
            return Err(fail(format!("governance balances {gov_total} != supply {}", gov.circulating())));
        }
        for g in self.groups.iter().flatten() {
            let id = g.group.id();
            let cp = g.group.cp_token();
            let pool = &g.group.pool;

            let supply = ledger.token_supply(cp).map_err(|e| at(step, e))?;
            let total = ledger.total_balance(cp).map_err(|e| at(step, e))?;
            if total != supply.circulating() {
                return Err(fail(format!("{cp}: balances {total} != minted - burned {}", supply.circulating())));
            }
            if ledger.balance(cp, pool.account()) != pool.cp_reserve()
                || ledger.balance(TokenId::Governance, pool.account()) != pool.gov_reserve()
            {
                return Err(fail(format!("pool {id} reserves disagree with its ledger balances")));
            }
            if pool.k() != pool.cp_reserve().wide_product(pool.gov_reserve()) {
                return Err(fail(format!("pool {id}: k is not the reserve product")));
            }
            if pool.k() < g.initial_k || pool.k() - g.initial_k != pool.rounding_excess() {
                return Err(fail(format!("pool {id}: k drifted outside recorded rounding")));
            }

            let initial = g.group.initial_reserve().map_err(|e| at(step, e))?;
            let expected = initial
                .checked_add(g.stats.purchase_proceeds)
                .and_then(|v| v.checked_sub(g.stats.rewards_paid))
                .map_err(|e| at(step, e))?;
            if g.group.reserve_balance(ledger) != expected {
                return Err(fail(format!("group {id}: reserve moved outside payouts and purchases")));
            }

            let counters = ledger.group_counters(id).map_err(|e| at(step, e))?;
            if counters.circulating() + counters.burned != counters.minted {
                return Err(fail(format!("group {id}: circulating + burned != minted")));
            }
            for (r, c) in counters.cells.iter().enumerate() {
                if c.minted + c.upgraded_in != c.circulating + c.upgraded_out + c.burned {
                    return Err(fail(format!("group {id}: cell {r} counters incoherent")));
                }
            }
            let (lo, hi) = g.inflation.clamp_bounds();
            if g.inflation.factor() < lo || g.inflation.factor() > hi {
                return Err(fail(format!("group {id}: I left its clamp")));
            }
        }
        self.checked_steps += 1;
        Ok(())
    }

    fn group_record(&self, g: &GroupState) -> GroupRecord {
        let ledger = &self.ledger;
        let id = g.group.id();
        let pool = &g.group.pool;
        let cp = g.group.cp_token();
        let counters = ledger.group_counters(id).expect("launched group is registered");
        let circulating: Vec<u64> = counters.cells.iter().map(|c| c.circulating).collect();
        let nft_value = circulating
            .iter()
            .zip(g.group.ladder().values())
            .fold(Fixed::ZERO, |acc, (&n, v)| acc.checked_add(v.checked_mul_int(n).unwrap_or(Fixed::ZERO)).unwrap_or(acc));
        let reward_reserve = g.group.reserve_balance(ledger);
        let cp_users = ledger
            .total_balance(cp)
            .unwrap_or_default()
            .saturating_sub(reward_reserve)
            .saturating_sub(pool.cp_reserve())
            .saturating_sub(ledger.balance(cp, venue_account()));
        let spot = pool.spot_ratio();
        let system_value = nft_value.checked_add(cp_users).and_then(|v| v.mul_floor(spot)).unwrap_or(Fixed::ZERO);
        GroupRecord {
            group: id,
            spot_ratio: spot,
            ideal_ratio: pool.ideal_ratio(),
            deviation: spot.abs_diff(pool.ideal_ratio()),
            inflation: g.inflation.factor(),
            cp_reserve: pool.cp_reserve(),
            gov_reserve: pool.gov_reserve(),
            k: fixed::format_wide_product(pool.k()),
            reward_reserve,
            cp_users,
            circulating,
            minted: counters.minted,
            burned: counters.burned,
            nft_value,
            system_value,
        }
    }

    fn record(&mut self) {
        let groups = self.launched().map(|g| self.group_record(g)).collect();
        self.series.push(StepRecord {
            step: self.step,
            gov_price: self.scenario.external_gov_price.at(self.step),
            arbitrage_profit: self.arbitrage_profit,
            groups,
        });
    }

    pub fn finish(self) -> SimulationReport {
        let last = self.series.last().expect("step 0 is always recorded");
        let groups: Vec<GroupSummary> = self
            .launched()
            .map(|g| {
                let rec = last.groups.iter().find(|r| r.group == g.group.id()).expect("launched group recorded");
                let counters = self.ledger.group_counters(g.group.id()).expect("registered");
                let end = rec.system_value;
                let start = g.stats.system_value_start;
                GroupSummary {
                    group: g.group.id(),
                    launch_step: g.launch_step,
                    final_spot_ratio: rec.spot_ratio,
                    ideal_ratio: rec.ideal_ratio,
                    final_deviation: rec.deviation,
                    final_inflation: rec.inflation,
                    entered_at_base: counters.cells[0].minted,
                    burn_histogram: g.stats.burn_histogram.clone(),
                    at_top: *rec.circulating.last().unwrap_or(&0),
                    attempts: g.stats.attempts.clone(),
                    blocked_burns: g.stats.blocked_burns,
                    purchases: g.stats.purchases,
                    purchase_proceeds: g.stats.purchase_proceeds,
                    rewards_paid: g.stats.rewards_paid,
                    swaps: g.stats.swaps,
                    arbitrage_trades: g.stats.arbitrage_trades,
                    rounding_excess: fixed::format_wide_product(g.group.pool.rounding_excess()),
                    system_value_start: start,
                    system_value_end: end,
                    drift: (end.raw() as i128 - start.raw() as i128) as f64 / fixed::SCALE as f64,
                }
            })
            .collect();
        let total_burns = groups.iter().map(|g| g.burn_histogram.iter().sum::<u64>()).sum();
        let summary = RunSummary {
            seed: self.scenario.seed,
            steps: self.scenario.steps,
            groups,
            arbitrage_profit: self.arbitrage_profit,
            total_burns,
            checked_steps: self.checked_steps,
        };
        SimulationReport { seed: self.scenario.seed, steps: self.scenario.steps, series: self.series, events: self.events, summary }
    }
}

/// Validates and runs a scenario to completion.
pub fn run_scenario(scenario: &Scenario) -> Result<SimulationReport> {
    Simulation::new(scenario.clone())?.run_to_end()
}

/// Moves `amount` of `token` from the external venue to `to`, minting
/// whatever the venue's inventory cannot cover.
fn venue_sell(ledger: &mut Ledger, token: TokenId, to: AccountId, amount: TokenAmount) -> Result<(), LedgerError> {
    let venue = venue_account();
    let held = ledger.balance(token, venue);
    if held < amount {
        ledger.mint_tokens(token, venue, amount.checked_sub(held)?)?;
    }
    ledger.transfer_tokens(token, venue, to, amount)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArbitragePlan {
    pub quote: crate::amm::SwapQuote,
    /// Fiat received for the output minus fiat paid for the input.
    pub profit: Fixed,
}

/// The trade that returns `pool` to its ideal ratio, if it pays.
///
/// The venue prices governance at `gov_price` and CP at
/// `ideal_ratio * gov_price`. No trade when the relative deviation is within
/// `max(fee, min_deviation)`, the input would cost nothing, or the quoted
/// profit is not positive. `budget` caps the fiat spent on the input.
pub fn plan_arbitrage(
    pool: &AmmPool,
    gov_price: Fixed,
    budget: Option<Fixed>,
    min_deviation: Fixed,
) -> Result<Option<ArbitragePlan>, AmmError> {
    let ideal = pool.ideal_ratio();
    let spot = pool.spot_ratio();
    let relative = fixed::Fixed::from_wide(fixed::mul_div_floor(spot.abs_diff(ideal).wide(), fixed::scale_wide(), ideal.wide())?)?;
    if relative <= pool.fee_rate().max(min_deviation) {
        return Ok(None);
    }
    let side = if spot < ideal { SwapSide::GovToCp } else { SwapSide::CpToGov };
    let mut amount = target_input(pool, side)?;
    let cp_price = ideal.mul_floor(gov_price)?;
    let (price_in, price_out) = match side {
        SwapSide::GovToCp => (gov_price, cp_price),
        SwapSide::CpToGov => (cp_price, gov_price),
    };
    if let Some(budget) = budget {
        if amount.mul_ceil(price_in)? > budget {
            amount = if price_in.is_zero() { amount } else { budget.div_floor(price_in)? };
        }
    }
    if amount.is_zero() {
        return Ok(None);
    }
    let quote = match pool.quote_swap(side, amount) {
        Ok(q) => q,
        Err(AmmError::OutputTooSmall(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let revenue = quote.amount_out.mul_floor(price_out)?;
    let cost = quote.amount_in.mul_ceil(price_in)?;
    if revenue <= cost {
        return Ok(None);
    }
    Ok(Some(ArbitragePlan { profit: revenue.checked_sub(cost)?, quote }))
}

/// Exact-in amount that lands the pool on its ideal ratio.
///
/// With the fee kept in the pool, paying `a` into reserve `r` moves the
/// reserves to `r + a` and `k / (r + g a)` with `g = 1 - fee`; the ratio hits
/// the ideal when `(r + a)(r + g a) = T`, `T = k * ideal` for governance
/// input and `k / ideal` for CP input. Without a fee this is
/// `a = sqrt(T) - r`, solved exactly; otherwise the quadratic is solved in
/// floating point.
fn target_input(pool: &AmmPool, side: SwapSide) -> Result<TokenAmount, AmmError> {
    let (cp_star, gov_star) = pool.ideal_reserves()?;
    let (r, target) = match side {
        SwapSide::GovToCp => (pool.gov_reserve(), gov_star),
        SwapSide::CpToGov => (pool.cp_reserve(), cp_star),
    };
    if pool.fee_rate().is_zero() {
        return Ok(target.saturating_sub(r));
    }
    let g = pool.fee_rate().complement()?.to_f64();
    let (r, sqrt_t) = (r.to_f64(), target.to_f64());
    let t = sqrt_t * sqrt_t;
    let b = r * (1.0 + g);
    let c = r * r - t;
    let disc = (b * b - 4.0 * g * c).max(0.0);
    let a = (-b + disc.sqrt()) / (2.0 * g);
    if a.is_nan() || a <= 0.0 {
        return Ok(Fixed::ZERO);
    }
    Ok(Fixed::from_f64(a)?)
}
