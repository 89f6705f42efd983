//! Burning rewards, the reward reserve, and the inflation factor `I`.
//!
//! Each NFT group owns a CP token, a constant-product pool, and a reserve
//! account holding the CP that was not put into the pool. Burn payouts debit
//! the reserve; NFT purchases credit it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amm::{self, AmmError, AmmPool};
use crate::fixed::{self, Fixed, FixedError, TokenAmount};
use crate::ledger::{AccountId, GroupId, Ledger, LedgerError, NftId, TokenId};
use crate::rarity::{self, RarityError, RarityLadder};

/// Address namespace for reward reserve accounts.
pub const RESERVE_ACCOUNT_TAG: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewardError {
    #[error("no circulating NFTs in group {0}")]
    NoCirculating(GroupId),
    #[error("reserve holds {available}, payout needs {needed}")]
    InsufficientReserve { needed: TokenAmount, available: TokenAmount },
    #[error("inflation update not due before step {due} (now {step})")]
    UpdateNotDue { step: u64, due: u64 },
    #[error("invalid inflation schedule: {0}")]
    InvalidSchedule(String),
    #[error("nft #{nft} is not in group {group}")]
    WrongGroup { nft: NftId, group: GroupId },
    #[error("reward target rarity must be at least 1")]
    ZeroTarget,
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Amm(#[from] AmmError),
    #[error(transparent)]
    Rarity(#[from] RarityError),
    #[error(transparent)]
    Arithmetic(#[from] FixedError),
}

pub type Result<T, E = RewardError> = std::result::Result<T, E>;

/// Inflation factor and the schedule that updates it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InflationState {
    factor: Fixed,
    period: u64,
    min: Fixed,
    max: Fixed,
    last_update_step: u64,
}

impl Default for InflationState {
    fn default() -> Self {
        InflationState {
            factor: Fixed::ONE,
            period: 24,
            min: Fixed::from_raw(fixed::SCALE / 4),
            max: Fixed::from_int(4),
            last_update_step: 0,
        }
    }
}

impl InflationState {
    pub fn new(period: u64, min: Fixed, max: Fixed) -> Result<Self> {
        if period == 0 {
            return Err(RewardError::InvalidSchedule("period must be at least one step".into()));
        }
        if min.is_zero() || min > max {
            return Err(RewardError::InvalidSchedule(format!("clamp [{min}, {max}]")));
        }
        Ok(InflationState { factor: Fixed::ONE.clamp(min, max), period, min, max, last_update_step: 0 })
    }

    /// Starts the schedule at `step` (e.g. a group launched mid-run).
    pub fn starting_at(mut self, step: u64) -> Self {
        self.last_update_step = step;
        self
    }

    /// Overrides the current factor, clamped.
    pub fn with_factor(mut self, factor: Fixed) -> Self {
        self.factor = factor.clamp(self.min, self.max);
        self
    }

    pub fn factor(&self) -> Fixed {
        self.factor
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn clamp_bounds(&self) -> (Fixed, Fixed) {
        (self.min, self.max)
    }

    pub fn last_update_step(&self) -> u64 {
        self.last_update_step
    }

    pub fn is_due(&self, step: u64) -> bool {
        step >= self.last_update_step + self.period
    }

    /// `clamp(spot / ideal, min, max)` for the pool's current reserves.
    ///
    /// Evaluated as one floor of `gov * 10^36 / (cp * ideal)`, so doubling the
    /// CP reserve yields exactly `floor(I / 2)`.
    pub fn target_factor(&self, pool: &AmmPool) -> Result<Fixed> {
        let num = pool.gov_reserve().wide() * fixed::scale_wide();
        let den = pool.cp_reserve().wide_product(pool.ideal_ratio());
        let raw = fixed::mul_div_floor(num, fixed::scale_wide(), den)?;
        let factor = Fixed::from_wide(raw).unwrap_or(Fixed::from_raw(u128::MAX));
        Ok(factor.clamp(self.min, self.max))
    }

    /// Recomputes `I` if a full period has elapsed since the last update.
    pub fn update(&mut self, pool: &AmmPool, step: u64) -> Result<Fixed> {
        if !self.is_due(step) {
            return Err(RewardError::UpdateNotDue { step, due: self.last_update_step + self.period });
        }
        self.factor = self.target_factor(pool)?;
        self.last_update_step = step;
        Ok(self.factor)
    }
}

/// Parameters for launching one NFT group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupParams {
    pub ladder: RarityLadder,
    pub cp_total: TokenAmount,
    pub q: Fixed,
    pub gov_liquidity: TokenAmount,
    pub ideal_ratio: Fixed,
    pub fee_rate: Fixed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NftGroup {
    id: GroupId,
    ladder: RarityLadder,
    cp_total: TokenAmount,
    q: Fixed,
    pub pool: AmmPool,
    reserve_account: AccountId,
}

impl NftGroup {
    /// Registers the group and its CP token, mints `cp_total` split between
    /// pool and reserve by `q`, and mints the pool's governance liquidity.
    pub fn launch(ledger: &mut Ledger, id: GroupId, params: GroupParams) -> Result<Self> {
        let (pool, reserve_amount) = amm::init_pool(id, params.cp_total, params.q, params.gov_liquidity, params.ideal_ratio)?;
        let pool = pool.with_fee(params.fee_rate)?;
        let cp = TokenId::Cp(id);
        if ledger.has_token(cp) {
            return Err(LedgerError::TokenExists(cp).into());
        }
        if ledger.group_counters(id).is_ok() {
            return Err(LedgerError::GroupExists(id).into());
        }
        if !ledger.has_token(TokenId::Governance) {
            ledger.create_token(TokenId::Governance)?;
        }
        ledger.create_token(cp)?;
        ledger.register_group(id, params.ladder.max_rarity())?;
        let reserve_account = Self::reserve_account_for(id);
        ledger.mint_tokens(cp, pool.account(), pool.cp_reserve())?;
        if !reserve_amount.is_zero() {
            ledger.mint_tokens(cp, reserve_account, reserve_amount)?;
        }
        ledger.mint_tokens(TokenId::Governance, pool.account(), pool.gov_reserve())?;
        Ok(NftGroup { id, ladder: params.ladder, cp_total: params.cp_total, q: params.q, pool, reserve_account })
    }

    pub fn reserve_account_for(id: GroupId) -> AccountId {
        AccountId::derived(RESERVE_ACCOUNT_TAG, id.0 as u64)
    }

    pub fn id(&self) -> GroupId {
        self.id
    }

    pub fn ladder(&self) -> &RarityLadder {
        &self.ladder
    }

    pub fn cp_total(&self) -> TokenAmount {
        self.cp_total
    }

    pub fn q(&self) -> Fixed {
        self.q
    }

    pub fn cp_token(&self) -> TokenId {
        TokenId::Cp(self.id)
    }

    pub fn reserve_account(&self) -> AccountId {
        self.reserve_account
    }

    pub fn reserve_balance(&self, ledger: &Ledger) -> TokenAmount {
        ledger.balance(self.cp_token(), self.reserve_account)
    }

    /// CP allocated to burning rewards at launch, `(1 - q) * cp`.
    pub fn initial_reserve(&self) -> Result<TokenAmount> {
        Ok(self.cp_total.checked_sub(self.cp_total.mul_floor(self.q)?)?)
    }
}

/// Flat reward `(1 - q) * cp / x` for a group whose NFTs share one rarity,
/// with `x` the circulating count.
pub fn uniform_burn_reward(ledger: &Ledger, group: &NftGroup) -> Result<TokenAmount> {
    let x = ledger.group_counters(group.id())?.circulating();
    if x == 0 {
        return Err(RewardError::NoCirculating(group.id()));
    }
    Ok(group.initial_reserve()?.div_floor(Fixed::from_int(x))?)
}

/// Reward for failing the upgrade into `target`: `alpha * cp_target` with
/// `alpha = p_{target-1} * I`, rounded down once.
pub fn rarity_burn_reward(ladder: &RarityLadder, target: u32, inflation: Fixed) -> Result<TokenAmount> {
    if target == 0 {
        return Err(RewardError::ZeroTarget);
    }
    let p = ladder.level(target - 1)?.p;
    let value = ladder.value_at(target)?;
    let raw = fixed::mul_div_floor(p.wide() * inflation.wide(), value.wide(), fixed::scale_wide() * fixed::scale_wide())?;
    Ok(Fixed::from_wide(raw)?)
}

/// Burns `nft` and pays `reward` CP from the group's reserve to `claimant`.
/// Either both happen or neither does.
pub fn pay_burn_reward(ledger: &mut Ledger, group: &NftGroup, claimant: AccountId, nft: NftId, reward: TokenAmount) -> Result<()> {
    ledger.ensure_owner(claimant, nft)?;
    if ledger.nft(nft)?.group != group.id() {
        return Err(RewardError::WrongGroup { nft, group: group.id() });
    }
    let available = group.reserve_balance(ledger);
    if available < reward {
        return Err(RewardError::InsufficientReserve { needed: reward, available });
    }
    ledger.burn_nft(claimant, nft)?;
    ledger.transfer_tokens(group.cp_token(), group.reserve_account(), claimant, reward)?;
    Ok(())
}

/// Burns a same-rarity NFT for the flat reward.
pub fn burn_for_uniform_reward(ledger: &mut Ledger, group: &NftGroup, claimant: AccountId, nft: NftId) -> Result<TokenAmount> {
    let reward = uniform_burn_reward(ledger, group)?;
    pay_burn_reward(ledger, group, claimant, nft, reward)?;
    Ok(reward)
}

/// Sells a fresh NFT at rarity `rarity` for `cp_rarity` CP, which goes to the
/// reserve.
pub fn purchase_nft(ledger: &mut Ledger, group: &NftGroup, buyer: AccountId, rarity: u32) -> Result<NftId> {
    let price = group.ladder().value_at(rarity)?;
    let available = ledger.balance(group.cp_token(), buyer);
    if available < price {
        return Err(LedgerError::InsufficientBalance { token: group.cp_token(), account: buyer, needed: price, available }.into());
    }
    if buyer.is_zero() {
        return Err(LedgerError::MintToZero.into());
    }
    ledger.transfer_tokens(group.cp_token(), buyer, group.reserve_account(), price)?;
    Ok(ledger.mint_nft(group.id(), buyer, rarity)?)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReserveSizing {
    /// `C * X(i)` for target levels `i = 1..=n` (index 0 is level 1).
    pub expected_burns: Vec<Fixed>,
    /// Reward per burn at each target level, factors at their ceilings.
    pub max_rewards: Vec<TokenAmount>,
    pub total: TokenAmount,
}

/// Reserve needed for `count` NFTs starting at `S_0`:
/// `sum_i C * X(i) * p_{i-1} * I * cp_i`, where `cp_i` uses the largest
/// inflation-safe factor at every level.
pub fn size_reward_reserve(ladder: &RarityLadder, count: u64, inflation: Fixed) -> Result<ReserveSizing> {
    let c = Fixed::from_int(count);
    let mut expected_burns = Vec::with_capacity(ladder.levels().len());
    let mut max_rewards = Vec::with_capacity(ladder.levels().len());
    let mut total = Fixed::ZERO;
    let mut max_value = ladder.base_value();
    for target in 1..=ladder.max_rarity() {
        let x = rarity::failure_pmf(ladder, target)?;
        let burns = x.mul_floor(c)?;
        let p = ladder.level(target - 1)?.p;
        let reward = if p.is_zero() {
            Fixed::ZERO
        } else {
            max_value = max_value.mul_floor(rarity::max_rarity_factor(p, inflation)?)?;
            let raw = fixed::mul_div_floor(p.wide() * inflation.wide(), max_value.wide(), fixed::scale_wide() * fixed::scale_wide())?;
            Fixed::from_wide(raw)?
        };
        total = total.checked_add(burns.mul_ceil(reward)?)?;
        expected_burns.push(burns);
        max_rewards.push(reward);
        if p.is_zero() {
            // nothing gets past this level
            break;
        }
    }
    Ok(ReserveSizing { expected_burns, max_rewards, total })
}
