//! Constant-product pool pairing a group's CP token with the governance token.
//!
//! Reserves are exact fixed-point amounts and the invariant `k` is kept as an
//! unrounded 256-bit product. Whatever reserve a swap has to solve for is
//! rounded in the pool's favour: outputs round down, required inputs round
//! up. A swap can therefore only raise `k`, and with a zero fee it raises it
//! by less than one unit of the solved reserve.

use serde::Serialize;
use thiserror::Error;

use crate::fixed::{self, Fixed, FixedError, TokenAmount, Wide};
use crate::ledger::{AccountId, GroupId, Ledger, LedgerError, TokenId};

/// Address namespace for pool accounts.
pub const POOL_ACCOUNT_TAG: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AmmError {
    #[error("liquidity split q = {0} must lie strictly between 0 and 1")]
    InvalidSplit(Fixed),
    #[error("pool liquidity must be positive on both sides")]
    ZeroLiquidity,
    #[error("ideal ratio must be positive")]
    ZeroIdealRatio,
    #[error("fee rate {0} must lie in [0, 1)")]
    InvalidFee(Fixed),
    #[error("swap amount must be positive")]
    ZeroAmount,
    #[error("requested {requested} would drain a reserve of {reserve}")]
    PoolDrain { requested: TokenAmount, reserve: TokenAmount },
    #[error("input {0} is too small to buy a single unit")]
    OutputTooSmall(TokenAmount),
    #[error("constant-sum output {wanted} exceeds available reserve {available}")]
    Depleted { wanted: TokenAmount, available: TokenAmount },
    #[error("quote was computed against different reserves")]
    StaleQuote,
    #[error("pool invariant violated: {0}")]
    InvariantViolated(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Arithmetic(#[from] FixedError),
}

pub type Result<T, E = AmmError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapSide {
    /// Pay CP, receive governance tokens.
    CpToGov,
    /// Pay governance tokens, receive CP.
    GovToCp,
}

impl SwapSide {
    pub fn input_token(self, group: GroupId) -> TokenId {
        match self {
            SwapSide::CpToGov => TokenId::Cp(group),
            SwapSide::GovToCp => TokenId::Governance,
        }
    }

    pub fn output_token(self, group: GroupId) -> TokenId {
        match self {
            SwapSide::CpToGov => TokenId::Governance,
            SwapSide::GovToCp => TokenId::Cp(group),
        }
    }

    pub fn reverse(self) -> Self {
        match self {
            SwapSide::CpToGov => SwapSide::GovToCp,
            SwapSide::GovToCp => SwapSide::CpToGov,
        }
    }
}

/// Which reserve a quote solved for (and rounded up).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Solved {
    Output,
    Input,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SwapQuote {
    pub side: SwapSide,
    pub amount_in: TokenAmount,
    pub amount_out: TokenAmount,
    /// Governance per CP before the trade.
    pub spot_price_before: Fixed,
    pub spot_price_after: Fixed,
    /// `1 - executed_rate / spot_rate`, where both rates are output per input.
    pub slippage: Fixed,
    pub cp_reserve_before: TokenAmount,
    pub gov_reserve_before: TokenAmount,
    pub cp_reserve_after: TokenAmount,
    pub gov_reserve_after: TokenAmount,
    pub solved: Solved,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AmmPool {
    group: GroupId,
    cp_reserve: TokenAmount,
    gov_reserve: TokenAmount,
    k: Wide,
    fee_rate: Fixed,
    ideal_ratio: Fixed,
    account: AccountId,
    swaps: u64,
    rounding_excess: Wide,
}

/// Creates the pool `(q * cp_total) * gov_liquidity = k`.
///
/// Returns the pool and the CP left over for the burning-reward reserve,
/// `cp_total - q * cp_total`.
pub fn init_pool(
    group: GroupId,
    cp_total: TokenAmount,
    q: Fixed,
    gov_liquidity: TokenAmount,
    ideal_ratio: Fixed,
) -> Result<(AmmPool, TokenAmount)> {
    if q.is_zero() || q >= Fixed::ONE {
        return Err(AmmError::InvalidSplit(q));
    }
    if ideal_ratio.is_zero() {
        return Err(AmmError::ZeroIdealRatio);
    }
    let cp_reserve = cp_total.mul_floor(q)?;
    if cp_reserve.is_zero() || gov_liquidity.is_zero() {
        return Err(AmmError::ZeroLiquidity);
    }
    let reward_reserve = cp_total.checked_sub(cp_reserve)?;
    let pool = AmmPool {
        group,
        cp_reserve,
        gov_reserve: gov_liquidity,
        k: cp_reserve.wide_product(gov_liquidity),
        fee_rate: Fixed::ZERO,
        ideal_ratio,
        account: AmmPool::account_for(group),
        swaps: 0,
        rounding_excess: Wide::zero(),
    };
    Ok((pool, reward_reserve))
}

impl AmmPool {
    /// Builds a pool directly from reserves (no reward split).
    pub fn from_reserves(group: GroupId, cp_reserve: TokenAmount, gov_reserve: TokenAmount, ideal_ratio: Fixed) -> Result<Self> {
        if cp_reserve.is_zero() || gov_reserve.is_zero() {
            return Err(AmmError::ZeroLiquidity);
        }
        if ideal_ratio.is_zero() {
            return Err(AmmError::ZeroIdealRatio);
        }
        Ok(AmmPool {
            group,
            cp_reserve,
            gov_reserve,
            k: cp_reserve.wide_product(gov_reserve),
            fee_rate: Fixed::ZERO,
            ideal_ratio,
            account: Self::account_for(group),
            swaps: 0,
            rounding_excess: Wide::zero(),
        })
    }

    pub fn account_for(group: GroupId) -> AccountId {
        AccountId::derived(POOL_ACCOUNT_TAG, group.0 as u64)
    }

    pub fn with_fee(mut self, fee_rate: Fixed) -> Result<Self> {
        if fee_rate >= Fixed::ONE {
            return Err(AmmError::InvalidFee(fee_rate));
        }
        self.fee_rate = fee_rate;
        Ok(self)
    }

    pub fn group(&self) -> GroupId {
        self.group
    }

    pub fn account(&self) -> AccountId {
        self.account
    }

    pub fn cp_reserve(&self) -> TokenAmount {
        self.cp_reserve
    }

    pub fn gov_reserve(&self) -> TokenAmount {
        self.gov_reserve
    }

    /// Current invariant, `cp_reserve * gov_reserve` at 36 fractional digits.
    pub fn k(&self) -> Wide {
        self.k
    }

    pub fn fee_rate(&self) -> Fixed {
        self.fee_rate
    }

    pub fn ideal_ratio(&self) -> Fixed {
        self.ideal_ratio
    }

    pub fn swap_count(&self) -> u64 {
        self.swaps
    }

    /// Total growth of `k` caused by rounding and fees since creation.
    pub fn rounding_excess(&self) -> Wide {
        self.rounding_excess
    }

    /// Governance tokens per CP token at infinitesimal trade size.
    pub fn spot_ratio(&self) -> Fixed {
        ratio(self.gov_reserve, self.cp_reserve)
    }

    fn reserves(&self, side: SwapSide) -> (TokenAmount, TokenAmount) {
        match side {
            SwapSide::CpToGov => (self.cp_reserve, self.gov_reserve),
            SwapSide::GovToCp => (self.gov_reserve, self.cp_reserve),
        }
    }

    fn build_quote(
        &self,
        side: SwapSide,
        amount_in: TokenAmount,
        amount_out: TokenAmount,
        out_after: TokenAmount,
        solved: Solved,
    ) -> Result<SwapQuote> {
        let (r_in, r_out) = self.reserves(side);
        let in_after = r_in.checked_add(amount_in)?;
        let (cp_after, gov_after) = match side {
            SwapSide::CpToGov => (in_after, out_after),
            SwapSide::GovToCp => (out_after, in_after),
        };
        // executed / spot = (out / in) / (r_out / r_in)
        let rel = fixed::mul_div_floor(amount_out.wide() * r_in.wide(), fixed::scale_wide(), amount_in.wide() * r_out.wide())?;
        let rel = Fixed::from_wide(rel)?.min(Fixed::ONE);
        Ok(SwapQuote {
            side,
            amount_in,
            amount_out,
            spot_price_before: self.spot_ratio(),
            spot_price_after: ratio(gov_after, cp_after),
            slippage: Fixed::ONE.checked_sub(rel)?,
            cp_reserve_before: self.cp_reserve,
            gov_reserve_before: self.gov_reserve,
            cp_reserve_after: cp_after,
            gov_reserve_after: gov_after,
            solved,
        })
    }

    /// Output for paying exactly `amount_in`. Pure.
    pub fn quote_swap(&self, side: SwapSide, amount_in: TokenAmount) -> Result<SwapQuote> {
        if amount_in.is_zero() {
            return Err(AmmError::ZeroAmount);
        }
        let (r_in, r_out) = self.reserves(side);
        let effective = amount_in.mul_floor(self.fee_rate.complement()?)?;
        let in_effective = r_in.checked_add(effective)?;
        let out_after = Fixed::from_wide(fixed::div_ceil_wide(self.k, in_effective.wide())?)?;
        let amount_out = r_out.saturating_sub(out_after);
        if amount_out.is_zero() {
            return Err(AmmError::OutputTooSmall(amount_in));
        }
        self.build_quote(side, amount_in, amount_out, out_after, Solved::Output)
    }

    /// Input required to receive exactly `amount_out`. Pure.
    pub fn quote_swap_exact_out(&self, side: SwapSide, amount_out: TokenAmount) -> Result<SwapQuote> {
        if amount_out.is_zero() {
            return Err(AmmError::ZeroAmount);
        }
        let (r_in, r_out) = self.reserves(side);
        if amount_out >= r_out {
            return Err(AmmError::PoolDrain { requested: amount_out, reserve: r_out });
        }
        let out_after = r_out.checked_sub(amount_out)?;
        let in_effective = Fixed::from_wide(fixed::div_ceil_wide(self.k, out_after.wide())?)?;
        let effective = in_effective.checked_sub(r_in)?;
        let amount_in = effective.div_ceil(self.fee_rate.complement()?)?;
        self.build_quote(side, amount_in, amount_out, out_after, Solved::Input)
    }

    /// Constant-sum output at the ideal ratio, the zero-slippage baseline.
    pub fn csf_quote(&self, side: SwapSide, amount_in: TokenAmount) -> Result<TokenAmount> {
        let (_, r_out) = self.reserves(side);
        csf_quote(self.ideal_ratio, side, amount_in, r_out)
    }

    /// Applies a quote produced by this pool against its current reserves.
    pub fn apply_quote(&mut self, ledger: &mut Ledger, trader: AccountId, quote: &SwapQuote) -> Result<()> {
        if quote.cp_reserve_before != self.cp_reserve || quote.gov_reserve_before != self.gov_reserve {
            return Err(AmmError::StaleQuote);
        }
        let token_in = quote.side.input_token(self.group);
        let token_out = quote.side.output_token(self.group);

        let available = ledger.balance(token_in, trader);
        if available < quote.amount_in {
            return Err(LedgerError::InsufficientBalance { token: token_in, account: trader, needed: quote.amount_in, available }.into());
        }
        let pool_out = ledger.balance(token_out, self.account);
        if pool_out < quote.amount_out {
            return Err(AmmError::InvariantViolated(format!(
                "pool account holds {pool_out} {token_out}, reserve says {}",
                self.reserves(quote.side).1
            )));
        }

        let new_k = quote.cp_reserve_after.wide_product(quote.gov_reserve_after);
        if new_k < self.k {
            return Err(AmmError::InvariantViolated("swap would shrink k".into()));
        }
        let excess = new_k - self.k;
        if self.fee_rate.is_zero() {
            // ceil rounding of the solved reserve adds less than one unit of it
            // times the other reserve
            let bound = match (quote.solved, quote.side) {
                (Solved::Output, SwapSide::CpToGov) | (Solved::Input, SwapSide::GovToCp) => quote.cp_reserve_after.wide(),
                (Solved::Output, SwapSide::GovToCp) | (Solved::Input, SwapSide::CpToGov) => quote.gov_reserve_after.wide(),
            };
            if excess >= bound {
                return Err(AmmError::InvariantViolated(format!("k grew by {} raw units, bound {bound}", excess)));
            }
        }

        ledger.transfer_tokens(token_in, trader, self.account, quote.amount_in)?;
        ledger.transfer_tokens(token_out, self.account, trader, quote.amount_out)?;
        self.cp_reserve = quote.cp_reserve_after;
        self.gov_reserve = quote.gov_reserve_after;
        self.k = new_k;
        self.rounding_excess += excess;
        self.swaps += 1;
        Ok(())
    }

    /// Swaps exactly `amount_in` from `trader`'s balance. Returns the quote
    /// that was executed.
    pub fn execute_swap(&mut self, ledger: &mut Ledger, trader: AccountId, side: SwapSide, amount_in: TokenAmount) -> Result<SwapQuote> {
        let quote = self.quote_swap(side, amount_in)?;
        self.apply_quote(ledger, trader, &quote)?;
        Ok(quote)
    }

    pub fn execute_swap_exact_out(
        &mut self,
        ledger: &mut Ledger,
        trader: AccountId,
        side: SwapSide,
        amount_out: TokenAmount,
    ) -> Result<SwapQuote> {
        let quote = self.quote_swap_exact_out(side, amount_out)?;
        self.apply_quote(ledger, trader, &quote)?;
        Ok(quote)
    }

    /// Reserves the pool would hold at exactly the ideal ratio with the
    /// current `k`: `(sqrt(k / ideal), sqrt(k * ideal))`, rounded down.
    pub fn ideal_reserves(&self) -> Result<(TokenAmount, TokenAmount)> {
        let scale = fixed::scale_wide();
        let ideal = self.ideal_ratio.wide();
        let cp_sq = fixed::mul_div_floor(self.k, scale, ideal)?;
        let gov_sq = fixed::mul_div_floor(self.k, ideal, scale)?;
        Ok((Fixed::from_wide(cp_sq.integer_sqrt())?, Fixed::from_wide(gov_sq.integer_sqrt())?))
    }
}

/// `num / den` rounded down, as a fixed-point ratio.
pub fn ratio(num: TokenAmount, den: TokenAmount) -> Fixed {
    if den.is_zero() {
        return Fixed::ZERO;
    }
    fixed::mul_div_floor(num.wide(), fixed::scale_wide(), den.wide()).and_then(Fixed::from_wide).unwrap_or(Fixed::from_raw(u128::MAX))
}

/// Constant-sum swap at `ideal_ratio` (governance per CP).
pub fn csf_quote(ideal_ratio: Fixed, side: SwapSide, amount_in: TokenAmount, reserve_out: TokenAmount) -> Result<TokenAmount> {
    let out = match side {
        SwapSide::CpToGov => amount_in.mul_floor(ideal_ratio)?,
        SwapSide::GovToCp => amount_in.div_floor(ideal_ratio)?,
    };
    if out > reserve_out {
        return Err(AmmError::Depleted { wanted: out, available: reserve_out });
    }
    Ok(out)
}

/// One row of the CPF-vs-CSF comparison.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SlippagePoint {
    pub liquidity: TokenAmount,
    pub trade_size: TokenAmount,
    pub cpf_pay: TokenAmount,
    pub csf_pay: TokenAmount,
    pub deviation: TokenAmount,
}

/// For each symmetric pool `x = y = level` with a 1:1 ideal ratio, the cost
/// of buying `trade_size` of one asset under CPF and under CSF.
pub fn slippage_curve(levels: &[TokenAmount], trade_size: TokenAmount) -> Result<Vec<SlippagePoint>> {
    levels
        .iter()
        .map(|&level| {
            let pool = AmmPool::from_reserves(GroupId(0), level, level, Fixed::ONE)?;
            let quote = pool.quote_swap_exact_out(SwapSide::GovToCp, trade_size)?;
            let csf_pay = trade_size.div_ceil(pool.ideal_ratio)?;
            Ok(SlippagePoint {
                liquidity: level,
                trade_size,
                cpf_pay: quote.amount_in,
                csf_pay,
                deviation: quote.amount_in.checked_sub(csf_pay)?,
            })
        })
        .collect()
}
