//! Rarity-upgrade state machine and its valuation layer.
//!
//! A ladder of `n` levels defines states `S_0 ..= S_n`. From `S_i` an upgrade
//! succeeds with probability `p_i` and multiplies the NFT's value by `r_i`;
//! failure burns the NFT and pays `p_i * I * cp_{i+1}` from the reserve.
//!
//! The analytic functions share one exact quantity, the per-unit expectation
//! `D(p, I) = p + I * (1 - p) * p`, held at 54 fractional digits. A level is
//! inflation-safe iff `r * D <= 1`, which is checked without rounding.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixed::{self, Fixed, FixedError, TokenAmount, Wide};
use crate::ledger::{AccountId, Ledger, LedgerError, NftId};
use crate::rewards::{self, InflationState, NftGroup, RewardError};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RarityError {
    #[error("ladder needs at least one level")]
    EmptyLadder,
    #[error("upgrade probability {0} at level {1} must lie in [0, 1)")]
    InvalidProbability(Fixed, u32),
    #[error("value factor {0} at level {1} must exceed 1")]
    InvalidFactor(Fixed, u32),
    #[error("base value must be positive")]
    ZeroBaseValue,
    #[error("rarity {0} outside ladder (max {1})")]
    OutOfRange(u32, u32),
    #[error("upgrade probability is zero; the value ceiling is unbounded")]
    ZeroProbability,
    #[error("failure pmf is indexed from 1")]
    ZeroAttempt,
    #[error(transparent)]
    Arithmetic(#[from] FixedError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RarityLevel {
    /// Probability of upgrading out of this level.
    pub p: Fixed,
    /// Value multiplier on success.
    pub r: Fixed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RarityLadder {
    base_value: TokenAmount,
    levels: Vec<RarityLevel>,
    values: Vec<TokenAmount>,
}

impl RarityLadder {
    pub fn new(base_value: TokenAmount, levels: Vec<RarityLevel>) -> Result<Self, RarityError> {
        if levels.is_empty() {
            return Err(RarityError::EmptyLadder);
        }
        if base_value.is_zero() {
            return Err(RarityError::ZeroBaseValue);
        }
        let mut values = Vec::with_capacity(levels.len() + 1);
        values.push(base_value);
        for (i, level) in levels.iter().enumerate() {
            if level.p >= Fixed::ONE {
                return Err(RarityError::InvalidProbability(level.p, i as u32));
            }
            if level.r <= Fixed::ONE {
                return Err(RarityError::InvalidFactor(level.r, i as u32));
            }
            let next = values[i].mul_floor(level.r)?;
            values.push(next);
        }
        Ok(RarityLadder { base_value, levels, values })
    }

    /// Same probabilities, every factor set to its ceiling at `inflation`.
    pub fn at_ceiling(base_value: TokenAmount, probabilities: &[Fixed], inflation: Fixed) -> Result<Self, RarityError> {
        let levels = probabilities
            .iter()
            .map(|&p| Ok(RarityLevel { p, r: max_rarity_factor(p, inflation)? }))
            .collect::<Result<Vec<_>, RarityError>>()?;
        Self::new(base_value, levels)
    }

    pub fn base_value(&self) -> TokenAmount {
        self.base_value
    }

    pub fn levels(&self) -> &[RarityLevel] {
        &self.levels
    }

    pub fn level(&self, i: u32) -> Result<&RarityLevel, RarityError> {
        self.levels.get(i as usize).ok_or(RarityError::OutOfRange(i, self.max_rarity()))
    }

    /// Highest reachable rarity index (the ladder's top state).
    pub fn max_rarity(&self) -> u32 {
        self.levels.len() as u32
    }

    /// `cp_k = cp_0 * r_0 * ... * r_{k-1}`, each product rounded down.
    pub fn value_at(&self, k: u32) -> Result<TokenAmount, RarityError> {
        self.values.get(k as usize).copied().ok_or(RarityError::OutOfRange(k, self.max_rarity()))
    }

    pub fn values(&self) -> &[TokenAmount] {
        &self.values
    }

    /// Whether every level satisfies the expectation condition at `inflation`.
    pub fn validate(&self, inflation: Fixed) -> bool {
        check_inflation_condition(self, inflation).is_safe()
    }
}

fn scale54() -> Wide {
    Wide::exp10(54)
}

/// `p + I * (1 - p) * p` at 54 fractional digits.
fn expectation_factor(p: Fixed, inflation: Fixed) -> Wide {
    let one = fixed::scale_wide();
    let complement = one - p.wide();
    p.wide() * one * one + inflation.wide() * complement * p.wide()
}

/// Ceiling on the value factor: `1 / (p + I (1 - p) p)`, rounded down.
///
/// `inflation = 0` is accepted and gives the no-reward ceiling `1 / p`.
pub fn max_rarity_factor(p: Fixed, inflation: Fixed) -> Result<Fixed, RarityError> {
    if p.is_zero() {
        return Err(RarityError::ZeroProbability);
    }
    if p >= Fixed::ONE {
        return Err(RarityError::InvalidProbability(p, 0));
    }
    let d = expectation_factor(p, inflation);
    let r = fixed::mul_div_floor(scale54(), fixed::scale_wide(), d)?;
    Ok(Fixed::from_wide(r)?)
}

/// `E[S_{i+1}] = p_i cp_{i+1} + (1 - p_i) (p_i I) cp_{i+1}`, rounded down once.
pub fn expected_next_value(ladder: &RarityLadder, i: u32, inflation: Fixed) -> Result<TokenAmount, RarityError> {
    let level = ladder.level(i)?;
    let next = ladder.value_at(i + 1)?;
    let e = fixed::mul_div_floor(next.wide(), expectation_factor(level.p, inflation), scale54())?;
    Ok(Fixed::from_wide(e)?)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LevelCheck {
    pub level: u32,
    pub p: Fixed,
    pub r: Fixed,
    /// `None` when `p = 0` (no upgrade can happen, any factor is safe).
    pub ceiling: Option<Fixed>,
    pub expected_next: TokenAmount,
    pub current: TokenAmount,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InflationCheck {
    pub inflation: Fixed,
    pub levels: Vec<LevelCheck>,
}

impl InflationCheck {
    pub fn is_safe(&self) -> bool {
        self.levels.iter().all(|l| l.pass)
    }

    pub fn violations(&self) -> impl Iterator<Item = &LevelCheck> {
        self.levels.iter().filter(|l| !l.pass)
    }
}

/// Per-level report of `E[S_{i+1}] <= cp_i`.
///
/// The verdict compares `r_i * D(p_i, I)` with 1 exactly, so it does not
/// depend on how `cp_i` happened to round.
pub fn check_inflation_condition(ladder: &RarityLadder, inflation: Fixed) -> InflationCheck {
    let limit = scale54() * fixed::scale_wide();
    let levels = ladder
        .levels()
        .iter()
        .enumerate()
        .map(|(i, level)| {
            let i = i as u32;
            let d = expectation_factor(level.p, inflation);
            let pass = level.r.wide().checked_mul(d).is_some_and(|lhs| lhs <= limit);
            LevelCheck {
                level: i,
                p: level.p,
                r: level.r,
                ceiling: max_rarity_factor(level.p, inflation).ok(),
                expected_next: expected_next_value(ladder, i, inflation).unwrap_or(Fixed::from_raw(u128::MAX)),
                current: ladder.values[i as usize],
                pass,
            }
        })
        .collect();
    InflationCheck { inflation, levels }
}

/// `p_0 * p_1 * ... * p_{n-1}`, chained with floor rounding.
pub fn survival(ladder: &RarityLadder, n: u32) -> Result<Fixed, RarityError> {
    if n > ladder.max_rarity() {
        return Err(RarityError::OutOfRange(n, ladder.max_rarity()));
    }
    ladder.levels[..n as usize].iter().try_fold(Fixed::ONE, |acc, l| acc.mul_floor(l.p)).map_err(Into::into)
}

/// Probability that an NFT starting at `S_0` is burned on the attempt into
/// level `i`: `1 - p_0` for `i = 1`, else `(1 - p_{i-1}) * p_0 ... p_{i-2}`.
///
/// Computed as `P_{i-1} - P_{i-1} * p_{i-1}` with `P` from [`survival`], so
/// partial sums telescope to `1 - P_N` with no rounding drift.
pub fn failure_pmf(ladder: &RarityLadder, i: u32) -> Result<Fixed, RarityError> {
    if i == 0 {
        return Err(RarityError::ZeroAttempt);
    }
    let reach = survival(ladder, i - 1)?;
    let p = ladder.level(i - 1)?.p;
    Ok(reach.checked_sub(reach.mul_floor(p)?)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UpgradeKind {
    Success { new_rarity: u32 },
    Failure { reward: TokenAmount },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct UpgradeOutcome {
    pub nft: NftId,
    pub from_rarity: u32,
    pub kind: UpgradeKind,
    pub draw: Fixed,
}

/// Runs one upgrade attempt with a fresh draw from `rng`.
pub fn attempt_upgrade<R: Rng + ?Sized>(
    ledger: &mut Ledger,
    group: &NftGroup,
    caller: AccountId,
    nft: NftId,
    inflation: &InflationState,
    rng: &mut R,
) -> Result<UpgradeOutcome, RewardError> {
    attempt_upgrade_with_draw(ledger, group, caller, nft, inflation, rng::unit_draw(rng))
}

/// Succeeds iff `draw < p_i`. On failure the NFT is burned and the reward is
/// paid in one step; if the reserve cannot pay, nothing changes.
pub fn attempt_upgrade_with_draw(
    ledger: &mut Ledger,
    group: &NftGroup,
    caller: AccountId,
    nft: NftId,
    inflation: &InflationState,
    draw: Fixed,
) -> Result<UpgradeOutcome, RewardError> {
    ledger.ensure_owner(caller, nft)?;
    let record = ledger.nft(nft)?;
    if record.group != group.id() {
        return Err(RewardError::WrongGroup { nft, group: group.id() });
    }
    let from = record.rarity_index;
    if from >= group.ladder().max_rarity() {
        return Err(LedgerError::TopRarity(nft).into());
    }
    let p = group.ladder().level(from)?.p;
    let kind = if draw < p {
        let new_rarity = ledger.upgrade_nft(caller, nft)?;
        UpgradeKind::Success { new_rarity }
    } else {
        let reward = rewards::rarity_burn_reward(group.ladder(), from + 1, inflation.factor())?;
        rewards::pay_burn_reward(ledger, group, caller, nft, reward)?;
        UpgradeKind::Failure { reward }
    };
    Ok(UpgradeOutcome { nft, from_rarity: from, kind, draw })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::Signed;
    use proptest::prelude::*;

    fn fx(s: &str) -> Fixed {
        s.parse().unwrap()
    }

    fn ladder(base: &str, levels: &[(&str, &str)]) -> RarityLadder {
        RarityLadder::new(fx(base), levels.iter().map(|(p, r)| RarityLevel { p: fx(p), r: fx(r) }).collect()).unwrap()
    }

    fn rational(x: Fixed) -> BigRational {
        BigRational::new(BigInt::from(x.raw()), BigInt::from(fixed::SCALE))
    }

    #[test]
    fn value_at_products() {
        let l = ladder("10", &[("0.5", "2"), ("0.5", "3")]);
        assert_eq!(l.value_at(0).unwrap(), fx("10"));
        assert_eq!(l.value_at(2).unwrap(), fx("60"));
        assert_eq!(l.value_at(3), Err(RarityError::OutOfRange(3, 2)));
        assert_eq!(l.value_at(1).unwrap().div_floor(l.value_at(0).unwrap()).unwrap(), fx("2"));
    }

    #[test]
    fn ladder_rejects_bad_levels() {
        assert_eq!(RarityLadder::new(fx("1"), vec![]), Err(RarityError::EmptyLadder));
        let bad_p = RarityLadder::new(fx("1"), vec![RarityLevel { p: Fixed::ONE, r: fx("2") }]);
        assert_eq!(bad_p, Err(RarityError::InvalidProbability(Fixed::ONE, 0)));
        let bad_r = RarityLadder::new(fx("1"), vec![RarityLevel { p: fx("0.5"), r: Fixed::ONE }]);
        assert_eq!(bad_r, Err(RarityError::InvalidFactor(Fixed::ONE, 0)));
    }

    #[test]
    fn ceiling_values() {
        let r = max_rarity_factor(fx("0.1"), Fixed::ONE).unwrap();
        assert!((r.to_f64() - 1.0 / 0.19).abs() < 1e-12);
        let at = |i: &str| max_rarity_factor(fx("0.5"), fx(i)).unwrap();
        assert_eq!(at("0.5"), fx("1.6"));
        assert_eq!(at("1"), fx("1.333333333333333333"));
        assert_eq!(at("2"), Fixed::ONE);
        assert_eq!(max_rarity_factor(Fixed::ZERO, Fixed::ONE), Err(RarityError::ZeroProbability));
        // p -> 1 leaves no room for value gain
        let near_one = max_rarity_factor(fx("0.999999"), Fixed::ONE).unwrap();
        assert!(near_one > Fixed::ONE && near_one < fx("1.000001"));
    }

    #[test]
    fn expectation_at_and_below_ceiling() {
        for p in ["0.1", "0.5", "0.9"] {
            let r = max_rarity_factor(fx(p), Fixed::ONE).unwrap();
            let l = RarityLadder::new(Fixed::ONE, vec![RarityLevel { p: fx(p), r }]).unwrap();
            let e = expected_next_value(&l, 0, Fixed::ONE).unwrap();
            assert!(e <= Fixed::ONE && Fixed::ONE.raw() - e.raw() <= 1, "p={p}: {e}");

            let r90 = r.mul_floor(fx("0.9")).unwrap();
            if r90 <= Fixed::ONE {
                continue;
            }
            let l = RarityLadder::new(fx("10"), vec![RarityLevel { p: fx(p), r: r90 }]).unwrap();
            let e = expected_next_value(&l, 0, Fixed::ONE).unwrap();
            assert!((e.to_f64() - 9.0).abs() < 1e-15, "p={p}: {e}");
        }
    }

    #[test]
    fn ceiling_is_sharp() {
        for (p, i) in [("0.1", "1"), ("0.5", "0.5"), ("0.37", "2"), ("0.999", "0.25")] {
            let (p, i) = (fx(p), fx(i));
            let r = max_rarity_factor(p, i).unwrap();
            let at = RarityLadder::new(fx("7"), vec![RarityLevel { p, r }]).unwrap();
            assert!(check_inflation_condition(&at, i).is_safe());
            let above = RarityLadder::new(fx("7"), vec![RarityLevel { p, r: Fixed::from_raw(r.raw() + 1) }]).unwrap();
            assert!(!check_inflation_condition(&above, i).is_safe());
        }
    }

    #[test]
    fn inflation_condition_reports() {
        let l = RarityLadder::at_ceiling(fx("1"), &[fx("0.5"), fx("0.2"), fx("0.7")], Fixed::ONE).unwrap();
        let report = check_inflation_condition(&l, Fixed::ONE);
        assert!(report.is_safe());
        assert_eq!(report.levels.len(), 3);

        let mut levels = l.levels().to_vec();
        levels[1].r = levels[1].r.mul_floor(fx("1.01")).unwrap();
        let bumped = RarityLadder::new(fx("1"), levels).unwrap();
        let report = check_inflation_condition(&bumped, Fixed::ONE);
        let failing: Vec<u32> = report.violations().map(|v| v.level).collect();
        assert_eq!(failing, vec![1]);
    }

    #[test]
    fn no_reward_variant_uses_inverse_probability() {
        let l = ladder("1", &[("0.25", "4")]);
        assert!(check_inflation_condition(&l, Fixed::ZERO).is_safe());
        assert!(!check_inflation_condition(&l, Fixed::ONE).is_safe());
        let l = ladder("1", &[("0.25", "4.000000000000000001")]);
        assert!(!check_inflation_condition(&l, Fixed::ZERO).is_safe());
    }

    #[test]
    fn zero_probability_level() {
        let l = ladder("5", &[("0", "3")]);
        assert_eq!(expected_next_value(&l, 0, Fixed::ONE).unwrap(), Fixed::ZERO);
        let report = check_inflation_condition(&l, Fixed::ONE);
        assert!(report.is_safe());
        assert_eq!(report.levels[0].ceiling, None);
    }

    #[test]
    fn failure_pmf_values() {
        let single = ladder("1", &[("0.5", "1.1")]);
        assert_eq!(failure_pmf(&single, 1).unwrap(), fx("0.5"));
        let uniform = ladder("1", &[("0.5", "1.1"); 4]);
        let got: Vec<Fixed> = (1..=4).map(|i| failure_pmf(&uniform, i).unwrap()).collect();
        assert_eq!(got, vec![fx("0.5"), fx("0.25"), fx("0.125"), fx("0.0625")]);
        assert_eq!(failure_pmf(&uniform, 0), Err(RarityError::ZeroAttempt));
        assert!(failure_pmf(&uniform, 5).is_err());
    }

    #[test]
    fn failure_pmf_against_exact_rationals() {
        let l = ladder("1", &[("0.3", "1.5"), ("0.77", "1.1"), ("0.123456789", "2"), ("0.5", "1.2"), ("0.999", "1.0001")]);
        let mut reach = BigRational::from_integer(BigInt::from(1));
        for i in 1..=l.max_rarity() {
            let p = rational(l.levels()[i as usize - 1].p);
            let exact = &reach * (BigRational::from_integer(BigInt::from(1)) - &p);
            let got = rational(failure_pmf(&l, i).unwrap());
            let err = (got - exact).abs();
            // one floor per chained product
            let tol = BigRational::new(BigInt::from(i), BigInt::from(fixed::SCALE));
            assert!(err <= tol, "X({i}) off by {err}");
            reach *= p;
        }
    }

    proptest! {
        #[test]
        fn pmf_partial_sums_telescope(ps in proptest::collection::vec(0u128..fixed::SCALE, 1..8)) {
            let levels = ps.iter().map(|&p| RarityLevel { p: Fixed::from_raw(p), r: fx("1.5") }).collect();
            let l = RarityLadder::new(Fixed::ONE, levels).unwrap();
            let mut sum = Fixed::ZERO;
            for n in 1..=l.max_rarity() {
                sum = sum.checked_add(failure_pmf(&l, n).unwrap()).unwrap();
                prop_assert_eq!(sum, Fixed::ONE.checked_sub(survival(&l, n).unwrap()).unwrap());
            }
        }

        #[test]
        fn ceiling_decreases_in_inflation_and_probability(p in 1u128..fixed::SCALE - 1) {
            let p = Fixed::from_raw(p);
            let a = max_rarity_factor(p, fx("2")).unwrap();
            let b = max_rarity_factor(p, Fixed::ONE).unwrap();
            let c = max_rarity_factor(p, fx("0.5")).unwrap();
            prop_assert!(a <= b && b <= c);
        }

        #[test]
        fn verdict_matches_rational_oracle(p in 1u128..fixed::SCALE, r in fixed::SCALE + 1..8 * fixed::SCALE, i in 0u128..4 * fixed::SCALE) {
            let (p, r, i) = (Fixed::from_raw(p), Fixed::from_raw(r), Fixed::from_raw(i));
            let l = RarityLadder::new(Fixed::ONE, vec![RarityLevel { p, r }]).unwrap();
            let one = BigRational::from_integer(BigInt::from(1));
            let (pq, rq, iq) = (rational(p), rational(r), rational(i));
            let lhs = &rq * (&pq + &iq * (&one - &pq) * &pq);
            prop_assert_eq!(check_inflation_condition(&l, i).is_safe(), lhs <= one);
        }
    }
}
