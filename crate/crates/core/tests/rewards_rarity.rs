use proptest::prelude::*;
use tokenomics_core::amm::AmmPool;
use tokenomics_core::fixed::{Fixed, SCALE};
use tokenomics_core::ledger::{AccountId, GroupId, Ledger, TokenId};
use tokenomics_core::rarity::{self, RarityLadder, RarityLevel, UpgradeKind};
use tokenomics_core::rewards::{self, GroupParams, InflationState, NftGroup, RewardError};
use tokenomics_core::rng;

fn fx(s: &str) -> Fixed {
    s.parse().unwrap()
}

fn ladder(levels: &[(&str, &str)]) -> RarityLadder {
    RarityLadder::new(fx("10"), levels.iter().map(|(p, r)| RarityLevel { p: fx(p), r: fx(r) }).collect()).unwrap()
}

fn launch(ladder: RarityLadder, cp_total: Fixed, q: Fixed) -> (Ledger, NftGroup) {
    let mut ledger = Ledger::new();
    let params = GroupParams { ladder, cp_total, q, gov_liquidity: fx("1000"), ideal_ratio: Fixed::ONE, fee_rate: Fixed::ZERO };
    let group = NftGroup::launch(&mut ledger, GroupId(0), params).unwrap();
    (ledger, group)
}

/// Moves reserve CP out until exactly `keep` remains.
fn drain_reserve(ledger: &mut Ledger, group: &NftGroup, keep: Fixed) {
    let excess = group.reserve_balance(ledger).checked_sub(keep).unwrap();
    ledger.transfer_tokens(group.cp_token(), group.reserve_account(), AccountId::derived(9, 0), excess).unwrap();
}

fn user() -> AccountId {
    AccountId::derived(1, 0)
}

proptest! {
    #[test]
    fn burn_payout_is_all_or_nothing(reserve in 0u64..50, reward_raw in 0u128..60 * SCALE, wrong_owner in any::<bool>()) {
        let (mut ledger, group) = launch(ladder(&[("0.5", "1.2")]), fx("1000"), fx("0.5"));
        drain_reserve(&mut ledger, &group, Fixed::from_int(reserve));
        prop_assert_eq!(group.reserve_balance(&ledger), Fixed::from_int(reserve));
        let owner = if wrong_owner { AccountId::derived(1, 1) } else { user() };
        let nft = ledger.mint_nft(GroupId(0), owner, 0).unwrap();
        let reward = Fixed::from_raw(reward_raw);
        let before = ledger.to_json();
        match rewards::pay_burn_reward(&mut ledger, &group, user(), nft, reward) {
            Ok(()) => {
                prop_assert!(ledger.nft(nft).unwrap().burned);
                prop_assert_eq!(ledger.balance(group.cp_token(), user()), reward);
                prop_assert_eq!(group.reserve_balance(&ledger), Fixed::from_int(reserve).checked_sub(reward).unwrap());
            }
            Err(e) => {
                prop_assert!(wrong_owner || reward > Fixed::from_int(reserve), "{}", e);
                prop_assert_eq!(before, ledger.to_json());
            }
        }
    }

    #[test]
    fn doubling_cp_reserve_halves_inflation(cp in 1u64..1_000_000, gov in 1u64..1_000_000, ideal_milli in 1u128..10_000) {
        let ideal = Fixed::from_ratio(ideal_milli, 1000).unwrap();
        let state = InflationState::new(24, Fixed::from_raw(1), Fixed::from_int(1_000_000_000)).unwrap();
        let pool = AmmPool::from_reserves(GroupId(0), Fixed::from_int(cp), Fixed::from_int(gov), ideal).unwrap();
        let deeper = AmmPool::from_reserves(GroupId(0), Fixed::from_int(2 * cp), Fixed::from_int(gov), ideal).unwrap();
        let i = state.target_factor(&pool).unwrap();
        let half = state.target_factor(&deeper).unwrap();
        prop_assume!(half.raw() > 1 && i < Fixed::from_int(1_000_000_000));
        prop_assert_eq!(half.raw(), i.raw() / 2);
    }

    #[test]
    fn purchase_credits_reserve_by_value(rarity in 0u32..4, extra in 0u64..100) {
        let l = ladder(&[("0.5", "1.3"), ("0.3", "1.9"), ("0.1", "5")]);
        let (mut ledger, group) = launch(l.clone(), fx("1000"), fx("0.5"));
        let price = l.value_at(rarity).unwrap();
        ledger.mint_tokens(group.cp_token(), user(), price.checked_add(Fixed::from_int(extra)).unwrap()).unwrap();
        let before = group.reserve_balance(&ledger);
        let nft = rewards::purchase_nft(&mut ledger, &group, user(), rarity).unwrap();
        prop_assert_eq!(group.reserve_balance(&ledger), before.checked_add(price).unwrap());
        prop_assert_eq!(ledger.nft(nft).unwrap().rarity_index, rarity);
        prop_assert_eq!(ledger.balance(group.cp_token(), user()), Fixed::from_int(extra));
    }

    #[test]
    fn upgrade_attempts_keep_counters_coherent(draws in proptest::collection::vec(0u128..SCALE, 1..60)) {
        let l = ladder(&[("0.5", "1.3"), ("0.3", "1.9"), ("0.1", "5")]);
        let (mut ledger, group) = launch(l, fx("100000"), fx("0.5"));
        let inflation = InflationState::default();
        let ids: Vec<_> = (0..8).map(|_| ledger.mint_nft(GroupId(0), user(), 0).unwrap()).collect();
        for (k, draw) in draws.iter().enumerate() {
            let nft = ids[k % ids.len()];
            let before = ledger.group_counters(GroupId(0)).unwrap().clone();
            let record = ledger.nft(nft).unwrap().clone();
            let result = rarity::attempt_upgrade_with_draw(&mut ledger, &group, user(), nft, &inflation, Fixed::from_raw(*draw));
            let after = ledger.group_counters(GroupId(0)).unwrap().clone();
            prop_assert_eq!(after.circulating() + after.burned, before.circulating() + before.burned);
            prop_assert_eq!(after.minted, before.minted);
            let from = record.rarity_index as usize;
            match result {
                Ok(out) => {
                    for (c, (a, b)) in after.cells.iter().zip(&before.cells).enumerate() {
                        let changed = a.circulating != b.circulating;
                        let expect_changed = match out.kind {
                            UpgradeKind::Success { .. } => c == from || c == from + 1,
                            UpgradeKind::Failure { .. } => c == from,
                        };
                        prop_assert_eq!(changed, expect_changed, "cell {}", c);
                    }
                }
                Err(_) => prop_assert_eq!(&after, &before),
            }
        }
        ledger.verify().unwrap();
    }
}

/// Runs `n` attempts from rarity `from` and returns the per-attempt value
/// changes (new value on success, reward on failure, minus the old value).
fn attempt_many(l: &RarityLadder, from: u32, n: u64, seed: u64) -> (u64, Vec<f64>) {
    let (mut ledger, group) = launch(l.clone(), Fixed::from_int(100_000_000), fx("0.5"));
    let inflation = InflationState::default();
    let mut rng = rng::agent_rng(seed, 0, 0);
    let current = l.value_at(from).unwrap().to_f64();
    let next = l.value_at(from + 1).unwrap().to_f64();
    let mut successes = 0;
    let mut changes = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let nft = ledger.mint_nft(GroupId(0), user(), from).unwrap();
        let out = rarity::attempt_upgrade(&mut ledger, &group, user(), nft, &inflation, &mut rng).unwrap();
        changes.push(match out.kind {
            UpgradeKind::Success { .. } => {
                successes += 1;
                next - current
            }
            UpgradeKind::Failure { reward } => reward.to_f64() - current,
        });
    }
    (successes, changes)
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn success_rate_matches_probability() {
    const N: u64 = 100_000;
    for (i, p) in ["0.1", "0.5", "0.999999"].iter().enumerate() {
        let l = ladder(&[(p, "1.0000001")]);
        let (successes, _) = attempt_many(&l, 0, N, i as u64);
        let p = fx(p).to_f64();
        let rate = successes as f64 / N as f64;
        let sigma = (p * (1.0 - p) / N as f64).sqrt();
        assert!((rate - p).abs() <= 3.0 * sigma, "p={p}: rate {rate}");
    }
}

#[test]
fn compliant_ladders_lose_value_on_average() {
    const N: u64 = 100_000;
    let ladders =
        [RarityLadder::at_ceiling(fx("10"), &[fx("0.5"), fx("0.2")], Fixed::ONE).unwrap(), ladder(&[("0.3", "1.9"), ("0.8", "1.04")])];
    for (k, l) in ladders.iter().enumerate() {
        assert!(rarity::check_inflation_condition(l, Fixed::ONE).is_safe());
        for from in 0..l.max_rarity() {
            let (_, changes) = attempt_many(l, from, N, 10 + k as u64);
            let (mean, se) = mean_se(&changes);
            assert!(mean <= 3.0 * se, "ladder {k} level {from}: mean {mean} se {se}");
        }
    }
}

#[test]
fn ten_failures_at_one_tenth_rebuild_the_upgrade() {
    let l = ladder(&[("0.1", "5")]);
    let (mut ledger, group) = launch(l.clone(), fx("1000"), fx("0.5"));
    let inflation = InflationState::default();
    let mut total = Fixed::ZERO;
    for _ in 0..10 {
        let nft = ledger.mint_nft(GroupId(0), user(), 0).unwrap();
        let out = rarity::attempt_upgrade_with_draw(&mut ledger, &group, user(), nft, &inflation, fx("0.5")).unwrap();
        let UpgradeKind::Failure { reward } = out.kind else { panic!("draw 0.5 must fail at p=0.1") };
        assert_eq!(reward, fx("5"));
        total = total.checked_add(reward).unwrap();
    }
    assert_eq!(total, l.value_at(1).unwrap());
    assert_eq!(ledger.balance(TokenId::Cp(GroupId(0)), user()), total);
}

#[test]
fn empty_reserve_blocks_the_attempt() {
    let l = ladder(&[("0.5", "1.2")]);
    let (mut ledger, group) = launch(l, fx("100"), fx("0.5"));
    drain_reserve(&mut ledger, &group, Fixed::ZERO);
    let nft = ledger.mint_nft(GroupId(0), user(), 0).unwrap();
    let before = ledger.to_json();
    let err = rarity::attempt_upgrade_with_draw(&mut ledger, &group, user(), nft, &InflationState::default(), fx("0.9")).unwrap_err();
    assert!(matches!(err, RewardError::InsufficientReserve { .. }));
    assert_eq!(before, ledger.to_json());
}
