//! In-memory token and NFT accounting.
//!
//! Fungible balances are keyed by `(TokenId, AccountId)`. Burning anything
//! means moving it to [`AccountId::ZERO`], which can never send. Every
//! mutating call validates first and only then writes, so a failed call
//! leaves the ledger untouched.
//!
//! Snapshot documents (`Ledger::to_json` / `Ledger::from_json`) use these
//! field names:
//!
//! - `tokens`: `[{token, minted, burned}]`
//! - `balances`: `[{token, account, amount}]` (non-zero entries only)
//! - `groups`: `[{group, max_rarity, minted, burned, cells: [{rarity,
//!   circulating, minted, burned, upgraded_in, upgraded_out}]}]`
//! - `nfts`: `[{nft_id, group, rarity_index, owner, burned}]`
//!
//! Tokens are written as `GOV` or `CP:<group>`, accounts as `0x` followed by
//! 40 hex digits, amounts as decimal strings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::fixed::{Fixed, FixedError, TokenAmount};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("unknown token {0}")]
    UnknownToken(TokenId),
    #[error("token {0} already exists")]
    TokenExists(TokenId),
    #[error("unknown group {0}")]
    UnknownGroup(GroupId),
    #[error("group {0} already registered")]
    GroupExists(GroupId),
    #[error("rarity {rarity} outside ladder of group {group} (max {max})")]
    RarityOutOfRange { group: GroupId, rarity: u32, max: u32 },
    #[error("cannot mint to the zero address")]
    MintToZero,
    #[error("the zero address cannot send")]
    TransferFromZero,
    #[error("{account} holds {available} {token}, needs {needed}")]
    InsufficientBalance { token: TokenId, account: AccountId, needed: TokenAmount, available: TokenAmount },
    #[error("unknown nft #{0}")]
    UnknownNft(NftId),
    #[error("nft #{0} is already burned")]
    AlreadyBurned(NftId),
    #[error("{caller} does not own nft #{nft}")]
    NotOwner { nft: NftId, caller: AccountId },
    #[error("nft #{0} is at the top of its ladder")]
    TopRarity(NftId),
    #[error(transparent)]
    Arithmetic(#[from] FixedError),
    #[error("supply counters disagree with a full recount: {0}")]
    CounterMismatch(String),
    #[error("bad snapshot: {0}")]
    Snapshot(String),
}

pub type Result<T, E = LedgerError> = std::result::Result<T, E>;

/// Opaque 20-byte account identifier.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct AccountId(pub [u8; 20]);

impl AccountId {
    /// Burn sink.
    pub const ZERO: AccountId = AccountId([0; 20]);

    /// Deterministic address in a namespace `tag` (non-zero) with an index.
    pub fn derived(tag: u8, index: u64) -> Self {
        assert_ne!(tag, 0, "tag 0 is reserved for the burn sink");
        let mut bytes = [0u8; 20];
        bytes[0] = tag;
        bytes[12..].copy_from_slice(&index.to_be_bytes());
        AccountId(bytes)
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for AccountId {
    type Err = LedgerError;

    fn from_str(s: &str) -> Result<Self> {
        let body = s.strip_prefix("0x").unwrap_or(s);
        let mut bytes = [0u8; 20];
        hex::decode_to_slice(body, &mut bytes).map_err(|e| LedgerError::Snapshot(format!("account `{s}`: {e}")))?;
        Ok(AccountId(bytes))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupId(pub u32);

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NftId(pub u64);

impl fmt::Display for NftId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Fungible token: the shared governance token or a group's CP token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TokenId {
    Governance,
    Cp(GroupId),
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenId::Governance => f.write_str("GOV"),
            TokenId::Cp(g) => write!(f, "CP:{g}"),
        }
    }
}

impl FromStr for TokenId {
    type Err = LedgerError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "GOV" {
            return Ok(TokenId::Governance);
        }
        s.strip_prefix("CP:")
            .and_then(|g| g.parse().ok())
            .map(|g| TokenId::Cp(GroupId(g)))
            .ok_or_else(|| LedgerError::Snapshot(format!("token `{s}`")))
    }
}

macro_rules! serde_via_str {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

serde_via_str!(AccountId);
serde_via_str!(TokenId);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NftRecord {
    pub nft_id: NftId,
    pub group: GroupId,
    pub rarity_index: u32,
    pub owner: AccountId,
    pub burned: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSupply {
    pub minted: TokenAmount,
    pub burned: TokenAmount,
}

impl TokenSupply {
    pub fn circulating(&self) -> TokenAmount {
        // burned <= minted is maintained by construction
        self.minted.saturating_sub(self.burned)
    }
}

/// Counter for one `(group, rarity)` cell.
///
/// `circulating = minted + upgraded_in - upgraded_out - burned`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounter {
    pub circulating: u64,
    pub minted: u64,
    pub burned: u64,
    pub upgraded_in: u64,
    pub upgraded_out: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounters {
    pub max_rarity: u32,
    pub minted: u64,
    pub burned: u64,
    pub cells: Vec<CellCounter>,
}

impl GroupCounters {
    fn new(max_rarity: u32) -> Self {
        GroupCounters { max_rarity, minted: 0, burned: 0, cells: vec![CellCounter::default(); max_rarity as usize + 1] }
    }

    pub fn circulating(&self) -> u64 {
        self.cells.iter().map(|c| c.circulating).sum()
    }
}

/// Public supply counters, per token and per `(group, rarity)` cell.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SupplyCounters {
    pub tokens: BTreeMap<TokenId, TokenSupply>,
    pub groups: BTreeMap<GroupId, GroupCounters>,
}

#[derive(Clone, Debug, Default)]
pub struct Ledger {
    balances: BTreeMap<(TokenId, AccountId), TokenAmount>,
    counters: SupplyCounters,
    nfts: Vec<NftRecord>,
    owned: BTreeMap<AccountId, BTreeSet<NftId>>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create_token(&mut self, token: TokenId) -> Result<()> {
        if self.counters.tokens.contains_key(&token) {
            return Err(LedgerError::TokenExists(token));
        }
        self.counters.tokens.insert(token, TokenSupply::default());
        Ok(())
    }

    pub fn has_token(&self, token: TokenId) -> bool {
        self.counters.tokens.contains_key(&token)
    }

    pub fn register_group(&mut self, group: GroupId, max_rarity: u32) -> Result<()> {
        if self.counters.groups.contains_key(&group) {
            return Err(LedgerError::GroupExists(group));
        }
        self.counters.groups.insert(group, GroupCounters::new(max_rarity));
        Ok(())
    }

    pub fn balance(&self, token: TokenId, account: AccountId) -> TokenAmount {
        self.balances.get(&(token, account)).copied().unwrap_or_default()
    }

    fn set_balance(&mut self, token: TokenId, account: AccountId, amount: TokenAmount) {
        if amount.is_zero() {
            self.balances.remove(&(token, account));
        } else {
            self.balances.insert((token, account), amount);
        }
    }

    fn supply_mut(&mut self, token: TokenId) -> Result<&mut TokenSupply> {
        self.counters.tokens.get_mut(&token).ok_or(LedgerError::UnknownToken(token))
    }

    pub fn token_supply(&self, token: TokenId) -> Result<TokenSupply> {
        self.counters.tokens.get(&token).copied().ok_or(LedgerError::UnknownToken(token))
    }

    /// Minted minus burned for a fungible token.
    pub fn circulating_tokens(&self, token: TokenId) -> Result<TokenAmount> {
        self.token_supply(token).map(|s| s.circulating())
    }

    pub fn mint_tokens(&mut self, token: TokenId, to: AccountId, amount: TokenAmount) -> Result<()> {
        if to.is_zero() {
            return Err(LedgerError::MintToZero);
        }
        let supply = self.token_supply(token)?;
        let minted = supply.minted.checked_add(amount)?;
        let balance = self.balance(token, to).checked_add(amount)?;
        self.supply_mut(token)?.minted = minted;
        self.set_balance(token, to, balance);
        Ok(())
    }

    /// Moves `amount` of `token`. Sending to the zero address burns it.
    pub fn transfer_tokens(&mut self, token: TokenId, from: AccountId, to: AccountId, amount: TokenAmount) -> Result<()> {
        if from.is_zero() {
            return Err(LedgerError::TransferFromZero);
        }
        let supply = self.token_supply(token)?;
        let available = self.balance(token, from);
        if available < amount {
            return Err(LedgerError::InsufficientBalance { token, account: from, needed: amount, available });
        }
        if amount.is_zero() || from == to {
            return Ok(());
        }
        let to_balance = self.balance(token, to).checked_add(amount)?;
        let burned = if to.is_zero() { supply.burned.checked_add(amount)? } else { supply.burned };

        self.set_balance(token, from, available.checked_sub(amount)?);
        self.set_balance(token, to, to_balance);
        self.supply_mut(token)?.burned = burned;
        Ok(())
    }

    pub fn burn_tokens(&mut self, token: TokenId, from: AccountId, amount: TokenAmount) -> Result<()> {
        self.transfer_tokens(token, from, AccountId::ZERO, amount)
    }

    fn group(&self, group: GroupId) -> Result<&GroupCounters> {
        self.counters.groups.get(&group).ok_or(LedgerError::UnknownGroup(group))
    }

    pub fn group_counters(&self, group: GroupId) -> Result<&GroupCounters> {
        self.group(group)
    }

    pub fn max_rarity(&self, group: GroupId) -> Result<u32> {
        self.group(group).map(|g| g.max_rarity)
    }

    pub fn mint_nft(&mut self, group: GroupId, to: AccountId, rarity: u32) -> Result<NftId> {
        let counters = self.group(group)?;
        if rarity > counters.max_rarity {
            return Err(LedgerError::RarityOutOfRange { group, rarity, max: counters.max_rarity });
        }
        if to.is_zero() {
            return Err(LedgerError::MintToZero);
        }
        let id = NftId(self.nfts.len() as u64);
        self.nfts.push(NftRecord { nft_id: id, group, rarity_index: rarity, owner: to, burned: false });
        self.owned.entry(to).or_default().insert(id);
        let counters = self.counters.groups.get_mut(&group).expect("checked above");
        counters.minted += 1;
        let cell = &mut counters.cells[rarity as usize];
        cell.minted += 1;
        cell.circulating += 1;
        Ok(id)
    }

    pub fn nft(&self, id: NftId) -> Result<&NftRecord> {
        self.nfts.get(id.0 as usize).ok_or(LedgerError::UnknownNft(id))
    }

    pub fn nfts(&self) -> &[NftRecord] {
        &self.nfts
    }

    /// Unburned NFTs held by `owner`, in id order.
    pub fn nfts_of(&self, owner: AccountId) -> impl Iterator<Item = NftId> + '_ {
        self.owned.get(&owner).into_iter().flatten().copied()
    }

    fn check_owned(&self, caller: AccountId, id: NftId) -> Result<&NftRecord> {
        let nft = self.nft(id)?;
        if nft.burned {
            return Err(LedgerError::AlreadyBurned(id));
        }
        if nft.owner != caller {
            return Err(LedgerError::NotOwner { nft: id, caller });
        }
        Ok(nft)
    }

    /// Fails unless `caller` owns the live NFT `id`.
    pub fn ensure_owner(&self, caller: AccountId, id: NftId) -> Result<()> {
        self.check_owned(caller, id).map(|_| ())
    }

    pub fn burn_nft(&mut self, caller: AccountId, id: NftId) -> Result<()> {
        let nft = self.check_owned(caller, id)?;
        let (group, rarity) = (nft.group, nft.rarity_index);

        let record = &mut self.nfts[id.0 as usize];
        record.burned = true;
        record.owner = AccountId::ZERO;
        if let Some(set) = self.owned.get_mut(&caller) {
            set.remove(&id);
            if set.is_empty() {
                self.owned.remove(&caller);
            }
        }
        let counters = self.counters.groups.get_mut(&group).expect("nft group is registered");
        counters.burned += 1;
        let cell = &mut counters.cells[rarity as usize];
        cell.burned += 1;
        cell.circulating -= 1;
        Ok(())
    }

    /// Moves a live NFT one rarity level up. Returns the new rarity.
    pub fn upgrade_nft(&mut self, caller: AccountId, id: NftId) -> Result<u32> {
        let nft = self.check_owned(caller, id)?;
        let (group, rarity) = (nft.group, nft.rarity_index);
        let counters = self.group(group)?;
        if rarity >= counters.max_rarity {
            return Err(LedgerError::TopRarity(id));
        }
        self.nfts[id.0 as usize].rarity_index = rarity + 1;
        let counters = self.counters.groups.get_mut(&group).expect("checked above");
        let from = &mut counters.cells[rarity as usize];
        from.circulating -= 1;
        from.upgraded_out += 1;
        let to = &mut counters.cells[rarity as usize + 1];
        to.circulating += 1;
        to.upgraded_in += 1;
        Ok(rarity + 1)
    }

    pub fn transfer_nft(&mut self, caller: AccountId, id: NftId, to: AccountId) -> Result<()> {
        if to.is_zero() {
            return self.burn_nft(caller, id);
        }
        self.check_owned(caller, id)?;
        self.nfts[id.0 as usize].owner = to;
        if let Some(set) = self.owned.get_mut(&caller) {
            set.remove(&id);
            if set.is_empty() {
                self.owned.remove(&caller);
            }
        }
        self.owned.entry(to).or_default().insert(id);
        Ok(())
    }

    pub fn circulating_nfts(&self, group: GroupId, rarity: u32) -> Result<u64> {
        let counters = self.group(group)?;
        counters.cells.get(rarity as usize).map(|c| c.circulating).ok_or(LedgerError::RarityOutOfRange {
            group,
            rarity,
            max: counters.max_rarity,
        })
    }

    pub fn counters(&self) -> &SupplyCounters {
        &self.counters
    }

    /// Sum of every balance of `token`, the zero address included.
    pub fn total_balance(&self, token: TokenId) -> Result<TokenAmount> {
        self.balances
            .range((token, AccountId::ZERO)..=(token, AccountId([0xff; 20])))
            .try_fold(Fixed::ZERO, |acc, (_, v)| acc.checked_add(*v))
            .map_err(Into::into)
    }

    /// Rebuilds every counter from balances and NFT records.
    ///
    /// Upgrade history is not recoverable from the records themselves, so
    /// `upgraded_in`/`upgraded_out` are copied from the maintained counters
    /// and only checked for consistency with the other fields.
    pub fn recount(&self) -> Result<SupplyCounters> {
        let mut out = SupplyCounters::default();
        for &token in self.counters.tokens.keys() {
            let total = self.total_balance(token)?;
            let burned = self.balance(token, AccountId::ZERO);
            out.tokens.insert(token, TokenSupply { minted: total, burned });
        }
        for (&group, maintained) in &self.counters.groups {
            let mut g = GroupCounters::new(maintained.max_rarity);
            for (cell, m) in g.cells.iter_mut().zip(&maintained.cells) {
                cell.upgraded_in = m.upgraded_in;
                cell.upgraded_out = m.upgraded_out;
            }
            out.groups.insert(group, g);
        }
        for nft in &self.nfts {
            let g = out.groups.get_mut(&nft.group).ok_or(LedgerError::UnknownGroup(nft.group))?;
            let idx = nft.rarity_index as usize;
            if idx >= g.cells.len() {
                return Err(LedgerError::CounterMismatch(format!("nft #{} rarity {} beyond ladder", nft.nft_id, idx)));
            }
            g.minted += 1;
            if nft.burned {
                g.burned += 1;
                g.cells[idx].burned += 1;
            } else {
                g.cells[idx].circulating += 1;
            }
        }
        // Per-cell mint counts follow from the flow identity of each cell.
        for g in out.groups.values_mut() {
            for cell in &mut g.cells {
                let inflow = cell.circulating + cell.burned + cell.upgraded_out;
                cell.minted = inflow
                    .checked_sub(cell.upgraded_in)
                    .ok_or_else(|| LedgerError::CounterMismatch("upgrade flow exceeds cell population".into()))?;
            }
        }
        Ok(out)
    }

    /// Checks the maintained counters against [`Ledger::recount`] and the
    /// burn/ownership invariants of every NFT record.
    pub fn verify(&self) -> Result<()> {
        let scanned = self.recount()?;
        if scanned != self.counters {
            return Err(LedgerError::CounterMismatch(format!("maintained {:?} vs scanned {:?}", self.counters, scanned)));
        }
        for g in self.counters.groups.values() {
            if g.circulating() + g.burned != g.minted {
                return Err(LedgerError::CounterMismatch("circulating + burned != minted".into()));
            }
        }
        for nft in &self.nfts {
            let indexed = self.owned.get(&nft.owner).is_some_and(|s| s.contains(&nft.nft_id));
            if nft.burned != nft.owner.is_zero() || nft.burned == indexed {
                return Err(LedgerError::CounterMismatch(format!("nft #{} ownership state", nft.nft_id)));
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            tokens: self.counters.tokens.iter().map(|(&token, s)| TokenEntry { token, minted: s.minted, burned: s.burned }).collect(),
            balances: self.balances.iter().map(|(&(token, account), &amount)| BalanceEntry { token, account, amount }).collect(),
            groups: self
                .counters
                .groups
                .iter()
                .map(|(&group, g)| GroupEntry {
                    group,
                    max_rarity: g.max_rarity,
                    minted: g.minted,
                    burned: g.burned,
                    cells: g.cells.iter().enumerate().map(|(i, c)| CellEntry { rarity: i as u32, counter: *c }).collect(),
                })
                .collect(),
            nfts: self.nfts.clone(),
        }
    }

    /// Rebuilds a ledger and rejects documents whose counters do not match
    /// their own records.
    pub fn from_snapshot(snap: Snapshot) -> Result<Self> {
        let mut ledger = Ledger::default();
        for t in &snap.tokens {
            ledger.create_token(t.token)?;
            *ledger.supply_mut(t.token)? = TokenSupply { minted: t.minted, burned: t.burned };
        }
        for b in &snap.balances {
            if !ledger.has_token(b.token) {
                return Err(LedgerError::UnknownToken(b.token));
            }
            if ledger.balances.insert((b.token, b.account), b.amount).is_some() {
                return Err(LedgerError::Snapshot(format!("duplicate balance {} {}", b.token, b.account)));
            }
        }
        for g in &snap.groups {
            ledger.register_group(g.group, g.max_rarity)?;
            let counters = ledger.counters.groups.get_mut(&g.group).expect("just registered");
            counters.minted = g.minted;
            counters.burned = g.burned;
            if g.cells.len() != counters.cells.len() {
                return Err(LedgerError::Snapshot(format!("group {} cell count", g.group)));
            }
            for (i, c) in g.cells.iter().enumerate() {
                if c.rarity as usize != i {
                    return Err(LedgerError::Snapshot(format!("group {} cell order", g.group)));
                }
                counters.cells[i] = c.counter;
            }
        }
        for (i, nft) in snap.nfts.into_iter().enumerate() {
            if nft.nft_id.0 != i as u64 {
                return Err(LedgerError::Snapshot(format!("nft ids must be dense, got #{}", nft.nft_id)));
            }
            if !nft.burned {
                ledger.owned.entry(nft.owner).or_default().insert(nft.nft_id);
            }
            ledger.nfts.push(nft);
        }
        ledger.verify()?;
        Ok(ledger)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.snapshot()).expect("snapshot serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let snap: Snapshot = serde_json::from_str(s).map_err(|e| LedgerError::Snapshot(e.to_string()))?;
        Self::from_snapshot(snap)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenEntry {
    pub token: TokenId,
    pub minted: TokenAmount,
    pub burned: TokenAmount,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceEntry {
    pub token: TokenId,
    pub account: AccountId,
    pub amount: TokenAmount,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellEntry {
    pub rarity: u32,
    #[serde(flatten)]
    pub counter: CellCounter,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupEntry {
    pub group: GroupId,
    pub max_rarity: u32,
    pub minted: u64,
    pub burned: u64,
    pub cells: Vec<CellEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub tokens: Vec<TokenEntry>,
    pub balances: Vec<BalanceEntry>,
    pub groups: Vec<GroupEntry>,
    pub nfts: Vec<NftRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;

    const G: GroupId = GroupId(0);

    fn user(i: u64) -> AccountId {
        AccountId::derived(1, i)
    }

    fn fx(s: &str) -> Fixed {
        s.parse().unwrap()
    }

    fn ledger_with_group(max: u32) -> Ledger {
        let mut l = Ledger::new();
        l.register_group(G, max).unwrap();
        l.create_token(TokenId::Cp(G)).unwrap();
        l.create_token(TokenId::Governance).unwrap();
        l
    }

    #[test]
    fn mint_counts() {
        let mut l = ledger_with_group(3);
        assert_eq!(l.circulating_nfts(G, 0).unwrap(), 0);
        l.mint_nft(G, user(1), 0).unwrap();
        assert_eq!(l.circulating_nfts(G, 0).unwrap(), 1);
        for _ in 0..9 {
            l.mint_nft(G, user(1), 0).unwrap();
        }
        assert_eq!(l.circulating_nfts(G, 0).unwrap(), 10);
    }

    #[test]
    fn mint_errors() {
        let mut l = ledger_with_group(3);
        assert_eq!(l.mint_nft(G, user(1), 5), Err(LedgerError::RarityOutOfRange { group: G, rarity: 5, max: 3 }));
        assert_eq!(l.mint_nft(GroupId(9), user(1), 0), Err(LedgerError::UnknownGroup(GroupId(9))));
        assert_eq!(l.mint_nft(G, AccountId::ZERO, 0), Err(LedgerError::MintToZero));
        assert!(l.nfts().is_empty());
    }

    #[test]
    fn burn_counts_and_double_burn() {
        let mut l = ledger_with_group(1);
        let ids: Vec<_> = (0..10).map(|_| l.mint_nft(G, user(1), 0).unwrap()).collect();
        l.burn_nft(user(1), ids[0]).unwrap();
        assert_eq!(l.circulating_nfts(G, 0).unwrap(), 9);
        assert_eq!(l.burn_nft(user(1), ids[0]), Err(LedgerError::AlreadyBurned(ids[0])));
        let rec = l.nft(ids[0]).unwrap();
        assert!(rec.burned && rec.owner.is_zero());
        assert_eq!(l.burn_nft(user(2), ids[1]), Err(LedgerError::NotOwner { nft: ids[1], caller: user(2) }));
        for id in &ids[1..] {
            l.burn_nft(user(1), *id).unwrap();
        }
        assert_eq!(l.circulating_nfts(G, 0).unwrap(), 0);
        assert_eq!(l.group_counters(G).unwrap().burned, 10);
        l.verify().unwrap();
    }

    #[test]
    fn mint_ten_burn_three() {
        let mut l = ledger_with_group(0);
        let ids: Vec<_> = (0..10).map(|_| l.mint_nft(G, user(1), 0).unwrap()).collect();
        for id in &ids[..3] {
            l.burn_nft(user(1), *id).unwrap();
        }
        assert_eq!(l.circulating_nfts(G, 0).unwrap(), 7);
    }

    #[test]
    fn fresh_ledger_is_empty() {
        let l = ledger_with_group(2);
        assert_eq!(l.circulating_nfts(G, 0).unwrap(), 0);
        assert_eq!(l.circulating_tokens(TokenId::Cp(G)).unwrap(), Fixed::ZERO);
        assert!(l.circulating_tokens(TokenId::Cp(GroupId(4))).is_err());
    }

    #[test]
    fn upgrade_moves_between_adjacent_cells() {
        let mut l = ledger_with_group(1);
        let id = l.mint_nft(G, user(1), 0).unwrap();
        assert_eq!(l.upgrade_nft(user(1), id).unwrap(), 1);
        assert_eq!(l.circulating_nfts(G, 0).unwrap(), 0);
        assert_eq!(l.circulating_nfts(G, 1).unwrap(), 1);
        assert_eq!(l.upgrade_nft(user(1), id), Err(LedgerError::TopRarity(id)));
        l.verify().unwrap();
    }

    #[test]
    fn transfers() {
        let mut l = ledger_with_group(0);
        let cp = TokenId::Cp(G);
        l.mint_tokens(cp, user(1), fx("10")).unwrap();

        l.transfer_tokens(cp, user(1), user(2), Fixed::ZERO).unwrap();
        assert_eq!(l.balance(cp, user(1)), fx("10"));
        assert_eq!(l.balance(cp, user(2)), Fixed::ZERO);

        l.transfer_tokens(cp, user(1), user(2), fx("10")).unwrap();
        assert_eq!(l.balance(cp, user(1)), Fixed::ZERO);

        l.transfer_tokens(cp, user(2), AccountId::ZERO, fx("4")).unwrap();
        assert_eq!(l.circulating_tokens(cp).unwrap(), fx("6"));
        assert_eq!(l.total_balance(cp).unwrap(), fx("10"));

        assert_eq!(l.transfer_tokens(cp, AccountId::ZERO, user(1), fx("1")), Err(LedgerError::TransferFromZero));
        assert!(matches!(l.transfer_tokens(cp, user(2), user(1), fx("7")), Err(LedgerError::InsufficientBalance { .. })));
        assert_eq!(l.balance(cp, user(2)), fx("6"));
        l.verify().unwrap();
    }

    #[test]
    fn snapshot_roundtrip_and_tamper_detection() {
        let mut l = ledger_with_group(2);
        l.mint_tokens(TokenId::Cp(G), user(1), fx("3.5")).unwrap();
        let a = l.mint_nft(G, user(1), 0).unwrap();
        let b = l.mint_nft(G, user(2), 1).unwrap();
        l.upgrade_nft(user(1), a).unwrap();
        l.burn_nft(user(2), b).unwrap();

        let json = l.to_json();
        let back = Ledger::from_json(&json).unwrap();
        assert_eq!(back.to_json(), json);
        assert_eq!(back.counters(), l.counters());

        let tampered = json.replacen("\"circulating\": 1", "\"circulating\": 2", 1);
        assert!(Ledger::from_json(&tampered).is_err());
    }

    #[test]
    fn snapshot_field_names() {
        let mut l = ledger_with_group(0);
        l.mint_nft(G, user(1), 0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&l.to_json()).unwrap();
        let nft = &v["nfts"][0];
        for key in ["nft_id", "group", "rarity_index", "owner", "burned"] {
            assert!(nft.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["groups"][0]["cells"][0]["circulating"], 1);
        assert_eq!(v["tokens"][0]["token"], "GOV");
    }
}
