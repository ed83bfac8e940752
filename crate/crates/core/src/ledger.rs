//! Token balances for every account, with an operation journal.
//!
//! Escrows, pools, vaults and treasuries are ordinary accounts here, so the
//! conservation law is a single statement: for every token, the sum of all
//! balances equals minted minus burned.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::fixed::{FixedAmount, FixedError};
use crate::ids::{AccountId, OwnerId, TokenId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("{account} holds {available} of {token}, needs {required}")]
    InsufficientBalance { account: AccountId, token: TokenId, available: FixedAmount, required: FixedAmount },
    #[error("negative amount {0}")]
    NegativeAmount(FixedAmount),
    #[error(transparent)]
    Arithmetic(#[from] FixedError),
}

/// One balance-changing operation, as recorded in the journal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum LedgerOp {
    Mint { token: TokenId, to: AccountId, amount: FixedAmount },
    Burn { token: TokenId, from: AccountId, amount: FixedAmount },
    Transfer { token: TokenId, from: AccountId, to: AccountId, amount: FixedAmount },
}

#[derive(Debug, Clone, Default)]
pub struct Ledger {
    balances: BTreeMap<(TokenId, AccountId), FixedAmount>,
    minted: BTreeMap<TokenId, FixedAmount>,
    burned: BTreeMap<TokenId, FixedAmount>,
    journal: Vec<LedgerOp>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn balance(&self, account: AccountId, token: TokenId) -> FixedAmount {
        self.balances.get(&(token, account)).copied().unwrap_or_default()
    }

    /// Sum of `token` held by every account sharing `owner`.
    pub fn owner_balance(&self, owner: OwnerId, token: TokenId) -> FixedAmount {
        self.balances
            .range((token, AccountId::MIN)..=(token, AccountId::MAX))
            .filter(|((_, a), _)| a.owner == owner)
            .map(|(_, v)| *v)
            .sum()
    }

    pub fn supply(&self, token: TokenId) -> FixedAmount {
        self.minted(token) - self.burned(token)
    }

    pub fn minted(&self, token: TokenId) -> FixedAmount {
        self.minted.get(&token).copied().unwrap_or_default()
    }

    pub fn burned(&self, token: TokenId) -> FixedAmount {
        self.burned.get(&token).copied().unwrap_or_default()
    }

    pub fn mint(&mut self, token: TokenId, to: AccountId, amount: FixedAmount) -> Result<(), LedgerError> {
        check_amount(amount)?;
        if amount.is_zero() {
            return Ok(());
        }
        let entry = self.minted.entry(token).or_default();
        *entry = entry.checked_add(amount)?;
        self.credit(token, to, amount)?;
        self.journal.push(LedgerOp::Mint { token, to, amount });
        Ok(())
    }

    pub fn burn(&mut self, token: TokenId, from: AccountId, amount: FixedAmount) -> Result<(), LedgerError> {
        check_amount(amount)?;
        if amount.is_zero() {
            return Ok(());
        }
        self.debit(token, from, amount)?;
        let entry = self.burned.entry(token).or_default();
        *entry = entry.checked_add(amount)?;
        self.journal.push(LedgerOp::Burn { token, from, amount });
        Ok(())
    }

    pub fn transfer(
        &mut self,
        token: TokenId,
        from: AccountId,
        to: AccountId,
        amount: FixedAmount,
    ) -> Result<(), LedgerError> {
        check_amount(amount)?;
        if amount.is_zero() || from == to {
            return Ok(());
        }
        self.debit(token, from, amount)?;
        self.credit(token, to, amount)?;
        self.journal.push(LedgerOp::Transfer { token, from, to, amount });
        Ok(())
    }

    /// Fails without side effects unless `account` holds at least `amount`.
    pub fn require(&self, account: AccountId, token: TokenId, amount: FixedAmount) -> Result<(), LedgerError> {
        let available = self.balance(account, token);
        if available < amount {
            return Err(LedgerError::InsufficientBalance { account, token, available, required: amount });
        }
        Ok(())
    }

    /// Applies a journaled operation, e.g. when replaying a trace.
    pub fn apply(&mut self, op: &LedgerOp) -> Result<(), LedgerError> {
        match *op {
            LedgerOp::Mint { token, to, amount } => self.mint(token, to, amount),
            LedgerOp::Burn { token, from, amount } => self.burn(token, from, amount),
            LedgerOp::Transfer { token, from, to, amount } => self.transfer(token, from, to, amount),
        }
    }

    /// Drains operations recorded since the last call.
    pub fn take_journal(&mut self) -> Vec<LedgerOp> {
        std::mem::take(&mut self.journal)
    }

    pub fn balances(&self) -> impl Iterator<Item = (TokenId, AccountId, FixedAmount)> + '_ {
        self.balances.iter().map(|((t, a), v)| (*t, *a, *v))
    }

    pub fn tokens(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.minted.keys().copied()
    }

    /// Checks Σ balances = minted − burned for every token.
    pub fn check_conservation(&self) -> Result<(), (TokenId, FixedAmount, FixedAmount)> {
        let mut sums: BTreeMap<TokenId, FixedAmount> = BTreeMap::new();
        for ((token, _), v) in &self.balances {
            *sums.entry(*token).or_default() += *v;
        }
        for token in self.minted.keys().chain(sums.keys()) {
            let held = sums.get(token).copied().unwrap_or_default();
            let supply = self.supply(*token);
            if held != supply {
                return Err((*token, held, supply));
            }
        }
        Ok(())
    }

    fn credit(&mut self, token: TokenId, to: AccountId, amount: FixedAmount) -> Result<(), LedgerError> {
        let entry = self.balances.entry((token, to)).or_default();
        *entry = entry.checked_add(amount)?;
        Ok(())
    }

    fn debit(&mut self, token: TokenId, from: AccountId, amount: FixedAmount) -> Result<(), LedgerError> {
        self.require(from, token, amount)?;
        let key = (token, from);
        let left = self.balances[&key] - amount;
        if left.is_zero() {
            self.balances.remove(&key);
        } else {
            self.balances.insert(key, left);
        }
        Ok(())
    }
}

fn check_amount(amount: FixedAmount) -> Result<(), LedgerError> {
    if amount.is_negative() {
        Err(LedgerError::NegativeAmount(amount))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transfers_conserve_supply() {
        let mut l = Ledger::new();
        let (t, a, b) = (TokenId(0), AccountId::solo(0), AccountId::solo(1));
        l.mint(t, a, FixedAmount::from_int(100)).unwrap();
        l.transfer(t, a, b, FixedAmount::from_int(40)).unwrap();
        l.burn(t, b, FixedAmount::from_int(10)).unwrap();
        assert_eq!(l.balance(a, t), FixedAmount::from_int(60));
        assert_eq!(l.balance(b, t), FixedAmount::from_int(30));
        assert_eq!(l.supply(t), FixedAmount::from_int(90));
        assert!(l.check_conservation().is_ok());
        assert_eq!(l.take_journal().len(), 3);
    }

    #[test]
    fn overdraft_is_rejected_without_side_effects() {
        let mut l = Ledger::new();
        let (t, a, b) = (TokenId(0), AccountId::solo(0), AccountId::solo(1));
        l.mint(t, a, FixedAmount::from_int(1)).unwrap();
        let err = l.transfer(t, a, b, FixedAmount::from_int(2)).unwrap_err();
        assert!(matches!(err, LedgerError::InsufficientBalance { .. }));
        assert_eq!(l.balance(a, t), FixedAmount::from_int(1));
        assert!(l.transfer(t, a, b, FixedAmount::from_int(-1)).is_err());
    }

    #[test]
    fn owner_balance_aggregates_related_accounts() {
        let mut l = Ledger::new();
        let t = TokenId(3);
        let whale = AccountId::solo(0);
        let sybil = AccountId::new(1, whale.owner);
        let other = AccountId::solo(2);
        for acct in [whale, sybil, other] {
            l.mint(t, acct, FixedAmount::from_int(10)).unwrap();
        }
        assert_eq!(l.owner_balance(whale.owner, t), FixedAmount::from_int(20));
        assert_eq!(l.owner_balance(other.owner, t), FixedAmount::from_int(10));
    }
}
