//! Shared machinery for bonded claim games: deposit-weighted vote books,
//! per-case escrow tallies and pro-rata payouts.

use serde::{Deserialize, Serialize};

use crate::fixed::{pro_rata, FixedAmount, FixedError};
use crate::ids::{AccountId, BlockTime, TokenId};
use crate::ledger::{Ledger, LedgerError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DisputeError {
    #[error("invalid parameter: {0}")]
    Parameter(&'static str),
    #[error("unknown case {0}")]
    Unknown(u64),
    #[error("voting window is closed at height {now}")]
    WindowClosed { now: u64 },
    #[error("cannot resolve before height {ready_at}, now {now}")]
    Early { now: u64, ready_at: u64 },
    #[error("{0} has already voted")]
    DoubleVote(AccountId),
    #[error("deposit {deposit} below minimum {minimum}")]
    DepositTooSmall { deposit: FixedAmount, minimum: FixedAmount },
    #[error("bond fraction {fraction} below floor {floor}")]
    BondTooSmall { fraction: FixedAmount, floor: FixedAmount },
    #[error("conflict: {0}")]
    Conflict(&'static str),
    #[error("invalid state: {0}")]
    State(&'static str),
    #[error("{0} is not a party to this case")]
    NotParty(AccountId),
    #[error("escalation limit of {0} reached")]
    FinalLevel(u32),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Arithmetic(#[from] FixedError),
}

/// Which way a vote leans on the claim under dispute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Supports the claim.
    For,
    /// Opposes the claim.
    Against,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub voter: AccountId,
    pub deposit: FixedAmount,
    pub side: Side,
}

/// Votes accepted in `[opens, closes)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteBook {
    pub opens: BlockTime,
    pub closes: BlockTime,
    pub votes: Vec<Vote>,
}

impl VoteBook {
    pub fn new(opens: BlockTime, closes: BlockTime) -> Self {
        VoteBook { opens, closes, votes: Vec::new() }
    }

    pub fn is_open(&self, now: BlockTime) -> bool {
        now >= self.opens && now < self.closes
    }

    /// Checks a vote without recording it.
    pub fn check(
        &self,
        voter: AccountId,
        deposit: FixedAmount,
        now: BlockTime,
        z_min: FixedAmount,
    ) -> Result<(), DisputeError> {
        if !self.is_open(now) {
            return Err(DisputeError::WindowClosed { now: now.height });
        }
        if deposit < z_min || !deposit.is_positive() {
            return Err(DisputeError::DepositTooSmall { deposit, minimum: z_min });
        }
        if self.votes.iter().any(|v| v.voter == voter) {
            return Err(DisputeError::DoubleVote(voter));
        }
        Ok(())
    }

    pub fn mass(&self, side: Side) -> FixedAmount {
        self.votes.iter().filter(|v| v.side == side).map(|v| v.deposit).sum()
    }

    /// The claim prevails only with strictly more deposit behind it.
    pub fn outcome(&self) -> Side {
        if self.mass(Side::For) > self.mass(Side::Against) {
            Side::For
        } else {
            Side::Against
        }
    }

    pub fn voters(&self, side: Side) -> impl Iterator<Item = &Vote> {
        self.votes.iter().filter(move |v| v.side == side)
    }
}

/// Running totals of what a case has put into and taken out of escrow.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscrowTally {
    pub escrowed: FixedAmount,
    pub released: FixedAmount,
}

impl EscrowTally {
    pub fn outstanding(&self) -> FixedAmount {
        self.escrowed - self.released
    }

    pub fn is_settled(&self) -> bool {
        self.escrowed == self.released
    }

    /// Reassigns escrowed funds to another case without moving tokens.
    pub fn shift(&mut self, to: &mut EscrowTally, amount: FixedAmount) -> Result<(), DisputeError> {
        if amount > self.outstanding() {
            return Err(DisputeError::State("shift exceeds escrowed amount"));
        }
        self.released = self.released.checked_add(amount)?;
        to.escrowed = to.escrowed.checked_add(amount)?;
        Ok(())
    }
}

/// Why a payout was made.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoutReason {
    BondReturn,
    DepositReturn,
    SlashShare,
    Compensation,
    Forfeit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payout {
    pub to: AccountId,
    pub amount: FixedAmount,
    pub reason: PayoutReason,
}

/// Moves tokens between participants and one escrow account while keeping
/// a case's tally.
pub struct EscrowDesk<'a> {
    pub ledger: &'a mut Ledger,
    pub escrow: AccountId,
    pub token: TokenId,
    pub payouts: Vec<Payout>,
}

impl<'a> EscrowDesk<'a> {
    pub fn new(ledger: &'a mut Ledger, escrow: AccountId, token: TokenId) -> Self {
        EscrowDesk { ledger, escrow, token, payouts: Vec::new() }
    }

    pub fn lock(&mut self, tally: &mut EscrowTally, from: AccountId, amount: FixedAmount) -> Result<(), DisputeError> {
        self.ledger.transfer(self.token, from, self.escrow, amount)?;
        tally.escrowed = tally.escrowed.checked_add(amount)?;
        Ok(())
    }

    pub fn release(
        &mut self,
        tally: &mut EscrowTally,
        to: AccountId,
        amount: FixedAmount,
        reason: PayoutReason,
    ) -> Result<(), DisputeError> {
        if amount.is_zero() {
            return Ok(());
        }
        if amount > tally.outstanding() {
            return Err(DisputeError::State("release exceeds escrowed amount"));
        }
        self.ledger.transfer(self.token, self.escrow, to, amount)?;
        tally.released = tally.released.checked_add(amount)?;
        self.payouts.push(Payout { to, amount, reason });
        Ok(())
    }

    /// Splits `total` by weight, giving the rounding remainder to `primary`.
    pub fn release_pro_rata(
        &mut self,
        tally: &mut EscrowTally,
        total: FixedAmount,
        recipients: &[(AccountId, FixedAmount)],
        primary: AccountId,
        reason: PayoutReason,
    ) -> Result<(), DisputeError> {
        for (to, amount) in split(total, recipients, primary)? {
            self.release(tally, to, amount, reason)?;
        }
        Ok(())
    }
}

/// Pro-rata split with the remainder credited to `primary`.
pub fn split(
    total: FixedAmount,
    recipients: &[(AccountId, FixedAmount)],
    primary: AccountId,
) -> Result<Vec<(AccountId, FixedAmount)>, DisputeError> {
    let weights: Vec<FixedAmount> = recipients.iter().map(|(_, w)| *w).collect();
    let (shares, rest) = pro_rata(total, &weights)?;
    let mut out: Vec<(AccountId, FixedAmount)> = recipients.iter().map(|(a, _)| *a).zip(shares).collect();
    if rest.is_positive() {
        match out.iter_mut().find(|(a, _)| *a == primary) {
            Some(entry) => entry.1 += rest,
            None => out.push((primary, rest)),
        }
    }
    Ok(out)
}
