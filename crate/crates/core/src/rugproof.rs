//! Bonded token issuance and the rug-claim game.
//!
//! An issuer escrows a fraction of the issued supply. A claimant alleging a
//! rug escrows a bond of its own, and voters back either side with deposits.
//! Bonds and deposits are all denominated in the issued token.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dispute::{DisputeError, EscrowDesk, EscrowTally, Payout, PayoutReason, Side, Vote, VoteBook};
use crate::fixed::FixedAmount;
use crate::ids::{AccountId, BlockTime, TokenId};
use crate::ledger::Ledger;

fn one_percent() -> FixedAmount {
    FixedAmount::from_raw(10_000_000)
}

fn half() -> FixedAmount {
    FixedAmount::from_raw(500_000_000)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SlashParams {
    /// Fraction α of the issuer bond slashed when a rug is upheld.
    pub alpha_slash: FixedAmount,
    /// Fraction γ of the claim bond slashed when a claim fails.
    pub gamma_slash: FixedAmount,
    /// Share of the slashed issuer bond paid to a successful claimant.
    #[serde(default = "half")]
    pub claimant_share: FixedAmount,
    /// Minimum vote deposit z.
    pub z_min: FixedAmount,
    pub challenge_blocks: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RugproofParams {
    pub slash: SlashParams,
    /// Smallest acceptable issuer bond fraction.
    #[serde(default = "one_percent")]
    pub x_min: FixedAmount,
    /// Losing voters forfeit their deposits to the winning voters.
    #[serde(default)]
    pub forfeit_losing_votes: bool,
}

impl RugproofParams {
    pub fn validate(&self) -> Result<(), DisputeError> {
        let s = &self.slash;
        for f in [s.alpha_slash, s.gamma_slash, s.claimant_share, self.x_min] {
            if f.is_negative() || f > FixedAmount::ONE {
                return Err(DisputeError::Parameter("fractions must lie in [0, 1]"));
            }
        }
        if s.z_min.is_negative() {
            return Err(DisputeError::Parameter("z_min must be non-negative"));
        }
        if s.challenge_blocks == 0 {
            return Err(DisputeError::Parameter("challenge_blocks must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssuanceStatus {
    Active,
    Slashed,
    Released,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BondedIssuance {
    pub id: u64,
    pub issuer: AccountId,
    pub token: TokenId,
    pub total_issued: FixedAmount,
    pub bond_fraction: FixedAmount,
    pub bond: FixedAmount,
    pub status: IssuanceStatus,
    pub escrow: EscrowTally,
    pub open_claim: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimStatus {
    Voting,
    UpheldRug,
    RejectedFraud,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RugClaim {
    pub id: u64,
    pub claimant: AccountId,
    pub issuance: u64,
    pub claim_bond: FixedAmount,
    pub opened_at: BlockTime,
    pub challenge_end: BlockTime,
    pub votes: VoteBook,
    pub status: ClaimStatus,
    pub escrow: EscrowTally,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub claim: u64,
    pub upheld: bool,
    pub slashed: FixedAmount,
    pub payouts: Vec<Payout>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rugproof {
    pub params: RugproofParams,
    pub escrow: AccountId,
    /// Receives slashes nobody is entitled to.
    pub treasury: AccountId,
    #[serde(with = "crate::serde_pairs")]
    issuances: BTreeMap<u64, BondedIssuance>,
    #[serde(with = "crate::serde_pairs")]
    claims: BTreeMap<u64, RugClaim>,
    next_id: u64,
}

impl Rugproof {
    pub fn new(params: RugproofParams, escrow: AccountId, treasury: AccountId) -> Result<Self, DisputeError> {
        params.validate()?;
        Ok(Rugproof { params, escrow, treasury, issuances: BTreeMap::new(), claims: BTreeMap::new(), next_id: 0 })
    }

    fn fresh_id(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id
    }

    pub fn issuance(&self, id: u64) -> Result<&BondedIssuance, DisputeError> {
        self.issuances.get(&id).ok_or(DisputeError::Unknown(id))
    }

    pub fn claim(&self, id: u64) -> Result<&RugClaim, DisputeError> {
        self.claims.get(&id).ok_or(DisputeError::Unknown(id))
    }

    pub fn issuances(&self) -> impl Iterator<Item = &BondedIssuance> {
        self.issuances.values()
    }

    pub fn claims(&self) -> impl Iterator<Item = &RugClaim> {
        self.claims.values()
    }

    /// Escrows `x · T_I` of the issued token from the issuer.
    pub fn issue_bonded_token(
        &mut self,
        ledger: &mut Ledger,
        issuer: AccountId,
        token: TokenId,
        total_issued: FixedAmount,
        bond_fraction: FixedAmount,
    ) -> Result<u64, DisputeError> {
        if !total_issued.is_positive() {
            return Err(DisputeError::Parameter("total_issued must be positive"));
        }
        if bond_fraction < self.params.x_min || !bond_fraction.is_positive() {
            return Err(DisputeError::BondTooSmall { fraction: bond_fraction, floor: self.params.x_min });
        }
        if bond_fraction > FixedAmount::ONE {
            return Err(DisputeError::Parameter("bond fraction must not exceed 1"));
        }
        let bond = total_issued.checked_mul(bond_fraction)?;
        let mut escrow = EscrowTally::default();
        EscrowDesk::new(ledger, self.escrow, token).lock(&mut escrow, issuer, bond)?;
        let id = self.fresh_id();
        self.issuances.insert(
            id,
            BondedIssuance {
                id,
                issuer,
                token,
                total_issued,
                bond_fraction,
                bond,
                status: IssuanceStatus::Active,
                escrow,
                open_claim: None,
            },
        );
        Ok(id)
    }

    /// Opens a claim, escrowing `y · T_I` from the claimant.
    pub fn submit_rug_claim(
        &mut self,
        ledger: &mut Ledger,
        user: AccountId,
        issuance: u64,
        claim_fraction: FixedAmount,
        now: BlockTime,
    ) -> Result<u64, DisputeError> {
        if claim_fraction.is_negative() || claim_fraction > FixedAmount::ONE {
            return Err(DisputeError::Parameter("claim fraction must lie in [0, 1]"));
        }
        let iss = self.issuances.get(&issuance).ok_or(DisputeError::Unknown(issuance))?;
        if iss.status != IssuanceStatus::Active {
            return Err(DisputeError::State("issuance is not active"));
        }
        if iss.open_claim.is_some() {
            return Err(DisputeError::Conflict("issuance already has an open claim"));
        }
        if user == iss.issuer {
            return Err(DisputeError::Conflict("issuer cannot claim against itself"));
        }
        let claim_bond = iss.total_issued.checked_mul(claim_fraction)?;
        let token = iss.token;
        let mut escrow = EscrowTally::default();
        EscrowDesk::new(ledger, self.escrow, token).lock(&mut escrow, user, claim_bond)?;
        let id = self.fresh_id();
        let challenge_end = now.plus(self.params.slash.challenge_blocks);
        self.claims.insert(
            id,
            RugClaim {
                id,
                claimant: user,
                issuance,
                claim_bond,
                opened_at: now,
                challenge_end,
                votes: VoteBook::new(now, challenge_end),
                status: ClaimStatus::Voting,
                escrow,
            },
        );
        self.issuances.get_mut(&issuance).expect("checked").open_claim = Some(id);
        Ok(id)
    }

    /// Records a deposit-backed vote. `Side::For` means the issuer rugged.
    pub fn cast_vote(
        &mut self,
        ledger: &mut Ledger,
        claim: u64,
        voter: AccountId,
        deposit: FixedAmount,
        side: Side,
        now: BlockTime,
    ) -> Result<(), DisputeError> {
        let c = self.claims.get(&claim).ok_or(DisputeError::Unknown(claim))?;
        if c.status != ClaimStatus::Voting {
            return Err(DisputeError::State("claim is resolved"));
        }
        let iss = &self.issuances[&c.issuance];
        if voter == iss.issuer {
            return Err(DisputeError::Conflict("issuer cannot vote on its own claim"));
        }
        c.votes.check(voter, deposit, now, self.params.slash.z_min)?;
        let token = iss.token;
        let c = self.claims.get_mut(&claim).expect("checked");
        EscrowDesk::new(ledger, self.escrow, token).lock(&mut c.escrow, voter, deposit)?;
        c.votes.votes.push(Vote { voter, deposit, side });
        Ok(())
    }

    pub fn resolve_claim(
        &mut self,
        ledger: &mut Ledger,
        claim: u64,
        now: BlockTime,
    ) -> Result<Resolution, DisputeError> {
        let c = self.claims.get(&claim).ok_or(DisputeError::Unknown(claim))?;
        if c.status != ClaimStatus::Voting {
            return Err(DisputeError::State("claim is resolved"));
        }
        if now < c.challenge_end {
            return Err(DisputeError::Early { now: now.height, ready_at: c.challenge_end.height });
        }
        let mut c = self.claims.remove(&claim).expect("checked");
        let mut iss = self.issuances.remove(&c.issuance).expect("claim references issuance");
        let p = &self.params;
        let winner = c.votes.outcome();
        let upheld = winner == Side::For;
        let mut desk = EscrowDesk::new(ledger, self.escrow, iss.token);

        let winners: Vec<(AccountId, FixedAmount)> = c.votes.voters(winner).map(|v| (v.voter, v.deposit)).collect();
        let slashed = if upheld {
            let slash = iss.bond.checked_mul(p.slash.alpha_slash)?;
            let to_claimant = slash.checked_mul(p.slash.claimant_share)?;
            desk.release(&mut iss.escrow, c.claimant, to_claimant, PayoutReason::SlashShare)?;
            desk.release_pro_rata(
                &mut iss.escrow,
                slash - to_claimant,
                &winners,
                c.claimant,
                PayoutReason::SlashShare,
            )?;
            let rest = iss.escrow.outstanding();
            desk.release(&mut iss.escrow, iss.issuer, rest, PayoutReason::BondReturn)?;
            desk.release(&mut c.escrow, c.claimant, c.claim_bond, PayoutReason::BondReturn)?;
            iss.status = IssuanceStatus::Slashed;
            c.status = ClaimStatus::UpheldRug;
            slash
        } else {
            let slash = c.claim_bond.checked_mul(p.slash.gamma_slash)?;
            let primary = winners.first().map(|(a, _)| *a).unwrap_or(self.treasury);
            desk.release_pro_rata(&mut c.escrow, slash, &winners, primary, PayoutReason::SlashShare)?;
            desk.release(&mut c.escrow, c.claimant, c.claim_bond - slash, PayoutReason::BondReturn)?;
            c.status = ClaimStatus::RejectedFraud;
            slash
        };

        let losers: Vec<Vote> = c.votes.voters(opposite(winner)).copied().collect();
        let forfeited: FixedAmount =
            if p.forfeit_losing_votes { losers.iter().map(|v| v.deposit).sum() } else { FixedAmount::ZERO };
        for v in c.votes.votes.iter() {
            let back = if p.forfeit_losing_votes && v.side != winner { FixedAmount::ZERO } else { v.deposit };
            desk.release(&mut c.escrow, v.voter, back, PayoutReason::DepositReturn)?;
        }
        if forfeited.is_positive() {
            let primary = if upheld { c.claimant } else { winners.first().map(|(a, _)| *a).unwrap_or(self.treasury) };
            desk.release_pro_rata(&mut c.escrow, forfeited, &winners, primary, PayoutReason::Forfeit)?;
        }
        let payouts = desk.payouts;
        debug_assert!(c.escrow.is_settled());
        iss.open_claim = None;
        self.issuances.insert(iss.id, iss);
        self.claims.insert(c.id, c);
        Ok(Resolution { claim, upheld, slashed, payouts })
    }

    /// Returns the bond of an active issuance with no open claim.
    pub fn release_issuance(&mut self, ledger: &mut Ledger, id: u64) -> Result<FixedAmount, DisputeError> {
        let iss = self.issuances.get_mut(&id).ok_or(DisputeError::Unknown(id))?;
        if iss.status != IssuanceStatus::Active || iss.open_claim.is_some() {
            return Err(DisputeError::State("issuance cannot be released"));
        }
        let amount = iss.escrow.outstanding();
        EscrowDesk::new(ledger, self.escrow, iss.token).release(
            &mut iss.escrow,
            iss.issuer,
            amount,
            PayoutReason::BondReturn,
        )?;
        iss.status = IssuanceStatus::Released;
        Ok(amount)
    }

    /// Resolves every claim whose window has closed, in id order.
    pub fn tick(&mut self, ledger: &mut Ledger, now: BlockTime) -> Vec<Result<Resolution, DisputeError>> {
        let due: Vec<u64> = self
            .claims
            .values()
            .filter(|c| c.status == ClaimStatus::Voting && now >= c.challenge_end && c.opened_at.chain == now.chain)
            .map(|c| c.id)
            .collect();
        due.into_iter().map(|id| self.resolve_claim(ledger, id, now)).collect()
    }
}

fn opposite(side: Side) -> Side {
    match side {
        Side::For => Side::Against,
        Side::Against => Side::For,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::ChainId;

    fn fa(s: &str) -> FixedAmount {
        FixedAmount::parse(s).unwrap()
    }

    fn at(h: u64) -> BlockTime {
        BlockTime::new(ChainId(0), h)
    }

    const TOKEN: TokenId = TokenId(7);
    const ISSUER: AccountId = AccountId::solo(1);
    const CLAIMANT: AccountId = AccountId::solo(2);
    const ESCROW: AccountId = AccountId::solo(90);
    const TREASURY: AccountId = AccountId::solo(91);

    fn setup(forfeit: bool) -> (Rugproof, Ledger) {
        let params = RugproofParams {
            slash: SlashParams {
                alpha_slash: fa("0.5"),
                gamma_slash: fa("0.5"),
                claimant_share: fa("0.5"),
                z_min: fa("10"),
                challenge_blocks: 3,
            },
            x_min: fa("0.01"),
            forfeit_losing_votes: forfeit,
        };
        let mut ledger = Ledger::new();
        ledger.mint(TOKEN, ISSUER, fa("1000000")).unwrap();
        ledger.mint(TOKEN, CLAIMANT, fa("100000")).unwrap();
        for v in 10..20 {
            ledger.mint(TOKEN, AccountId::solo(v), fa("1000")).unwrap();
        }
        (Rugproof::new(params, ESCROW, TREASURY).unwrap(), ledger)
    }

    #[test]
    fn issue_examples() {
        let (mut rp, mut l) = setup(false);
        let id = rp.issue_bonded_token(&mut l, ISSUER, TOKEN, fa("1000000"), fa("0.05")).unwrap();
        assert_eq!(rp.issuance(id).unwrap().bond, fa("50000"));
        assert!(matches!(
            rp.issue_bonded_token(&mut l, ISSUER, TOKEN, fa("1000000"), FixedAmount::ZERO),
            Err(DisputeError::BondTooSmall { .. })
        ));
        assert!(matches!(
            rp.issue_bonded_token(&mut l, ISSUER, TOKEN, fa("1000000000"), fa("0.5")),
            Err(DisputeError::Ledger(_))
        ));
    }

    #[test]
    fn claim_examples() {
        let (mut rp, mut l) = setup(false);
        let iss = rp.issue_bonded_token(&mut l, ISSUER, TOKEN, fa("1000000"), fa("0.05")).unwrap();
        let c = rp.submit_rug_claim(&mut l, CLAIMANT, iss, fa("0.02"), at(0)).unwrap();
        assert_eq!(rp.claim(c).unwrap().claim_bond, fa("20000"));
        assert!(matches!(
            rp.submit_rug_claim(&mut l, AccountId::solo(10), iss, fa("0.0001"), at(0)),
            Err(DisputeError::Conflict(_))
        ));
        assert!(matches!(
            rp.submit_rug_claim(&mut l, AccountId::solo(10), 999, fa("0.0001"), at(0)),
            Err(DisputeError::Unknown(_))
        ));
    }

    #[test]
    fn vote_rules() {
        let (mut rp, mut l) = setup(false);
        let iss = rp.issue_bonded_token(&mut l, ISSUER, TOKEN, fa("1000000"), fa("0.05")).unwrap();
        let c = rp.submit_rug_claim(&mut l, CLAIMANT, iss, fa("0.02"), at(0)).unwrap();
        let v = AccountId::solo(10);
        rp.cast_vote(&mut l, c, v, fa("10"), Side::For, at(1)).unwrap();
        assert!(matches!(rp.cast_vote(&mut l, c, v, fa("10"), Side::For, at(1)), Err(DisputeError::DoubleVote(_))));
        assert!(matches!(
            rp.cast_vote(&mut l, c, AccountId::solo(11), fa("9.999"), Side::For, at(1)),
            Err(DisputeError::DepositTooSmall { .. })
        ));
        assert!(matches!(
            rp.cast_vote(&mut l, c, AccountId::solo(11), fa("10"), Side::For, at(3)),
            Err(DisputeError::WindowClosed { .. })
        ));
        assert!(matches!(rp.resolve_claim(&mut l, c, at(2)), Err(DisputeError::Early { .. })));
    }

    #[test]
    fn unanimous_rugging_pays_claimant_and_voters() {
        let (mut rp, mut l) = setup(false);
        let iss = rp.issue_bonded_token(&mut l, ISSUER, TOKEN, fa("1000000"), fa("0.05")).unwrap();
        let c = rp.submit_rug_claim(&mut l, CLAIMANT, iss, fa("0.02"), at(0)).unwrap();
        rp.cast_vote(&mut l, c, AccountId::solo(10), fa("100"), Side::For, at(1)).unwrap();
        rp.cast_vote(&mut l, c, AccountId::solo(11), fa("300"), Side::For, at(1)).unwrap();
        let res = rp.resolve_claim(&mut l, c, at(3)).unwrap();
        assert!(res.upheld);
        assert_eq!(res.slashed, fa("25000"));
        assert_eq!(l.balance(CLAIMANT, TOKEN), fa("112500"));
        assert_eq!(l.balance(AccountId::solo(10), TOKEN), fa("1000") + fa("3125"));
        assert_eq!(l.balance(AccountId::solo(11), TOKEN), fa("1000") + fa("9375"));
        assert_eq!(l.balance(ISSUER, TOKEN), fa("975000"));
        assert_eq!(rp.issuance(iss).unwrap().status, IssuanceStatus::Slashed);
        assert_eq!(l.balance(ESCROW, TOKEN), FixedAmount::ZERO);
        assert!(rp.issuance(iss).unwrap().escrow.is_settled() && rp.claim(c).unwrap().escrow.is_settled());
    }

    #[test]
    fn empty_vote_fails_claim_and_slashes_to_treasury() {
        let (mut rp, mut l) = setup(false);
        let iss = rp.issue_bonded_token(&mut l, ISSUER, TOKEN, fa("1000000"), fa("0.05")).unwrap();
        let c = rp.submit_rug_claim(&mut l, CLAIMANT, iss, fa("0.02"), at(0)).unwrap();
        let res = rp.resolve_claim(&mut l, c, at(3)).unwrap();
        assert!(!res.upheld);
        assert_eq!(l.balance(TREASURY, TOKEN), fa("10000"));
        assert_eq!(l.balance(CLAIMANT, TOKEN), fa("90000"));
        assert_eq!(rp.issuance(iss).unwrap().status, IssuanceStatus::Active);
        assert_eq!(l.balance(ESCROW, TOKEN), fa("50000"));
    }

    #[test]
    fn unanimous_not_rugging_pays_voters_half_the_claim_bond() {
        let (mut rp, mut l) = setup(false);
        let iss = rp.issue_bonded_token(&mut l, ISSUER, TOKEN, fa("1000000"), fa("0.05")).unwrap();
        let c = rp.submit_rug_claim(&mut l, CLAIMANT, iss, fa("0.02"), at(0)).unwrap();
        rp.cast_vote(&mut l, c, AccountId::solo(10), fa("10"), Side::Against, at(1)).unwrap();
        rp.cast_vote(&mut l, c, AccountId::solo(11), fa("10"), Side::Against, at(1)).unwrap();
        rp.resolve_claim(&mut l, c, at(3)).unwrap();
        assert_eq!(l.balance(AccountId::solo(10), TOKEN), fa("6000"));
        assert_eq!(l.balance(CLAIMANT, TOKEN), fa("90000"));
        // a fresh claim may follow
        assert!(rp.submit_rug_claim(&mut l, AccountId::solo(12), iss, fa("0.0001"), at(4)).is_ok());
    }

    #[test]
    fn forfeiture_moves_losing_deposits_to_winners() {
        let (mut rp, mut l) = setup(true);
        let iss = rp.issue_bonded_token(&mut l, ISSUER, TOKEN, fa("1000000"), fa("0.05")).unwrap();
        let c = rp.submit_rug_claim(&mut l, CLAIMANT, iss, fa("0.02"), at(0)).unwrap();
        rp.cast_vote(&mut l, c, AccountId::solo(10), fa("50"), Side::Against, at(1)).unwrap();
        rp.cast_vote(&mut l, c, AccountId::solo(11), fa("20"), Side::For, at(1)).unwrap();
        rp.resolve_claim(&mut l, c, at(3)).unwrap();
        assert_eq!(l.balance(AccountId::solo(11), TOKEN), fa("980"));
        assert_eq!(l.balance(AccountId::solo(10), TOKEN), fa("1000") + fa("10000") + fa("20"));
        assert!(l.check_conservation().is_ok());
    }
}
