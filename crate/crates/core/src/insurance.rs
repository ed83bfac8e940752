//! Bonded insurance policies with collective claims, disputes, voting and
//! escalation.
//!
//! A claim moves through `Open` (challenge window, joiners welcome) and, if
//! disputed, `Voting` rounds. A decided round stays open to escalation for
//! one challenge window before becoming final. Nothing is paid out until the
//! claim is final.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dispute::{DisputeError, EscrowDesk, EscrowTally, Payout, PayoutReason, Side, Vote, VoteBook};
use crate::fixed::{FixedAmount, Rounding};
use crate::ids::{AccountId, BlockTime, TokenId};
use crate::ledger::Ledger;

fn one_percent() -> FixedAmount {
    FixedAmount::from_raw(10_000_000)
}

fn two() -> FixedAmount {
    FixedAmount::from_int(2)
}

fn default_max_escalations() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct InsuranceParams {
    /// Share α of the insurer bond added to approved compensation.
    pub alpha_comp: FixedAmount,
    /// Share γ of claim and join bonds slashed when a claim is rejected.
    pub gamma_pen: FixedAmount,
    #[serde(default = "two")]
    pub escalation_bond_multiplier: FixedAmount,
    #[serde(default = "default_max_escalations")]
    pub max_escalations: u32,
    pub tau_challenge: u64,
    pub tau_vote: u64,
    #[serde(default)]
    pub z_min: FixedAmount,
    /// Smallest acceptable insurer bond fraction.
    #[serde(default = "one_percent")]
    pub x_min: FixedAmount,
}

impl InsuranceParams {
    pub fn validate(&self) -> Result<(), DisputeError> {
        for f in [self.alpha_comp, self.gamma_pen, self.x_min] {
            if f.is_negative() || f > FixedAmount::ONE {
                return Err(DisputeError::Parameter("fractions must lie in [0, 1]"));
            }
        }
        if self.escalation_bond_multiplier <= FixedAmount::ONE {
            return Err(DisputeError::Parameter("escalation_bond_multiplier must exceed 1"));
        }
        if self.tau_challenge == 0 || self.tau_vote == 0 {
            return Err(DisputeError::Parameter("windows must be positive"));
        }
        if self.z_min.is_negative() {
            return Err(DisputeError::Parameter("z_min must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyStatus {
    Active,
    Claimed,
    Paid,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub id: u64,
    pub insurer: AccountId,
    pub insured: AccountId,
    pub token: TokenId,
    pub insured_value: FixedAmount,
    pub bond_fraction: FixedAmount,
    pub insurer_bond: FixedAmount,
    pub issued_at: BlockTime,
    pub duration_blocks: u64,
    pub status: PolicyStatus,
    pub escrow: EscrowTally,
}

impl Policy {
    pub fn expires_at(&self) -> BlockTime {
        self.issued_at.plus(self.duration_blocks)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Joiner {
    pub account: AccountId,
    pub loss: FixedAmount,
    pub bond: FixedAmount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisputeRecord {
    pub challenger: AccountId,
    pub bond: FixedAmount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Escalation {
    pub level: u32,
    pub party: AccountId,
    pub side: Side,
    pub bond: FixedAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum ClaimPhase {
    Open,
    Voting,
    Decided { approved: bool, appeal_end: BlockTime },
    Final { approved: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsuranceClaim {
    pub id: u64,
    pub policy: u64,
    pub claimant: AccountId,
    pub claim_bond: FixedAmount,
    pub joiners: Vec<Joiner>,
    pub dispute: Option<DisputeRecord>,
    /// One vote book per level, starting at level 0.
    pub rounds: Vec<VoteBook>,
    pub escalations: Vec<Escalation>,
    pub opened_at: BlockTime,
    pub challenge_end: BlockTime,
    pub phase: ClaimPhase,
    pub escrow: EscrowTally,
}

impl InsuranceClaim {
    pub fn level(&self) -> u32 {
        self.rounds.len().saturating_sub(1) as u32
    }

    fn is_participant(&self, a: AccountId) -> bool {
        a == self.claimant
            || self.joiners.iter().any(|j| j.account == a)
            || self.dispute.is_some_and(|d| d.challenger == a)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsuranceResolution {
    pub claim: u64,
    pub approved: bool,
    /// False while an appeal window remains.
    pub is_final: bool,
    pub compensation: FixedAmount,
    pub penalty: FixedAmount,
    /// Part of `I_v` the insurer could not pay.
    pub shortfall: FixedAmount,
    pub payouts: Vec<Payout>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InsuranceBook {
    pub params: InsuranceParams,
    pub escrow: AccountId,
    pub treasury: AccountId,
    #[serde(with = "crate::serde_pairs")]
    policies: BTreeMap<u64, Policy>,
    #[serde(with = "crate::serde_pairs")]
    claims: BTreeMap<u64, InsuranceClaim>,
    next_id: u64,
}

impl InsuranceBook {
    pub fn new(params: InsuranceParams, escrow: AccountId, treasury: AccountId) -> Result<Self, DisputeError> {
        params.validate()?;
        Ok(InsuranceBook { params, escrow, treasury, policies: BTreeMap::new(), claims: BTreeMap::new(), next_id: 0 })
    }

    fn fresh_id(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id
    }

    pub fn policy(&self, id: u64) -> Result<&Policy, DisputeError> {
        self.policies.get(&id).ok_or(DisputeError::Unknown(id))
    }

    pub fn claim(&self, id: u64) -> Result<&InsuranceClaim, DisputeError> {
        self.claims.get(&id).ok_or(DisputeError::Unknown(id))
    }

    pub fn policies(&self) -> impl Iterator<Item = &Policy> {
        self.policies.values()
    }

    pub fn claims(&self) -> impl Iterator<Item = &InsuranceClaim> {
        self.claims.values()
    }

    fn fraction_of(value: FixedAmount, fraction: FixedAmount) -> Result<FixedAmount, DisputeError> {
        if fraction.is_negative() || fraction > FixedAmount::ONE {
            return Err(DisputeError::Parameter("bond fraction must lie in [0, 1]"));
        }
        Ok(value.checked_mul(fraction)?)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn issue_policy(
        &mut self,
        ledger: &mut Ledger,
        insurer: AccountId,
        insured: AccountId,
        token: TokenId,
        insured_value: FixedAmount,
        bond_fraction: FixedAmount,
        duration_blocks: u64,
        now: BlockTime,
    ) -> Result<u64, DisputeError> {
        if duration_blocks == 0 {
            return Err(DisputeError::Parameter("duration must be positive"));
        }
        if !insured_value.is_positive() {
            return Err(DisputeError::Parameter("insured value must be positive"));
        }
        if bond_fraction < self.params.x_min {
            return Err(DisputeError::BondTooSmall { fraction: bond_fraction, floor: self.params.x_min });
        }
        let insurer_bond = Self::fraction_of(insured_value, bond_fraction)?;
        let mut escrow = EscrowTally::default();
        EscrowDesk::new(ledger, self.escrow, token).lock(&mut escrow, insurer, insurer_bond)?;
        let id = self.fresh_id();
        self.policies.insert(
            id,
            Policy {
                id,
                insurer,
                insured,
                token,
                insured_value,
                bond_fraction,
                insurer_bond,
                issued_at: now,
                duration_blocks,
                status: PolicyStatus::Active,
                escrow,
            },
        );
        Ok(id)
    }

    /// The insured opens a claim, escrowing `y · I_v`.
    pub fn submit_claim(
        &mut self,
        ledger: &mut Ledger,
        policy: u64,
        claimant: AccountId,
        claim_fraction: FixedAmount,
        now: BlockTime,
    ) -> Result<u64, DisputeError> {
        let p = self.policies.get(&policy).ok_or(DisputeError::Unknown(policy))?;
        if p.status != PolicyStatus::Active || now >= p.expires_at() {
            return Err(DisputeError::State("policy is not active"));
        }
        if claimant != p.insured {
            return Err(DisputeError::NotParty(claimant));
        }
        let claim_bond = Self::fraction_of(p.insured_value, claim_fraction)?;
        let token = p.token;
        let mut escrow = EscrowTally::default();
        EscrowDesk::new(ledger, self.escrow, token).lock(&mut escrow, claimant, claim_bond)?;
        let id = self.fresh_id();
        self.claims.insert(
            id,
            InsuranceClaim {
                id,
                policy,
                claimant,
                claim_bond,
                joiners: Vec::new(),
                dispute: None,
                rounds: Vec::new(),
                escalations: Vec::new(),
                opened_at: now,
                challenge_end: now.plus(self.params.tau_challenge),
                phase: ClaimPhase::Open,
                escrow,
            },
        );
        self.policies.get_mut(&policy).expect("checked").status = PolicyStatus::Claimed;
        Ok(id)
    }

    /// Adds a co-claimant with its own loss and `w · I_v` bond.
    pub fn join_claim(
        &mut self,
        ledger: &mut Ledger,
        claim: u64,
        account: AccountId,
        loss: FixedAmount,
        join_fraction: FixedAmount,
        now: BlockTime,
    ) -> Result<(), DisputeError> {
        let c = self.claims.get(&claim).ok_or(DisputeError::Unknown(claim))?;
        if c.phase != ClaimPhase::Open || now >= c.challenge_end {
            return Err(DisputeError::State("claim no longer accepts joiners"));
        }
        if !loss.is_positive() {
            return Err(DisputeError::Parameter("claimed loss must be positive"));
        }
        if c.is_participant(account) {
            return Err(DisputeError::Conflict("account already takes part in this claim"));
        }
        let p = &self.policies[&c.policy];
        if account == p.insurer {
            return Err(DisputeError::Conflict("insurer cannot join a claim on its policy"));
        }
        let bond = Self::fraction_of(p.insured_value, join_fraction)?;
        let token = p.token;
        let c = self.claims.get_mut(&claim).expect("checked");
        EscrowDesk::new(ledger, self.escrow, token).lock(&mut c.escrow, account, bond)?;
        c.joiners.push(Joiner { account, loss, bond });
        Ok(())
    }

    /// Challenges an open claim with a `z · I_v` bond, starting level-0 voting.
    pub fn dispute_claim(
        &mut self,
        ledger: &mut Ledger,
        claim: u64,
        challenger: AccountId,
        dispute_fraction: FixedAmount,
        now: BlockTime,
    ) -> Result<(), DisputeError> {
        let c = self.claims.get(&claim).ok_or(DisputeError::Unknown(claim))?;
        if c.dispute.is_some() {
            return Err(DisputeError::Conflict("claim is already disputed"));
        }
        if c.phase != ClaimPhase::Open {
            return Err(DisputeError::State("claim is not open"));
        }
        if now >= c.challenge_end {
            return Err(DisputeError::WindowClosed { now: now.height });
        }
        if c.is_participant(challenger) {
            return Err(DisputeError::Conflict("claimants cannot dispute their own claim"));
        }
        let p = &self.policies[&c.policy];
        let bond = Self::fraction_of(p.insured_value, dispute_fraction)?;
        let token = p.token;
        let tau_vote = self.params.tau_vote;
        let c = self.claims.get_mut(&claim).expect("checked");
        EscrowDesk::new(ledger, self.escrow, token).lock(&mut c.escrow, challenger, bond)?;
        c.dispute = Some(DisputeRecord { challenger, bond });
        c.rounds.push(VoteBook::new(now, now.plus(tau_vote)));
        c.phase = ClaimPhase::Voting;
        Ok(())
    }

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
        if c.phase != ClaimPhase::Voting {
            return Err(DisputeError::State("claim is not in a voting round"));
        }
        let p = &self.policies[&c.policy];
        if c.is_participant(voter) || voter == p.insurer {
            return Err(DisputeError::Conflict("parties cannot vote"));
        }
        let round = c.rounds.last().expect("voting has a round");
        round.check(voter, deposit, now, self.params.z_min)?;
        let token = p.token;
        let c = self.claims.get_mut(&claim).expect("checked");
        EscrowDesk::new(ledger, self.escrow, token).lock(&mut c.escrow, voter, deposit)?;
        c.rounds.last_mut().expect("voting has a round").votes.push(Vote { voter, deposit, side });
        Ok(())
    }

    /// Bond a party must post to escalate from the current level.
    pub fn escalation_bond(&self, claim: u64, party: AccountId) -> Result<(Side, FixedAmount), DisputeError> {
        let c = self.claim(claim)?;
        let p = &self.policies[&c.policy];
        let (side, base) = if party == c.claimant {
            (Side::For, c.claim_bond)
        } else if c.dispute.is_some_and(|d| d.challenger == party) {
            (Side::Against, c.dispute.expect("checked").bond)
        } else if party == p.insurer {
            (Side::Against, p.insurer_bond)
        } else {
            return Err(DisputeError::NotParty(party));
        };
        let mut bond = base;
        for _ in 0..=c.level() {
            bond = bond.checked_mul(self.params.escalation_bond_multiplier)?;
        }
        Ok((side, bond))
    }

    /// Reopens voting at the next level during a decided round's appeal window.
    pub fn escalate(
        &mut self,
        ledger: &mut Ledger,
        claim: u64,
        party: AccountId,
        now: BlockTime,
    ) -> Result<FixedAmount, DisputeError> {
        let c = self.claims.get(&claim).ok_or(DisputeError::Unknown(claim))?;
        let ClaimPhase::Decided { appeal_end, .. } = c.phase else {
            return Err(DisputeError::State("only a decided round can be escalated"));
        };
        if c.level() >= self.params.max_escalations {
            return Err(DisputeError::FinalLevel(self.params.max_escalations));
        }
        if now >= appeal_end {
            return Err(DisputeError::WindowClosed { now: now.height });
        }
        let (side, bond) = self.escalation_bond(claim, party)?;
        let token = self.policies[&c.policy].token;
        let tau_vote = self.params.tau_vote;
        let c = self.claims.get_mut(&claim).expect("checked");
        EscrowDesk::new(ledger, self.escrow, token).lock(&mut c.escrow, party, bond)?;
        let level = c.level() + 1;
        c.escalations.push(Escalation { level, party, side, bond });
        c.rounds.push(VoteBook::new(now, now.plus(tau_vote)));
        c.phase = ClaimPhase::Voting;
        Ok(bond)
    }

    /// Advances a claim whose current window has closed.
    pub fn resolve_insurance(
        &mut self,
        ledger: &mut Ledger,
        claim: u64,
        now: BlockTime,
    ) -> Result<InsuranceResolution, DisputeError> {
        let c = self.claims.get(&claim).ok_or(DisputeError::Unknown(claim))?;
        match c.phase.clone() {
            ClaimPhase::Open => {
                if now < c.challenge_end {
                    return Err(DisputeError::Early { now: now.height, ready_at: c.challenge_end.height });
                }
                self.finalize(ledger, claim, true)
            }
            ClaimPhase::Voting => {
                let round = c.rounds.last().expect("voting has a round");
                if now < round.closes {
                    return Err(DisputeError::Early { now: now.height, ready_at: round.closes.height });
                }
                let approved = round.outcome() == Side::For;
                if c.level() >= self.params.max_escalations {
                    return self.finalize(ledger, claim, approved);
                }
                let appeal_end = now.plus(self.params.tau_challenge);
                self.claims.get_mut(&claim).expect("checked").phase = ClaimPhase::Decided { approved, appeal_end };
                Ok(InsuranceResolution {
                    claim,
                    approved,
                    is_final: false,
                    compensation: FixedAmount::ZERO,
                    penalty: FixedAmount::ZERO,
                    shortfall: FixedAmount::ZERO,
                    payouts: Vec::new(),
                })
            }
            ClaimPhase::Decided { approved, appeal_end } => {
                if now < appeal_end {
                    return Err(DisputeError::Early { now: now.height, ready_at: appeal_end.height });
                }
                self.finalize(ledger, claim, approved)
            }
            ClaimPhase::Final { .. } => Err(DisputeError::State("claim is final")),
        }
    }

    fn finalize(
        &mut self,
        ledger: &mut Ledger,
        claim: u64,
        approved: bool,
    ) -> Result<InsuranceResolution, DisputeError> {
        let mut c = self.claims.remove(&claim).expect("caller checked");
        let mut p = self.policies.remove(&c.policy).expect("claim references policy");
        let params = &self.params;
        let treasury = self.treasury;
        let mut desk = EscrowDesk::new(ledger, self.escrow, p.token);
        let mut compensation = FixedAmount::ZERO;
        let mut penalty = FixedAmount::ZERO;
        let mut shortfall = FixedAmount::ZERO;
        let final_round = c.rounds.last().cloned();

        if approved {
            let from_bond = p.insurer_bond.checked_mul(params.alpha_comp)?;
            p.escrow.shift(&mut c.escrow, from_bond)?;
            let free = desk.ledger.balance(p.insurer, p.token);
            let paid = p.insured_value.min(free);
            shortfall = p.insured_value - paid;
            desk.lock(&mut c.escrow, p.insurer, paid)?;
            compensation = from_bond + paid;
            let mut claimants = vec![(c.claimant, p.insured_value)];
            claimants.extend(c.joiners.iter().map(|j| (j.account, j.loss)));
            desk.release_pro_rata(&mut c.escrow, compensation, &claimants, c.claimant, PayoutReason::Compensation)?;
            let rest = p.escrow.outstanding();
            desk.release(&mut p.escrow, p.insurer, rest, PayoutReason::BondReturn)?;
            desk.release(&mut c.escrow, c.claimant, c.claim_bond, PayoutReason::BondReturn)?;
            for j in &c.joiners {
                desk.release(&mut c.escrow, j.account, j.bond, PayoutReason::BondReturn)?;
            }
            if let Some(d) = c.dispute {
                let slash = d.bond.checked_mul(params.gamma_pen)?;
                let backers: Vec<(AccountId, FixedAmount)> = final_round
                    .as_ref()
                    .map(|r| r.voters(Side::For).map(|v| (v.voter, v.deposit)).collect())
                    .unwrap_or_default();
                desk.release_pro_rata(&mut c.escrow, slash, &backers, c.claimant, PayoutReason::SlashShare)?;
                desk.release(&mut c.escrow, d.challenger, d.bond - slash, PayoutReason::BondReturn)?;
            }
            p.status = PolicyStatus::Paid;
        } else {
            let d = c.dispute.expect("only disputed claims can be rejected");
            let slash_of = |bond: FixedAmount| bond.mul_div_round(params.gamma_pen, FixedAmount::ONE, Rounding::Floor);
            let claim_slash = slash_of(c.claim_bond)?;
            desk.release(&mut c.escrow, c.claimant, c.claim_bond - claim_slash, PayoutReason::BondReturn)?;
            penalty = claim_slash;
            for j in &c.joiners {
                let s = slash_of(j.bond)?;
                desk.release(&mut c.escrow, j.account, j.bond - s, PayoutReason::BondReturn)?;
                penalty += s;
            }
            let mut against = vec![(d.challenger, d.bond)];
            if let Some(r) = &final_round {
                against.extend(r.voters(Side::Against).map(|v| (v.voter, v.deposit)));
            }
            desk.release_pro_rata(&mut c.escrow, penalty, &against, d.challenger, PayoutReason::SlashShare)?;
            desk.release(&mut c.escrow, d.challenger, d.bond, PayoutReason::BondReturn)?;
            p.status = PolicyStatus::Active;
        }

        for v in c.rounds.iter().flat_map(|r| r.votes.iter()) {
            desk.release(&mut c.escrow, v.voter, v.deposit, PayoutReason::DepositReturn)?;
        }
        let winning = if approved { Side::For } else { Side::Against };
        for e in &c.escalations {
            let to = if e.side == winning { e.party } else { treasury };
            let reason = if e.side == winning { PayoutReason::BondReturn } else { PayoutReason::Forfeit };
            desk.release(&mut c.escrow, to, e.bond, reason)?;
        }
        let payouts = desk.payouts;
        debug_assert!(c.escrow.is_settled());
        c.phase = ClaimPhase::Final { approved };
        self.policies.insert(p.id, p);
        self.claims.insert(c.id, c);
        Ok(InsuranceResolution { claim, approved, is_final: true, compensation, penalty, shortfall, payouts })
    }

    /// Returns the bond of a policy that ran its term without a claim.
    pub fn expire_policy(
        &mut self,
        ledger: &mut Ledger,
        policy: u64,
        now: BlockTime,
    ) -> Result<FixedAmount, DisputeError> {
        let p = self.policies.get_mut(&policy).ok_or(DisputeError::Unknown(policy))?;
        if p.status != PolicyStatus::Active {
            return Err(DisputeError::State("policy is not active"));
        }
        if now < p.expires_at() {
            return Err(DisputeError::Early { now: now.height, ready_at: p.expires_at().height });
        }
        let amount = p.escrow.outstanding();
        EscrowDesk::new(ledger, self.escrow, p.token).release(
            &mut p.escrow,
            p.insurer,
            amount,
            PayoutReason::BondReturn,
        )?;
        p.status = PolicyStatus::Expired;
        Ok(amount)
    }

    /// Fires every deadline due at `now`: claim windows first, then policy expiry.
    pub fn tick(&mut self, ledger: &mut Ledger, now: BlockTime) -> Vec<Result<InsuranceResolution, DisputeError>> {
        let due: Vec<u64> = self
            .claims
            .values()
            .filter(|c| c.opened_at.chain == now.chain)
            .filter(|c| match &c.phase {
                ClaimPhase::Open => now >= c.challenge_end,
                ClaimPhase::Voting => c.rounds.last().is_some_and(|r| now >= r.closes),
                ClaimPhase::Decided { appeal_end, .. } => now >= *appeal_end,
                ClaimPhase::Final { .. } => false,
            })
            .map(|c| c.id)
            .collect();
        let mut out: Vec<_> = due.into_iter().map(|id| self.resolve_insurance(ledger, id, now)).collect();
        let expiring: Vec<u64> = self
            .policies
            .values()
            .filter(|p| p.status == PolicyStatus::Active && p.issued_at.chain == now.chain && now >= p.expires_at())
            .map(|p| p.id)
            .collect();
        for id in expiring {
            if let Err(e) = self.expire_policy(ledger, id, now) {
                out.push(Err(e));
            }
        }
        out
    }
}
