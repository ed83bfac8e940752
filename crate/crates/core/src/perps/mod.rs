//! Perpetual futures on rugged tokens, collateralized by anticoins.
//!
//! Collateral is valued at the anticoin peg when the position opens and that
//! per-unit value stays frozen unless `revalue_collateral` is set. Funding
//! flows from the more crowded side to the less crowded one. Undercollateral
//! positions are flagged, offered to liquidators until a deadline, then
//! liquidated by the protocol through the anticoin pool.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::fixed::{pro_rata, quantize, FixedAmount, FixedError};
use crate::ids::{AccountId, BlockTime, TokenId, VaultId};
use crate::ledger::{Ledger, LedgerError};
use crate::market::{execute_swap, MarketError, PoolState};
use crate::vault::anticoin_value;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PerpsError {
    #[error("invalid parameter: {0}")]
    Parameter(&'static str),
    #[error("leverage {leverage} outside [1, {max}]")]
    Leverage { leverage: FixedAmount, max: FixedAmount },
    #[error("collateral must be positive")]
    NoCollateral,
    #[error("collateral is worthless at the current price")]
    WorthlessCollateral,
    #[error("funding rate is undefined for an empty market")]
    EmptyMarket,
    #[error("pool liquidity must be positive")]
    Illiquid,
    #[error("unknown position {0}")]
    Unknown(u64),
    #[error("position {0} is not open")]
    NotOpen(u64),
    #[error("position {0} is healthy and cannot be liquidated")]
    InvalidLiquidation(u64),
    #[error("liquidator deadline for position {0} has passed")]
    DeadlinePassed(u64),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Arithmetic(#[from] FixedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Long,
    Short,
}

impl Direction {
    pub fn sign(self) -> i32 {
        match self {
            Direction::Long => 1,
            Direction::Short => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PositionStatus {
    Open,
    Flagged { at: BlockTime },
    Liquidated,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Position {
    pub id: u64,
    pub owner: AccountId,
    pub vault: VaultId,
    pub anticoin: TokenId,
    pub collateral_ca: FixedAmount,
    pub leverage: FixedAmount,
    pub direction: Direction,
    pub entry_price: FixedAmount,
    /// Anticoin value per unit at entry.
    pub unit_value: FixedAmount,
    pub opened_at: BlockTime,
    pub status: PositionStatus,
}

impl Position {
    pub fn is_live(&self) -> bool {
        matches!(self.status, PositionStatus::Open | PositionStatus::Flagged { .. })
    }

    /// Collateral value at the frozen per-unit anticoin value.
    pub fn collateral_value(&self) -> Result<FixedAmount, FixedError> {
        self.collateral_ca.checked_mul(self.unit_value)
    }

    /// Leveraged exposure in anticoins.
    pub fn notional(&self) -> Result<FixedAmount, FixedError> {
        self.collateral_ca.checked_mul(self.leverage)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FundingParams {
    /// Base funding rate α.
    pub alpha_base: FixedAmount,
    /// Liquidity threshold L_min.
    pub l_min: FixedAmount,
    pub interval_blocks: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct MaintenanceRule {
    #[serde(default = "default_maintenance")]
    pub maintenance_fraction: FixedAmount,
    #[serde(default = "default_deadline")]
    pub liquidator_deadline_blocks: u64,
    #[serde(default = "default_liquidator_fee")]
    pub liquidator_fee_fraction: FixedAmount,
}

impl Default for MaintenanceRule {
    fn default() -> Self {
        MaintenanceRule {
            maintenance_fraction: default_maintenance(),
            liquidator_deadline_blocks: default_deadline(),
            liquidator_fee_fraction: default_liquidator_fee(),
        }
    }
}

fn default_maintenance() -> FixedAmount {
    FixedAmount::from_raw(100_000_000)
}

fn default_deadline() -> u64 {
    5
}

fn default_liquidator_fee() -> FixedAmount {
    FixedAmount::from_raw(50_000_000)
}

fn default_max_leverage() -> FixedAmount {
    FixedAmount::from_int(10)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PerpsParams {
    pub funding: FundingParams,
    #[serde(default)]
    pub maintenance: MaintenanceRule,
    #[serde(default = "default_max_leverage")]
    pub max_leverage: FixedAmount,
    /// Revalue collateral at the current mark instead of freezing it at entry.
    #[serde(default)]
    pub revalue_collateral: bool,
}

impl PerpsParams {
    pub fn new(funding: FundingParams) -> Self {
        PerpsParams {
            funding,
            maintenance: MaintenanceRule::default(),
            max_leverage: default_max_leverage(),
            revalue_collateral: false,
        }
    }

    pub fn validate(&self) -> Result<(), PerpsError> {
        let f = &self.funding;
        if !f.alpha_base.is_positive() || !f.l_min.is_positive() || f.interval_blocks == 0 {
            return Err(PerpsError::Parameter("funding parameters must be positive"));
        }
        let m = &self.maintenance;
        if !m.maintenance_fraction.is_positive() || m.maintenance_fraction >= FixedAmount::ONE {
            return Err(PerpsError::Parameter("maintenance_fraction must be in (0, 1)"));
        }
        if m.liquidator_fee_fraction.is_negative() || m.liquidator_fee_fraction >= m.maintenance_fraction {
            return Err(PerpsError::Parameter("liquidator fee must be below the maintenance fraction"));
        }
        if self.max_leverage < FixedAmount::ONE {
            return Err(PerpsError::Parameter("max_leverage must be at least 1"));
        }
        Ok(())
    }
}

/// `pos · ℓ · collateral_value · (mark − entry) / entry`, rounded once.
pub fn position_pnl(p: &Position, mark_price: FixedAmount) -> Result<FixedAmount, PerpsError> {
    scaled_move(p, p.collateral_value()?, mark_price)
}

/// PnL expressed in anticoins: the same move applied to the collateral amount.
pub fn position_pnl_ca(p: &Position, mark_price: FixedAmount) -> Result<FixedAmount, PerpsError> {
    scaled_move(p, p.collateral_ca, mark_price)
}

fn scaled_move(p: &Position, base: FixedAmount, mark: FixedAmount) -> Result<FixedAmount, PerpsError> {
    if !mark.is_positive() {
        return Err(PerpsError::Parameter("mark price must be positive"));
    }
    let delta = mark.to_rational() - p.entry_price.to_rational();
    let v = BigRational::from_integer(BigInt::from(p.direction.sign()))
        * p.leverage.to_rational()
        * base.to_rational()
        * delta
        / p.entry_price.to_rational();
    Ok(quantize(&v)?)
}

/// `α · N_long / (N_long + N_short)`.
pub fn funding_rate(n_long: u64, n_short: u64, alpha: FixedAmount) -> Result<FixedAmount, PerpsError> {
    let n = n_long as i128 + n_short as i128;
    if n == 0 {
        return Err(PerpsError::EmptyMarket);
    }
    Ok(alpha.mul_div(FixedAmount::from_raw(n_long as i128), FixedAmount::from_raw(n))?)
}

/// `F · (1 + L_min / L_pool)`.
pub fn funding_rate_final(f: FixedAmount, l_min: FixedAmount, l_pool: FixedAmount) -> Result<FixedAmount, PerpsError> {
    if !l_pool.is_positive() {
        return Err(PerpsError::Illiquid);
    }
    Ok(f.mul_div(l_pool.checked_add(l_min)?, l_pool)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FundingReport {
    pub vault: VaultId,
    pub rate: FixedAmount,
    pub rate_final: FixedAmount,
    pub payer_side: Option<Direction>,
    /// Signed collateral change per position.
    pub transfers: Vec<(u64, FixedAmount)>,
    pub to_treasury: FixedAmount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LiquidationEvent {
    Flagged {
        position: u64,
        health: FixedAmount,
    },
    Recovered {
        position: u64,
        health: FixedAmount,
    },
    Liquidated {
        position: u64,
        liquidator: Option<AccountId>,
        fee: FixedAmount,
        seized: FixedAmount,
        proceeds: FixedAmount,
    },
}

/// A liquidator's standing offer to take over a flagged position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiquidatorBid {
    pub liquidator: AccountId,
    pub position: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloseOutcome {
    pub returned: FixedAmount,
    pub pnl_ca: FixedAmount,
    /// Gain the treasury could not cover.
    pub unpaid: FixedAmount,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerpBook {
    pub params: PerpsParams,
    /// Escrow account holding all collateral.
    pub escrow: AccountId,
    pub treasury: AccountId,
    #[serde(with = "crate::serde_pairs")]
    positions: BTreeMap<u64, Position>,
    next_id: u64,
}

impl PerpBook {
    pub fn new(params: PerpsParams, escrow: AccountId, treasury: AccountId) -> Result<Self, PerpsError> {
        params.validate()?;
        Ok(PerpBook { params, escrow, treasury, positions: BTreeMap::new(), next_id: 0 })
    }

    pub fn get(&self, id: u64) -> Result<&Position, PerpsError> {
        self.positions.get(&id).ok_or(PerpsError::Unknown(id))
    }

    pub fn positions(&self) -> impl Iterator<Item = &Position> {
        self.positions.values()
    }

    /// Σ collateral of live positions in `anticoin`.
    pub fn escrowed(&self, anticoin: TokenId) -> FixedAmount {
        self.positions.values().filter(|p| p.is_live() && p.anticoin == anticoin).map(|p| p.collateral_ca).sum()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn open_position(
        &mut self,
        ledger: &mut Ledger,
        user: AccountId,
        vault: VaultId,
        anticoin: TokenId,
        price_at_creation: FixedAmount,
        collateral_ca: FixedAmount,
        leverage: FixedAmount,
        direction: Direction,
        mark_price: FixedAmount,
        now: BlockTime,
    ) -> Result<u64, PerpsError> {
        if !collateral_ca.is_positive() {
            return Err(PerpsError::NoCollateral);
        }
        if leverage < FixedAmount::ONE || leverage > self.params.max_leverage {
            return Err(PerpsError::Leverage { leverage, max: self.params.max_leverage });
        }
        if !mark_price.is_positive() {
            return Err(PerpsError::Parameter("mark price must be positive"));
        }
        let unit_value = anticoin_value(price_at_creation, mark_price)
            .map_err(|_| PerpsError::Parameter("prices must be positive"))?;
        if !unit_value.is_positive() {
            return Err(PerpsError::WorthlessCollateral);
        }
        ledger.transfer(anticoin, user, self.escrow, collateral_ca)?;
        let id = self.next_id;
        self.next_id += 1;
        self.positions.insert(
            id,
            Position {
                id,
                owner: user,
                vault,
                anticoin,
                collateral_ca,
                leverage,
                direction,
                entry_price: mark_price,
                unit_value,
                opened_at: now,
                status: PositionStatus::Open,
            },
        );
        Ok(id)
    }

    /// `(collateral_value + pnl) / collateral_value`.
    pub fn health(
        &self,
        p: &Position,
        mark_price: FixedAmount,
        price_at_creation: FixedAmount,
    ) -> Result<FixedAmount, PerpsError> {
        let cv = if self.params.revalue_collateral {
            let unit = anticoin_value(price_at_creation, mark_price)
                .map_err(|_| PerpsError::Parameter("prices must be positive"))?;
            p.collateral_ca.checked_mul(unit)?
        } else {
            p.collateral_value()?
        };
        if !cv.is_positive() {
            return Ok(FixedAmount::ZERO);
        }
        let pnl = scaled_move(p, p.collateral_value()?, mark_price)?;
        Ok(cv.checked_add(pnl)?.checked_div(cv)?)
    }

    /// Moves funding between the sides of one vault's market.
    pub fn apply_funding(
        &mut self,
        ledger: &mut Ledger,
        vault: VaultId,
        l_pool: FixedAmount,
        at: BlockTime,
    ) -> Result<Option<FundingReport>, PerpsError> {
        if !at.height.is_multiple_of(self.params.funding.interval_blocks) {
            return Ok(None);
        }
        let live: Vec<u64> =
            self.positions.values().filter(|p| p.is_live() && p.vault == vault).map(|p| p.id).collect();
        let n_long = live.iter().filter(|id| self.positions[id].direction == Direction::Long).count() as u64;
        let n_short = live.len() as u64 - n_long;
        if live.is_empty() {
            return Ok(None);
        }
        let rate = funding_rate(n_long, n_short, self.params.funding.alpha_base)?;
        let rate_final = funding_rate_final(rate, self.params.funding.l_min, l_pool)?;
        let payer_side = match n_long.cmp(&n_short) {
            _ if n_long == 0 || n_short == 0 => None,
            std::cmp::Ordering::Greater => Some(Direction::Long),
            std::cmp::Ordering::Less => Some(Direction::Short),
            std::cmp::Ordering::Equal => None,
        };
        let mut report = FundingReport {
            vault,
            rate,
            rate_final,
            payer_side,
            transfers: Vec::new(),
            to_treasury: FixedAmount::ZERO,
        };
        let Some(payer) = payer_side else {
            return Ok(Some(report));
        };

        let mut pot = FixedAmount::ZERO;
        let mut receivers = Vec::new();
        let mut weights = Vec::new();
        let mut anticoin = None;
        for id in &live {
            let p = self.positions.get_mut(id).expect("live id");
            anticoin = Some(p.anticoin);
            if p.direction == payer {
                let due = rate_final.checked_mul(p.notional()?)?.min(p.collateral_ca);
                p.collateral_ca -= due;
                pot += due;
                report.transfers.push((p.id, -due));
            } else {
                receivers.push(p.id);
                weights.push(p.notional()?);
            }
        }
        let (shares, rest) = pro_rata(pot, &weights)?;
        for (id, share) in receivers.iter().zip(shares) {
            self.positions.get_mut(id).expect("live id").collateral_ca += share;
            report.transfers.push((*id, share));
        }
        report.transfers.sort_by_key(|(id, _)| *id);
        if let Some(token) = anticoin {
            ledger.transfer(token, self.escrow, self.treasury, rest)?;
        }
        report.to_treasury = rest;
        for id in &live {
            let p = self.positions.get_mut(id).expect("live id");
            if p.collateral_ca.is_zero() {
                p.status = PositionStatus::Liquidated;
            }
        }
        Ok(Some(report))
    }

    /// Flags undercollateralized positions and liquidates flagged ones,
    /// by bidders before the deadline and by the protocol after it.
    ///
    /// `pool` is the protocol-owned anticoin/numéraire pool for `vault`.
    #[allow(clippy::too_many_arguments)]
    pub fn flag_and_liquidate(
        &mut self,
        ledger: &mut Ledger,
        vault: VaultId,
        price_at_creation: FixedAmount,
        mark_price: FixedAmount,
        bids: &[LiquidatorBid],
        pool: Option<&mut PoolState>,
        now: BlockTime,
    ) -> Result<Vec<LiquidationEvent>, PerpsError> {
        let mut events = Vec::new();
        let mut pool = pool;
        let ids: Vec<u64> = self.positions.values().filter(|p| p.is_live() && p.vault == vault).map(|p| p.id).collect();
        let threshold = self.params.maintenance.maintenance_fraction;
        let deadline = self.params.maintenance.liquidator_deadline_blocks;
        for id in ids {
            let p = &self.positions[&id];
            let health = self.health(p, mark_price, price_at_creation)?;
            let flagged_at = match p.status {
                PositionStatus::Open if health <= threshold => {
                    self.positions.get_mut(&id).expect("live id").status = PositionStatus::Flagged { at: now };
                    events.push(LiquidationEvent::Flagged { position: id, health });
                    now
                }
                PositionStatus::Flagged { .. } if health > threshold => {
                    self.positions.get_mut(&id).expect("live id").status = PositionStatus::Open;
                    events.push(LiquidationEvent::Recovered { position: id, health });
                    continue;
                }
                PositionStatus::Flagged { at } => at,
                _ => continue,
            };
            let expired = now.height >= flagged_at.height + deadline;
            let bidder = bids.iter().filter(|b| b.position == id).map(|b| b.liquidator).min();
            if !health.is_positive() || expired {
                let liquidator = if expired { None } else { bidder };
                events.push(self.liquidate_inner(ledger, id, liquidator, pool.as_deref_mut())?);
            } else if let Some(liquidator) = bidder {
                events.push(self.liquidate_inner(ledger, id, Some(liquidator), pool.as_deref_mut())?);
            }
        }
        Ok(events)
    }

    /// A liquidator takes a flagged position before its deadline.
    #[allow(clippy::too_many_arguments)]
    pub fn liquidate(
        &mut self,
        ledger: &mut Ledger,
        id: u64,
        liquidator: AccountId,
        price_at_creation: FixedAmount,
        mark_price: FixedAmount,
        pool: Option<&mut PoolState>,
        now: BlockTime,
    ) -> Result<LiquidationEvent, PerpsError> {
        let p = self.get(id)?;
        if !p.is_live() {
            return Err(PerpsError::NotOpen(id));
        }
        let health = self.health(p, mark_price, price_at_creation)?;
        if health > self.params.maintenance.maintenance_fraction {
            return Err(PerpsError::InvalidLiquidation(id));
        }
        if let PositionStatus::Flagged { at } = p.status {
            if now.height >= at.height + self.params.maintenance.liquidator_deadline_blocks {
                return Err(PerpsError::DeadlinePassed(id));
            }
        }
        self.liquidate_inner(ledger, id, Some(liquidator), pool)
    }

    fn liquidate_inner(
        &mut self,
        ledger: &mut Ledger,
        id: u64,
        liquidator: Option<AccountId>,
        pool: Option<&mut PoolState>,
    ) -> Result<LiquidationEvent, PerpsError> {
        let fee_fraction = self.params.maintenance.liquidator_fee_fraction;
        let (escrow, treasury) = (self.escrow, self.treasury);
        let p = self.positions.get_mut(&id).ok_or(PerpsError::Unknown(id))?;
        let collateral = p.collateral_ca;
        let fee = match liquidator {
            Some(_) => collateral.checked_mul(fee_fraction)?,
            None => FixedAmount::ZERO,
        };
        let seized = collateral - fee;
        if let Some(l) = liquidator {
            ledger.transfer(p.anticoin, escrow, l, fee)?;
        }
        ledger.transfer(p.anticoin, escrow, treasury, seized)?;
        let mut proceeds = FixedAmount::ZERO;
        if let Some(pool) = pool {
            if seized.is_positive() && pool.other(p.anticoin).is_ok() {
                // the treasury sells what it seized; a failed sale leaves the anticoins with it
                if pool.quote(p.anticoin, seized).is_ok() {
                    proceeds = execute_swap(ledger, pool, treasury, p.anticoin, seized)?.amount_out;
                }
            }
        }
        p.collateral_ca = FixedAmount::ZERO;
        p.status = PositionStatus::Liquidated;
        Ok(LiquidationEvent::Liquidated { position: id, liquidator, fee, seized, proceeds })
    }

    /// Closes a position at `mark_price`, settling PnL in anticoins against the treasury.
    pub fn close_position(
        &mut self,
        ledger: &mut Ledger,
        id: u64,
        mark_price: FixedAmount,
    ) -> Result<CloseOutcome, PerpsError> {
        let (escrow, treasury) = (self.escrow, self.treasury);
        let p = self.positions.get_mut(&id).ok_or(PerpsError::Unknown(id))?;
        if !p.is_live() {
            return Err(PerpsError::NotOpen(id));
        }
        let pnl_ca = scaled_move(p, p.collateral_ca, mark_price)?;
        let collateral = p.collateral_ca;
        let mut unpaid = FixedAmount::ZERO;
        let returned = if pnl_ca.is_negative() {
            let loss = pnl_ca.abs().min(collateral);
            ledger.transfer(p.anticoin, escrow, treasury, loss)?;
            ledger.transfer(p.anticoin, escrow, p.owner, collateral - loss)?;
            collateral - loss
        } else {
            let available = ledger.balance(treasury, p.anticoin);
            let paid = pnl_ca.min(available);
            unpaid = pnl_ca - paid;
            ledger.transfer(p.anticoin, escrow, p.owner, collateral)?;
            ledger.transfer(p.anticoin, treasury, p.owner, paid)?;
            collateral + paid
        };
        p.collateral_ca = FixedAmount::ZERO;
        p.status = PositionStatus::Closed;
        Ok(CloseOutcome { returned, pnl_ca, unpaid })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::{ChainId, PoolId};

    fn fa(s: &str) -> FixedAmount {
        FixedAmount::parse(s).unwrap()
    }

    fn at(h: u64) -> BlockTime {
        BlockTime::new(ChainId(0), h)
    }

    const CA: TokenId = TokenId(1);
    const USD: TokenId = TokenId(2);
    const ESCROW: AccountId = AccountId::solo(100);
    const TREASURY: AccountId = AccountId::solo(101);
    // C_r(0) = e makes the unit anticoin value 1 at mark 1
    const P0: FixedAmount = FixedAmount::from_raw(2_718_281_828);

    fn book() -> PerpBook {
        let f = FundingParams { alpha_base: fa("0.01"), l_min: fa("1000"), interval_blocks: 1 };
        PerpBook::new(PerpsParams::new(f), ESCROW, TREASURY).unwrap()
    }

    fn funded(ledger: &mut Ledger, who: AccountId, amount: &str) {
        ledger.mint(CA, who, fa(amount)).unwrap();
    }

    fn open(b: &mut PerpBook, l: &mut Ledger, who: u32, coll: &str, lev: &str, dir: Direction, mark: &str) -> u64 {
        let user = AccountId::solo(who);
        funded(l, user, coll);
        b.open_position(l, user, VaultId(0), CA, P0, fa(coll), fa(lev), dir, fa(mark), at(0)).unwrap()
    }

    #[test]
    fn open_validates_inputs() {
        let mut b = book();
        let mut l = Ledger::new();
        let id = open(&mut b, &mut l, 1, "10", "1", Direction::Long, "1");
        assert_eq!(b.get(id).unwrap().entry_price, fa("1"));
        funded(&mut l, AccountId::solo(2), "10");
        let r = b.open_position(
            &mut l,
            AccountId::solo(2),
            VaultId(0),
            CA,
            P0,
            fa("10"),
            fa("11"),
            Direction::Long,
            fa("1"),
            at(0),
        );
        assert!(matches!(r, Err(PerpsError::Leverage { .. })));
        let r = b.open_position(
            &mut l,
            AccountId::solo(2),
            VaultId(0),
            CA,
            P0,
            FixedAmount::ZERO,
            fa("1"),
            Direction::Long,
            fa("1"),
            at(0),
        );
        assert!(matches!(r, Err(PerpsError::NoCollateral)));
        let r = b.open_position(
            &mut l,
            AccountId::solo(2),
            VaultId(0),
            CA,
            P0,
            fa("11"),
            fa("1"),
            Direction::Long,
            fa("1"),
            at(0),
        );
        assert!(matches!(r, Err(PerpsError::Ledger(_))));
        assert_eq!(l.balance(ESCROW, CA), b.escrowed(CA));
    }

    #[test]
    fn pnl_examples() {
        let mut b = book();
        let mut l = Ledger::new();
        let s = open(&mut b, &mut l, 1, "10", "2", Direction::Short, "1");
        let lg = open(&mut b, &mut l, 2, "10", "4", Direction::Long, "1");
        let cv = b.get(s).unwrap().collateral_value().unwrap();
        assert_eq!(position_pnl(b.get(s).unwrap(), fa("1")).unwrap(), FixedAmount::ZERO);
        assert_eq!(position_pnl(b.get(s).unwrap(), fa("0.75")).unwrap(), cv.checked_mul(fa("0.5")).unwrap());
        assert_eq!(position_pnl(b.get(lg).unwrap(), fa("0.75")).unwrap(), -cv);
    }

    #[test]
    fn funding_rate_examples() {
        assert_eq!(funding_rate(5, 5, fa("0.01")).unwrap(), fa("0.005"));
        assert_eq!(funding_rate(7, 0, fa("0.01")).unwrap(), fa("0.01"));
        assert_eq!(funding_rate(25, 75, fa("0.01")).unwrap(), fa("0.0025"));
        assert!(matches!(funding_rate(0, 0, fa("0.01")), Err(PerpsError::EmptyMarket)));
        assert_eq!(funding_rate_final(fa("0.004"), fa("100"), fa("100")).unwrap(), fa("0.008"));
        assert_eq!(funding_rate_final(fa("0.004"), fa("100"), fa("400")).unwrap(), fa("0.005"));
        assert_eq!(funding_rate_final(fa("0.004"), fa("1"), fa("1000000000000")).unwrap(), fa("0.004"));
        assert!(matches!(funding_rate_final(fa("0.004"), fa("1"), FixedAmount::ZERO), Err(PerpsError::Illiquid)));
    }

    #[test]
    fn three_shorts_pay_one_long() {
        let mut b = book();
        let mut l = Ledger::new();
        let long = open(&mut b, &mut l, 1, "100", "1", Direction::Long, "1");
        for who in 2..5 {
            open(&mut b, &mut l, who, "100", "1", Direction::Short, "1");
        }
        let r = b.apply_funding(&mut l, VaultId(0), fa("1000"), at(1)).unwrap().unwrap();
        assert_eq!(r.payer_side, Some(Direction::Short));
        let paid_each = -r.transfers.iter().find(|(id, _)| *id == 1).unwrap().1;
        let received = r.transfers.iter().find(|(id, _)| *id == long).unwrap().1;
        assert_eq!(received, paid_each.mul_int(3).unwrap());
        let net: FixedAmount = r.transfers.iter().map(|(_, a)| *a).sum();
        assert_eq!(net + r.to_treasury, FixedAmount::ZERO);
        assert_eq!(l.balance(ESCROW, CA), b.escrowed(CA));
    }

    #[test]
    fn balanced_and_single_sided_books_move_nothing() {
        let mut b = book();
        let mut l = Ledger::new();
        open(&mut b, &mut l, 1, "100", "1", Direction::Long, "1");
        let r = b.apply_funding(&mut l, VaultId(0), fa("1000"), at(1)).unwrap().unwrap();
        assert!(r.transfers.is_empty());
        open(&mut b, &mut l, 2, "100", "1", Direction::Short, "1");
        let r = b.apply_funding(&mut l, VaultId(0), fa("1000"), at(2)).unwrap().unwrap();
        assert!(r.transfers.is_empty());
        assert_eq!(r.rate, fa("0.005"));
    }

    fn ca_pool() -> PoolState {
        PoolState::new(PoolId(0), AccountId::solo(200), CA, USD, fa("1000"), fa("1000"), 0, AccountId::solo(201))
            .unwrap()
    }

    fn seed_pool(l: &mut Ledger, pool: &PoolState) {
        l.mint(CA, pool.account, pool.reserve_x).unwrap();
        l.mint(USD, pool.account, pool.reserve_y).unwrap();
    }

    #[test]
    fn healthy_book_produces_no_events() {
        let mut b = book();
        let mut l = Ledger::new();
        open(&mut b, &mut l, 1, "100", "2", Direction::Long, "1");
        let ev = b.flag_and_liquidate(&mut l, VaultId(0), P0, fa("1"), &[], None, at(1)).unwrap();
        assert!(ev.is_empty());
        assert!(matches!(
            b.liquidate(&mut l, 0, AccountId::solo(9), P0, fa("1"), None, at(1)),
            Err(PerpsError::InvalidLiquidation(0))
        ));
    }

    #[test]
    fn wiped_out_long_is_liquidated_same_block() {
        let mut b = book();
        let mut l = Ledger::new();
        let mut pool = ca_pool();
        seed_pool(&mut l, &pool);
        let id = open(&mut b, &mut l, 1, "100", "4", Direction::Long, "1");
        let ev = b.flag_and_liquidate(&mut l, VaultId(0), P0, fa("0.75"), &[], Some(&mut pool), at(1)).unwrap();
        assert!(matches!(ev[0], LiquidationEvent::Flagged { .. }));
        match ev[1] {
            LiquidationEvent::Liquidated { seized, proceeds, liquidator, .. } => {
                assert_eq!(seized, fa("100"));
                assert!(proceeds.is_positive());
                assert_eq!(liquidator, None);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(b.get(id).unwrap().status, PositionStatus::Liquidated);
        assert_eq!(l.balance(ESCROW, CA), FixedAmount::ZERO);
        assert!(l.check_conservation().is_ok());
    }

    #[test]
    fn flagged_position_auto_liquidates_at_deadline() {
        let mut b = book();
        let mut l = Ledger::new();
        // health = 1 − 2·0.46 = 0.08 ≤ 0.1
        let id = open(&mut b, &mut l, 1, "100", "2", Direction::Long, "1");
        let mark = fa("0.54");
        for h in 10..15 {
            let ev = b.flag_and_liquidate(&mut l, VaultId(0), P0, mark, &[], None, at(h)).unwrap();
            assert!(ev.iter().all(|e| !matches!(e, LiquidationEvent::Liquidated { .. })), "height {h}");
        }
        assert_eq!(b.get(id).unwrap().status, PositionStatus::Flagged { at: at(10) });
        let ev = b.flag_and_liquidate(&mut l, VaultId(0), P0, mark, &[], None, at(15)).unwrap();
        assert!(matches!(ev[0], LiquidationEvent::Liquidated { liquidator: None, .. }));
        assert_eq!(l.balance(TREASURY, CA), fa("100"));
    }

    #[test]
    fn liquidator_earns_fee_before_deadline() {
        let mut b = book();
        let mut l = Ledger::new();
        let id = open(&mut b, &mut l, 1, "100", "2", Direction::Long, "1");
        let bid = [LiquidatorBid { liquidator: AccountId::solo(50), position: id }];
        let ev = b.flag_and_liquidate(&mut l, VaultId(0), P0, fa("0.54"), &bid, None, at(3)).unwrap();
        assert!(matches!(ev[1], LiquidationEvent::Liquidated { fee, .. } if fee == fa("5")));
        assert_eq!(l.balance(AccountId::solo(50), CA), fa("5"));
        assert_eq!(l.balance(TREASURY, CA), fa("95"));
    }

    #[test]
    fn close_settles_against_treasury() {
        let mut b = book();
        let mut l = Ledger::new();
        let short = open(&mut b, &mut l, 1, "10", "2", Direction::Short, "1");
        let long = open(&mut b, &mut l, 2, "10", "2", Direction::Long, "1");
        let lose = b.close_position(&mut l, long, fa("0.75")).unwrap();
        assert_eq!(lose.returned, fa("5"));
        let win = b.close_position(&mut l, short, fa("0.75")).unwrap();
        assert_eq!(win.returned, fa("15"));
        assert_eq!(win.unpaid, FixedAmount::ZERO);
        assert!(b.close_position(&mut l, short, fa("1")).is_err());
        assert!(l.check_conservation().is_ok());
    }
}
