//! Creator liquidity drains.
//!
//! The naive withdrawal target is `(T_rug / T_total) · L_pool`. The drain
//! itself is realized by selling the creator's tokens through the pool, so
//! slippage makes the realized proceeds strictly smaller. Both numbers are
//! reported.

use serde::{Deserialize, Serialize};

use super::pool::PoolState;
use super::MarketError;
use crate::fixed::FixedAmount;
use crate::ids::{AccountId, BlockTime, PoolId};
use crate::ledger::Ledger;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrainEvent {
    pub id: u64,
    pub pool: PoolId,
    pub creator: AccountId,
    pub t_rug: FixedAmount,
    pub t_total: FixedAmount,
    pub submitted_at: BlockTime,
    /// The drain is pending and publicly visible until this height.
    pub executes_at: BlockTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrainOutcome {
    pub naive_target: FixedAmount,
    pub liquid_out: FixedAmount,
    pub spot_before: FixedAmount,
    pub spot_after: FixedAmount,
}

impl DrainEvent {
    pub fn new(
        id: u64,
        pool: PoolId,
        creator: AccountId,
        t_rug: FixedAmount,
        t_total: FixedAmount,
        submitted_at: BlockTime,
        executes_at: BlockTime,
    ) -> Result<Self, MarketError> {
        if t_rug.is_negative() || t_rug > t_total {
            return Err(MarketError::Parameter("drain requires 0 <= t_rug <= t_total"));
        }
        if !t_total.is_positive() {
            return Err(MarketError::Parameter("t_total must be positive"));
        }
        if executes_at < submitted_at {
            return Err(MarketError::Parameter("drain cannot execute before submission"));
        }
        Ok(DrainEvent { id, pool, creator, t_rug, t_total, submitted_at, executes_at })
    }

    /// `(T_rug / T_total) · L_pool` over the pool's liquid side.
    pub fn naive_target(&self, pool: &PoolState) -> Result<FixedAmount, MarketError> {
        Ok(pool.liquidity().mul_div(self.t_rug, self.t_total)?)
    }

    pub fn is_pending(&self, now: BlockTime) -> bool {
        now < self.executes_at
    }
}

/// Pure drain: sells `t_rug` of the pool's x token through the curve.
pub fn execute_drain(
    ev: &DrainEvent,
    pool: &PoolState,
    creator_balance: FixedAmount,
    now: BlockTime,
) -> Result<(DrainOutcome, PoolState), MarketError> {
    if now < ev.executes_at {
        return Err(MarketError::TooEarly { now: now.height, executes_at: ev.executes_at.height });
    }
    if creator_balance < ev.t_rug {
        return Err(MarketError::CreatorBalance { held: creator_balance, required: ev.t_rug });
    }
    let naive_target = ev.naive_target(pool)?;
    let spot_before = pool.spot();
    let mut next = pool.clone();
    let liquid_out = if ev.t_rug.is_zero() { FixedAmount::ZERO } else { next.swap(pool.token_x, ev.t_rug)? };
    let outcome = DrainOutcome { naive_target, liquid_out, spot_before, spot_after: next.spot() };
    Ok((outcome, next))
}

/// Executes a drain against the ledger and pool in place.
pub fn execute_drain_with_ledger(
    ledger: &mut Ledger,
    ev: &DrainEvent,
    pool: &mut PoolState,
    now: BlockTime,
) -> Result<DrainOutcome, MarketError> {
    let held = ledger.balance(ev.creator, pool.token_x);
    let (outcome, next) = execute_drain(ev, pool, held, now)?;
    if outcome.liquid_out.is_positive() {
        ledger.transfer(pool.token_x, ev.creator, pool.account, ev.t_rug)?;
        ledger.transfer(pool.token_y, pool.account, ev.creator, outcome.liquid_out)?;
    }
    *pool = next;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::{ChainId, TokenId};

    fn fa(s: &str) -> FixedAmount {
        FixedAmount::parse(s).unwrap()
    }

    fn at(h: u64) -> BlockTime {
        BlockTime::new(ChainId(0), h)
    }

    fn pool(rx: &str, ry: &str) -> PoolState {
        PoolState::new(PoolId(0), AccountId::solo(9), TokenId(0), TokenId(1), fa(rx), fa(ry), 0, AccountId::solo(1))
            .unwrap()
    }

    fn drain(t_rug: &str, t_total: &str) -> DrainEvent {
        DrainEvent::new(0, PoolId(0), AccountId::solo(2), fa(t_rug), fa(t_total), at(0), at(3)).unwrap()
    }

    #[test]
    fn zero_drain_leaves_pool_unchanged() {
        let p = pool("1000", "2000");
        let (out, next) = execute_drain(&drain("0", "1000"), &p, fa("0"), at(3)).unwrap();
        assert_eq!(out.liquid_out, FixedAmount::ZERO);
        assert_eq!(next, p);
    }

    #[test]
    fn full_drain_realizes_less_than_naive_target() {
        let p = pool("1000", "2000");
        let (out, next) = execute_drain(&drain("1000", "1000"), &p, fa("1000"), at(3)).unwrap();
        assert_eq!(out.naive_target, fa("2000"));
        assert!(out.liquid_out < fa("2000"));
        assert_eq!(out.liquid_out, fa("1000"));
        assert!(next.spot() < p.spot());
    }

    #[test]
    fn half_drain_naive_target() {
        let p = pool("1000", "2000");
        assert_eq!(drain("500", "1000").naive_target(&p).unwrap(), fa("1000"));
    }

    #[test]
    fn drain_errors() {
        let p = pool("1000", "2000");
        assert!(matches!(
            execute_drain(&drain("500", "1000"), &p, fa("499"), at(3)),
            Err(MarketError::CreatorBalance { .. })
        ));
        assert!(matches!(
            execute_drain(&drain("500", "1000"), &p, fa("500"), at(2)),
            Err(MarketError::TooEarly { .. })
        ));
        assert!(DrainEvent::new(0, PoolId(0), AccountId::solo(2), fa("2"), fa("1"), at(0), at(1)).is_err());
        assert!(DrainEvent::new(0, PoolId(0), AccountId::solo(2), fa("1"), fa("1"), at(5), at(1)).is_err());
    }
}
