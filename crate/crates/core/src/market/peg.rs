//! Peg keeper for anticoin/numéraire pools.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::pool::PoolState;
use super::MarketError;
use crate::fixed::FixedAmount;
use crate::ids::TokenId;

pub const MAX_BISECTION_STEPS: u32 = 64;

/// Default tolerance band: 0.5%.
pub fn default_tolerance() -> FixedAmount {
    FixedAmount::from_raw(5_000_000)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PegTrade {
    pub input_token: TokenId,
    pub amount_in: FixedAmount,
    pub amount_out: FixedAmount,
    pub spot_before: FixedAmount,
    pub spot_after: FixedAmount,
}

/// Plans the largest swap within `budget` that moves the pool's spot
/// toward `peg` without crossing it.
///
/// `budget` is denominated in the token the corrective trade sells: the
/// pool's x token when spot is above the band, y when below. Returns `None`
/// when the spot is inside the band or no trade fits.
pub fn peg_keeper_step(
    pool: &PoolState,
    peg: FixedAmount,
    budget: FixedAmount,
    tolerance: FixedAmount,
) -> Result<Option<PegTrade>, MarketError> {
    if peg.is_negative() {
        return Err(MarketError::Parameter("peg must be non-negative"));
    }
    if !budget.is_positive() || pool.closed {
        return Ok(None);
    }
    let band = peg.checked_mul(tolerance)?;
    let upper = peg.checked_add(band)?;
    let lower = peg.checked_sub(band)?;
    let (input, overshoot) = if pool.cmp_spot(upper) == Ordering::Greater {
        (pool.token_x, Ordering::Less)
    } else if pool.cmp_spot(lower) == Ordering::Less {
        (pool.token_y, Ordering::Greater)
    } else {
        return Ok(None);
    };

    let stays_on_side = |dx: FixedAmount| -> bool {
        let mut probe = pool.clone();
        match probe.swap(input, dx) {
            Ok(_) => probe.cmp_spot(peg) != overshoot,
            Err(MarketError::Dust) => true,
            Err(_) => false,
        }
    };

    let amount = if stays_on_side(budget) {
        budget
    } else {
        let (mut lo, mut hi) = (0i128, budget.raw());
        for _ in 0..MAX_BISECTION_STEPS {
            if hi - lo <= 1 {
                break;
            }
            let mid = lo + (hi - lo) / 2;
            if stays_on_side(FixedAmount::from_raw(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        FixedAmount::from_raw(lo)
    };
    if amount.is_zero() {
        return Ok(None);
    }
    let mut after = pool.clone();
    let amount_out = match after.swap(input, amount) {
        Ok(out) => out,
        Err(MarketError::Dust) => return Ok(None),
        Err(e) => return Err(e),
    };
    Ok(Some(PegTrade {
        input_token: input,
        amount_in: amount,
        amount_out,
        spot_before: pool.spot(),
        spot_after: after.spot(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::{AccountId, PoolId};

    fn fa(s: &str) -> FixedAmount {
        FixedAmount::parse(s).unwrap()
    }

    fn pool(rx: &str, ry: &str, fee: u32) -> PoolState {
        PoolState::new(PoolId(0), AccountId::solo(9), TokenId(0), TokenId(1), fa(rx), fa(ry), fee, AccountId::solo(1))
            .unwrap()
    }

    fn within_band(spot: FixedAmount, peg: FixedAmount) -> bool {
        (spot - peg).abs() <= peg.checked_mul(default_tolerance()).unwrap()
    }

    #[test]
    fn at_peg_no_trade() {
        let p = pool("1000", "2000", 30);
        assert_eq!(peg_keeper_step(&p, fa("2"), fa("1000"), default_tolerance()).unwrap(), None);
    }

    #[test]
    fn zero_budget_no_trade() {
        let p = pool("1000", "2200", 30);
        assert_eq!(peg_keeper_step(&p, fa("2"), FixedAmount::ZERO, default_tolerance()).unwrap(), None);
    }

    #[test]
    fn above_peg_converges_into_band() {
        let p = pool("1000", "2200", 30);
        let trade = peg_keeper_step(&p, fa("2"), fa("1000"), default_tolerance()).unwrap().unwrap();
        assert_eq!(trade.input_token, TokenId(0));
        assert!(within_band(trade.spot_after, fa("2")), "{}", trade.spot_after);
        assert!(trade.spot_after >= fa("2"));
    }

    #[test]
    fn below_peg_buys_anticoin() {
        let p = pool("1000", "1800", 0);
        let trade = peg_keeper_step(&p, fa("2"), fa("5000"), default_tolerance()).unwrap().unwrap();
        assert_eq!(trade.input_token, TokenId(1));
        assert!(within_band(trade.spot_after, fa("2")));
        assert!(trade.spot_after <= fa("2"));
    }

    #[test]
    fn small_budget_moves_partially_without_overshoot() {
        let p = pool("1000", "2200", 0);
        let trade = peg_keeper_step(&p, fa("2"), fa("1"), default_tolerance()).unwrap().unwrap();
        assert_eq!(trade.amount_in, fa("1"));
        assert!(trade.spot_after > fa("2") && trade.spot_after < p.spot());
    }
}
