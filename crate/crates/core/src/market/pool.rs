//! Constant-product pools.
//!
//! Output reserves are rounded up after every swap, so the reserve product
//! never decreases and sits at most one output quantum above the exact
//! curve on fee-less trades.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use super::MarketError;
use crate::fixed::{FixedAmount, Rounding, SCALE};
use crate::ids::{AccountId, PoolId, TokenId};
use crate::ledger::Ledger;

pub const MAX_FEE_BPS: u32 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolState {
    pub id: PoolId,
    /// Ledger account holding the reserves.
    pub account: AccountId,
    pub token_x: TokenId,
    pub token_y: TokenId,
    pub reserve_x: FixedAmount,
    pub reserve_y: FixedAmount,
    pub fee_bps: u32,
    pub total_shares: FixedAmount,
    #[serde(with = "crate::serde_pairs")]
    pub shares: BTreeMap<AccountId, FixedAmount>,
    pub volume_x: FixedAmount,
    pub volume_y: FixedAmount,
    pub closed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapFill {
    pub input_token: TokenId,
    pub output_token: TokenId,
    pub amount_in: FixedAmount,
    pub amount_out: FixedAmount,
    pub spot_before: FixedAmount,
    pub spot_after: FixedAmount,
}

impl PoolState {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: PoolId,
        account: AccountId,
        token_x: TokenId,
        token_y: TokenId,
        reserve_x: FixedAmount,
        reserve_y: FixedAmount,
        fee_bps: u32,
        provider: AccountId,
    ) -> Result<Self, MarketError> {
        if token_x == token_y {
            return Err(MarketError::Parameter("pool tokens must differ"));
        }
        if fee_bps > MAX_FEE_BPS {
            return Err(MarketError::Parameter("fee_bps must be within 0..=10000"));
        }
        if !reserve_x.is_positive() || !reserve_y.is_positive() {
            return Err(MarketError::NonPositiveInput);
        }
        let mut shares = BTreeMap::new();
        shares.insert(provider, reserve_x);
        Ok(PoolState {
            id,
            account,
            token_x,
            token_y,
            reserve_x,
            reserve_y,
            fee_bps,
            total_shares: reserve_x,
            shares,
            volume_x: FixedAmount::ZERO,
            volume_y: FixedAmount::ZERO,
            closed: false,
        })
    }

    /// Mid price of x in units of y, fee-exclusive.
    pub fn spot(&self) -> FixedAmount {
        if !self.reserve_x.is_positive() {
            return FixedAmount::ZERO;
        }
        self.reserve_y.checked_div(self.reserve_x).unwrap_or(FixedAmount::MAX)
    }

    /// Exact comparison of the spot price against `price`.
    pub fn cmp_spot(&self, price: FixedAmount) -> Ordering {
        let lhs = BigInt::from(self.reserve_y.raw()) * BigInt::from(SCALE);
        let rhs = BigInt::from(price.raw()) * BigInt::from(self.reserve_x.raw());
        lhs.cmp(&rhs)
    }

    /// Product of reserves in raw units squared.
    pub fn invariant(&self) -> BigInt {
        BigInt::from(self.reserve_x.raw()) * BigInt::from(self.reserve_y.raw())
    }

    /// Liquid (numéraire) side of the pool.
    pub fn liquidity(&self) -> FixedAmount {
        self.reserve_y
    }

    pub fn other(&self, token: TokenId) -> Result<TokenId, MarketError> {
        if token == self.token_x {
            Ok(self.token_y)
        } else if token == self.token_y {
            Ok(self.token_x)
        } else {
            Err(MarketError::UnknownToken(token))
        }
    }

    fn reserves_for(&self, input: TokenId) -> Result<(FixedAmount, FixedAmount), MarketError> {
        if self.closed {
            return Err(MarketError::Closed);
        }
        let (r_in, r_out) = if input == self.token_x {
            (self.reserve_x, self.reserve_y)
        } else if input == self.token_y {
            (self.reserve_y, self.reserve_x)
        } else {
            return Err(MarketError::UnknownToken(input));
        };
        if r_in <= FixedAmount::QUANTUM || r_out <= FixedAmount::QUANTUM {
            return Err(MarketError::Illiquid);
        }
        Ok((r_in, r_out))
    }

    fn set_reserves(&mut self, input: TokenId, r_in: FixedAmount, r_out: FixedAmount, dx: FixedAmount) {
        if input == self.token_x {
            self.reserve_x = r_in;
            self.reserve_y = r_out;
            self.volume_x += dx;
        } else {
            self.reserve_y = r_in;
            self.reserve_x = r_out;
            self.volume_y += dx;
        }
    }

    /// Output for selling `dx` of `input`, without mutating.
    pub fn quote(&self, input: TokenId, dx: FixedAmount) -> Result<FixedAmount, MarketError> {
        self.swap_math(input, dx).map(|(dy, _)| dy)
    }

    fn swap_math(&self, input: TokenId, dx: FixedAmount) -> Result<(FixedAmount, FixedAmount), MarketError> {
        if !dx.is_positive() {
            return Err(MarketError::NonPositiveInput);
        }
        let (r_in, r_out) = self.reserves_for(input)?;
        let dx_eff = dx.mul_bps(MAX_FEE_BPS - self.fee_bps, Rounding::Floor);
        if !dx_eff.is_positive() {
            return Err(MarketError::Dust);
        }
        let new_in = r_in.checked_add(dx_eff)?;
        let new_out = r_in.mul_div_round(r_out, new_in, Rounding::Ceil)?;
        let dy = r_out - new_out;
        if !dy.is_positive() {
            return Err(MarketError::Dust);
        }
        Ok((dy, new_out))
    }

    /// Sells `dx` of `input`; returns the output amount.
    pub fn swap(&mut self, input: TokenId, dx: FixedAmount) -> Result<FixedAmount, MarketError> {
        let (dy, new_out) = self.swap_math(input, dx)?;
        let (r_in, _) = self.reserves_for(input)?;
        self.set_reserves(input, r_in.checked_add(dx)?, new_out, dx);
        Ok(dy)
    }

    /// Input needed to receive exactly `dy` of `output`.
    pub fn quote_exact_out(&self, output: TokenId, dy: FixedAmount) -> Result<FixedAmount, MarketError> {
        if !dy.is_positive() {
            return Err(MarketError::NonPositiveInput);
        }
        let input = self.other(output)?;
        let (r_in, r_out) = self.reserves_for(input)?;
        if dy >= r_out {
            return Err(MarketError::Illiquid);
        }
        let new_out = r_out - dy;
        let needed = r_in.mul_div_round(r_out, new_out, Rounding::Ceil)? - r_in;
        let keep = MAX_FEE_BPS - self.fee_bps;
        if keep == 0 {
            return Err(MarketError::Dust);
        }
        let dx = needed.mul_div_round(
            FixedAmount::from_raw(MAX_FEE_BPS as i128),
            FixedAmount::from_raw(keep as i128),
            Rounding::Ceil,
        )?;
        Ok(dx)
    }

    /// Buys exactly `dy` of `output`; returns the input paid.
    pub fn swap_exact_out(&mut self, output: TokenId, dy: FixedAmount) -> Result<FixedAmount, MarketError> {
        let dx = self.quote_exact_out(output, dy)?;
        let input = self.other(output)?;
        let (r_in, r_out) = self.reserves_for(input)?;
        self.set_reserves(input, r_in.checked_add(dx)?, r_out - dy, dx);
        Ok(dx)
    }

    /// Adds liquidity at the current ratio; returns minted LP shares.
    pub fn add_liquidity(
        &mut self,
        provider: AccountId,
        dx: FixedAmount,
        dy: FixedAmount,
    ) -> Result<FixedAmount, MarketError> {
        if !dx.is_positive() || !dy.is_positive() {
            return Err(MarketError::NonPositiveInput);
        }
        let minted = if self.closed || self.total_shares.is_zero() {
            self.closed = false;
            dx
        } else {
            let expected = dx.mul_div(self.reserve_y, self.reserve_x)?;
            if (dy - expected).abs() > FixedAmount::QUANTUM {
                return Err(MarketError::Ratio { expected, got: dy });
            }
            dx.mul_div_round(self.total_shares, self.reserve_x, Rounding::Floor)?
        };
        self.reserve_x = self.reserve_x.checked_add(dx)?;
        self.reserve_y = self.reserve_y.checked_add(dy)?;
        self.total_shares = self.total_shares.checked_add(minted)?;
        *self.shares.entry(provider).or_default() += minted;
        Ok(minted)
    }

    /// Withdraws `share` (in (0, 1]) of the provider's position.
    pub fn remove_liquidity(
        &mut self,
        provider: AccountId,
        share: FixedAmount,
    ) -> Result<(FixedAmount, FixedAmount), MarketError> {
        if !share.is_positive() || share > FixedAmount::ONE {
            return Err(MarketError::InvalidShare(share));
        }
        if self.closed {
            return Err(MarketError::Closed);
        }
        let held = self.shares.get(&provider).copied().unwrap_or_default();
        if held.is_zero() {
            return Err(MarketError::NoPosition(provider));
        }
        let burn = if share == FixedAmount::ONE {
            held
        } else {
            held.mul_div_round(share, FixedAmount::ONE, Rounding::Floor)?
        };
        if burn.is_zero() {
            return Err(MarketError::Dust);
        }
        let (out_x, out_y) = if burn == self.total_shares {
            (self.reserve_x, self.reserve_y)
        } else {
            (
                self.reserve_x.mul_div_round(burn, self.total_shares, Rounding::Floor)?,
                self.reserve_y.mul_div_round(burn, self.total_shares, Rounding::Floor)?,
            )
        };
        self.reserve_x -= out_x;
        self.reserve_y -= out_y;
        self.total_shares -= burn;
        let left = held - burn;
        if left.is_zero() {
            self.shares.remove(&provider);
        } else {
            self.shares.insert(provider, left);
        }
        if self.total_shares.is_zero() {
            self.closed = true;
        }
        Ok((out_x, out_y))
    }
}

/// Pure swap: returns the output and the post-trade pool.
pub fn pool_swap(pool: &PoolState, input: TokenId, dx: FixedAmount) -> Result<(FixedAmount, PoolState), MarketError> {
    let mut next = pool.clone();
    let dy = next.swap(input, dx)?;
    Ok((dy, next))
}

pub fn pool_add_liquidity(
    pool: &PoolState,
    provider: AccountId,
    dx: FixedAmount,
    dy: FixedAmount,
) -> Result<PoolState, MarketError> {
    let mut next = pool.clone();
    next.add_liquidity(provider, dx, dy)?;
    Ok(next)
}

pub fn pool_remove_liquidity(
    pool: &PoolState,
    provider: AccountId,
    share: FixedAmount,
) -> Result<PoolState, MarketError> {
    let mut next = pool.clone();
    next.remove_liquidity(provider, share)?;
    Ok(next)
}

/// Sells `dx` of `input` from `trader`, settling both legs on the ledger.
pub fn execute_swap(
    ledger: &mut Ledger,
    pool: &mut PoolState,
    trader: AccountId,
    input: TokenId,
    dx: FixedAmount,
) -> Result<SwapFill, MarketError> {
    ledger.require(trader, input, dx)?;
    let output = pool.other(input)?;
    let spot_before = pool.spot();
    let dy = pool.swap(input, dx)?;
    ledger.transfer(input, trader, pool.account, dx)?;
    ledger.transfer(output, pool.account, trader, dy)?;
    Ok(SwapFill {
        input_token: input,
        output_token: output,
        amount_in: dx,
        amount_out: dy,
        spot_before,
        spot_after: pool.spot(),
    })
}

/// Buys exactly `dy` of `output` for `trader`.
pub fn execute_swap_exact_out(
    ledger: &mut Ledger,
    pool: &mut PoolState,
    trader: AccountId,
    output: TokenId,
    dy: FixedAmount,
) -> Result<SwapFill, MarketError> {
    let input = pool.other(output)?;
    let dx = pool.quote_exact_out(output, dy)?;
    ledger.require(trader, input, dx)?;
    let spot_before = pool.spot();
    pool.swap_exact_out(output, dy)?;
    ledger.transfer(input, trader, pool.account, dx)?;
    ledger.transfer(output, pool.account, trader, dy)?;
    Ok(SwapFill {
        input_token: input,
        output_token: output,
        amount_in: dx,
        amount_out: dy,
        spot_before,
        spot_after: pool.spot(),
    })
}

pub fn execute_add_liquidity(
    ledger: &mut Ledger,
    pool: &mut PoolState,
    provider: AccountId,
    dx: FixedAmount,
    dy: FixedAmount,
) -> Result<FixedAmount, MarketError> {
    ledger.require(provider, pool.token_x, dx)?;
    ledger.require(provider, pool.token_y, dy)?;
    let minted = pool.add_liquidity(provider, dx, dy)?;
    ledger.transfer(pool.token_x, provider, pool.account, dx)?;
    ledger.transfer(pool.token_y, provider, pool.account, dy)?;
    Ok(minted)
}

pub fn execute_remove_liquidity(
    ledger: &mut Ledger,
    pool: &mut PoolState,
    provider: AccountId,
    share: FixedAmount,
) -> Result<(FixedAmount, FixedAmount), MarketError> {
    let (out_x, out_y) = pool.remove_liquidity(provider, share)?;
    ledger.transfer(pool.token_x, pool.account, provider, out_x)?;
    ledger.transfer(pool.token_y, pool.account, provider, out_y)?;
    Ok((out_x, out_y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fa(s: &str) -> FixedAmount {
        FixedAmount::parse(s).unwrap()
    }

    const X: TokenId = TokenId(0);
    const Y: TokenId = TokenId(1);

    fn pool(rx: &str, ry: &str, fee: u32) -> PoolState {
        PoolState::new(PoolId(0), AccountId::solo(99), X, Y, fa(rx), fa(ry), fee, AccountId::solo(1)).unwrap()
    }

    #[test]
    fn swap_examples() {
        let p = pool("1000", "1000", 0);
        let (dy, next) = pool_swap(&p, X, fa("100")).unwrap();
        assert_eq!(dy, fa("90.909090909"));
        assert_eq!(next.reserve_x, fa("1100"));
        let fee = pool("1000", "1000", 30);
        assert_eq!(fee.quote(X, fa("100")).unwrap(), fa("90.661089388"));
        assert_eq!(p.quote(X, FixedAmount::ZERO), Err(MarketError::NonPositiveInput));
        assert_eq!(p.quote(TokenId(7), fa("1")), Err(MarketError::UnknownToken(TokenId(7))));
    }

    #[test]
    fn dust_and_illiquid_errors() {
        let p = pool("1000", "0.000001", 0);
        assert_eq!(p.quote(X, FixedAmount::QUANTUM), Err(MarketError::Dust));
        let drained = pool("1000", "0.000000001", 0);
        assert_eq!(drained.quote(X, fa("1")), Err(MarketError::Illiquid));
    }

    #[test]
    fn exact_out_covers_requested_amount() {
        let p = pool("1000", "2000", 30);
        let dx = p.quote_exact_out(Y, fa("150")).unwrap();
        assert!(p.quote(X, dx).unwrap() >= fa("150"));
        let mut q = p.clone();
        assert_eq!(q.swap_exact_out(Y, fa("150")).unwrap(), dx);
        assert_eq!(q.reserve_y, fa("1850"));
        assert!(q.invariant() >= p.invariant());
        assert_eq!(p.quote_exact_out(Y, fa("2000")), Err(MarketError::Illiquid));
    }

    #[test]
    fn liquidity_examples() {
        let p = pool("1000", "2000", 0);
        let half = pool_remove_liquidity(&p, AccountId::solo(1), fa("0.5")).unwrap();
        assert_eq!((half.reserve_x, half.reserve_y), (fa("500"), fa("1000")));
        let all = pool_remove_liquidity(&p, AccountId::solo(1), fa("1")).unwrap();
        assert_eq!((all.reserve_x, all.reserve_y), (FixedAmount::ZERO, FixedAmount::ZERO));
        assert!(all.closed);
        let added = pool_add_liquidity(&p, AccountId::solo(2), fa("100"), fa("200")).unwrap();
        assert_eq!((added.reserve_x, added.reserve_y), (fa("1100"), fa("2200")));
        assert_eq!(added.shares[&AccountId::solo(2)], fa("100"));
        assert!(matches!(
            pool_add_liquidity(&p, AccountId::solo(2), fa("100"), fa("201")),
            Err(MarketError::Ratio { .. })
        ));
        assert!(matches!(pool_remove_liquidity(&p, AccountId::solo(1), fa("1.5")), Err(MarketError::InvalidShare(_))));
    }

    #[test]
    fn ledger_settlement_moves_both_legs() {
        let mut ledger = Ledger::new();
        let provider = AccountId::solo(1);
        let trader = AccountId::solo(2);
        let mut p = pool("1000", "1000", 0);
        ledger.mint(X, p.account, fa("1000")).unwrap();
        ledger.mint(Y, p.account, fa("1000")).unwrap();
        ledger.mint(X, trader, fa("100")).unwrap();
        let fill = execute_swap(&mut ledger, &mut p, trader, X, fa("100")).unwrap();
        assert_eq!(ledger.balance(trader, Y), fill.amount_out);
        assert_eq!(ledger.balance(p.account, X), p.reserve_x);
        assert_eq!(ledger.balance(p.account, Y), p.reserve_y);
        assert!(fill.spot_after < fill.spot_before);
        let err = execute_swap(&mut ledger, &mut p, provider, X, fa("1")).unwrap_err();
        assert!(matches!(err, MarketError::Ledger(_)));
    }
}
