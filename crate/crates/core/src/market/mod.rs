//! Rug-pull price processes, constant-product pools, liquidity drains and
//! the peg keeper.

mod drain;
mod peg;
mod pool;
mod price;

pub use drain::{execute_drain, execute_drain_with_ledger, DrainEvent, DrainOutcome};
pub use peg::{default_tolerance, peg_keeper_step, PegTrade, MAX_BISECTION_STEPS};
pub use pool::{
    execute_add_liquidity, execute_remove_liquidity, execute_swap, execute_swap_exact_out, pool_add_liquidity,
    pool_remove_liquidity, pool_swap, PoolState, SwapFill, MAX_FEE_BPS,
};
pub use price::{default_floor, price_catastrophic, price_scam, price_sentiment, PriceKind, PriceProcess};

use crate::fixed::{FixedAmount, FixedError};
use crate::ids::{AccountId, TokenId};
use crate::ledger::LedgerError;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MarketError {
    #[error("invalid parameter: {0}")]
    Parameter(&'static str),
    #[error("price process is {actual:?}, expected {expected:?}")]
    KindMismatch { expected: PriceKind, actual: PriceKind },
    #[error("amount must be positive")]
    NonPositiveInput,
    #[error("token {0} is not in this pool")]
    UnknownToken(TokenId),
    #[error("trade output rounds to zero")]
    Dust,
    #[error("pool is drained")]
    Illiquid,
    #[error("pool is closed")]
    Closed,
    #[error("deposit ratio mismatch: expected {expected}, got {got}")]
    Ratio { expected: FixedAmount, got: FixedAmount },
    #[error("share {0} outside (0, 1]")]
    InvalidShare(FixedAmount),
    #[error("{0} holds no liquidity position")]
    NoPosition(AccountId),
    #[error("drain executes at height {executes_at}, now {now}")]
    TooEarly { now: u64, executes_at: u64 },
    #[error("creator holds {held}, drain needs {required}")]
    CreatorBalance { held: FixedAmount, required: FixedAmount },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Arithmetic(#[from] FixedError),
}
