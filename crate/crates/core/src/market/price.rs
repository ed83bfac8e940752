//! Exogenous price paths of a token after a rug pull.

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use super::MarketError;
use crate::fixed::{quantize, FixedAmount, Wide};
use crate::ids::BlockTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum PriceKind {
    /// Exponential collapse after a liquidity event, time constant `tau_rug`.
    Scam,
    /// Exponential decay at rate `lambda` from external failure.
    Catastrophic,
    /// Hyperbolic decline `p0 / (1 + alpha·t)` from eroding sentiment.
    Sentiment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PriceProcess {
    pub kind: PriceKind,
    pub p0: FixedAmount,
    #[serde(default = "one")]
    pub tau_rug: FixedAmount,
    #[serde(default)]
    pub lambda: FixedAmount,
    #[serde(default)]
    pub alpha_sent: FixedAmount,
    #[serde(default = "default_floor")]
    pub epsilon_floor: FixedAmount,
}

fn one() -> FixedAmount {
    FixedAmount::ONE
}

/// Residual price floor: one quantum.
pub fn default_floor() -> FixedAmount {
    FixedAmount::QUANTUM
}

impl PriceProcess {
    pub fn scam(p0: FixedAmount, tau_rug: FixedAmount) -> Self {
        PriceProcess { kind: PriceKind::Scam, tau_rug, ..Self::base(p0) }
    }

    pub fn catastrophic(p0: FixedAmount, lambda: FixedAmount) -> Self {
        PriceProcess { kind: PriceKind::Catastrophic, lambda, ..Self::base(p0) }
    }

    pub fn sentiment(p0: FixedAmount, alpha_sent: FixedAmount) -> Self {
        PriceProcess { kind: PriceKind::Sentiment, alpha_sent, ..Self::base(p0) }
    }

    fn base(p0: FixedAmount) -> Self {
        PriceProcess {
            kind: PriceKind::Scam,
            p0,
            tau_rug: FixedAmount::ONE,
            lambda: FixedAmount::ZERO,
            alpha_sent: FixedAmount::ZERO,
            epsilon_floor: default_floor(),
        }
    }

    pub fn with_floor(mut self, floor: FixedAmount) -> Self {
        self.epsilon_floor = floor;
        self
    }

    /// Checks the parameters the active kind reads.
    pub fn validate(&self) -> Result<(), MarketError> {
        if !self.p0.is_positive() {
            return Err(MarketError::Parameter("p0 must be positive"));
        }
        if !self.epsilon_floor.is_positive() {
            return Err(MarketError::Parameter("epsilon_floor must be positive"));
        }
        match self.kind {
            PriceKind::Scam if !self.tau_rug.is_positive() => Err(MarketError::Parameter("tau_rug must be positive")),
            PriceKind::Catastrophic if self.lambda.is_negative() => {
                Err(MarketError::Parameter("lambda must be non-negative"))
            }
            PriceKind::Sentiment if self.alpha_sent.is_negative() => {
                Err(MarketError::Parameter("alpha_sent must be non-negative"))
            }
            _ => Ok(()),
        }
    }

    /// Price after `t` blocks.
    pub fn price(&self, t: FixedAmount) -> Result<FixedAmount, MarketError> {
        match self.kind {
            PriceKind::Scam => price_scam(self, t),
            PriceKind::Catastrophic => price_catastrophic(self, t),
            PriceKind::Sentiment => price_sentiment(self, t),
        }
    }

    /// Price at `now` for a process that started at `start`; `p0` before it.
    pub fn price_at(&self, start: BlockTime, now: BlockTime) -> Result<FixedAmount, MarketError> {
        let elapsed = now.since(start);
        self.price(FixedAmount::from_int(elapsed as i64))
    }
}

fn expect_kind(proc: &PriceProcess, kind: PriceKind) -> Result<(), MarketError> {
    if proc.kind != kind {
        return Err(MarketError::KindMismatch { expected: kind, actual: proc.kind });
    }
    Ok(())
}

fn check_time(t: FixedAmount) -> Result<(), MarketError> {
    if t.is_negative() {
        return Err(MarketError::Parameter("time must be non-negative"));
    }
    Ok(())
}

/// `max(p0·e^(−t/τ), ε)`.
pub fn price_scam(proc: &PriceProcess, t: FixedAmount) -> Result<FixedAmount, MarketError> {
    expect_kind(proc, PriceKind::Scam)?;
    check_time(t)?;
    proc.validate()?;
    let exponent = -Wide::ratio(t, proc.tau_rug)?;
    Ok(exponent.exp_scaled(proc.p0)?.max(proc.epsilon_floor))
}

/// `max(p0·e^(−λt), ε)`.
pub fn price_catastrophic(proc: &PriceProcess, t: FixedAmount) -> Result<FixedAmount, MarketError> {
    expect_kind(proc, PriceKind::Catastrophic)?;
    check_time(t)?;
    proc.validate()?;
    let exponent = -Wide::from_fixed(t)?.mul_fixed(proc.lambda)?;
    Ok(exponent.exp_scaled(proc.p0)?.max(proc.epsilon_floor))
}

/// `max(p0/(1+α·t), ε)`.
pub fn price_sentiment(proc: &PriceProcess, t: FixedAmount) -> Result<FixedAmount, MarketError> {
    expect_kind(proc, PriceKind::Sentiment)?;
    check_time(t)?;
    proc.validate()?;
    let denom = BigRational::from_integer(1.into()) + proc.alpha_sent.to_rational() * t.to_rational();
    Ok(quantize(&(proc.p0.to_rational() / denom))?.max(proc.epsilon_floor))
}
