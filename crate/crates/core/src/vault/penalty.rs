//! Withdrawal penalties: the superlinear whale term and the escalating
//! per-withdrawal rate that makes splitting across accounts more expensive.

use num_bigint::BigInt;
use num_rational::BigRational;

use super::VaultError;
use crate::fixed::{quantize, FixedAmount};

/// Cap on the whale surcharge rate.
pub fn max_whale_rate() -> FixedAmount {
    FixedAmount::from_raw(990_000_000)
}

/// `k · H^λ`.
pub fn whale_penalty(h: FixedAmount, k: FixedAmount, lambda: FixedAmount) -> Result<FixedAmount, VaultError> {
    if h.is_negative() {
        return Err(VaultError::Parameter("holdings must be non-negative"));
    }
    Ok(k.mul_pow(h, lambda)?)
}

/// Whale surcharge as a rate: `min(0.99, k · (H / H_ref)^λ)`.
pub fn whale_rate(
    h: FixedAmount,
    h_ref: FixedAmount,
    k: FixedAmount,
    lambda: FixedAmount,
) -> Result<FixedAmount, VaultError> {
    if h.is_negative() {
        return Err(VaultError::Parameter("holdings must be non-negative"));
    }
    if !h_ref.is_positive() || h.is_zero() || k.is_zero() {
        return Ok(FixedAmount::ZERO);
    }
    let ratio = crate::fixed::Wide::ln(h)?.checked_sub(crate::fixed::Wide::ln(h_ref)?)?;
    let rate = match ratio.mul_fixed(lambda).and_then(|w| w.exp_scaled(k)) {
        Ok(r) => r,
        Err(crate::fixed::FixedError::Overflow) => return Ok(max_whale_rate()),
        Err(e) => return Err(e.into()),
    };
    Ok(rate.min(max_whale_rate()))
}

/// Rate charged on the `i`-th withdrawal by one owner: `γ + Δγ · i`.
pub fn withdrawal_rate(gamma: FixedAmount, delta_gamma: FixedAmount, i: u64) -> Result<FixedAmount, VaultError> {
    Ok(gamma.checked_add(delta_gamma.mul_int(i as i128)?)?)
}

/// `Σ_{i=1..n} (H/n)(γ + Δγ·i) = H·γ + H·Δγ·(n+1)/2`, rounded once.
pub fn cumulative_penalty(
    h_total: FixedAmount,
    n: u64,
    gamma: FixedAmount,
    delta_gamma: FixedAmount,
) -> Result<FixedAmount, VaultError> {
    if n == 0 {
        return Err(VaultError::Parameter("withdrawal count must be at least 1"));
    }
    if h_total.is_negative() {
        return Err(VaultError::Parameter("holdings must be non-negative"));
    }
    let h = h_total.to_rational();
    let half_n1 = BigRational::new(BigInt::from(n) + 1, BigInt::from(2));
    let exact = &h * gamma.to_rational() + h * delta_gamma.to_rational() * half_n1;
    Ok(quantize(&exact)?)
}
