//! Protocol-token supply regulation, deposit and burn rewards, vault oracle
//! aggregation and market potential.
//!
//! The supply target is `s0 / max(1, ln Σ)`, where Σ is the value of
//! rugged tokens held in vaults. Each block mints `ε` and a one-sided
//! proportional controller burns `min(β_burn, κ · excess)` toward the target.

use serde::{Deserialize, Serialize};

use crate::fixed::{safe_ln, FixedAmount, FixedError};
use crate::ids::{BlockTime, ChainId, TokenId, VaultId};
use crate::vault::{Vault, VaultRegistry};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenomicsError {
    #[error("invalid parameter: {0}")]
    Parameter(&'static str),
    #[error(transparent)]
    Arithmetic(#[from] FixedError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SupplyParams {
    /// Target supply when vaulted value is at most e.
    pub s0: FixedAmount,
    /// Tokens emitted per block, ε.
    pub epsilon_rate: FixedAmount,
    /// Per-block burn cap, β_burn.
    pub beta_burn: FixedAmount,
    /// Controller gain in (0, 1].
    pub kappa: FixedAmount,
    #[serde(default)]
    pub initial_supply: FixedAmount,
}

impl SupplyParams {
    pub fn validate(&self) -> Result<(), TokenomicsError> {
        if self.s0.is_negative()
            || self.epsilon_rate.is_negative()
            || self.beta_burn.is_negative()
            || self.initial_supply.is_negative()
        {
            return Err(TokenomicsError::Parameter("supply parameters must be non-negative"));
        }
        if !self.kappa.is_positive() || self.kappa > FixedAmount::ONE {
            return Err(TokenomicsError::Parameter("kappa must be in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupplyState {
    pub initial_supply: FixedAmount,
    pub current_supply: FixedAmount,
    pub minted_total: FixedAmount,
    pub burned_total: FixedAmount,
    pub last_block: Option<BlockTime>,
}

impl SupplyState {
    pub fn new(initial_supply: FixedAmount) -> Self {
        SupplyState {
            initial_supply,
            current_supply: initial_supply,
            minted_total: FixedAmount::ZERO,
            burned_total: FixedAmount::ZERO,
            last_block: None,
        }
    }

    pub fn record_mint(&mut self, amount: FixedAmount) -> Result<(), TokenomicsError> {
        self.current_supply = self.current_supply.checked_add(amount)?;
        self.minted_total = self.minted_total.checked_add(amount)?;
        Ok(())
    }

    pub fn record_burn(&mut self, amount: FixedAmount) -> Result<(), TokenomicsError> {
        self.current_supply = self.current_supply.checked_sub(amount)?;
        self.burned_total = self.burned_total.checked_add(amount)?;
        Ok(())
    }

    /// `initial + minted − burned = current`.
    pub fn is_consistent(&self) -> bool {
        self.initial_supply + self.minted_total - self.burned_total == self.current_supply
    }
}

/// `s0 / max(1, ln Σ)`.
pub fn target_supply(sum_cr_value: FixedAmount, s0: FixedAmount) -> Result<FixedAmount, TokenomicsError> {
    if sum_cr_value.is_negative() {
        return Err(TokenomicsError::Parameter("vaulted value must be non-negative"));
    }
    if sum_cr_value <= FixedAmount::ONE {
        return Ok(s0);
    }
    let ln = safe_ln(sum_cr_value)?;
    if ln <= FixedAmount::ONE {
        return Ok(s0);
    }
    Ok(s0.checked_div(ln)?)
}

/// `ε · b`.
pub fn block_emission(epsilon_rate: FixedAmount, blocks: u64) -> Result<FixedAmount, TokenomicsError> {
    Ok(epsilon_rate.mul_int(blocks as i128)?)
}

/// Burn the controller wants this block, before any treasury cap.
pub fn planned_burn(
    state: &SupplyState,
    params: &SupplyParams,
    sum_vaulted_value: FixedAmount,
) -> Result<FixedAmount, TokenomicsError> {
    let target = target_supply(sum_vaulted_value, params.s0)?;
    let excess = state.current_supply.checked_sub(target)?;
    if !excess.is_positive() {
        return Ok(FixedAmount::ZERO);
    }
    Ok(params.kappa.checked_mul(excess)?.min(params.beta_burn))
}

/// Applies one controller step to `state` and returns the amount burned.
pub fn burn_step(
    state: &mut SupplyState,
    params: &SupplyParams,
    sum_vaulted_value: FixedAmount,
) -> Result<FixedAmount, TokenomicsError> {
    let burned = planned_burn(state, params, sum_vaulted_value)?;
    state.record_burn(burned)?;
    Ok(burned)
}

/// `R_ω = ω · amount`.
pub fn deposit_reward(amount: FixedAmount, omega: FixedAmount) -> Result<FixedAmount, FixedError> {
    linear_reward(amount, omega)
}

/// `R_burn = θ · amount`.
pub fn burn_reward(amount: FixedAmount, theta: FixedAmount) -> Result<FixedAmount, FixedError> {
    linear_reward(amount, theta)
}

fn linear_reward(amount: FixedAmount, rate: FixedAmount) -> Result<FixedAmount, FixedError> {
    if amount.is_negative() {
        return Err(FixedError::Domain(amount));
    }
    amount.checked_mul(rate)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VaultStat {
    pub vault: VaultId,
    pub chain: ChainId,
    pub rugged_token: TokenId,
    pub price: FixedAmount,
    pub deposited: FixedAmount,
    pub burned: FixedAmount,
    pub withdrawn: FixedAmount,
    pub held: FixedAmount,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleReport {
    /// Σ deposited × price.
    pub sum_cr_value: FixedAmount,
    /// Σ currently held × price.
    pub sum_vaulted_value: FixedAmount,
    pub vaults: Vec<VaultStat>,
}

/// Aggregates every vault across the given registries, ordered by vault id.
///
/// `price` supplies the current rugged-token price; vaults without one are
/// valued at zero.
pub fn aggregate_vault_stats<'a, I, F>(registries: I, price: F) -> Result<OracleReport, TokenomicsError>
where
    I: IntoIterator<Item = &'a VaultRegistry>,
    F: Fn(ChainId, TokenId) -> Option<FixedAmount>,
{
    let mut vaults: Vec<&Vault> = registries.into_iter().flat_map(|r| r.vaults()).collect();
    vaults.sort_by_key(|v| (v.id, v.chain));
    let mut report = OracleReport::default();
    for v in vaults {
        let p = price(v.chain, v.rugged_token).unwrap_or(FixedAmount::ZERO);
        report.sum_cr_value = report.sum_cr_value.checked_add(v.total_deposited.checked_mul(p)?)?;
        report.sum_vaulted_value = report.sum_vaulted_value.checked_add(v.holdings().checked_mul(p)?)?;
        report.vaults.push(VaultStat {
            vault: v.id,
            chain: v.chain,
            rugged_token: v.rugged_token,
            price: p,
            deposited: v.total_deposited,
            burned: v.total_burned,
            withdrawn: v.total_withdrawn,
            held: v.holdings(),
        });
    }
    Ok(report)
}

/// `Σ M_i · C_a,i` over vaults paired with their mark prices.
pub fn market_potential<'a, I>(marked: I) -> Result<FixedAmount, TokenomicsError>
where
    I: IntoIterator<Item = (&'a Vault, FixedAmount)>,
{
    let mut total = FixedAmount::ZERO;
    for (v, mark) in marked {
        if mark.is_negative() {
            return Err(TokenomicsError::Parameter("mark prices must be non-negative"));
        }
        total = total.checked_add(v.anticoin_supply().checked_mul(mark)?)?;
    }
    Ok(total)
}
