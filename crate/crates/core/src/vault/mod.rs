//! Vault registry: deposits of rugged tokens mint anticoins 1:1, anticoins
//! are valued by the inverse log peg, and withdrawals pay an escalating,
//! owner-aggregated penalty.

mod penalty;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use penalty::{cumulative_penalty, max_whale_rate, whale_penalty, whale_rate, withdrawal_rate};

use crate::fixed::{ln_ratio, FixedAmount, FixedError};
use crate::ids::{AccountId, ChainId, IdAllocator, OwnerId, TokenId, VaultId};
use crate::ledger::{Ledger, LedgerError};
use crate::tokenomics::{burn_reward, deposit_reward};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VaultError {
    #[error("invalid parameter: {0}")]
    Parameter(&'static str),
    #[error("a vault for {token} already exists on {chain}")]
    Exists { chain: ChainId, token: TokenId },
    #[error("unknown vault {0}")]
    Unknown(VaultId),
    #[error("amount must be positive")]
    Dust,
    #[error("penalty {penalty} would consume the whole withdrawal of {amount}")]
    Confiscatory { amount: FixedAmount, penalty: FixedAmount },
    #[error("vault holds {held} of the rugged token, withdrawal needs {required}")]
    VaultShortfall { held: FixedAmount, required: FixedAmount },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Arithmetic(#[from] FixedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ReceiptKind {
    Fungible,
    NonFungible,
    Refungible,
}

/// Per-vault economic parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct VaultParams {
    pub receipt_kind: ReceiptKind,
    /// Deposit reward rate ω.
    pub omega: FixedAmount,
    /// Burn reward rate θ; must exceed ω.
    pub theta: FixedAmount,
    pub penalty_k: FixedAmount,
    /// Whale exponent λ > 1.
    pub penalty_lambda: FixedAmount,
    pub gamma_base: FixedAmount,
    pub delta_gamma: FixedAmount,
}

impl VaultParams {
    pub fn validate(&self) -> Result<(), VaultError> {
        if self.theta <= self.omega {
            return Err(VaultError::Parameter("theta must exceed omega"));
        }
        if self.penalty_lambda <= FixedAmount::ONE {
            return Err(VaultError::Parameter("penalty_lambda must exceed 1"));
        }
        if self.omega.is_negative()
            || self.penalty_k.is_negative()
            || self.gamma_base.is_negative()
            || self.delta_gamma.is_negative()
        {
            return Err(VaultError::Parameter("vault rates must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vault {
    pub id: VaultId,
    pub chain: ChainId,
    pub rugged_token: TokenId,
    pub anticoin: TokenId,
    /// Ledger account holding deposited rugged tokens.
    pub account: AccountId,
    pub params: VaultParams,
    /// Rugged-token price when the vault was created, `C_r(0)`.
    pub price_at_creation: FixedAmount,
    pub total_deposited: FixedAmount,
    pub total_burned: FixedAmount,
    pub total_withdrawn: FixedAmount,
    pub total_returned: FixedAmount,
    pub total_penalties: FixedAmount,
}

impl Vault {
    /// Anticoins outstanding: deposited minus burned minus withdrawn.
    pub fn anticoin_supply(&self) -> FixedAmount {
        self.total_deposited - self.total_burned - self.total_withdrawn
    }

    /// Rugged tokens the vault should hold.
    pub fn holdings(&self) -> FixedAmount {
        self.total_deposited - self.total_returned - self.total_penalties
    }

    pub fn anticoin_value(&self, current_price: FixedAmount) -> Result<FixedAmount, VaultError> {
        anticoin_value(self.price_at_creation, current_price)
    }
}

/// `max(0, ln(C_r(0) / C_r(t)))`.
pub fn anticoin_value(price_at_creation: FixedAmount, current_price: FixedAmount) -> Result<FixedAmount, VaultError> {
    if !current_price.is_positive() || !price_at_creation.is_positive() {
        return Err(VaultError::Parameter("prices must be positive"));
    }
    if current_price >= price_at_creation {
        return Ok(FixedAmount::ZERO);
    }
    Ok(ln_ratio(price_at_creation, current_price)?.max(FixedAmount::ZERO))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub vault: VaultId,
    pub holder: AccountId,
    pub kind: ReceiptKind,
    pub amount: FixedAmount,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nft_serial: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rft_shares: Option<FixedAmount>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    Deposit,
    Burn,
}

/// A reward owed in the protocol token, delivered over the bridge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardEvent {
    pub vault: VaultId,
    pub chain: ChainId,
    pub beneficiary: AccountId,
    pub kind: RewardKind,
    pub basis: FixedAmount,
    pub reward: FixedAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepositOutcome {
    pub minted: FixedAmount,
    pub receipt: Receipt,
    pub reward: RewardEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BurnOutcome {
    pub supply_after: FixedAmount,
    pub reward: RewardEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WithdrawOutcome {
    pub returned: FixedAmount,
    pub penalty: FixedAmount,
    pub rate: FixedAmount,
    /// Ordinal of this withdrawal for the beneficial owner, starting at 1.
    pub ordinal: u64,
    pub owner_holdings: FixedAmount,
}

/// Prior withdrawal counts keyed by beneficial owner and vault.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WithdrawalLedger {
    #[serde(with = "crate::serde_pairs")]
    counts: BTreeMap<(OwnerId, VaultId), u64>,
}

impl WithdrawalLedger {
    pub fn count(&self, owner: OwnerId, vault: VaultId) -> u64 {
        self.counts.get(&(owner, vault)).copied().unwrap_or(0)
    }

    fn record(&mut self, owner: OwnerId, vault: VaultId) {
        *self.counts.entry((owner, vault)).or_insert(0) += 1;
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct VaultRegistry {
    /// Receives withdrawal penalties.
    pub treasury: AccountId,
    #[serde(with = "crate::serde_pairs")]
    vaults: BTreeMap<VaultId, Vault>,
    #[serde(with = "crate::serde_pairs")]
    by_token: BTreeMap<(ChainId, TokenId), VaultId>,
    receipts: Vec<Receipt>,
    next_serial: u64,
    withdrawals: WithdrawalLedger,
}

impl VaultRegistry {
    pub fn new(treasury: AccountId) -> Self {
        VaultRegistry { treasury, ..Default::default() }
    }

    pub fn create_vault(
        &mut self,
        ids: &mut IdAllocator,
        chain: ChainId,
        rugged_token: TokenId,
        params: VaultParams,
        current_price: FixedAmount,
    ) -> Result<VaultId, VaultError> {
        params.validate()?;
        if !current_price.is_positive() {
            return Err(VaultError::Parameter("current_price must be positive"));
        }
        if self.by_token.contains_key(&(chain, rugged_token)) {
            return Err(VaultError::Exists { chain, token: rugged_token });
        }
        let id = ids.vault();
        let vault = Vault {
            id,
            chain,
            rugged_token,
            anticoin: ids.token(),
            account: ids.account(),
            params,
            price_at_creation: current_price,
            total_deposited: FixedAmount::ZERO,
            total_burned: FixedAmount::ZERO,
            total_withdrawn: FixedAmount::ZERO,
            total_returned: FixedAmount::ZERO,
            total_penalties: FixedAmount::ZERO,
        };
        self.by_token.insert((chain, rugged_token), id);
        self.vaults.insert(id, vault);
        Ok(id)
    }

    pub fn get(&self, id: VaultId) -> Result<&Vault, VaultError> {
        self.vaults.get(&id).ok_or(VaultError::Unknown(id))
    }

    pub fn find(&self, chain: ChainId, rugged_token: TokenId) -> Option<&Vault> {
        self.by_token.get(&(chain, rugged_token)).and_then(|id| self.vaults.get(id))
    }

    /// Vaults in id order.
    pub fn vaults(&self) -> impl Iterator<Item = &Vault> {
        self.vaults.values()
    }

    pub fn receipts(&self, vault: VaultId) -> impl Iterator<Item = &Receipt> {
        self.receipts.iter().filter(move |r| r.vault == vault)
    }

    pub fn withdrawals(&self) -> &WithdrawalLedger {
        &self.withdrawals
    }

    pub fn deposit(
        &mut self,
        ledger: &mut Ledger,
        vault: VaultId,
        user: AccountId,
        amount: FixedAmount,
    ) -> Result<DepositOutcome, VaultError> {
        if !amount.is_positive() {
            return Err(VaultError::Dust);
        }
        let v = self.vaults.get_mut(&vault).ok_or(VaultError::Unknown(vault))?;
        ledger.require(user, v.rugged_token, amount)?;
        let reward = deposit_reward(amount, v.params.omega)?;
        let total = v.total_deposited.checked_add(amount)?;
        ledger.transfer(v.rugged_token, user, v.account, amount)?;
        ledger.mint(v.anticoin, user, amount)?;
        v.total_deposited = total;

        let kind = v.params.receipt_kind;
        let nft_serial = match kind {
            ReceiptKind::Fungible => None,
            ReceiptKind::NonFungible | ReceiptKind::Refungible => {
                self.next_serial += 1;
                Some(self.next_serial)
            }
        };
        let receipt = Receipt {
            vault,
            holder: user,
            kind,
            amount,
            nft_serial,
            rft_shares: (kind == ReceiptKind::Refungible).then_some(amount),
        };
        self.receipts.push(receipt.clone());
        let reward =
            RewardEvent { vault, chain: v.chain, beneficiary: user, kind: RewardKind::Deposit, basis: amount, reward };
        Ok(DepositOutcome { minted: amount, receipt, reward })
    }

    /// Destroys anticoins. The matching rugged tokens stay in the vault for good.
    pub fn burn_anticoins(
        &mut self,
        ledger: &mut Ledger,
        vault: VaultId,
        user: AccountId,
        amount: FixedAmount,
    ) -> Result<BurnOutcome, VaultError> {
        if !amount.is_positive() {
            return Err(VaultError::Dust);
        }
        let v = self.vaults.get_mut(&vault).ok_or(VaultError::Unknown(vault))?;
        ledger.require(user, v.anticoin, amount)?;
        let reward = burn_reward(amount, v.params.theta)?;
        ledger.burn(v.anticoin, user, amount)?;
        v.total_burned += amount;
        let reward =
            RewardEvent { vault, chain: v.chain, beneficiary: user, kind: RewardKind::Burn, basis: amount, reward };
        Ok(BurnOutcome { supply_after: v.anticoin_supply(), reward })
    }

    /// Penalty this withdrawal would pay, without changing any state.
    pub fn quote_withdrawal(
        &self,
        ledger: &Ledger,
        vault: VaultId,
        account: AccountId,
        amount: FixedAmount,
    ) -> Result<WithdrawOutcome, VaultError> {
        if !amount.is_positive() {
            return Err(VaultError::Dust);
        }
        let v = self.get(vault)?;
        ledger.require(account, v.anticoin, amount)?;
        let held = ledger.balance(v.account, v.rugged_token);
        if held < amount {
            return Err(VaultError::VaultShortfall { held, required: amount });
        }
        let p = &v.params;
        let ordinal = self.withdrawals.count(account.owner, vault) + 1;
        let owner_holdings = ledger.owner_balance(account.owner, v.anticoin);
        let rate = withdrawal_rate(p.gamma_base, p.delta_gamma, ordinal)?.checked_add(whale_rate(
            owner_holdings,
            v.total_deposited,
            p.penalty_k,
            p.penalty_lambda,
        )?)?;
        let penalty = amount.checked_mul(rate)?;
        if penalty >= amount {
            return Err(VaultError::Confiscatory { amount, penalty });
        }
        Ok(WithdrawOutcome { returned: amount - penalty, penalty, rate, ordinal, owner_holdings })
    }

    /// Redeems anticoins for rugged tokens less the penalty, which goes to the treasury.
    pub fn withdraw(
        &mut self,
        ledger: &mut Ledger,
        vault: VaultId,
        account: AccountId,
        amount: FixedAmount,
    ) -> Result<WithdrawOutcome, VaultError> {
        let out = self.quote_withdrawal(ledger, vault, account, amount)?;
        let treasury = self.treasury;
        let v = self.vaults.get_mut(&vault).ok_or(VaultError::Unknown(vault))?;
        ledger.burn(v.anticoin, account, amount)?;
        ledger.transfer(v.rugged_token, v.account, account, out.returned)?;
        ledger.transfer(v.rugged_token, v.account, treasury, out.penalty)?;
        v.total_withdrawn += amount;
        v.total_returned += out.returned;
        v.total_penalties += out.penalty;
        self.withdrawals.record(account.owner, vault);
        Ok(out)
    }
}
