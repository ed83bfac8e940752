//! Scenario documents: chains, tokens, pools, vaults, module parameters and
//! the agent roster with scripts and policies.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::detection::{DetectorParams, IntentAction};
use crate::dispute::Side;
use crate::fixed::FixedAmount;
use crate::insurance::InsuranceParams;
use crate::market::{PriceProcess, MAX_FEE_BPS};
use crate::perps::{Direction, PerpsParams};
use crate::rugproof::RugproofParams;
use crate::tokenomics::SupplyParams;
use crate::vault::VaultParams;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invalid scenario at {path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl ToString) -> LoadError {
    LoadError::Invalid { path: path.into(), message: message.to_string() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub chains: Vec<ChainSpec>,
    /// Blocks a reward event waits before it is minted on the Rugsafe chain.
    #[serde(default)]
    pub bridge_delay_blocks: u64,
    pub tokens: Vec<TokenSpec>,
    #[serde(default)]
    pub pools: Vec<PoolSpec>,
    #[serde(default)]
    pub vaults: Vec<VaultSpec>,
    pub tokenomics: SupplyParams,
    #[serde(default)]
    pub detector: Option<DetectorParams>,
    #[serde(default)]
    pub perps: Option<PerpsParams>,
    #[serde(default)]
    pub rugproof: Option<RugproofParams>,
    #[serde(default)]
    pub insurance: Option<InsuranceParams>,
    #[serde(default)]
    pub agents: Vec<AgentSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub name: String,
    pub blocks: u64,
    /// Hosts the protocol token, emission and the burn controller. Exactly one chain.
    #[serde(default)]
    pub rugsafe: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TokenSpec {
    pub name: String,
    pub chain: String,
    pub price: PriceSource,
    /// Height at which a price process starts; it sits at `p0` before.
    #[serde(default)]
    pub process_start: u64,
}

/// Where a token's numéraire price comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PriceSource {
    Fixed(FixedAmount),
    /// Spot of a pool where this token is `x`, times the price of `y`.
    Pool(String),
    Process(PriceProcess),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    pub name: String,
    pub x: String,
    pub y: String,
    pub reserve_x: FixedAmount,
    pub reserve_y: FixedAmount,
    #[serde(default)]
    pub fee_bps: u32,
    /// Agent credited with the initial liquidity.
    pub provider: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct VaultSpec {
    /// Rugged token accepted by the vault.
    pub token: String,
    pub params: VaultParams,
    #[serde(default)]
    pub anticoin_pool: Option<AnticoinPoolSpec>,
}

/// Protocol-owned anticoin/numéraire pool, seeded by a treasury deposit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct AnticoinPoolSpec {
    pub numeraire: String,
    pub reserve_anticoin: FixedAmount,
    pub reserve_numeraire: FixedAmount,
    #[serde(default)]
    pub fee_bps: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Creator,
    Retail,
    Whale,
    Lp,
    Solver,
    Liquidator,
    PegKeeper,
    Detector,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub name: String,
    pub kind: AgentKind,
    /// Agents naming the same owner are linked accounts of one beneficial owner.
    #[serde(default)]
    pub owner: Option<String>,
    #[serde(default)]
    pub balances: BTreeMap<String, FixedAmount>,
    /// Pools on which the agent's holdings are front-run out ahead of drains.
    #[serde(default)]
    pub protect: Vec<String>,
    #[serde(default)]
    pub script: Vec<ScriptStep>,
    #[serde(default)]
    pub policy: Option<Policy>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum AllKeyword {
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum Quantity {
    /// The agent's whole balance at execution time.
    All(AllKeyword),
    Exact(FixedAmount),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ScriptStep {
    /// Height on the chain the action touches.
    pub at: u64,
    #[serde(rename = "do")]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    Swap {
        pool: String,
        sell: String,
        amount: Quantity,
    },
    Transfer {
        token: String,
        to: String,
        amount: Quantity,
    },
    AddLiquidity {
        pool: String,
        amount_x: FixedAmount,
    },
    RemoveLiquidity {
        pool: String,
        share: FixedAmount,
    },
    /// Sells `amount` of the pool's `x` token after `window` blocks in the open.
    Drain {
        pool: String,
        amount: Quantity,
        window: u64,
    },
    Deposit {
        token: String,
        amount: Quantity,
    },
    Burn {
        token: String,
        amount: Quantity,
    },
    Withdraw {
        token: String,
        amount: Quantity,
    },
    Intent {
        pool: String,
        #[serde(default)]
        theta_price: Option<FixedAmount>,
        #[serde(default)]
        theta_liquidity: Option<FixedAmount>,
        action: IntentAction,
        max_fee_bps: u32,
    },
    OpenPosition {
        token: String,
        collateral: Quantity,
        leverage: FixedAmount,
        direction: Direction,
    },
    ClosePositions {
        token: String,
    },
    IssueBonded {
        token: String,
        total: FixedAmount,
        bond_fraction: FixedAmount,
    },
    RugClaim {
        token: String,
        claim_fraction: FixedAmount,
    },
    RugVote {
        token: String,
        deposit: FixedAmount,
        side: Side,
    },
    IssuePolicy {
        insured: String,
        token: String,
        value: FixedAmount,
        bond_fraction: FixedAmount,
        duration: u64,
    },
    InsuranceClaim {
        claim_fraction: FixedAmount,
    },
    /// The remaining insurance actions address the open claim of `insured`.
    JoinClaim {
        insured: String,
        loss: FixedAmount,
        join_fraction: FixedAmount,
    },
    DisputeClaim {
        insured: String,
        dispute_fraction: FixedAmount,
    },
    InsuranceVote {
        insured: String,
        deposit: FixedAmount,
        side: Side,
    },
    Escalate {
        insured: String,
    },
}

/// Parametric per-block behaviour driven by the agent's random substream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Policy {
    /// With probability `probability`, sells a random fraction up to `max_fraction` of either side.
    RandomSwaps { pool: String, probability: FixedAmount, max_fraction: FixedAmount },
    /// Random deposits, burns and withdrawals on a vault.
    VaultActivity { token: String, probability: FixedAmount, max_fraction: FixedAmount },
    /// Random perpetual opens and closes on a vault's anticoin.
    RandomPerps { token: String, probability: FixedAmount, max_fraction: FixedAmount, max_leverage: FixedAmount },
    /// Bids on every flagged position of the agent's chain.
    Liquidate,
    /// Bids on every triggered intent.
    Solve { fee_bps: u32 },
    /// Keeps a vault's anticoin pool on its peg, spending at most `budget` per block.
    PegKeep { token: String, budget: FixedAmount },
    /// Sandwiches and back-runs drains on `pool`.
    Salvage { pool: String, sandwich_budget: FixedAmount, backrun_cap: FixedAmount },
}

impl Policy {
    fn fits(&self, kind: AgentKind) -> bool {
        match self {
            Policy::Liquidate => kind == AgentKind::Liquidator,
            Policy::Solve { .. } => kind == AgentKind::Solver,
            Policy::PegKeep { .. } => kind == AgentKind::PegKeeper,
            Policy::Salvage { .. } => kind == AgentKind::Detector,
            _ => true,
        }
    }
}

/// Parses and fully validates a scenario document.
pub fn load_scenario(document: &str) -> Result<Scenario, LoadError> {
    let de = &mut serde_json::Deserializer::from_str(document);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        LoadError::Schema { path, message: e.into_inner().to_string() }
    })?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario_file(path: &Path) -> Result<Scenario, LoadError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LoadError::Io { path: path.display().to_string(), message: e.to_string() })?;
    load_scenario(&text)
}

/// Appends `.field` when a parameter message starts with a key of `params`.
fn param_path<T: Serialize>(base: &str, params: &T, message: &str) -> String {
    let first = message.split_whitespace().next().unwrap_or("");
    let keys = serde_json::to_value(params).ok();
    match keys.as_ref().and_then(|v| v.as_object()) {
        Some(obj) if obj.contains_key(first) => format!("{base}.{first}"),
        _ => base.to_string(),
    }
}

fn fraction_ok(f: FixedAmount) -> bool {
    !f.is_negative() && f <= FixedAmount::ONE
}

impl Scenario {
    pub fn rugsafe_chain(&self) -> &ChainSpec {
        self.chains.iter().find(|c| c.rugsafe).expect("validated")
    }

    pub fn token(&self, name: &str) -> Option<&TokenSpec> {
        self.tokens.iter().find(|t| t.name == name)
    }

    pub fn pool(&self, name: &str) -> Option<&PoolSpec> {
        self.pools.iter().find(|p| p.name == name)
    }

    pub fn vault_for(&self, token: &str) -> Option<&VaultSpec> {
        self.vaults.iter().find(|v| v.token == token)
    }

    pub fn agent(&self, name: &str) -> Option<&AgentSpec> {
        self.agents.iter().find(|a| a.name == name)
    }

    /// Longest chain, in blocks.
    pub fn max_blocks(&self) -> u64 {
        self.chains.iter().map(|c| c.blocks).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), LoadError> {
        if self.chains.is_empty() {
            return Err(invalid("chains", "at least one chain is required"));
        }
        unique(self.chains.iter().map(|c| c.name.as_str()), "chains")?;
        unique(self.tokens.iter().map(|t| t.name.as_str()), "tokens")?;
        unique(self.pools.iter().map(|p| p.name.as_str()), "pools")?;
        unique(self.agents.iter().map(|a| a.name.as_str()), "agents")?;
        unique(self.vaults.iter().map(|v| v.token.as_str()), "vaults")?;
        if self.chains.iter().filter(|c| c.rugsafe).count() != 1 {
            return Err(invalid("chains", "exactly one chain must be marked rugsafe"));
        }
        self.tokenomics.validate().map_err(|e| {
            invalid(param_path("tokenomics", &self.tokenomics, &e.to_string().replace("invalid parameter: ", "")), e)
        })?;
        check_params("detector", &self.detector, |p| p.validate().map_err(|e| e.to_string()))?;
        check_params("perps", &self.perps, |p| p.validate().map_err(|e| e.to_string()))?;
        check_params("rugproof", &self.rugproof, |p| p.validate().map_err(|e| e.to_string()))?;
        check_params("insurance", &self.insurance, |p| p.validate().map_err(|e| e.to_string()))?;

        for (i, t) in self.tokens.iter().enumerate() {
            let path = format!("tokens[{i}]");
            self.chain_ref(&t.chain, &format!("{path}.chain"))?;
            match &t.price {
                PriceSource::Fixed(p) if !p.is_positive() => {
                    return Err(invalid(format!("{path}.price"), "price must be positive"))
                }
                PriceSource::Pool(pool) => {
                    let p = self
                        .pool(pool)
                        .ok_or_else(|| invalid(format!("{path}.price.pool"), format!("unknown pool {pool:?}")))?;
                    if p.x != t.name {
                        return Err(invalid(format!("{path}.price.pool"), "token must be the pool's x side"));
                    }
                    if matches!(self.token(&p.y).map(|y| &y.price), Some(PriceSource::Pool(_))) {
                        return Err(invalid(
                            format!("{path}.price.pool"),
                            "the pool's y side must not itself be pool-priced",
                        ));
                    }
                }
                PriceSource::Process(process) => {
                    process.validate().map_err(|e| invalid(format!("{path}.price.process"), e))?;
                }
                _ => {}
            }
        }
        for (i, p) in self.pools.iter().enumerate() {
            let path = format!("pools[{i}]");
            let x = self.token_ref(&p.x, &format!("{path}.x"))?;
            let y = self.token_ref(&p.y, &format!("{path}.y"))?;
            if x.chain != y.chain {
                return Err(invalid(&path, "pool tokens must live on one chain"));
            }
            if p.x == p.y {
                return Err(invalid(&path, "pool tokens must differ"));
            }
            if !p.reserve_x.is_positive() || !p.reserve_y.is_positive() {
                return Err(invalid(format!("{path}.reserve_x"), "reserves must be positive"));
            }
            if p.fee_bps > MAX_FEE_BPS {
                return Err(invalid(format!("{path}.fee_bps"), "fee_bps must be within 0..=10000"));
            }
            self.agent_ref(&p.provider, &format!("{path}.provider"))?;
        }
        for (i, v) in self.vaults.iter().enumerate() {
            let path = format!("vaults[{i}]");
            self.token_ref(&v.token, &format!("{path}.token"))?;
            v.params.validate().map_err(|e| {
                let msg = e.to_string().replace("invalid parameter: ", "");
                invalid(param_path(&format!("{path}.params"), &v.params, &msg), msg)
            })?;
            if let Some(ap) = &v.anticoin_pool {
                let n = self.token_ref(&ap.numeraire, &format!("{path}.anticoin_pool.numeraire"))?;
                if n.chain != self.token(&v.token).expect("checked").chain {
                    return Err(invalid(
                        format!("{path}.anticoin_pool.numeraire"),
                        "numéraire must share the vault's chain",
                    ));
                }
                if !ap.reserve_anticoin.is_positive() || !ap.reserve_numeraire.is_positive() {
                    return Err(invalid(format!("{path}.anticoin_pool"), "reserves must be positive"));
                }
                if ap.fee_bps > MAX_FEE_BPS {
                    return Err(invalid(format!("{path}.anticoin_pool.fee_bps"), "fee_bps must be within 0..=10000"));
                }
            }
        }
        for (i, a) in self.agents.iter().enumerate() {
            self.validate_agent(a, &format!("agents[{i}]"))?;
        }
        Ok(())
    }

    fn chain_ref(&self, name: &str, path: &str) -> Result<&ChainSpec, LoadError> {
        self.chains.iter().find(|c| c.name == name).ok_or_else(|| invalid(path, format!("unknown chain {name:?}")))
    }

    fn token_ref(&self, name: &str, path: &str) -> Result<&TokenSpec, LoadError> {
        self.token(name).ok_or_else(|| invalid(path, format!("unknown token {name:?}")))
    }

    fn pool_ref(&self, name: &str, path: &str) -> Result<&PoolSpec, LoadError> {
        self.pool(name).ok_or_else(|| invalid(path, format!("unknown pool {name:?}")))
    }

    fn agent_ref(&self, name: &str, path: &str) -> Result<&AgentSpec, LoadError> {
        self.agent(name).ok_or_else(|| invalid(path, format!("unknown agent {name:?}")))
    }

    fn vault_ref(&self, token: &str, path: &str) -> Result<&VaultSpec, LoadError> {
        self.token_ref(token, path)?;
        self.vault_for(token).ok_or_else(|| invalid(path, format!("no vault accepts {token:?}")))
    }

    fn require(&self, present: bool, block: &str, path: &str) -> Result<(), LoadError> {
        if present {
            Ok(())
        } else {
            Err(invalid(path, format!("action needs a {block} parameter block")))
        }
    }

    fn validate_agent(&self, a: &AgentSpec, path: &str) -> Result<(), LoadError> {
        for (token, amount) in &a.balances {
            self.token_ref(token, &format!("{path}.balances.{token}"))?;
            if amount.is_negative() {
                return Err(invalid(format!("{path}.balances.{token}"), "balance must be non-negative"));
            }
        }
        for (j, pool) in a.protect.iter().enumerate() {
            self.pool_ref(pool, &format!("{path}.protect[{j}]"))?;
        }
        if !a.protect.is_empty() && self.detector.is_none() {
            return Err(invalid(format!("{path}.protect"), "protection needs a detector parameter block"));
        }
        if let Some(policy) = &a.policy {
            let pp = format!("{path}.policy");
            if !policy.fits(a.kind) {
                return Err(invalid(&pp, format!("policy does not fit agent kind {:?}", a.kind)));
            }
            match policy {
                Policy::RandomSwaps { pool, probability, max_fraction } => {
                    self.pool_ref(pool, &pp)?;
                    if !fraction_ok(*probability) || !fraction_ok(*max_fraction) {
                        return Err(invalid(&pp, "probabilities and fractions must lie in [0, 1]"));
                    }
                }
                Policy::VaultActivity { token, probability, max_fraction } => {
                    self.vault_ref(token, &pp)?;
                    if !fraction_ok(*probability) || !fraction_ok(*max_fraction) {
                        return Err(invalid(&pp, "probabilities and fractions must lie in [0, 1]"));
                    }
                }
                Policy::RandomPerps { token, probability, max_fraction, max_leverage } => {
                    self.vault_ref(token, &pp)?;
                    self.require(self.perps.is_some(), "perps", &pp)?;
                    if !fraction_ok(*probability) || !fraction_ok(*max_fraction) || *max_leverage < FixedAmount::ONE {
                        return Err(invalid(&pp, "fractions must lie in [0, 1] and max_leverage be at least 1"));
                    }
                }
                Policy::Liquidate => self.require(self.perps.is_some(), "perps", &pp)?,
                Policy::Solve { fee_bps } => {
                    if *fee_bps > MAX_FEE_BPS {
                        return Err(invalid(&pp, "fee_bps must be within 0..=10000"));
                    }
                }
                Policy::PegKeep { token, budget } => {
                    let v = self.vault_ref(token, &pp)?;
                    if v.anticoin_pool.is_none() {
                        return Err(invalid(&pp, "vault has no anticoin pool"));
                    }
                    if budget.is_negative() {
                        return Err(invalid(&pp, "budget must be non-negative"));
                    }
                }
                Policy::Salvage { pool, sandwich_budget, backrun_cap } => {
                    self.pool_ref(pool, &pp)?;
                    self.require(self.detector.is_some(), "detector", &pp)?;
                    if sandwich_budget.is_negative() || backrun_cap.is_negative() {
                        return Err(invalid(&pp, "budgets must be non-negative"));
                    }
                }
            }
        }
        for (j, step) in a.script.iter().enumerate() {
            self.validate_action(&step.action, &format!("{path}.script[{j}].do"))?;
        }
        Ok(())
    }

    fn validate_action(&self, action: &Action, path: &str) -> Result<(), LoadError> {
        match action {
            Action::Swap { pool, sell, .. } => {
                let p = self.pool_ref(pool, path)?;
                if *sell != p.x && *sell != p.y {
                    return Err(invalid(path, format!("{sell:?} is not traded in {pool:?}")));
                }
            }
            Action::Transfer { token, to, .. } => {
                self.token_ref(token, path)?;
                self.agent_ref(to, path)?;
            }
            Action::AddLiquidity { pool, .. } | Action::RemoveLiquidity { pool, .. } | Action::Drain { pool, .. } => {
                self.pool_ref(pool, path)?;
            }
            Action::Deposit { token, .. } | Action::Burn { token, .. } | Action::Withdraw { token, .. } => {
                self.vault_ref(token, path)?;
            }
            Action::Intent { pool, theta_price, theta_liquidity, action, max_fee_bps } => {
                let p = self.pool_ref(pool, path)?;
                if *action == IntentAction::SwapToAnticoin {
                    self.vault_ref(&p.x, path)?;
                }
                let in_range = |t: &Option<FixedAmount>| t.is_none_or(|t| t.is_positive() && t < FixedAmount::ONE);
                if !in_range(theta_price)
                    || !in_range(theta_liquidity)
                    || (theta_price.is_none() && theta_liquidity.is_none())
                {
                    return Err(invalid(path, "intent needs thresholds in (0, 1)"));
                }
                if *max_fee_bps > MAX_FEE_BPS {
                    return Err(invalid(path, "max_fee_bps must be within 0..=10000"));
                }
            }
            Action::OpenPosition { token, .. } | Action::ClosePositions { token } => {
                self.vault_ref(token, path)?;
                self.require(self.perps.is_some(), "perps", path)?;
            }
            Action::IssueBonded { token, .. } | Action::RugClaim { token, .. } | Action::RugVote { token, .. } => {
                self.token_ref(token, path)?;
                self.require(self.rugproof.is_some(), "rugproof", path)?;
            }
            Action::IssuePolicy { insured, token, .. } => {
                self.agent_ref(insured, path)?;
                self.token_ref(token, path)?;
                self.require(self.insurance.is_some(), "insurance", path)?;
            }
            Action::InsuranceClaim { .. } => self.require(self.insurance.is_some(), "insurance", path)?,
            Action::JoinClaim { insured, .. }
            | Action::DisputeClaim { insured, .. }
            | Action::InsuranceVote { insured, .. }
            | Action::Escalate { insured } => {
                self.agent_ref(insured, path)?;
                self.require(self.insurance.is_some(), "insurance", path)?;
            }
        }
        Ok(())
    }
}

fn unique<'a>(names: impl Iterator<Item = &'a str>, path: &str) -> Result<(), LoadError> {
    let mut seen = BTreeSet::new();
    for (i, n) in names.enumerate() {
        if !seen.insert(n) {
            return Err(invalid(format!("{path}[{i}]"), format!("duplicate name {n:?}")));
        }
    }
    Ok(())
}

fn check_params<T>(path: &str, params: &Option<T>, check: impl Fn(&T) -> Result<(), String>) -> Result<(), LoadError>
where
    T: Serialize,
{
    if let Some(p) = params {
        check(p).map_err(|msg| {
            let msg = msg.replace("invalid parameter: ", "");
            invalid(param_path(path, p, &msg), msg)
        })?;
    }
    Ok(())
}

/// JSON Schema of the scenario document.
pub fn scenario_schema() -> schemars::schema::RootSchema {
    schemars::schema_for!(Scenario)
}
