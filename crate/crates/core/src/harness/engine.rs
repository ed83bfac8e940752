//! The block engine. Every height advances all chains in lockstep, the
//! Rugsafe chain last so that bridged rewards of the same height can land.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::scenario::{Action, AgentKind, LoadError, Policy, PriceSource, Quantity, Scenario};
use super::trace::{EventBody, EventLog, TelemetryRow, Trace};
use crate::detection::{
    plan_backrun, plan_frontrun, plan_sandwich, solver_fee, AuxActivity, IntentAction, IntentBook, IntentMatch,
    LegAmount, PlanKind, PoolMonitor, SolverBid, SwapLeg, TxQueue, DRAIN_PRIORITY, PEG_KEEPER_PRIORITY, USER_PRIORITY,
};
use crate::dispute::DisputeError;
use crate::fixed::{FixedAmount, Rounding};
use crate::ids::{AccountId, BlockTime, ChainId, IdAllocator, OwnerId, PoolId, TokenId, VaultId};
use crate::insurance::InsuranceBook;
use crate::ledger::{Ledger, LedgerOp};
use crate::market::{
    default_tolerance, execute_add_liquidity, execute_drain_with_ledger, execute_remove_liquidity, execute_swap,
    peg_keeper_step, DrainEvent, PoolState, PriceProcess,
};
use crate::perps::{Direction, LiquidatorBid, PerpBook};
use crate::rng::SeedSource;
use crate::rugproof::Rugproof;
use crate::tokenomics::{aggregate_vault_stats, block_emission, planned_burn, target_supply, SupplyState};
use crate::vault::{anticoin_value, RewardEvent, VaultError, VaultRegistry};

/// Policy draws below this size are skipped rather than attempted.
const MIN_RANDOM_AMOUNT: FixedAmount = FixedAmount::from_raw(1_000);

struct ChainRt {
    id: ChainId,
    name: String,
    blocks: u64,
    registry: VaultRegistry,
    perps: Option<PerpBook>,
    failed: u64,
}

#[derive(Clone)]
enum PriceRt {
    Fixed(FixedAmount),
    Pool(PoolId),
    Process { process: PriceProcess, start: u64 },
}

struct TokenRt {
    chain: ChainId,
    price: PriceRt,
}

struct AgentRt {
    name: String,
    kind: AgentKind,
    account: AccountId,
    policy: Option<Policy>,
    protect: Vec<PoolId>,
    rng: ChaCha8Rng,
}

struct StepRt {
    at: u64,
    chain: ChainId,
    agent: usize,
    action: Action,
}

struct DrainRt {
    event: DrainEvent,
    executed: bool,
    frontrun: BTreeSet<usize>,
    sandwich: BTreeSet<usize>,
}

#[derive(Clone)]
enum Task {
    Script { agent: usize, action: Action },
    RandomSwap { agent: usize },
    Drain { id: u64 },
    Leg { agent: usize, drain: u64, leg: SwapLeg },
    Intent { m: IntentMatch },
    Peg { agent: usize },
}

enum Deferred {
    Deposit { agent: usize, token: TokenId, amount: FixedAmount },
}

/// Agent holdings valued in the numéraire at the final prices.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AgentValue {
    pub agent: String,
    pub value: FixedAmount,
}

pub struct Engine {
    scenario: Scenario,
    ids: IdAllocator,
    ledger: Ledger,
    chains: Vec<ChainRt>,
    order: Vec<usize>,
    rugsafe: usize,
    tokens: BTreeMap<TokenId, TokenRt>,
    token_ids: BTreeMap<String, TokenId>,
    pools: BTreeMap<PoolId, PoolState>,
    pool_ids: BTreeMap<String, PoolId>,
    pool_chain: BTreeMap<PoolId, ChainId>,
    anticoin_pools: BTreeMap<VaultId, PoolId>,
    vault_of: BTreeMap<TokenId, (usize, VaultId)>,
    agents: Vec<AgentRt>,
    agent_of: BTreeMap<AccountId, usize>,
    steps: Vec<StepRt>,
    next_step: usize,
    treasury: AccountId,
    protocol_token: TokenId,
    supply: SupplyState,
    rugproof: Option<Rugproof>,
    insurance: Option<InsuranceBook>,
    latest_issuance: BTreeMap<TokenId, u64>,
    bridge: VecDeque<(BlockTime, RewardEvent)>,
    drains: BTreeMap<u64, DrainRt>,
    next_drain: u64,
    sandwich_pre: BTreeMap<(u64, usize), FixedAmount>,
    intents: IntentBook,
    monitors: BTreeMap<PoolId, PoolMonitor>,
    activity: BTreeMap<PoolId, AuxActivity>,
    scheduled: BTreeMap<(u64, ChainId), Vec<(u32, Task)>>,
    deferred: Vec<Deferred>,
    prices: BTreeMap<TokenId, FixedAmount>,
    log: EventLog,
    telemetry: Vec<TelemetryRow>,
    height: u64,
    block_emission: FixedAmount,
    block_rewards: FixedAmount,
    block_burned: FixedAmount,
    block_target: FixedAmount,
}

fn err(e: impl ToString) -> String {
    e.to_string()
}

impl Engine {
    pub fn new(scenario: Scenario) -> Result<Self, LoadError> {
        scenario.validate()?;
        let seeds = SeedSource::new(scenario.seed);
        let mut ids = IdAllocator::new();
        let treasury = ids.account();
        let mut chains = Vec::new();
        let mut chain_ids = BTreeMap::new();
        for c in &scenario.chains {
            let id = ids.chain();
            chain_ids.insert(c.name.clone(), id);
            chains.push(ChainRt {
                id,
                name: c.name.clone(),
                blocks: c.blocks,
                registry: VaultRegistry::new(treasury),
                perps: None,
                failed: 0,
            });
        }
        let rugsafe = scenario.chains.iter().position(|c| c.rugsafe).expect("validated");
        let mut order: Vec<usize> = (0..chains.len()).filter(|&i| i != rugsafe).collect();
        order.push(rugsafe);
        let protocol_token = ids.token();

        let mut tokens = BTreeMap::new();
        let mut token_ids = BTreeMap::new();
        for t in &scenario.tokens {
            let id = ids.token();
            token_ids.insert(t.name.clone(), id);
            tokens.insert(id, (t, chain_ids[&t.chain]));
        }

        let mut agents = Vec::new();
        let mut agent_of = BTreeMap::new();
        let mut owners: BTreeMap<String, OwnerId> = BTreeMap::new();
        for a in &scenario.agents {
            let account = match &a.owner {
                Some(o) => match owners.get(o) {
                    Some(owner) => ids.account_for(*owner),
                    None => {
                        let acc = ids.account();
                        owners.insert(o.clone(), acc.owner);
                        acc
                    }
                },
                None => ids.account(),
            };
            agent_of.insert(account, agents.len());
            agents.push(AgentRt {
                name: a.name.clone(),
                kind: a.kind,
                account,
                policy: a.policy.clone(),
                protect: Vec::new(),
                rng: seeds.stream(&format!("agent:{}", a.name)),
            });
        }

        let mut eng = Engine {
            ids,
            ledger: Ledger::new(),
            chains,
            order,
            rugsafe,
            tokens: BTreeMap::new(),
            token_ids,
            pools: BTreeMap::new(),
            pool_ids: BTreeMap::new(),
            pool_chain: BTreeMap::new(),
            anticoin_pools: BTreeMap::new(),
            vault_of: BTreeMap::new(),
            agents,
            agent_of,
            steps: Vec::new(),
            next_step: 0,
            treasury,
            protocol_token,
            supply: SupplyState::new(scenario.tokenomics.initial_supply),
            rugproof: None,
            insurance: None,
            latest_issuance: BTreeMap::new(),
            bridge: VecDeque::new(),
            drains: BTreeMap::new(),
            next_drain: 1,
            sandwich_pre: BTreeMap::new(),
            intents: IntentBook::new(),
            monitors: BTreeMap::new(),
            activity: BTreeMap::new(),
            scheduled: BTreeMap::new(),
            deferred: Vec::new(),
            prices: BTreeMap::new(),
            log: EventLog::default(),
            telemetry: Vec::new(),
            height: 0,
            block_emission: FixedAmount::ZERO,
            block_rewards: FixedAmount::ZERO,
            block_burned: FixedAmount::ZERO,
            block_target: FixedAmount::ZERO,
            scenario: scenario.clone(),
        };

        for p in &scenario.pools {
            let id = eng.ids.pool();
            eng.pool_ids.insert(p.name.clone(), id);
        }
        for (id, (t, chain)) in tokens {
            let price = match &t.price {
                PriceSource::Fixed(v) => PriceRt::Fixed(*v),
                PriceSource::Pool(name) => PriceRt::Pool(eng.pool_ids[name]),
                PriceSource::Process(p) => PriceRt::Process { process: p.clone(), start: t.process_start },
            };
            eng.tokens.insert(id, TokenRt { chain, price });
        }
        eng.genesis().map_err(|message| LoadError::Invalid { path: "genesis".into(), message })?;
        Ok(eng)
    }

    fn genesis(&mut self) -> Result<(), String> {
        let sc = self.scenario.clone();
        let at0 = BlockTime::new(self.chains[self.rugsafe].id, 0);
        if sc.tokenomics.initial_supply.is_positive() {
            self.ledger.mint(self.protocol_token, self.treasury, sc.tokenomics.initial_supply).map_err(err)?;
        }
        for a in &sc.agents {
            let acc = self.agents[self.agent_index(&a.name)].account;
            for (token, amount) in &a.balances {
                if amount.is_positive() {
                    self.ledger.mint(self.token_ids[token], acc, *amount).map_err(err)?;
                }
            }
        }
        for p in &sc.pools {
            let id = self.pool_ids[&p.name];
            let (x, y) = (self.token_ids[&p.x], self.token_ids[&p.y]);
            let provider = self.agents[self.agent_index(&p.provider)].account;
            let account = self.ids.account();
            let pool = PoolState::new(id, account, x, y, p.reserve_x, p.reserve_y, p.fee_bps, provider).map_err(err)?;
            self.ledger.mint(x, account, p.reserve_x).map_err(err)?;
            self.ledger.mint(y, account, p.reserve_y).map_err(err)?;
            self.pool_chain.insert(id, self.tokens[&x].chain);
            self.pools.insert(id, pool);
        }
        for a in &sc.agents {
            let i = self.agent_index(&a.name);
            self.agents[i].protect = a.protect.iter().map(|p| self.pool_ids[p]).collect();
        }
        self.refresh_all_prices();
        for v in &sc.vaults {
            let token = self.token_ids[&v.token];
            let chain = self.tokens[&token].chain;
            let ci = chain.0 as usize;
            let price = self.price(token).ok_or("vault token has no price at genesis")?;
            let vid = self.chains[ci]
                .registry
                .create_vault(&mut self.ids, chain, token, v.params.clone(), price)
                .map_err(err)?;
            self.vault_of.insert(token, (ci, vid));
            if let Some(ap) = &v.anticoin_pool {
                let numeraire = self.token_ids[&ap.numeraire];
                self.ledger.mint(token, self.treasury, ap.reserve_anticoin).map_err(err)?;
                self.chains[ci]
                    .registry
                    .deposit(&mut self.ledger, vid, self.treasury, ap.reserve_anticoin)
                    .map_err(err)?;
                let anticoin = self.chains[ci].registry.get(vid).map_err(err)?.anticoin;
                let pid = self.ids.pool();
                let account = self.ids.account();
                let pool = PoolState::new(
                    pid,
                    account,
                    anticoin,
                    numeraire,
                    ap.reserve_anticoin,
                    ap.reserve_numeraire,
                    ap.fee_bps,
                    self.treasury,
                )
                .map_err(err)?;
                self.ledger.transfer(anticoin, self.treasury, account, ap.reserve_anticoin).map_err(err)?;
                self.ledger.mint(numeraire, account, ap.reserve_numeraire).map_err(err)?;
                self.pool_chain.insert(pid, chain);
                self.pools.insert(pid, pool);
                self.anticoin_pools.insert(vid, pid);
            }
        }
        if let Some(pp) = &sc.perps {
            for ci in 0..self.chains.len() {
                let escrow = self.ids.account();
                self.chains[ci].perps = Some(PerpBook::new(pp.clone(), escrow, self.treasury).map_err(err)?);
            }
        }
        if let Some(rp) = &sc.rugproof {
            let escrow = self.ids.account();
            self.rugproof = Some(Rugproof::new(rp.clone(), escrow, self.treasury).map_err(err)?);
        }
        if let Some(ip) = &sc.insurance {
            let escrow = self.ids.account();
            self.insurance = Some(InsuranceBook::new(ip.clone(), escrow, self.treasury).map_err(err)?);
        }
        if let Some(dp) = &sc.detector {
            for (&pid, pool) in &self.pools {
                if self.anticoin_pools.values().any(|&a| a == pid) {
                    continue;
                }
                let mut m = PoolMonitor::new(pid, dp.clone()).map_err(err)?;
                m.observe(BlockTime::new(self.pool_chain[&pid], 0), pool.liquidity()).map_err(err)?;
                self.monitors.insert(pid, m);
            }
        }
        for (i, a) in sc.agents.iter().enumerate() {
            for s in &a.script {
                let chain = self.action_chain(&s.action);
                self.steps.push(StepRt { at: s.at, chain, agent: i, action: s.action.clone() });
            }
        }
        self.steps.sort_by_key(|s| (s.at, s.chain, s.agent));
        self.flush_ledger(at0);
        Ok(())
    }

    fn agent_index(&self, name: &str) -> usize {
        self.agents.iter().position(|a| a.name == name).expect("validated agent name")
    }

    fn action_chain(&self, action: &Action) -> ChainId {
        let token_chain = |name: &str| self.tokens[&self.token_ids[name]].chain;
        let pool_chain = |name: &str| self.pool_chain[&self.pool_ids[name]];
        match action {
            Action::Swap { pool, .. }
            | Action::AddLiquidity { pool, .. }
            | Action::RemoveLiquidity { pool, .. }
            | Action::Drain { pool, .. }
            | Action::Intent { pool, .. } => pool_chain(pool),
            Action::Transfer { token, .. }
            | Action::Deposit { token, .. }
            | Action::Burn { token, .. }
            | Action::Withdraw { token, .. }
            | Action::OpenPosition { token, .. }
            | Action::ClosePositions { token } => token_chain(token),
            _ => self.chains[self.rugsafe].id,
        }
    }

    fn is_phase3(action: &Action) -> bool {
        matches!(
            action,
            Action::Swap { .. }
                | Action::Transfer { .. }
                | Action::AddLiquidity { .. }
                | Action::RemoveLiquidity { .. }
                | Action::Drain { .. }
                | Action::Intent { .. }
        )
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn protocol_token(&self) -> TokenId {
        self.protocol_token
    }

    pub fn treasury(&self) -> AccountId {
        self.treasury
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn token_id(&self, name: &str) -> Option<TokenId> {
        self.token_ids.get(name).copied()
    }

    pub fn account_of(&self, agent: &str) -> Option<AccountId> {
        self.agents.iter().find(|a| a.name == agent).map(|a| a.account)
    }

    pub fn supply(&self) -> &SupplyState {
        &self.supply
    }

    pub fn telemetry(&self) -> &[TelemetryRow] {
        &self.telemetry
    }

    pub fn events(&self) -> &EventLog {
        &self.log
    }

    pub fn pool(&self, name: &str) -> Option<&PoolState> {
        self.pool_ids.get(name).and_then(|id| self.pools.get(id))
    }

    pub fn registry(&self, chain: &str) -> Option<&VaultRegistry> {
        self.chains.iter().find(|c| c.name == chain).map(|c| &c.registry)
    }

    fn emit(&mut self, at: BlockTime, event: EventBody) {
        self.log.push(at.chain.0, at.height, event);
    }

    fn flush_ledger(&mut self, at: BlockTime) {
        for op in self.ledger.take_journal() {
            match &op {
                LedgerOp::Mint { token, amount, .. } => {
                    for (pid, pool) in &self.pools {
                        if pool.token_x == *token {
                            self.activity.entry(*pid).or_default().minted += *amount;
                        }
                    }
                }
                LedgerOp::Transfer { token, from, amount, .. }
                    if self.agent_of.get(from).is_some_and(|&i| self.agents[i].kind == AgentKind::Creator) =>
                {
                    for (pid, pool) in &self.pools {
                        if pool.token_x == *token {
                            self.activity.entry(*pid).or_default().creator_outflow += *amount;
                        }
                    }
                }
                _ => {}
            }
            self.log.push(at.chain.0, at.height, EventBody::Ledger(op));
        }
    }

    fn fail(&mut self, at: BlockTime, agent: Option<usize>, action: &str, error: String) {
        self.flush_ledger(at);
        let agent = agent.map(|i| self.agents[i].name.clone());
        self.chains[at.chain.0 as usize].failed += 1;
        self.emit(at, EventBody::Failed { agent, action: action.to_string(), error });
    }

    fn name(&self, agent: usize) -> String {
        self.agents[agent].name.clone()
    }

    fn price(&self, token: TokenId) -> Option<FixedAmount> {
        if token == self.protocol_token {
            return None;
        }
        if let Some(p) = self.prices.get(&token) {
            return Some(*p);
        }
        // anticoins are valued on their peg
        for (ci, vid) in self.vault_of.values() {
            let v = self.chains[*ci].registry.get(*vid).ok()?;
            if v.anticoin == token {
                let p = self.prices.get(&v.rugged_token)?;
                return anticoin_value(v.price_at_creation, *p).ok();
            }
        }
        None
    }

    fn compute_price(&self, token: TokenId, height: u64) -> Option<FixedAmount> {
        let t = self.tokens.get(&token)?;
        match &t.price {
            PriceRt::Fixed(v) => Some(*v),
            PriceRt::Process { process, start } => {
                let elapsed = height.saturating_sub(*start);
                process.price(FixedAmount::from_int(elapsed as i64)).ok()
            }
            PriceRt::Pool(pid) => {
                let pool = self.pools.get(pid)?;
                let y = self.compute_price(pool.token_y, height)?;
                pool.spot().checked_mul(y).ok().filter(|p| p.is_positive()).or(Some(FixedAmount::QUANTUM))
            }
        }
    }

    fn refresh_prices(&mut self, chain: ChainId, height: u64) {
        let ids: Vec<TokenId> = self.tokens.iter().filter(|(_, t)| t.chain == chain).map(|(id, _)| *id).collect();
        for id in ids {
            if let Some(p) = self.compute_price(id, height) {
                self.prices.insert(id, p);
            }
        }
    }

    fn refresh_all_prices(&mut self) {
        let ids: Vec<ChainId> = self.chains.iter().map(|c| c.id).collect();
        for c in ids {
            self.refresh_prices(c, self.height);
        }
    }

    fn quantity(&self, q: Quantity, account: AccountId, token: TokenId) -> FixedAmount {
        match q {
            Quantity::All(_) => self.ledger.balance(account, token),
            Quantity::Exact(a) => a,
        }
    }

    fn schedule(&mut self, at: BlockTime, height: u64, priority: u32, task: Task, queue: &mut TxQueue<Task>) {
        if height == at.height {
            queue.push(priority, task);
        } else {
            self.scheduled.entry((height, at.chain)).or_default().push((priority, task));
        }
    }

    pub fn is_finished(&self) -> bool {
        self.chains.iter().all(|c| self.height >= c.blocks)
    }

    /// Advances every chain that still has blocks by one height.
    pub fn step(&mut self) {
        self.step_until(None)
    }

    fn step_until(&mut self, limit: Option<u64>) {
        self.height += 1;
        let h = self.height;
        for k in 0..self.order.len() {
            let ci = self.order[k];
            let last = limit.unwrap_or(self.chains[ci].blocks);
            if h <= last {
                self.step_chain(ci, h);
            }
        }
    }

    /// Runs up to height `n_blocks` on every chain, or each chain's own block count when `None`.
    pub fn run(mut self, n_blocks: Option<u64>) -> Trace {
        let total = n_blocks.unwrap_or_else(|| self.scenario.max_blocks());
        while self.height < total {
            self.step_until(n_blocks);
        }
        self.finish()
    }

    fn step_chain(&mut self, ci: usize, h: u64) {
        let chain = self.chains[ci].id;
        let at = BlockTime::new(chain, h);
        self.chains[ci].failed = 0;
        let (emitted, rewards, burned, target) =
            (FixedAmount::ZERO, FixedAmount::ZERO, FixedAmount::ZERO, FixedAmount::ZERO);
        self.block_emission = emitted;
        self.block_rewards = rewards;
        self.block_burned = burned;
        self.block_target = target;

        // 1. prices
        self.refresh_prices(chain, h);
        let start_liquidity: BTreeMap<PoolId, FixedAmount> = self
            .pools
            .iter()
            .filter(|(pid, _)| self.pool_chain[*pid] == chain)
            .map(|(pid, p)| (*pid, p.liquidity()))
            .collect();
        let start_volume: BTreeMap<PoolId, FixedAmount> = self
            .pools
            .iter()
            .filter(|(pid, _)| self.pool_chain[*pid] == chain)
            .map(|(pid, p)| (*pid, p.volume_x))
            .collect();

        // 2. detection
        self.detect(at);

        // 3. queued transactions
        self.execute_queue(at);

        // 4. vault and dispute actions from scripts and policies
        self.vault_phase(at);

        // 5. perps
        self.perps_phase(ci, at);

        // 6. dispute deadlines
        if ci == self.rugsafe {
            self.dispute_phase(at);
        }

        // aux activity for the next block's scan
        for (pid, l0) in start_liquidity {
            let pool = &self.pools[&pid];
            let act = self.activity.entry(pid).or_default();
            act.volume = pool.volume_x - start_volume[&pid];
            act.liquidity_change = pool.liquidity() - l0;
        }

        if ci == self.rugsafe {
            // 7. bridge
            self.bridge_phase(at);
            // 8. tokenomics
            self.tokenomics_phase(at);
        }

        // 9. telemetry
        let target = if ci == self.rugsafe { self.block_target } else { self.current_target() };
        self.telemetry.push(TelemetryRow {
            height: h,
            chain: chain.0,
            emission: if ci == self.rugsafe { self.block_emission } else { FixedAmount::ZERO },
            burned: if ci == self.rugsafe { self.block_burned } else { FixedAmount::ZERO },
            current_supply: self.supply.current_supply,
            target_supply: target,
            reward_mint: if ci == self.rugsafe { self.block_rewards } else { FixedAmount::ZERO },
            failed_events: self.chains[ci].failed,
        });
    }

    fn detect(&mut self, at: BlockTime) {
        let Some(params) = self.scenario.detector.clone() else { return };
        let pids: Vec<PoolId> = self.monitors.keys().copied().filter(|p| self.pool_chain[p] == at.chain).collect();
        for pid in &pids {
            let l = self.pools[pid].liquidity();
            let act = self.activity.remove(pid).unwrap_or_default();
            let creator_balance: FixedAmount = self
                .agents
                .iter()
                .filter(|a| a.kind == AgentKind::Creator)
                .map(|a| self.ledger.balance(a.account, self.pools[pid].token_x))
                .sum();
            let act = AuxActivity { creator_balance: creator_balance + act.creator_outflow, ..act };
            let m = self.monitors.get_mut(pid).expect("listed");
            let mut signals = Vec::new();
            match m.observe(at, l) {
                Ok(s) => signals.extend(s),
                Err(e) => {
                    self.fail(at, None, "observe", err(e));
                    continue;
                }
            }
            let m = self.monitors.get_mut(pid).expect("listed");
            signals.extend(m.scan_aux(at, act));
            for signal in signals {
                self.emit(at, EventBody::Signal { pool: pid.0, signal });
            }
        }

        let pending: Vec<u64> = self
            .drains
            .iter()
            .filter(|(_, d)| !d.executed && d.event.is_pending(at) && self.pool_chain[&d.event.pool] == at.chain)
            .map(|(id, _)| *id)
            .collect();
        for id in pending {
            let ev = self.drains[&id].event.clone();
            let pool = self.pools[&ev.pool].clone();
            for ai in 0..self.agents.len() {
                if !self.agents[ai].protect.contains(&ev.pool) || self.drains[&id].frontrun.contains(&ai) {
                    continue;
                }
                let acc = self.agents[ai].account;
                let holdings = self.ledger.balance(acc, pool.token_x);
                match plan_frontrun(&ev, &pool, acc, holdings, &params, at) {
                    Ok(plan) => {
                        self.drains.get_mut(&id).expect("listed").frontrun.insert(ai);
                        if plan.is_empty() {
                            continue;
                        }
                        for leg in &plan.legs {
                            let task = Task::Leg { agent: ai, drain: id, leg: *leg };
                            self.scheduled
                                .entry((ev.executes_at.height, at.chain))
                                .or_default()
                                .push((leg.priority, task));
                        }
                        let agent = self.name(ai);
                        self.emit(at, EventBody::Plan { agent, kind: "frontrun".into(), plan });
                    }
                    Err(e) => self.fail(at, Some(ai), "plan_frontrun", err(e)),
                }
            }
            for ai in 0..self.agents.len() {
                let Some(Policy::Salvage { pool: pname, sandwich_budget, .. }) = self.agents[ai].policy.clone() else {
                    continue;
                };
                if self.pool_ids[&pname] != ev.pool || self.drains[&id].sandwich.contains(&ai) {
                    continue;
                }
                self.drains.get_mut(&id).expect("listed").sandwich.insert(ai);
                let acc = self.agents[ai].account;
                let budget = sandwich_budget.min(self.ledger.balance(acc, pool.token_x));
                match plan_sandwich(&ev, &pool, acc, budget, &params, at) {
                    Ok(Some(plan)) => {
                        for leg in &plan.legs {
                            let task = Task::Leg { agent: ai, drain: id, leg: *leg };
                            self.scheduled
                                .entry((ev.executes_at.height, at.chain))
                                .or_default()
                                .push((leg.priority, task));
                        }
                        let agent = self.name(ai);
                        self.emit(at, EventBody::Plan { agent, kind: "sandwich".into(), plan });
                    }
                    Ok(None) => {}
                    Err(e) => self.fail(at, Some(ai), "plan_sandwich", err(e)),
                }
            }
        }
    }

    fn execute_queue(&mut self, at: BlockTime) {
        let mut queue: TxQueue<Task> = TxQueue::new();
        for (priority, task) in self.scheduled.remove(&(at.height, at.chain)).unwrap_or_default() {
            queue.push(priority, task);
        }
        for m in self.match_intents(at) {
            queue.push(USER_PRIORITY, Task::Intent { m });
        }
        while self.next_step < self.steps.len() && self.steps[self.next_step].at < at.height {
            self.next_step += 1;
        }
        let mut k = self.next_step;
        while k < self.steps.len() && self.steps[k].at == at.height {
            let s = &self.steps[k];
            if s.chain == at.chain && Self::is_phase3(&s.action) {
                queue.push(USER_PRIORITY, Task::Script { agent: s.agent, action: s.action.clone() });
            }
            k += 1;
        }
        for ai in 0..self.agents.len() {
            match &self.agents[ai].policy {
                Some(Policy::RandomSwaps { pool, .. }) if self.pool_chain[&self.pool_ids[pool]] == at.chain => {
                    queue.push(USER_PRIORITY, Task::RandomSwap { agent: ai });
                }
                Some(Policy::PegKeep { token, .. }) if self.tokens[&self.token_ids[token]].chain == at.chain => {
                    queue.push(PEG_KEEPER_PRIORITY, Task::Peg { agent: ai });
                }
                _ => {}
            }
        }
        while let Some((_, _, task)) = queue.pop() {
            self.run_task(at, task, &mut queue);
            self.flush_ledger(at);
        }
    }

    fn match_intents(&self, at: BlockTime) -> Vec<IntentMatch> {
        let bids: Vec<SolverBid> = self
            .agents
            .iter()
            .filter_map(|a| match a.policy {
                Some(Policy::Solve { fee_bps }) => Some(SolverBid { solver: a.account, fee_bps }),
                _ => None,
            })
            .collect();
        self.intents.solver_step(
            |it| {
                if self.pool_chain.get(&it.pool) != Some(&at.chain) {
                    return None;
                }
                let pool = self.pools.get(&it.pool)?;
                Some((self.prices.get(&pool.token_x).copied()?, pool.liquidity()))
            },
            &bids,
        )
    }

    fn run_task(&mut self, at: BlockTime, task: Task, queue: &mut TxQueue<Task>) {
        match task {
            Task::Script { agent, action } => {
                if let Err(e) = self.run_user_action(at, agent, &action, queue) {
                    self.fail(at, Some(agent), action_name(&action), e);
                }
            }
            Task::RandomSwap { agent } => {
                if let Err(e) = self.random_swap(at, agent) {
                    self.fail(at, Some(agent), "random_swap", e);
                }
            }
            Task::Drain { id } => {
                if let Err(e) = self.execute_drain(at, id, queue) {
                    self.fail(at, None, "drain", e);
                }
            }
            Task::Leg { agent, drain, leg } => {
                if let Err(e) = self.execute_leg(at, agent, drain, leg) {
                    self.fail(at, Some(agent), "plan_leg", e);
                }
            }
            Task::Intent { m } => {
                if let Err(e) = self.execute_intent(at, m) {
                    let owner = self.intents.get(m.intent).map(|i| self.agent_of[&i.owner]);
                    self.fail(at, owner, "intent", e);
                }
            }
            Task::Peg { agent } => {
                if let Err(e) = self.peg_keep(at, agent) {
                    self.fail(at, Some(agent), "peg_keeper", e);
                }
            }
        }
    }

    fn run_user_action(
        &mut self,
        at: BlockTime,
        ai: usize,
        action: &Action,
        queue: &mut TxQueue<Task>,
    ) -> Result<(), String> {
        let acc = self.agents[ai].account;
        match action {
            Action::Swap { pool, sell, amount } => {
                let pid = self.pool_ids[pool];
                let token = self.token_ids[sell];
                let dx = self.quantity(*amount, acc, token);
                let p = self.pools.get_mut(&pid).expect("validated");
                let fill = execute_swap(&mut self.ledger, p, acc, token, dx).map_err(err)?;
                self.flush_ledger(at);
                self.emit(at, EventBody::Swap { agent: self.name(ai), pool: pid.0, fill });
            }
            Action::Transfer { token, to, amount } => {
                let token = self.token_ids[token];
                let to = self.agents[self.agent_index(to)].account;
                let amt = self.quantity(*amount, acc, token);
                self.ledger.transfer(token, acc, to, amt).map_err(err)?;
            }
            Action::AddLiquidity { pool, amount_x } => {
                let pid = self.pool_ids[pool];
                let p = self.pools.get_mut(&pid).expect("validated");
                let dy = amount_x.mul_div(p.reserve_y, p.reserve_x).map_err(err)?;
                execute_add_liquidity(&mut self.ledger, p, acc, *amount_x, dy).map_err(err)?;
                self.flush_ledger(at);
                self.emit(
                    at,
                    EventBody::Liquidity {
                        agent: self.name(ai),
                        pool: pid.0,
                        amount_x: *amount_x,
                        amount_y: dy,
                        added: true,
                    },
                );
            }
            Action::RemoveLiquidity { pool, share } => {
                let pid = self.pool_ids[pool];
                let p = self.pools.get_mut(&pid).expect("validated");
                let (ox, oy) = execute_remove_liquidity(&mut self.ledger, p, acc, *share).map_err(err)?;
                self.flush_ledger(at);
                self.emit(
                    at,
                    EventBody::Liquidity {
                        agent: self.name(ai),
                        pool: pid.0,
                        amount_x: ox,
                        amount_y: oy,
                        added: false,
                    },
                );
            }
            Action::Drain { pool, amount, window } => {
                let pid = self.pool_ids[pool];
                let x = self.pools[&pid].token_x;
                let t_rug = self.quantity(*amount, acc, x);
                let t_total = self.ledger.supply(x);
                let id = self.next_drain;
                let ev = DrainEvent::new(id, pid, acc, t_rug, t_total, at, at.plus(*window)).map_err(err)?;
                self.next_drain += 1;
                self.drains.insert(
                    id,
                    DrainRt {
                        event: ev.clone(),
                        executed: false,
                        frontrun: BTreeSet::new(),
                        sandwich: BTreeSet::new(),
                    },
                );
                self.emit(at, EventBody::DrainSubmitted { drain: ev });
                self.schedule(at, at.height + window, DRAIN_PRIORITY, Task::Drain { id }, queue);
            }
            Action::Intent { pool, theta_price, theta_liquidity, action, max_fee_bps } => {
                let pid = self.pool_ids[pool];
                let p = &self.pools[&pid];
                let p0 = self.prices.get(&p.token_x).copied().ok_or("pool token has no price")?;
                let vault = self.vault_of.get(&p.token_x).map(|(_, v)| *v);
                let id = self
                    .intents
                    .register(acc, p, vault, p0, *theta_price, *theta_liquidity, *action, *max_fee_bps)
                    .map_err(err)?;
                self.emit(at, EventBody::IntentRegistered { agent: self.name(ai), intent: id });
            }
            _ => unreachable!("phase 4 action queued in phase 3"),
        }
        Ok(())
    }

    fn random_swap(&mut self, at: BlockTime, ai: usize) -> Result<(), String> {
        let Some(Policy::RandomSwaps { pool, probability, max_fraction }) = self.agents[ai].policy.clone() else {
            return Ok(());
        };
        let acc = self.agents[ai].account;
        let rng = &mut self.agents[ai].rng;
        let roll = FixedAmount::from_raw(rng.gen_range(0..FixedAmount::ONE.raw()));
        let sell_x: bool = rng.gen();
        let frac = FixedAmount::from_raw(rng.gen_range(1..=max_fraction.raw().max(1)));
        if roll >= probability {
            return Ok(());
        }
        let pid = self.pool_ids[&pool];
        let p = self.pools.get_mut(&pid).expect("validated");
        let token = if sell_x { p.token_x } else { p.token_y };
        let dx = self.ledger.balance(acc, token).mul_div_round(frac, FixedAmount::ONE, Rounding::Floor).map_err(err)?;
        if dx < MIN_RANDOM_AMOUNT {
            return Ok(());
        }
        let fill = execute_swap(&mut self.ledger, p, acc, token, dx).map_err(err)?;
        self.flush_ledger(at);
        self.emit(at, EventBody::Swap { agent: self.name(ai), pool: pid.0, fill });
        Ok(())
    }

    fn execute_drain(&mut self, at: BlockTime, id: u64, queue: &mut TxQueue<Task>) -> Result<(), String> {
        let ev = self.drains[&id].event.clone();
        let pool = self.pools.get_mut(&ev.pool).expect("drain pool");
        let outcome = execute_drain_with_ledger(&mut self.ledger, &ev, pool, at).map_err(err)?;
        self.drains.get_mut(&id).expect("listed").executed = true;
        self.flush_ledger(at);
        self.emit(at, EventBody::DrainExecuted { drain: id, outcome });
        let pool = self.pools[&ev.pool].clone();
        for ai in 0..self.agents.len() {
            let Some(Policy::Salvage { pool: pname, backrun_cap, .. }) = self.agents[ai].policy.clone() else {
                continue;
            };
            if self.pool_ids[&pname] != ev.pool {
                continue;
            }
            let acc = self.agents[ai].account;
            let budget = self.ledger.balance(acc, pool.token_y);
            match plan_backrun(&ev, &outcome, &pool, acc, backrun_cap, budget) {
                Ok(plan) if !plan.is_empty() => {
                    for leg in &plan.legs {
                        queue.push(leg.priority, Task::Leg { agent: ai, drain: id, leg: *leg });
                    }
                    let agent = self.name(ai);
                    self.emit(at, EventBody::Plan { agent, kind: "backrun".into(), plan });
                }
                Ok(_) => {}
                Err(e) => self.fail(at, Some(ai), "plan_backrun", err(e)),
            }
        }
        Ok(())
    }

    fn execute_leg(&mut self, at: BlockTime, ai: usize, drain: u64, mut leg: SwapLeg) -> Result<(), String> {
        let acc = self.agents[ai].account;
        if leg.kind == PlanKind::SandwichPost && !self.sandwich_pre.contains_key(&(drain, ai)) {
            return Ok(());
        }
        if let (PlanKind::Frontrun, LegAmount::ExactIn { token, amount }) = (leg.kind, leg.amount) {
            // sell what is still held
            let held = self.ledger.balance(acc, token);
            if !held.is_positive() {
                return Ok(());
            }
            leg.amount = LegAmount::ExactIn { token, amount: amount.min(held) };
        }
        let pool = self.pools.get_mut(&leg.pool).expect("leg pool");
        let (paid, received) = leg.execute(&mut self.ledger, pool).map_err(err)?;
        self.flush_ledger(at);
        self.emit(at, EventBody::LegExecuted { agent: self.name(ai), drain, leg, paid, received });
        match leg.kind {
            PlanKind::SandwichPre => {
                self.sandwich_pre.insert((drain, ai), received);
            }
            PlanKind::SandwichPost => {
                let proceeds = self.sandwich_pre.remove(&(drain, ai)).unwrap_or_default();
                self.settle_sandwich(at, ai, drain, leg.pool, proceeds - paid)?;
            }
            PlanKind::Backrun => {
                let token = self.pools[&leg.pool].token_x;
                if self.vault_of.contains_key(&token) {
                    self.deferred.push(Deferred::Deposit { agent: ai, token, amount: received });
                }
            }
            PlanKind::Frontrun => {}
        }
        Ok(())
    }

    fn settle_sandwich(
        &mut self,
        at: BlockTime,
        ai: usize,
        drain: u64,
        pid: PoolId,
        profit: FixedAmount,
    ) -> Result<(), String> {
        let share = self.scenario.detector.as_ref().map_or(FixedAmount::ONE, |d| d.sandwich_treasury_share);
        let acc = self.agents[ai].account;
        let y = self.pools[&pid].token_y;
        let (mut to_treasury, mut to_holders) = (FixedAmount::ZERO, FixedAmount::ZERO);
        if profit.is_positive() {
            let holders: Vec<AccountId> =
                self.agents.iter().filter(|a| a.protect.contains(&pid)).map(|a| a.account).collect();
            to_treasury = if holders.is_empty() {
                profit
            } else {
                profit.mul_div_round(share, FixedAmount::ONE, Rounding::Floor).map_err(err)?
            };
            to_holders = profit - to_treasury;
            self.ledger.transfer(y, acc, self.treasury, to_treasury).map_err(err)?;
            if to_holders.is_positive() {
                let each = FixedAmount::from_raw(to_holders.raw() / holders.len() as i128);
                let mut left = to_holders;
                for (k, to) in holders.iter().enumerate() {
                    let amount = if k + 1 == holders.len() { left } else { each };
                    left -= amount;
                    self.ledger.transfer(y, acc, *to, amount).map_err(err)?;
                }
            }
            self.flush_ledger(at);
        }
        self.emit(at, EventBody::SandwichSettled { agent: self.name(ai), drain, profit, to_treasury, to_holders });
        Ok(())
    }

    fn execute_intent(&mut self, at: BlockTime, m: IntentMatch) -> Result<(), String> {
        let it = self.intents.get(m.intent).ok_or("unknown intent")?.clone();
        let owner = self.agent_of[&it.owner];
        let pool = self.pools.get_mut(&it.pool).expect("intent pool");
        let x = pool.token_x;
        let held = self.ledger.balance(it.owner, x);
        let (proceeds, fee) = if !held.is_positive() {
            (FixedAmount::ZERO, FixedAmount::ZERO)
        } else {
            match it.action {
                IntentAction::ExitToNumeraire => {
                    let fill = execute_swap(&mut self.ledger, pool, it.owner, x, held).map_err(err)?;
                    let fee = solver_fee(fill.amount_out, m.fee_bps);
                    self.ledger.transfer(fill.output_token, it.owner, m.solver, fee).map_err(err)?;
                    (fill.amount_out, fee)
                }
                IntentAction::SwapToAnticoin => {
                    let (ci, vid) = *self.vault_of.get(&x).ok_or("pool token has no vault")?;
                    let out = self.chains[ci].registry.deposit(&mut self.ledger, vid, it.owner, held).map_err(err)?;
                    let anticoin = self.chains[ci].registry.get(vid).map_err(err)?.anticoin;
                    let fee = solver_fee(out.minted, m.fee_bps);
                    self.ledger.transfer(anticoin, it.owner, m.solver, fee).map_err(err)?;
                    self.queue_reward(at, out.reward);
                    (out.minted, fee)
                }
            }
        };
        self.intents.consume(m.intent, at.height, m.solver);
        self.flush_ledger(at);
        self.emit(at, EventBody::IntentExecuted { agent: self.name(owner), matched: m, sold: held, proceeds, fee });
        Ok(())
    }

    fn peg_keep(&mut self, at: BlockTime, ai: usize) -> Result<(), String> {
        let Some(Policy::PegKeep { token, budget }) = self.agents[ai].policy.clone() else { return Ok(()) };
        let acc = self.agents[ai].account;
        let rugged = self.token_ids[&token];
        let (ci, vid) = self.vault_of[&rugged];
        let Some(&pid) = self.anticoin_pools.get(&vid) else { return Ok(()) };
        let p0 = self.chains[ci].registry.get(vid).map_err(err)?.price_at_creation;
        let price = self.prices.get(&rugged).copied().ok_or("rugged token has no price")?;
        let peg = anticoin_value(p0, price).map_err(err)?;
        if !peg.is_positive() {
            return Ok(());
        }
        let pool = self.pools.get_mut(&pid).expect("anticoin pool");
        let Some(mut trade) = peg_keeper_step(pool, peg, budget, default_tolerance()).map_err(err)? else {
            return Ok(());
        };
        let held = self.ledger.balance(acc, trade.input_token);
        if held < trade.amount_in {
            match peg_keeper_step(pool, peg, held, default_tolerance()).map_err(err)? {
                Some(t) => trade = t,
                None => return Ok(()),
            }
        }
        let fill = execute_swap(&mut self.ledger, pool, acc, trade.input_token, trade.amount_in).map_err(err)?;
        trade.amount_out = fill.amount_out;
        self.flush_ledger(at);
        self.emit(at, EventBody::PegTrade { agent: self.name(ai), pool: pid.0, trade });
        Ok(())
    }

    fn queue_reward(&mut self, at: BlockTime, reward: RewardEvent) {
        self.flush_ledger(at);
        self.bridge.push_back((at, reward));
        self.emit(at, EventBody::RewardQueued { reward });
    }

    fn vault_phase(&mut self, at: BlockTime) {
        let mut k = self.next_step;
        let mut actions = Vec::new();
        while k < self.steps.len() && self.steps[k].at == at.height {
            let s = &self.steps[k];
            if s.chain == at.chain && !Self::is_phase3(&s.action) {
                actions.push((s.agent, s.action.clone()));
            }
            k += 1;
        }
        for (ai, action) in actions {
            if let Err(e) = self.run_vault_action(at, ai, &action) {
                self.fail(at, Some(ai), action_name(&action), e);
            }
            self.flush_ledger(at);
        }
        let deferred: Vec<Deferred> = std::mem::take(&mut self.deferred);
        for d in deferred {
            let Deferred::Deposit { agent, token, amount } = d;
            if let Err(e) = self.deposit(at, agent, token, amount) {
                self.fail(at, Some(agent), "salvage_deposit", e);
            }
        }
        for ai in 0..self.agents.len() {
            let r = match self.agents[ai].policy.clone() {
                Some(Policy::VaultActivity { token, probability, max_fraction }) => {
                    self.random_vault_op(at, ai, &token, probability, max_fraction)
                }
                Some(Policy::RandomPerps { token, probability, max_fraction, max_leverage }) => {
                    self.random_perps(at, ai, &token, probability, max_fraction, max_leverage)
                }
                _ => Ok(()),
            };
            if let Err(e) = r {
                self.fail(at, Some(ai), "policy", e);
            }
            self.flush_ledger(at);
        }
    }

    fn deposit(&mut self, at: BlockTime, ai: usize, token: TokenId, amount: FixedAmount) -> Result<(), String> {
        let acc = self.agents[ai].account;
        let (ci, vid) = *self.vault_of.get(&token).ok_or("token has no vault")?;
        let out = self.chains[ci].registry.deposit(&mut self.ledger, vid, acc, amount).map_err(err)?;
        self.flush_ledger(at);
        self.emit(at, EventBody::Deposit { agent: self.name(ai), vault: vid.0, amount, reward: out.reward.reward });
        self.queue_reward(at, out.reward);
        Ok(())
    }

    fn burn(&mut self, at: BlockTime, ai: usize, token: TokenId, amount: FixedAmount) -> Result<(), String> {
        let acc = self.agents[ai].account;
        let (ci, vid) = *self.vault_of.get(&token).ok_or("token has no vault")?;
        let out = self.chains[ci].registry.burn_anticoins(&mut self.ledger, vid, acc, amount).map_err(err)?;
        self.flush_ledger(at);
        self.emit(at, EventBody::Burn { agent: self.name(ai), vault: vid.0, amount, reward: out.reward.reward });
        self.queue_reward(at, out.reward);
        Ok(())
    }

    fn withdraw(&mut self, at: BlockTime, ai: usize, token: TokenId, amount: FixedAmount) -> Result<(), String> {
        let acc = self.agents[ai].account;
        let (ci, vid) = *self.vault_of.get(&token).ok_or("token has no vault")?;
        let outcome = self.chains[ci].registry.withdraw(&mut self.ledger, vid, acc, amount).map_err(err)?;
        self.flush_ledger(at);
        self.emit(at, EventBody::Withdraw { agent: self.name(ai), vault: vid.0, amount, outcome });
        Ok(())
    }

    fn anticoin_of(&self, rugged: TokenId) -> Result<(usize, VaultId, TokenId), String> {
        let (ci, vid) = *self.vault_of.get(&rugged).ok_or("token has no vault")?;
        let anticoin = self.chains[ci].registry.get(vid).map_err(err)?.anticoin;
        Ok((ci, vid, anticoin))
    }

    fn open_position(
        &mut self,
        at: BlockTime,
        ai: usize,
        rugged: TokenId,
        collateral: FixedAmount,
        leverage: FixedAmount,
        direction: Direction,
    ) -> Result<(), String> {
        let acc = self.agents[ai].account;
        let (ci, vid, anticoin) = self.anticoin_of(rugged)?;
        let p0 = self.chains[ci].registry.get(vid).map_err(err)?.price_at_creation;
        let mark = self.prices.get(&rugged).copied().ok_or("rugged token has no price")?;
        let book = self.chains[ci].perps.as_mut().ok_or("no perps market")?;
        let id = book
            .open_position(&mut self.ledger, acc, vid, anticoin, p0, collateral, leverage, direction, mark, at)
            .map_err(err)?;
        self.flush_ledger(at);
        self.emit(at, EventBody::PositionOpened { agent: self.name(ai), position: id });
        Ok(())
    }

    fn close_positions(&mut self, at: BlockTime, ai: usize, rugged: TokenId) -> Result<(), String> {
        let acc = self.agents[ai].account;
        let (ci, vid, _) = self.anticoin_of(rugged)?;
        let mark = self.prices.get(&rugged).copied().ok_or("rugged token has no price")?;
        let book = self.chains[ci].perps.as_mut().ok_or("no perps market")?;
        let ids: Vec<u64> =
            book.positions().filter(|p| p.owner == acc && p.vault == vid && p.is_live()).map(|p| p.id).collect();
        for id in ids {
            let book = self.chains[ci].perps.as_mut().expect("checked");
            let outcome = book.close_position(&mut self.ledger, id, mark).map_err(err)?;
            self.flush_ledger(at);
            self.emit(at, EventBody::PositionClosed { agent: self.name(ai), position: id, outcome });
        }
        Ok(())
    }

    fn open_claim_of(&self, insured: &str) -> Result<u64, String> {
        let acc = self.account_of(insured).ok_or("unknown agent")?;
        let book = self.insurance.as_ref().ok_or("no insurance")?;
        book.claims().filter(|c| c.claimant == acc).map(|c| c.id).max().ok_or_else(|| format!("{insured} has no claim"))
    }

    fn dispute_event(&mut self, at: BlockTime, ai: usize, action: &str, id: u64) {
        self.flush_ledger(at);
        self.emit(at, EventBody::Dispute { agent: self.name(ai), action: action.to_string(), id });
    }

    fn run_vault_action(&mut self, at: BlockTime, ai: usize, action: &Action) -> Result<(), String> {
        let acc = self.agents[ai].account;
        let de = |e: DisputeError| e.to_string();
        match action {
            Action::Deposit { token, amount } => {
                let t = self.token_ids[token];
                let amt = self.quantity(*amount, acc, t);
                self.deposit(at, ai, t, amt)?;
            }
            Action::Burn { token, amount } => {
                let t = self.token_ids[token];
                let (_, _, anticoin) = self.anticoin_of(t)?;
                let amt = self.quantity(*amount, acc, anticoin);
                self.burn(at, ai, t, amt)?;
            }
            Action::Withdraw { token, amount } => {
                let t = self.token_ids[token];
                let (_, _, anticoin) = self.anticoin_of(t)?;
                let amt = self.quantity(*amount, acc, anticoin);
                self.withdraw(at, ai, t, amt)?;
            }
            Action::OpenPosition { token, collateral, leverage, direction } => {
                let t = self.token_ids[token];
                let (_, _, anticoin) = self.anticoin_of(t)?;
                let amt = self.quantity(*collateral, acc, anticoin);
                self.open_position(at, ai, t, amt, *leverage, *direction)?;
            }
            Action::ClosePositions { token } => {
                let t = self.token_ids[token];
                self.close_positions(at, ai, t)?;
            }
            Action::IssueBonded { token, total, bond_fraction } => {
                let t = self.token_ids[token];
                let rp = self.rugproof.as_mut().ok_or("no rugproof")?;
                let id = rp.issue_bonded_token(&mut self.ledger, acc, t, *total, *bond_fraction).map_err(de)?;
                self.latest_issuance.insert(t, id);
                self.dispute_event(at, ai, "issue_bonded", id);
            }
            Action::RugClaim { token, claim_fraction } => {
                let t = self.token_ids[token];
                let iss = *self.latest_issuance.get(&t).ok_or("token has no bonded issuance")?;
                let rp = self.rugproof.as_mut().ok_or("no rugproof")?;
                let id = rp.submit_rug_claim(&mut self.ledger, acc, iss, *claim_fraction, at).map_err(de)?;
                self.dispute_event(at, ai, "rug_claim", id);
            }
            Action::RugVote { token, deposit, side } => {
                let t = self.token_ids[token];
                let iss = *self.latest_issuance.get(&t).ok_or("token has no bonded issuance")?;
                let rp = self.rugproof.as_mut().ok_or("no rugproof")?;
                let claim = rp.issuance(iss).map_err(de)?.open_claim.ok_or("issuance has no open claim")?;
                rp.cast_vote(&mut self.ledger, claim, acc, *deposit, *side, at).map_err(de)?;
                self.dispute_event(at, ai, "rug_vote", claim);
            }
            Action::IssuePolicy { insured, token, value, bond_fraction, duration } => {
                let insured = self.account_of(insured).ok_or("unknown agent")?;
                let t = self.token_ids[token];
                let book = self.insurance.as_mut().ok_or("no insurance")?;
                let id = book
                    .issue_policy(&mut self.ledger, acc, insured, t, *value, *bond_fraction, *duration, at)
                    .map_err(de)?;
                self.dispute_event(at, ai, "issue_policy", id);
            }
            Action::InsuranceClaim { claim_fraction } => {
                let book = self.insurance.as_mut().ok_or("no insurance")?;
                let policy = book
                    .policies()
                    .filter(|p| p.insured == acc && p.status == crate::insurance::PolicyStatus::Active)
                    .map(|p| p.id)
                    .max()
                    .ok_or("agent holds no active policy")?;
                let id = book.submit_claim(&mut self.ledger, policy, acc, *claim_fraction, at).map_err(de)?;
                self.dispute_event(at, ai, "insurance_claim", id);
            }
            Action::JoinClaim { insured, loss, join_fraction } => {
                let claim = self.open_claim_of(insured)?;
                let book = self.insurance.as_mut().ok_or("no insurance")?;
                book.join_claim(&mut self.ledger, claim, acc, *loss, *join_fraction, at).map_err(de)?;
                self.dispute_event(at, ai, "join_claim", claim);
            }
            Action::DisputeClaim { insured, dispute_fraction } => {
                let claim = self.open_claim_of(insured)?;
                let book = self.insurance.as_mut().ok_or("no insurance")?;
                book.dispute_claim(&mut self.ledger, claim, acc, *dispute_fraction, at).map_err(de)?;
                self.dispute_event(at, ai, "dispute_claim", claim);
            }
            Action::InsuranceVote { insured, deposit, side } => {
                let claim = self.open_claim_of(insured)?;
                let book = self.insurance.as_mut().ok_or("no insurance")?;
                book.cast_vote(&mut self.ledger, claim, acc, *deposit, *side, at).map_err(de)?;
                self.dispute_event(at, ai, "insurance_vote", claim);
            }
            Action::Escalate { insured } => {
                let claim = self.open_claim_of(insured)?;
                let book = self.insurance.as_mut().ok_or("no insurance")?;
                book.escalate(&mut self.ledger, claim, acc, at).map_err(de)?;
                self.dispute_event(at, ai, "escalate", claim);
            }
            _ => unreachable!("phase 3 action in phase 4"),
        }
        Ok(())
    }

    fn random_vault_op(
        &mut self,
        at: BlockTime,
        ai: usize,
        token: &str,
        probability: FixedAmount,
        max_fraction: FixedAmount,
    ) -> Result<(), String> {
        let t = self.token_ids[token];
        if self.tokens[&t].chain != at.chain {
            return Ok(());
        }
        let acc = self.agents[ai].account;
        let rng = &mut self.agents[ai].rng;
        let roll = FixedAmount::from_raw(rng.gen_range(0..FixedAmount::ONE.raw()));
        let op: u8 = rng.gen_range(0..3);
        let frac = FixedAmount::from_raw(rng.gen_range(1..=max_fraction.raw().max(1)));
        if roll >= probability {
            return Ok(());
        }
        let (_, _, anticoin) = self.anticoin_of(t)?;
        let base = if op == 0 { t } else { anticoin };
        let amount =
            self.ledger.balance(acc, base).mul_div_round(frac, FixedAmount::ONE, Rounding::Floor).map_err(err)?;
        if amount < MIN_RANDOM_AMOUNT {
            return Ok(());
        }
        match op {
            0 => self.deposit(at, ai, t, amount),
            1 => self.burn(at, ai, t, amount),
            _ => {
                // once the escalating rate is confiscatory, burning is the only exit left
                let (ci, vid) = self.vault_of[&t];
                let acc = self.agents[ai].account;
                match self.chains[ci].registry.quote_withdrawal(&self.ledger, vid, acc, amount) {
                    Err(VaultError::Confiscatory { .. }) => self.burn(at, ai, t, amount),
                    _ => self.withdraw(at, ai, t, amount),
                }
            }
        }
    }

    fn random_perps(
        &mut self,
        at: BlockTime,
        ai: usize,
        token: &str,
        probability: FixedAmount,
        max_fraction: FixedAmount,
        max_leverage: FixedAmount,
    ) -> Result<(), String> {
        let t = self.token_ids[token];
        if self.tokens[&t].chain != at.chain {
            return Ok(());
        }
        let acc = self.agents[ai].account;
        let rng = &mut self.agents[ai].rng;
        let roll = FixedAmount::from_raw(rng.gen_range(0..FixedAmount::ONE.raw()));
        let close: bool = rng.gen();
        let long: bool = rng.gen();
        let frac = FixedAmount::from_raw(rng.gen_range(1..=max_fraction.raw().max(1)));
        let lev = FixedAmount::from_raw(rng.gen_range(FixedAmount::ONE.raw()..=max_leverage.raw()));
        let step = FixedAmount::from_raw(100_000_000).raw();
        let lev = FixedAmount::from_raw(lev.raw() / step * step);
        if roll >= probability {
            return Ok(());
        }
        let (ci, vid, anticoin) = self.anticoin_of(t)?;
        let has_live = self.chains[ci]
            .perps
            .as_ref()
            .is_some_and(|b| b.positions().any(|p| p.owner == acc && p.vault == vid && p.is_live()));
        if has_live && close {
            return self.close_positions(at, ai, t);
        }
        let collateral =
            self.ledger.balance(acc, anticoin).mul_div_round(frac, FixedAmount::ONE, Rounding::Floor).map_err(err)?;
        if collateral < MIN_RANDOM_AMOUNT {
            return Ok(());
        }
        let dir = if long { Direction::Long } else { Direction::Short };
        self.open_position(at, ai, t, collateral, lev.max(FixedAmount::ONE), dir)
    }

    fn perps_phase(&mut self, ci: usize, at: BlockTime) {
        if self.chains[ci].perps.is_none() {
            return;
        }
        let vaults: Vec<(VaultId, TokenId, FixedAmount)> =
            self.chains[ci].registry.vaults().map(|v| (v.id, v.rugged_token, v.price_at_creation)).collect();
        let liquidators: Vec<AccountId> =
            self.agents.iter().filter(|a| matches!(a.policy, Some(Policy::Liquidate))).map(|a| a.account).collect();
        for (vid, rugged, p0) in vaults {
            let Some(mark) = self.prices.get(&rugged).copied() else { continue };
            let book = self.chains[ci].perps.as_mut().expect("checked");
            if book.positions().all(|p| p.vault != vid || !p.is_live()) {
                continue;
            }
            let interval = book.params.funding.interval_blocks;
            let pid = self.anticoin_pools.get(&vid).copied();
            if at.height.is_multiple_of(interval) {
                if let Some(l_pool) = pid.map(|p| self.pools[&p].liquidity()) {
                    let book = self.chains[ci].perps.as_mut().expect("checked");
                    match book.apply_funding(&mut self.ledger, vid, l_pool, at) {
                        Ok(Some(report)) => {
                            self.flush_ledger(at);
                            self.emit(at, EventBody::Funding { report });
                        }
                        Ok(None) => {}
                        Err(e) => self.fail(at, None, "funding", err(e)),
                    }
                }
            }
            let book = self.chains[ci].perps.as_mut().expect("checked");
            let bids: Vec<LiquidatorBid> = book
                .positions()
                .filter(|p| p.vault == vid && p.is_live())
                .flat_map(|p| liquidators.iter().map(move |l| LiquidatorBid { liquidator: *l, position: p.id }))
                .collect();
            let pool = pid.and_then(|p| self.pools.get_mut(&p));
            match book.flag_and_liquidate(&mut self.ledger, vid, p0, mark, &bids, pool, at) {
                Ok(events) => {
                    self.flush_ledger(at);
                    for event in events {
                        self.emit(at, EventBody::Liquidation { event });
                    }
                }
                Err(e) => self.fail(at, None, "liquidation", err(e)),
            }
        }
    }

    fn dispute_phase(&mut self, at: BlockTime) {
        if let Some(rp) = self.rugproof.as_mut() {
            let results = rp.tick(&mut self.ledger, at);
            self.flush_ledger(at);
            for r in results {
                match r {
                    Ok(resolution) => self.emit(at, EventBody::RugResolution { resolution }),
                    Err(e) => self.fail(at, None, "rugproof_tick", err(e)),
                }
            }
        }
        if let Some(book) = self.insurance.as_mut() {
            let before: BTreeSet<u64> =
                book.policies().filter(|p| p.status == crate::insurance::PolicyStatus::Active).map(|p| p.id).collect();
            let results = book.tick(&mut self.ledger, at);
            let expired: Vec<u64> = book
                .policies()
                .filter(|p| p.status == crate::insurance::PolicyStatus::Expired && before.contains(&p.id))
                .map(|p| p.id)
                .collect();
            self.flush_ledger(at);
            for r in results {
                match r {
                    Ok(resolution) => self.emit(at, EventBody::InsuranceResolution { resolution }),
                    Err(e) => self.fail(at, None, "insurance_tick", err(e)),
                }
            }
            for policy in expired {
                self.emit(at, EventBody::PolicyExpired { policy });
            }
        }
    }

    fn bridge_phase(&mut self, at: BlockTime) {
        let delay = self.scenario.bridge_delay_blocks;
        let mut keep = VecDeque::new();
        while let Some((src, reward)) = self.bridge.pop_front() {
            if at.height < src.height + delay {
                keep.push_back((src, reward));
                continue;
            }
            let r = self
                .ledger
                .mint(self.protocol_token, reward.beneficiary, reward.reward)
                .map_err(err)
                .and_then(|_| self.supply.record_mint(reward.reward).map_err(err));
            match r {
                Ok(()) => {
                    self.block_rewards += reward.reward;
                    self.block_emission += reward.reward;
                    self.flush_ledger(at);
                    self.emit(
                        at,
                        EventBody::RewardDelivered { source_chain: src.chain.0, source_height: src.height, reward },
                    );
                }
                Err(e) => self.fail(at, None, "bridge", e),
            }
        }
        self.bridge = keep;
    }

    fn vaulted_value(&self) -> Result<(FixedAmount, FixedAmount), String> {
        let report =
            aggregate_vault_stats(self.chains.iter().map(|c| &c.registry), |_, t| self.prices.get(&t).copied())
                .map_err(err)?;
        Ok((report.sum_cr_value, report.sum_vaulted_value))
    }

    fn current_target(&self) -> FixedAmount {
        self.vaulted_value()
            .ok()
            .and_then(|(_, v)| target_supply(v, self.scenario.tokenomics.s0).ok())
            .unwrap_or(self.scenario.tokenomics.s0)
    }

    fn tokenomics_phase(&mut self, at: BlockTime) {
        let params = self.scenario.tokenomics.clone();
        let r = (|| -> Result<(), String> {
            let em = block_emission(params.epsilon_rate, 1).map_err(err)?;
            if em.is_positive() {
                self.ledger.mint(self.protocol_token, self.treasury, em).map_err(err)?;
                self.supply.record_mint(em).map_err(err)?;
                self.flush_ledger(at);
                self.emit(at, EventBody::Emission { amount: em });
            }
            self.block_emission += em;
            let (_, vaulted) = self.vaulted_value()?;
            let target = target_supply(vaulted, params.s0).map_err(err)?;
            self.block_target = target;
            let want = planned_burn(&self.supply, &params, vaulted).map_err(err)?;
            let burn = want.min(self.ledger.balance(self.treasury, self.protocol_token));
            if burn.is_positive() {
                self.ledger.burn(self.protocol_token, self.treasury, burn).map_err(err)?;
                self.supply.record_burn(burn).map_err(err)?;
                self.block_burned = burn;
                self.flush_ledger(at);
                self.emit(at, EventBody::ControllerBurn { amount: burn, target, sum_vaulted_value: vaulted });
            }
            self.supply.last_block = Some(at);
            Ok(())
        })();
        if let Err(e) = r {
            self.fail(at, None, "tokenomics", e);
        }
    }

    /// Numéraire value of every agent's token balances at current prices.
    pub fn agent_values(&self) -> Vec<AgentValue> {
        self.agents
            .iter()
            .map(|a| {
                let value = self
                    .ledger
                    .balances()
                    .filter(|(_, acc, _)| *acc == a.account)
                    .filter_map(|(t, _, bal)| self.price(t).and_then(|p| bal.checked_mul(p).ok()))
                    .sum();
                AgentValue { agent: a.name.clone(), value }
            })
            .collect()
    }

    pub fn agent_value(&self, name: &str) -> Option<FixedAmount> {
        self.agent_values().into_iter().find(|v| v.agent == name).map(|v| v.value)
    }

    fn snapshot(&self, trace_hash: u64) -> serde_json::Value {
        let balances: Vec<_> = self
            .ledger
            .balances()
            .map(|(token, account, amount)| json!({"token": token, "account": account, "amount": amount}))
            .collect();
        let chains: Vec<_> = self
            .chains
            .iter()
            .map(|c| {
                json!({
                    "id": c.id, "name": c.name, "blocks": c.blocks,
                    "registry": c.registry, "perps": c.perps,
                })
            })
            .collect();
        let pools: Vec<_> = self.pools.values().collect();
        let tokens: BTreeMap<&String, TokenId> = self.token_ids.iter().map(|(k, v)| (k, *v)).collect();
        let agents: BTreeMap<&String, AccountId> = self.agents.iter().map(|a| (&a.name, a.account)).collect();
        json!({
            "scenario": self.scenario.name,
            "seed": self.scenario.seed,
            "height": self.height,
            "trace_hash": super::trace::format_hash(trace_hash),
            "protocol_token": self.protocol_token,
            "rugsafe_chain": self.chains[self.rugsafe].id,
            "treasury": self.treasury,
            "supply": self.supply,
            "tokens": tokens,
            "agents": agents,
            "agent_values": self.agent_values(),
            "balances": balances,
            "chains": chains,
            "pools": pools,
            "intents": self.intents.intents(),
            "rugproof": self.rugproof,
            "insurance": self.insurance,
            "bridge_in_flight": self.bridge.len(),
        })
    }

    pub fn finish(self) -> Trace {
        let trace_hash = self.log.hash();
        let state = self.snapshot(trace_hash);
        let failed_events = self.log.lines().iter().filter(|l| l.contains("\"type\":\"failed\"")).count() as u64;
        Trace { events: self.log.lines().to_vec(), telemetry: self.telemetry, state, trace_hash, failed_events }
    }
}

fn action_name(action: &Action) -> &'static str {
    match action {
        Action::Swap { .. } => "swap",
        Action::Transfer { .. } => "transfer",
        Action::AddLiquidity { .. } => "add_liquidity",
        Action::RemoveLiquidity { .. } => "remove_liquidity",
        Action::Drain { .. } => "drain",
        Action::Deposit { .. } => "deposit",
        Action::Burn { .. } => "burn",
        Action::Withdraw { .. } => "withdraw",
        Action::Intent { .. } => "intent",
        Action::OpenPosition { .. } => "open_position",
        Action::ClosePositions { .. } => "close_positions",
        Action::IssueBonded { .. } => "issue_bonded",
        Action::RugClaim { .. } => "rug_claim",
        Action::RugVote { .. } => "rug_vote",
        Action::IssuePolicy { .. } => "issue_policy",
        Action::InsuranceClaim { .. } => "insurance_claim",
        Action::JoinClaim { .. } => "join_claim",
        Action::DisputeClaim { .. } => "dispute_claim",
        Action::InsuranceVote { .. } => "insurance_vote",
        Action::Escalate { .. } => "escalate",
    }
}
