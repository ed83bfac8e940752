//! Pool monitoring, rug-risk signals, intervention planners against pending
//! drains, and the intent/solver safeguard.
//!
//! Planners are pure: they read pool state and return plans. The harness
//! queues plan legs and executes them in (priority desc, sequence asc) order.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::fixed::{FixedAmount, Rounding};
use crate::ids::{AccountId, BlockTime, PoolId, TokenId, VaultId};
use crate::ledger::Ledger;
use crate::market::{DrainEvent, DrainOutcome, MarketError, PoolState, MAX_FEE_BPS};

/// Priority of a creator drain in the block it executes.
pub const DRAIN_PRIORITY: u32 = 100;
/// Ordinary user transactions, intents included.
pub const USER_PRIORITY: u32 = 50;
pub const PEG_KEEPER_PRIORITY: u32 = 10;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DetectionError {
    #[error("invalid parameter: {0}")]
    Parameter(&'static str),
    #[error("observation at height {got} does not follow {last}")]
    Ordering { last: u64, got: u64 },
    #[error("drain executes at height {executes_at}, too late at {now}")]
    TooLate { now: u64, executes_at: u64 },
    #[error(transparent)]
    Market(#[from] MarketError),
}

fn default_window() -> usize {
    8
}

fn default_escalation() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DetectorParams {
    /// Alert when liquidity falls by more than this fraction in one block.
    pub drop_threshold: FixedAmount,
    pub mint_spike_factor: FixedAmount,
    pub wallet_outflow_fraction: FixedAmount,
    pub volume_spike_factor: FixedAmount,
    /// Number of past blocks in the trailing means.
    #[serde(default = "default_window")]
    pub window: usize,
    /// Priority added above a drain for protocol transactions.
    #[serde(default = "default_escalation")]
    pub priority_escalation: u32,
    /// Share of sandwich profit kept by the treasury; the rest goes to holders.
    #[serde(default = "one")]
    pub sandwich_treasury_share: FixedAmount,
}

fn one() -> FixedAmount {
    FixedAmount::ONE
}

impl DetectorParams {
    pub fn validate(&self) -> Result<(), DetectionError> {
        if !self.drop_threshold.is_positive() || self.drop_threshold > FixedAmount::ONE {
            return Err(DetectionError::Parameter("drop_threshold must lie in (0, 1]"));
        }
        if !self.wallet_outflow_fraction.is_positive() || self.wallet_outflow_fraction > FixedAmount::ONE {
            return Err(DetectionError::Parameter("wallet_outflow_fraction must lie in (0, 1]"));
        }
        if self.mint_spike_factor <= FixedAmount::ONE || self.volume_spike_factor <= FixedAmount::ONE {
            return Err(DetectionError::Parameter("spike factors must exceed 1"));
        }
        if self.window == 0 {
            return Err(DetectionError::Parameter("window must be positive"));
        }
        if self.priority_escalation == 0 || self.priority_escalation >= DRAIN_PRIORITY {
            return Err(DetectionError::Parameter("priority_escalation must lie in 1..100"));
        }
        if self.sandwich_treasury_share.is_negative() || self.sandwich_treasury_share > FixedAmount::ONE {
            return Err(DetectionError::Parameter("sandwich_treasury_share must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn protocol_priority(&self) -> u32 {
        DRAIN_PRIORITY + self.priority_escalation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskKind {
    LiquidityDrop,
    MintSpike,
    WalletOutflow,
    VolumeAnomaly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskSignal {
    pub kind: RiskKind,
    pub magnitude: FixedAmount,
    pub height: BlockTime,
}

/// Per-block auxiliary activity for one token and its creator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxActivity {
    pub minted: FixedAmount,
    pub creator_outflow: FixedAmount,
    /// Creator balance before this block's outflow.
    pub creator_balance: FixedAmount,
    pub volume: FixedAmount,
    pub liquidity_change: FixedAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolMonitor {
    pub pool: PoolId,
    pub params: DetectorParams,
    window: VecDeque<(u64, FixedAmount)>,
    mints: VecDeque<FixedAmount>,
    volumes: VecDeque<FixedAmount>,
}

fn trailing_mean(xs: &VecDeque<FixedAmount>) -> Option<FixedAmount> {
    if xs.is_empty() {
        return None;
    }
    let total: FixedAmount = xs.iter().copied().sum();
    total.div_int(xs.len() as i128).ok()
}

fn push_bounded<T>(xs: &mut VecDeque<T>, x: T, cap: usize) {
    if xs.len() == cap {
        xs.pop_front();
    }
    xs.push_back(x);
}

impl PoolMonitor {
    pub fn new(pool: PoolId, params: DetectorParams) -> Result<Self, DetectionError> {
        params.validate()?;
        Ok(PoolMonitor { pool, params, window: VecDeque::new(), mints: VecDeque::new(), volumes: VecDeque::new() })
    }

    pub fn last(&self) -> Option<(u64, FixedAmount)> {
        self.window.back().copied()
    }

    /// Records `L_pool` at `at` and flags a drop beyond the threshold.
    pub fn observe(&mut self, at: BlockTime, l_pool: FixedAmount) -> Result<Option<RiskSignal>, DetectionError> {
        let prev = self.last();
        if let Some((last, _)) = prev {
            if at.height <= last {
                return Err(DetectionError::Ordering { last, got: at.height });
            }
        }
        push_bounded(&mut self.window, (at.height, l_pool), self.params.window + 1);
        let Some((_, l_prev)) = prev else { return Ok(None) };
        if !l_prev.is_positive() || l_pool >= l_prev {
            return Ok(None);
        }
        let drop =
            (l_prev - l_pool).mul_div_round(FixedAmount::ONE, l_prev, Rounding::HalfEven).map_err(MarketError::from)?;
        Ok((drop > self.params.drop_threshold).then_some(RiskSignal {
            kind: RiskKind::LiquidityDrop,
            magnitude: drop,
            height: at,
        }))
    }

    /// Mint, creator-wallet and volume heuristics against trailing means.
    pub fn scan_aux(&mut self, at: BlockTime, act: AuxActivity) -> Vec<RiskSignal> {
        let p = &self.params;
        let mut out = Vec::new();
        let ratio =
            |x: FixedAmount, base: FixedAmount| x.mul_div_round(FixedAmount::ONE, base, Rounding::HalfEven).ok();
        if let Some(mean) = trailing_mean(&self.mints).filter(|m| m.is_positive()) {
            if let Some(r) = ratio(act.minted, mean).filter(|r| *r > p.mint_spike_factor) {
                out.push(RiskSignal { kind: RiskKind::MintSpike, magnitude: r, height: at });
            }
        }
        if act.creator_balance.is_positive() && act.creator_outflow.is_positive() {
            if let Some(r) = ratio(act.creator_outflow, act.creator_balance).filter(|r| *r > p.wallet_outflow_fraction)
            {
                out.push(RiskSignal { kind: RiskKind::WalletOutflow, magnitude: r, height: at });
            }
        }
        if let Some(mean) = trailing_mean(&self.volumes).filter(|m| m.is_positive()) {
            if !act.liquidity_change.is_positive() {
                if let Some(r) = ratio(act.volume, mean).filter(|r| *r > p.volume_spike_factor) {
                    out.push(RiskSignal { kind: RiskKind::VolumeAnomaly, magnitude: r, height: at });
                }
            }
        }
        let cap = p.window;
        push_bounded(&mut self.mints, act.minted, cap);
        push_bounded(&mut self.volumes, act.volume, cap);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    Frontrun,
    SandwichPre,
    SandwichPost,
    Backrun,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LegAmount {
    /// Sell exactly `amount` of `token`.
    ExactIn { token: TokenId, amount: FixedAmount },
    /// Buy exactly `amount` of `token`.
    ExactOut { token: TokenId, amount: FixedAmount },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapLeg {
    pub kind: PlanKind,
    pub account: AccountId,
    pub pool: PoolId,
    pub priority: u32,
    pub amount: LegAmount,
    /// Quoted output for `ExactIn`, quoted cost for `ExactOut`.
    pub quoted: FixedAmount,
}

impl SwapLeg {
    /// Executes the leg against a live pool and ledger. Returns (paid, received).
    pub fn execute(
        &self,
        ledger: &mut Ledger,
        pool: &mut PoolState,
    ) -> Result<(FixedAmount, FixedAmount), MarketError> {
        match self.amount {
            LegAmount::ExactIn { token, amount } => {
                let fill = crate::market::execute_swap(ledger, pool, self.account, token, amount)?;
                Ok((fill.amount_in, fill.amount_out))
            }
            LegAmount::ExactOut { token, amount } => {
                let fill = crate::market::execute_swap_exact_out(ledger, pool, self.account, token, amount)?;
                Ok((fill.amount_in, fill.amount_out))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxPlan {
    pub drain: u64,
    pub legs: Vec<SwapLeg>,
    /// Frontrun: proceeds. Sandwich: profit. Backrun: target size in C_r.
    pub expected: FixedAmount,
}

impl TxPlan {
    pub fn is_empty(&self) -> bool {
        self.legs.is_empty()
    }

    fn empty(drain: u64) -> Self {
        TxPlan { drain, legs: Vec::new(), expected: FixedAmount::ZERO }
    }
}

fn check_window(pending: &DrainEvent, now: BlockTime) -> Result<(), DetectionError> {
    if !pending.is_pending(now) {
        return Err(DetectionError::TooLate { now: now.height, executes_at: pending.executes_at.height });
    }
    Ok(())
}

/// Sells `holdings` of the pool's x token ahead of a pending drain.
pub fn plan_frontrun(
    pending: &DrainEvent,
    pool: &PoolState,
    account: AccountId,
    holdings: FixedAmount,
    params: &DetectorParams,
    now: BlockTime,
) -> Result<TxPlan, DetectionError> {
    check_window(pending, now)?;
    if !holdings.is_positive() {
        return Ok(TxPlan::empty(pending.id));
    }
    let quoted = match pool.quote(pool.token_x, holdings) {
        Ok(q) => q,
        Err(MarketError::Dust | MarketError::Illiquid | MarketError::Closed) => return Ok(TxPlan::empty(pending.id)),
        Err(e) => return Err(e.into()),
    };
    let leg = SwapLeg {
        kind: PlanKind::Frontrun,
        account,
        pool: pool.id,
        priority: params.protocol_priority(),
        amount: LegAmount::ExactIn { token: pool.token_x, amount: holdings },
        quoted,
    };
    Ok(TxPlan { drain: pending.id, legs: vec![leg], expected: quoted })
}

/// Sells `budget` of C_r before the drain and buys the same amount back
/// after it. `None` when the simulated profit is not positive.
pub fn plan_sandwich(
    pending: &DrainEvent,
    pool: &PoolState,
    trader: AccountId,
    budget: FixedAmount,
    params: &DetectorParams,
    now: BlockTime,
) -> Result<Option<TxPlan>, DetectionError> {
    check_window(pending, now)?;
    if !budget.is_positive() || !pending.t_rug.is_positive() {
        return Ok(None);
    }
    let mut sim = pool.clone();
    let simulate = |sim: &mut PoolState| -> Result<(FixedAmount, FixedAmount), MarketError> {
        let proceeds = sim.swap(sim.token_x, budget)?;
        sim.swap(sim.token_x, pending.t_rug)?;
        let cost = sim.quote_exact_out(sim.token_x, budget)?;
        Ok((proceeds, cost))
    };
    let (proceeds, cost) = match simulate(&mut sim) {
        Ok(v) => v,
        Err(MarketError::Dust | MarketError::Illiquid | MarketError::Closed) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let profit = proceeds - cost;
    if !profit.is_positive() {
        return Ok(None);
    }
    let pre = SwapLeg {
        kind: PlanKind::SandwichPre,
        account: trader,
        pool: pool.id,
        priority: params.protocol_priority(),
        amount: LegAmount::ExactIn { token: pool.token_x, amount: budget },
        quoted: proceeds,
    };
    let post = SwapLeg {
        kind: PlanKind::SandwichPost,
        account: trader,
        pool: pool.id,
        priority: DRAIN_PRIORITY - 1,
        amount: LegAmount::ExactOut { token: pool.token_x, amount: budget },
        quoted: cost,
    };
    Ok(Some(TxPlan { drain: pending.id, legs: vec![pre, post], expected: profit }))
}

/// Buys C_r at the post-drain price with `min(cap, budget)` of numéraire.
pub fn plan_backrun(
    executed: &DrainEvent,
    outcome: &DrainOutcome,
    pool: &PoolState,
    buyer: AccountId,
    cap: FixedAmount,
    budget: FixedAmount,
) -> Result<TxPlan, DetectionError> {
    let spend = cap.min(budget);
    if !spend.is_positive() || !outcome.spot_after.is_positive() || !executed.t_rug.is_positive() {
        return Ok(TxPlan::empty(executed.id));
    }
    let size = spend.mul_div_round(FixedAmount::ONE, outcome.spot_after, Rounding::Floor).map_err(MarketError::from)?;
    let quoted = match pool.quote(pool.token_y, spend) {
        Ok(q) => q,
        Err(MarketError::Dust | MarketError::Illiquid | MarketError::Closed) => return Ok(TxPlan::empty(executed.id)),
        Err(e) => return Err(e.into()),
    };
    let leg = SwapLeg {
        kind: PlanKind::Backrun,
        account: buyer,
        pool: pool.id,
        priority: DRAIN_PRIORITY - 1,
        amount: LegAmount::ExactIn { token: pool.token_y, amount: spend },
        quoted,
    };
    Ok(TxPlan { drain: executed.id, legs: vec![leg], expected: size })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum IntentAction {
    ExitToNumeraire,
    SwapToAnticoin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum IntentStatus {
    Pending,
    Executed { height: u64, solver: AccountId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intent {
    pub id: u64,
    pub owner: AccountId,
    pub pool: PoolId,
    pub vault: Option<VaultId>,
    /// Reference price `P_r(0)` and liquidity `L_pool(0)`.
    pub p0: FixedAmount,
    pub l0: FixedAmount,
    pub theta_price: Option<FixedAmount>,
    pub theta_liquidity: Option<FixedAmount>,
    pub action: IntentAction,
    /// Highest solver fee the owner accepts.
    pub max_fee_bps: u32,
    pub status: IntentStatus,
}

impl Intent {
    /// Price or liquidity at or under its threshold.
    pub fn is_triggered(&self, price: FixedAmount, liquidity: FixedAmount) -> bool {
        let under = |x: FixedAmount, theta: Option<FixedAmount>, base: FixedAmount| {
            theta.and_then(|t| base.checked_mul(t).ok()).is_some_and(|limit| x <= limit)
        };
        self.status == IntentStatus::Pending
            && (under(price, self.theta_price, self.p0) || under(liquidity, self.theta_liquidity, self.l0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverBid {
    pub solver: AccountId,
    pub fee_bps: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentMatch {
    pub intent: u64,
    pub solver: AccountId,
    pub fee_bps: u32,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IntentBook {
    intents: Vec<Intent>,
}

impl IntentBook {
    pub fn new() -> Self {
        Self::default()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn register(
        &mut self,
        owner: AccountId,
        pool: &PoolState,
        vault: Option<VaultId>,
        p0: FixedAmount,
        theta_price: Option<FixedAmount>,
        theta_liquidity: Option<FixedAmount>,
        action: IntentAction,
        max_fee_bps: u32,
    ) -> Result<u64, DetectionError> {
        let in_range = |t: Option<FixedAmount>| t.is_none_or(|t| t.is_positive() && t < FixedAmount::ONE);
        if !in_range(theta_price) || !in_range(theta_liquidity) {
            return Err(DetectionError::Parameter("intent thresholds must lie in (0, 1)"));
        }
        if theta_price.is_none() && theta_liquidity.is_none() {
            return Err(DetectionError::Parameter("intent needs at least one threshold"));
        }
        if max_fee_bps > MAX_FEE_BPS {
            return Err(DetectionError::Parameter("solver fee must lie within 0..=10000 bps"));
        }
        if action == IntentAction::SwapToAnticoin && vault.is_none() {
            return Err(DetectionError::Parameter("swap-to-anticoin intents need a vault"));
        }
        let id = self.intents.len() as u64 + 1;
        self.intents.push(Intent {
            id,
            owner,
            pool: pool.id,
            vault,
            p0,
            l0: pool.liquidity(),
            theta_price,
            theta_liquidity,
            action,
            max_fee_bps,
            status: IntentStatus::Pending,
        });
        Ok(id)
    }

    pub fn intents(&self) -> &[Intent] {
        &self.intents
    }

    pub fn get(&self, id: u64) -> Option<&Intent> {
        self.intents.get(id.checked_sub(1)? as usize)
    }

    /// Matches every triggered intent with the cheapest acceptable bid.
    /// Lowest fee wins, ties go to the lowest solver id. Intents without an
    /// acceptable bid stay pending.
    pub fn solver_step<F>(&self, market: F, bids: &[SolverBid]) -> Vec<IntentMatch>
    where
        F: Fn(&Intent) -> Option<(FixedAmount, FixedAmount)>,
    {
        let mut out = Vec::new();
        for it in &self.intents {
            let Some((price, liquidity)) = market(it) else { continue };
            if !it.is_triggered(price, liquidity) {
                continue;
            }
            let best = bids
                .iter()
                .filter(|b| b.fee_bps <= it.max_fee_bps)
                .min_by(|a, b| a.fee_bps.cmp(&b.fee_bps).then(a.solver.cmp(&b.solver)));
            if let Some(b) = best {
                out.push(IntentMatch { intent: it.id, solver: b.solver, fee_bps: b.fee_bps });
            }
        }
        out
    }

    /// Marks an intent consumed. Returns false if it already was.
    pub fn consume(&mut self, id: u64, height: u64, solver: AccountId) -> bool {
        let Some(it) = id.checked_sub(1).and_then(|i| self.intents.get_mut(i as usize)) else { return false };
        if it.status != IntentStatus::Pending {
            return false;
        }
        it.status = IntentStatus::Executed { height, solver };
        true
    }
}

/// Solver fee on `proceeds`, rounded down.
pub fn solver_fee(proceeds: FixedAmount, fee_bps: u32) -> FixedAmount {
    proceeds.mul_bps(fee_bps, Rounding::Floor)
}

#[derive(Debug)]
struct Queued<T> {
    priority: u32,
    seq: u64,
    item: T,
}

impl<T> PartialEq for Queued<T> {
    fn eq(&self, other: &Self) -> bool {
        self.priority == other.priority && self.seq == other.seq
    }
}

impl<T> Eq for Queued<T> {}

impl<T> PartialOrd for Queued<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for Queued<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority.cmp(&other.priority).then(other.seq.cmp(&self.seq))
    }
}

/// Block-local transaction queue popping by priority, then submission order.
#[derive(Debug)]
pub struct TxQueue<T> {
    heap: BinaryHeap<Queued<T>>,
    next_seq: u64,
}

impl<T> Default for TxQueue<T> {
    fn default() -> Self {
        TxQueue { heap: BinaryHeap::new(), next_seq: 0 }
    }
}

impl<T> TxQueue<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, priority: u32, item: T) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Queued { priority, seq, item });
        seq
    }

    pub fn pop(&mut self) -> Option<(u32, u64, T)> {
        self.heap.pop().map(|q| (q.priority, q.seq, q.item))
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::ChainId;

    fn fa(s: &str) -> FixedAmount {
        FixedAmount::parse(s).unwrap()
    }

    fn at(h: u64) -> BlockTime {
        BlockTime::new(ChainId(0), h)
    }

    fn params() -> DetectorParams {
        DetectorParams {
            drop_threshold: fa("0.2"),
            mint_spike_factor: fa("3"),
            wallet_outflow_fraction: fa("0.5"),
            volume_spike_factor: fa("4"),
            window: 4,
            priority_escalation: 1,
            sandwich_treasury_share: FixedAmount::ONE,
        }
    }

    fn pool(x: &str, y: &str) -> PoolState {
        PoolState::new(PoolId(1), AccountId::solo(50), TokenId(1), TokenId(2), fa(x), fa(y), 0, AccountId::solo(51))
            .unwrap()
    }

    fn drain(t_rug: &str, executes: u64) -> DrainEvent {
        DrainEvent::new(1, PoolId(1), AccountId::solo(9), fa(t_rug), fa("10000"), at(0), at(executes)).unwrap()
    }

    #[test]
    fn observe_examples() {
        let mut m = PoolMonitor::new(PoolId(1), params()).unwrap();
        assert_eq!(m.observe(at(1), fa("1000")).unwrap(), None);
        assert_eq!(m.observe(at(2), fa("1000")).unwrap(), None);
        let s = m.observe(at(3), fa("400")).unwrap().unwrap();
        assert_eq!((s.kind, s.magnitude), (RiskKind::LiquidityDrop, fa("0.6")));
        let mut m = PoolMonitor::new(PoolId(1), params()).unwrap();
        m.observe(at(1), fa("1000")).unwrap();
        assert_eq!(m.observe(at(2), fa("950")).unwrap(), None);
        assert!(matches!(m.observe(at(2), fa("950")), Err(DetectionError::Ordering { last: 2, got: 2 })));
    }

    #[test]
    fn aux_examples() {
        let mut m = PoolMonitor::new(PoolId(1), params()).unwrap();
        assert!(m.scan_aux(at(1), AuxActivity::default()).is_empty());
        let base = AuxActivity { minted: fa("10"), volume: fa("100"), ..Default::default() };
        for h in 2..5 {
            assert!(m.scan_aux(at(h), base).is_empty());
        }
        let spike = AuxActivity { minted: fa("100"), ..base };
        let s = m.scan_aux(at(5), spike);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].kind, RiskKind::MintSpike);
        let mut m = PoolMonitor::new(PoolId(1), params()).unwrap();
        for h in 1..4 {
            m.scan_aux(at(h), AuxActivity { volume: fa("100"), ..Default::default() });
        }
        let s = m.scan_aux(at(4), AuxActivity { volume: fa("500"), ..Default::default() });
        assert_eq!((s[0].kind, s[0].magnitude), (RiskKind::VolumeAnomaly, fa("5")));
        let s = m.scan_aux(
            at(5),
            AuxActivity { creator_outflow: fa("60"), creator_balance: fa("100"), ..Default::default() },
        );
        assert_eq!(s[0].kind, RiskKind::WalletOutflow);
    }

    #[test]
    fn frontrun_examples() {
        let p = pool("1000", "1000");
        let plan = plan_frontrun(&drain("500", 3), &p, AccountId::solo(2), fa("100"), &params(), at(1)).unwrap();
        assert_eq!(plan.expected, fa("90.909090909"));
        assert!(plan.legs[0].priority > DRAIN_PRIORITY);
        assert!(plan_frontrun(&drain("500", 3), &p, AccountId::solo(2), FixedAmount::ZERO, &params(), at(1))
            .unwrap()
            .is_empty());
        assert!(matches!(
            plan_frontrun(&drain("500", 3), &p, AccountId::solo(2), fa("100"), &params(), at(3)),
            Err(DetectionError::TooLate { .. })
        ));
    }

    #[test]
    fn sandwich_profit_matches_replay() {
        let p = pool("1000", "1000");
        let ev = drain("2000", 3);
        let plan = plan_sandwich(&ev, &p, AccountId::solo(2), fa("100"), &params(), at(1)).unwrap().unwrap();
        assert!(plan.expected.is_positive());
        let mut live = p.clone();
        let got = live.swap(TokenId(1), fa("100")).unwrap();
        live.swap(TokenId(1), fa("2000")).unwrap();
        let paid = live.swap_exact_out(TokenId(1), fa("100")).unwrap();
        assert_eq!(got - paid, plan.expected);
        assert_eq!(plan_sandwich(&drain("0", 3), &p, AccountId::solo(2), fa("100"), &params(), at(1)).unwrap(), None);
        assert_eq!(plan_sandwich(&ev, &p, AccountId::solo(2), FixedAmount::ZERO, &params(), at(1)).unwrap(), None);
    }

    #[test]
    fn backrun_sizes_by_post_price() {
        let p = pool("1000", "1000");
        let ev = drain("414.213562373", 0);
        let (out, after) = crate::market::execute_drain(&ev, &p, fa("10000"), at(0)).unwrap();
        let plan = plan_backrun(&ev, &out, &after, AccountId::solo(3), fa("10"), fa("50")).unwrap();
        assert_eq!(plan.expected, fa("10").mul_div_round(FixedAmount::ONE, out.spot_after, Rounding::Floor).unwrap());
        assert!((out.spot_after - fa("0.5")).abs() < fa("0.000001"));
        let none = DrainEvent::new(2, PoolId(1), AccountId::solo(9), FixedAmount::ZERO, fa("1"), at(0), at(0)).unwrap();
        assert!(plan_backrun(&none, &out, &p, AccountId::solo(3), fa("10"), fa("50")).unwrap().is_empty());
    }

    #[test]
    fn intents_trigger_on_either_threshold_and_pick_cheapest_solver() {
        let p = pool("1000", "1000");
        let mut book = IntentBook::new();
        let id = book
            .register(AccountId::solo(1), &p, None, fa("1"), Some(fa("0.5")), None, IntentAction::ExitToNumeraire, 100)
            .unwrap();
        assert!(book
            .register(AccountId::solo(1), &p, None, fa("1"), Some(fa("1")), None, IntentAction::ExitToNumeraire, 0)
            .is_err());
        let bids = [
            SolverBid { solver: AccountId::solo(7), fee_bps: 30 },
            SolverBid { solver: AccountId::solo(6), fee_bps: 30 },
            SolverBid { solver: AccountId::solo(5), fee_bps: 200 },
        ];
        assert!(book.solver_step(|_| Some((fa("0.6"), fa("1000"))), &bids).is_empty());
        let m = book.solver_step(|_| Some((fa("0.4"), fa("1000"))), &bids);
        assert_eq!(m, vec![IntentMatch { intent: id, solver: AccountId::solo(6), fee_bps: 30 }]);
        assert!(book.consume(id, 3, AccountId::solo(6)));
        assert!(!book.consume(id, 4, AccountId::solo(6)));
        assert!(book.solver_step(|_| Some((fa("0.1"), fa("1"))), &bids).is_empty());
        let liq = Intent {
            theta_price: None,
            theta_liquidity: Some(fa("0.3")),
            status: IntentStatus::Pending,
            ..book.get(id).unwrap().clone()
        };
        assert!(liq.is_triggered(fa("1"), fa("300")) && !liq.is_triggered(fa("1"), fa("301")));
    }

    #[test]
    fn queue_orders_by_priority_then_sequence() {
        let mut q = TxQueue::new();
        q.push(50, "a");
        q.push(100, "drain");
        q.push(101, "front");
        q.push(50, "b");
        q.push(99, "back");
        let order: Vec<_> = std::iter::from_fn(|| q.pop().map(|(_, _, x)| x)).collect();
        assert_eq!(order, ["front", "drain", "back", "a", "b"]);
    }
}
