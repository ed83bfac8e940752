//! Trace records and the four output files.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detection::{IntentMatch, RiskSignal, SwapLeg, TxPlan};
use crate::fixed::FixedAmount;
use crate::insurance::InsuranceResolution;
use crate::ledger::LedgerOp;
use crate::market::{DrainEvent, DrainOutcome, PegTrade, SwapFill};
use crate::perps::{CloseOutcome, FundingReport, LiquidationEvent};
use crate::rng::Fnv1a;
use crate::rugproof::Resolution;
use crate::vault::{RewardEvent, WithdrawOutcome};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const TELEMETRY_FILE: &str = "telemetry.csv";
pub const STATE_FILE: &str = "state.json";
pub const HASH_FILE: &str = "hash.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub chain: u32,
    pub height: u64,
    pub event: EventBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventBody {
    Ledger(LedgerOp),
    Swap {
        agent: String,
        pool: u32,
        fill: SwapFill,
    },
    Liquidity {
        agent: String,
        pool: u32,
        amount_x: FixedAmount,
        amount_y: FixedAmount,
        added: bool,
    },
    DrainSubmitted {
        drain: DrainEvent,
    },
    DrainExecuted {
        drain: u64,
        outcome: DrainOutcome,
    },
    Signal {
        pool: u32,
        signal: RiskSignal,
    },
    Plan {
        agent: String,
        kind: String,
        plan: TxPlan,
    },
    LegExecuted {
        agent: String,
        drain: u64,
        leg: SwapLeg,
        paid: FixedAmount,
        received: FixedAmount,
    },
    SandwichSettled {
        agent: String,
        drain: u64,
        profit: FixedAmount,
        to_treasury: FixedAmount,
        to_holders: FixedAmount,
    },
    IntentRegistered {
        agent: String,
        intent: u64,
    },
    IntentExecuted {
        agent: String,
        matched: IntentMatch,
        sold: FixedAmount,
        proceeds: FixedAmount,
        fee: FixedAmount,
    },
    PegTrade {
        agent: String,
        pool: u32,
        trade: PegTrade,
    },
    Deposit {
        agent: String,
        vault: u32,
        amount: FixedAmount,
        reward: FixedAmount,
    },
    Burn {
        agent: String,
        vault: u32,
        amount: FixedAmount,
        reward: FixedAmount,
    },
    Withdraw {
        agent: String,
        vault: u32,
        amount: FixedAmount,
        outcome: WithdrawOutcome,
    },
    PositionOpened {
        agent: String,
        position: u64,
    },
    PositionClosed {
        agent: String,
        position: u64,
        outcome: CloseOutcome,
    },
    Funding {
        report: FundingReport,
    },
    Liquidation {
        event: LiquidationEvent,
    },
    Dispute {
        agent: String,
        action: String,
        id: u64,
    },
    RugResolution {
        resolution: Resolution,
    },
    InsuranceResolution {
        resolution: InsuranceResolution,
    },
    PolicyExpired {
        policy: u64,
    },
    RewardQueued {
        reward: RewardEvent,
    },
    RewardDelivered {
        source_chain: u32,
        source_height: u64,
        reward: RewardEvent,
    },
    Emission {
        amount: FixedAmount,
    },
    ControllerBurn {
        amount: FixedAmount,
        target: FixedAmount,
        sum_vaulted_value: FixedAmount,
    },
    Failed {
        agent: Option<String>,
        action: String,
        error: String,
    },
}

/// One CSV row per chain per block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub height: u64,
    pub chain: u32,
    pub emission: FixedAmount,
    pub burned: FixedAmount,
    pub current_supply: FixedAmount,
    pub target_supply: FixedAmount,
    pub reward_mint: FixedAmount,
    pub failed_events: u64,
}

/// Canonical event lines plus a running hash of their bytes.
#[derive(Debug, Default)]
pub struct EventLog {
    lines: Vec<String>,
    hasher: Fnv1a,
    seq: u64,
}

impl EventLog {
    pub fn push(&mut self, chain: u32, height: u64, event: EventBody) {
        let ev = TraceEvent { seq: self.seq, chain, height, event };
        let line = serde_json::to_string(&ev).expect("trace events serialize");
        self.hasher.update(line.as_bytes());
        self.hasher.update(b"\n");
        self.lines.push(line);
        self.seq += 1;
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn hash(&self) -> u64 {
        self.hasher.finish()
    }
}

#[derive(Debug)]
pub struct Trace {
    pub events: Vec<String>,
    pub telemetry: Vec<TelemetryRow>,
    pub state: serde_json::Value,
    pub trace_hash: u64,
    pub failed_events: u64,
}

pub fn format_hash(hash: u64) -> String {
    format!("{hash:016x}")
}

impl Trace {
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut events = String::with_capacity(self.events.iter().map(|l| l.len() + 1).sum());
        for l in &self.events {
            events.push_str(l);
            events.push('\n');
        }
        fs::write(dir.join(EVENTS_FILE), events)?;
        let mut w = csv::Writer::from_path(dir.join(TELEMETRY_FILE))?;
        for row in &self.telemetry {
            w.serialize(row)?;
        }
        w.flush()?;
        let state = serde_json::to_string_pretty(&self.state).map_err(io::Error::other)?;
        fs::write(dir.join(STATE_FILE), state + "\n")?;
        fs::write(dir.join(HASH_FILE), format_hash(self.trace_hash) + "\n")?;
        Ok(())
    }
}
