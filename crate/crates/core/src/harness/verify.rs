//! Offline checks of a written trace: hash, ledger replay, final balances
//! and the per-block supply identity.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::trace::{
    format_hash, EventBody, TelemetryRow, TraceEvent, EVENTS_FILE, HASH_FILE, STATE_FILE, TELEMETRY_FILE,
};
use crate::fixed::FixedAmount;
use crate::ids::{AccountId, TokenId};
use crate::ledger::Ledger;
use crate::rng::fnv1a64;

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("{0}")]
    Input(String),
    #[error("violation at event {seq:?}: {message}")]
    Violation { seq: Option<u64>, message: String },
}

fn violation(seq: Option<u64>, message: impl Into<String>) -> VerifyError {
    VerifyError::Violation { seq, message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub events: u64,
    pub ledger_ops: u64,
    pub trace_hash: u64,
}

#[derive(Deserialize)]
struct BalanceRow {
    token: TokenId,
    account: AccountId,
    amount: FixedAmount,
}

#[derive(Deserialize)]
struct StateHead {
    protocol_token: TokenId,
    rugsafe_chain: u32,
    balances: Vec<BalanceRow>,
}

fn read(dir: &Path, file: &str) -> Result<Vec<u8>, VerifyError> {
    let path = dir.join(file);
    fs::read(&path).map_err(|e| VerifyError::Input(format!("cannot read {}: {e}", path.display())))
}

pub fn verify_trace(dir: &Path) -> Result<VerifyReport, VerifyError> {
    let events = read(dir, EVENTS_FILE)?;
    let hash_text = read(dir, HASH_FILE)?;
    let state = read(dir, STATE_FILE)?;
    let telemetry = read(dir, TELEMETRY_FILE)?;

    let hash = fnv1a64(&events);
    let recorded = String::from_utf8_lossy(&hash_text).trim().to_string();
    if recorded != format_hash(hash) {
        return Err(violation(None, format!("hash.txt holds {recorded}, events hash to {}", format_hash(hash))));
    }
    let state: StateHead =
        serde_json::from_slice(&state).map_err(|e| violation(None, format!("state.json unreadable: {e}")))?;

    let text = std::str::from_utf8(&events).map_err(|_| violation(None, "events.jsonl is not UTF-8"))?;
    let mut ledger = Ledger::new();
    let mut count = 0u64;
    let mut ops = 0u64;
    let mut last_block: Option<(u64, u32)> = None;
    for (i, line) in text.lines().enumerate() {
        let ev: TraceEvent =
            serde_json::from_str(line).map_err(|e| violation(Some(i as u64), format!("unparseable event: {e}")))?;
        if ev.seq != i as u64 {
            return Err(violation(Some(ev.seq), format!("expected sequence number {i}")));
        }
        let block = (ev.height, ev.chain);
        if last_block.is_some_and(|b| b != block) {
            ledger.check_conservation().map_err(|(t, held, supply)| {
                violation(Some(ev.seq), format!("{t}: balances {held} against supply {supply}"))
            })?;
        }
        last_block = Some(block);
        if let EventBody::Ledger(op) = &ev.event {
            ledger.apply(op).map_err(|e| violation(Some(ev.seq), e.to_string()))?;
            ops += 1;
        }
        count += 1;
    }
    ledger.take_journal();
    ledger
        .check_conservation()
        .map_err(|(t, held, supply)| violation(None, format!("{t}: balances {held} against supply {supply}")))?;

    let replayed: BTreeMap<(TokenId, AccountId), FixedAmount> =
        ledger.balances().filter(|(_, _, v)| !v.is_zero()).map(|(t, a, v)| ((t, a), v)).collect();
    let snapshot: BTreeMap<(TokenId, AccountId), FixedAmount> =
        state.balances.iter().filter(|b| !b.amount.is_zero()).map(|b| ((b.token, b.account), b.amount)).collect();
    if replayed != snapshot {
        let key = replayed
            .iter()
            .find(|(k, v)| snapshot.get(k) != Some(v))
            .map(|(k, _)| *k)
            .or_else(|| snapshot.keys().find(|k| !replayed.contains_key(k)).copied())
            .expect("maps differ");
        return Err(violation(
            None,
            format!(
                "state.json balance of {} for {} is {:?}, replay gives {:?}",
                key.0,
                key.1,
                snapshot.get(&key),
                replayed.get(&key)
            ),
        ));
    }

    let mut reader = csv::Reader::from_reader(telemetry.as_slice());
    let mut prev: Option<FixedAmount> = None;
    for row in reader.deserialize::<TelemetryRow>() {
        let row = row.map_err(|e| violation(None, format!("telemetry.csv: {e}")))?;
        if row.chain != state.rugsafe_chain {
            continue;
        }
        if let Some(p) = prev {
            if row.current_supply - p != row.emission - row.burned {
                return Err(violation(
                    None,
                    format!(
                        "height {}: supply moved by {} but emission - burned is {}",
                        row.height,
                        row.current_supply - p,
                        row.emission - row.burned
                    ),
                ));
            }
        }
        prev = Some(row.current_supply);
    }
    if let Some(p) = prev {
        if p != ledger.supply(state.protocol_token) {
            return Err(violation(
                None,
                format!("final supply {p} differs from replayed supply {}", ledger.supply(state.protocol_token)),
            ));
        }
    }
    Ok(VerifyReport { events: count, ledger_ops: ops, trace_hash: hash })
}
