//! Parameter sweeps: one independent run per value of a numeric scenario key.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use super::scenario::{load_scenario, LoadError};
use super::trace::{format_hash, EventBody, Trace, TraceEvent};
use super::Engine;
use crate::fixed::FixedAmount;

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepSpec {
    pub key: String,
    pub values: Vec<FixedAmount>,
}

/// Parses `KEY=A:B:STEP`; the range includes `B` when a step lands on it.
pub fn parse_param(param: &str) -> Result<SweepSpec, SweepError> {
    let usage = |m: &str| SweepError::Usage(format!("{m} in {param:?}, expected KEY=A:B:STEP"));
    let (key, range) = param.split_once('=').ok_or_else(|| usage("missing '='"))?;
    let parts: Vec<&str> = range.split(':').collect();
    if key.is_empty() || parts.len() != 3 {
        return Err(usage("malformed range"));
    }
    let num = |s: &str| FixedAmount::parse(s.trim()).map_err(|_| usage("non-numeric bound"));
    let (a, b, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
    if !step.is_positive() || a > b {
        return Err(usage("empty range"));
    }
    let mut values = Vec::new();
    let mut v = a;
    while v <= b {
        values.push(v);
        v += step;
    }
    Ok(SweepSpec { key: key.to_string(), values })
}

enum Seg<'a> {
    Key(&'a str),
    Index(usize),
}

fn segments(key: &str) -> Option<Vec<Seg<'_>>> {
    let mut out = Vec::new();
    for part in key.split('.') {
        let mut pieces = part.split('[');
        let name = pieces.next()?;
        if !name.is_empty() {
            out.push(Seg::Key(name));
        }
        for idx in pieces {
            out.push(Seg::Index(idx.strip_suffix(']')?.parse().ok()?));
        }
    }
    Some(out)
}

/// Replaces the numeric field at `key` (dotted, with `[i]` indices).
pub fn set_numeric(doc: &mut Value, key: &str, value: FixedAmount) -> Result<(), SweepError> {
    let mut cur = doc;
    let segs = segments(key).ok_or_else(|| SweepError::Usage(format!("malformed key {key:?}")))?;
    for seg in segs {
        cur = match seg {
            Seg::Key(name) => cur.get_mut(name),
            Seg::Index(i) => cur.get_mut(i),
        }
        .ok_or_else(|| SweepError::Usage(format!("key {key:?} does not exist")))?;
    }
    let numeric = match cur {
        Value::Number(_) => true,
        Value::String(s) => FixedAmount::parse(s).is_ok(),
        _ => false,
    };
    if !numeric {
        return Err(SweepError::Usage(format!("key {key:?} is not numeric")));
    }
    *cur = match cur {
        Value::Number(_) => serde_json::from_str(&value.to_string()).map_err(|e| SweepError::Usage(e.to_string()))?,
        _ => Value::String(value.to_string()),
    };
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub value: FixedAmount,
    pub trace_hash: String,
    pub failed_events: u64,
    pub withdrawals: u64,
    pub total_penalty: FixedAmount,
    pub final_supply: FixedAmount,
}

fn summarize(index: usize, value: FixedAmount, trace: &Trace) -> SweepRow {
    let mut withdrawals = 0;
    let mut total_penalty = FixedAmount::ZERO;
    for line in &trace.events {
        if !line.contains("\"type\":\"withdraw\"") {
            continue;
        }
        if let Ok(TraceEvent { event: EventBody::Withdraw { outcome, .. }, .. }) = serde_json::from_str(line) {
            withdrawals += 1;
            total_penalty += outcome.penalty;
        }
    }
    let final_supply = trace.telemetry.last().map(|r| r.current_supply).unwrap_or_default();
    SweepRow {
        index,
        value,
        trace_hash: format_hash(trace.trace_hash),
        failed_events: trace.failed_events,
        withdrawals,
        total_penalty,
        final_supply,
    }
}

/// Runs every value in parallel, writing `run_<i>/` trees and `summary.csv` under `out`.
pub fn run_sweep(
    document: &str,
    spec: &SweepSpec,
    out: &Path,
    blocks: Option<u64>,
) -> Result<Vec<SweepRow>, SweepError> {
    let base: Value = serde_json::from_str(document)
        .map_err(|e| LoadError::Schema { path: String::new(), message: e.to_string() })?;
    let mut probe = base.clone();
    if let Some(v) = spec.values.first() {
        set_numeric(&mut probe, &spec.key, *v)?;
    }
    let rows: Result<Vec<SweepRow>, SweepError> = spec
        .values
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let mut doc = base.clone();
            set_numeric(&mut doc, &spec.key, *v)?;
            let scenario = load_scenario(&doc.to_string())?;
            let trace = Engine::new(scenario)?.run(blocks);
            trace.write(&out.join(format!("run_{i}"))).map_err(|e| SweepError::Io(e.to_string()))?;
            Ok(summarize(i, *v, &trace))
        })
        .collect();
    let rows = rows?;
    std::fs::create_dir_all(out).map_err(|e| SweepError::Io(e.to_string()))?;
    let mut w = csv::Writer::from_path(out.join("summary.csv")).map_err(|e| SweepError::Io(e.to_string()))?;
    for r in &rows {
        w.serialize(r).map_err(|e| SweepError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| SweepError::Io(e.to_string()))?;
    Ok(rows)
}
