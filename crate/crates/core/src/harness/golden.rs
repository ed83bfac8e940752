//! Pinned reference results. A golden file holds the terminal agent values of
//! a scenario, the margins of protected users over the unprotected baseline,
//! and the trace hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::scenario::{load_scenario_file, Action, AgentKind, LoadError, Scenario};
use super::trace::format_hash;
use super::Engine;
use crate::fixed::FixedAmount;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Golden {
    pub scenario: String,
    pub seed: u64,
    pub trace_hash: String,
    pub baseline: Option<String>,
    pub values: BTreeMap<String, FixedAmount>,
    pub margins: BTreeMap<String, FixedAmount>,
}

/// `scenarios/x.json` maps to `scenarios/golden/x.json`.
pub fn default_path(scenario: &Path) -> PathBuf {
    let dir = scenario.parent().unwrap_or(Path::new("."));
    dir.join("golden").join(scenario.file_name().unwrap_or_default())
}

fn is_protected(a: &super::scenario::AgentSpec) -> bool {
    !a.protect.is_empty() || a.script.iter().any(|s| matches!(s.action, Action::Intent { .. }))
}

/// Retail agents with neither protection, intents, scripts nor a policy.
pub fn baseline_agent(scenario: &Scenario) -> Option<&str> {
    scenario
        .agents
        .iter()
        .find(|a| a.kind == AgentKind::Retail && a.policy.is_none() && a.script.is_empty() && a.protect.is_empty())
        .map(|a| a.name.as_str())
}

pub fn compute(scenario: Scenario) -> Result<Golden, LoadError> {
    let baseline = baseline_agent(&scenario).map(str::to_string);
    let protected: Vec<String> = scenario
        .agents
        .iter()
        .filter(|a| a.kind == AgentKind::Retail && is_protected(a))
        .map(|a| a.name.clone())
        .collect();
    let (name, seed) = (scenario.name.clone(), scenario.seed);
    let mut engine = Engine::new(scenario)?;
    while !engine.is_finished() {
        engine.step();
    }
    let values: BTreeMap<String, FixedAmount> = engine.agent_values().into_iter().map(|v| (v.agent, v.value)).collect();
    let trace = engine.finish();
    let mut margins = BTreeMap::new();
    if let Some(b) = &baseline {
        for p in protected {
            margins.insert(p.clone(), values[&p] - values[b]);
        }
    }
    Ok(Golden { scenario: name, seed, trace_hash: format_hash(trace.trace_hash), baseline, values, margins })
}

pub fn load(path: &Path) -> Result<Golden, LoadError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LoadError::Io { path: path.display().to_string(), message: e.to_string() })?;
    serde_json::from_str(&text)
        .map_err(|e| LoadError::Schema { path: path.display().to_string(), message: e.to_string() })
}

pub fn regenerate(scenario: &Path, golden: &Path) -> Result<Golden, LoadError> {
    let g = compute(load_scenario_file(scenario)?)?;
    let io = |e: std::io::Error| LoadError::Io { path: golden.display().to_string(), message: e.to_string() };
    if let Some(dir) = golden.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let text = serde_json::to_string_pretty(&g).expect("golden serializes");
    std::fs::write(golden, text + "\n").map_err(io)?;
    Ok(g)
}
