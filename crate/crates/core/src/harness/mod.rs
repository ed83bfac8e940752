//! Scenario loading, the block engine and trace verification.

pub mod engine;
pub mod golden;
pub mod scenario;
pub mod sweep;
pub mod trace;
pub mod verify;

pub use engine::{AgentValue, Engine};
pub use scenario::{load_scenario, load_scenario_file, scenario_schema, LoadError, Scenario};
pub use trace::{format_hash, Trace, TraceEvent};
pub use verify::{verify_trace, VerifyError, VerifyReport};

/// Builds the engine for `scenario` and runs it to completion.
pub fn run(scenario: Scenario, n_blocks: Option<u64>) -> Result<Trace, LoadError> {
    Ok(Engine::new(scenario)?.run(n_blocks))
}
