//! Deterministic anticoin protocol economics engine and discrete-block
//! market simulator.

pub mod detection;
pub mod dispute;
pub mod figures;
pub mod fixed;
pub mod harness;
pub mod ids;
pub mod insurance;
pub mod ledger;
pub mod market;
pub mod perps;
pub mod rng;
pub mod rugproof;
mod serde_pairs;
pub mod tokenomics;
pub mod vault;

pub use fixed::{FixedAmount, FixedError};
