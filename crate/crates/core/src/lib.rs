//! Simulated multi-chain runtime for cross-chain dApps.

pub mod baseline;
pub mod bridge;
pub mod calltree;
pub mod compare;
pub mod deploy;
pub mod hash;
pub mod invocation;
pub mod ledger;
pub mod merkle;
pub mod metrics;
pub mod oracle;
pub mod relayer;
pub mod runner;
pub mod runtime;
pub mod samples;
pub mod scenario;
pub mod vm;
pub mod wire;
pub mod world;
