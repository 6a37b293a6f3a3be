//! Per-chain ledgers with their mempools and finality tracking.

mod chain;
mod headers;
mod types;

pub use chain::{Chain, LedgerError, SubmitError, TxMeta};
pub use headers::{ChainView, HeaderBook};
pub use types::{Block, ChainConfig, EventLog, Receipt, Transaction, TxStatus};
