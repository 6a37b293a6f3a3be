use serde::{Deserialize, Serialize};

use crate::hash::{hash_of, Address, Digest};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub chain_id: u32,
    #[serde(default = "default_block_time")]
    pub block_time_ms: u64,
    #[serde(default = "default_max_txs")]
    pub max_txs_per_block: usize,
    #[serde(default = "default_depth")]
    pub confirmation_depth: u64,
    /// Tolerated fraction of faulty validators. Informational only.
    #[serde(default)]
    pub fault_threshold_note: Option<String>,
}

fn default_block_time() -> u64 {
    5000
}
fn default_max_txs() -> usize {
    4096
}
fn default_depth() -> u64 {
    1
}

impl ChainConfig {
    pub fn new(chain_id: u32) -> Self {
        ChainConfig {
            chain_id,
            block_time_ms: default_block_time(),
            max_txs_per_block: default_max_txs(),
            confirmation_depth: default_depth(),
            fault_threshold_note: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.block_time_ms == 0 {
            return Err(format!("chain {}: block_time_ms must be positive", self.chain_id));
        }
        if self.max_txs_per_block == 0 {
            return Err(format!("chain {}: max_txs_per_block must be at least 1", self.chain_id));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub sender: Address,
    pub nonce: u64,
    pub target: Address,
    pub calldata: Vec<u8>,
    pub gas_limit: u64,
    /// Maximum the sender pays: `gas_limit * gas_price`.
    pub fee: u64,
}

impl Transaction {
    pub fn hash(&self) -> Digest {
        hash_of(self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub parent_hash: Digest,
    pub timestamp: u64,
    pub tx_hashes: Vec<Digest>,
    pub receipts_root: Digest,
    pub gas_used: u64,
}

impl Block {
    pub fn hash(&self) -> Digest {
        hash_of(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxStatus {
    Success,
    Revert,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventLog {
    pub emitter: Address,
    pub topic: String,
    pub payload: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub tx_hash: Digest,
    pub status: TxStatus,
    pub gas_used: u64,
    pub logs: Vec<EventLog>,
}

impl Receipt {
    pub fn encode(&self) -> Vec<u8> {
        crate::hash::encode(self)
    }
}
