use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::hash::{encode, Address, Digest};
use crate::merkle::{self, ReceiptProof};
use crate::runtime::{begin_block, execute_tx, ChainState, ExecEnv, SYSTEM};

use super::types::{Block, ChainConfig, Receipt, Transaction, TxStatus};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum SubmitError {
    #[error("bad nonce: expected {expected}, got {got}")]
    BadNonce { expected: u64, got: u64 },
    #[error("insufficient balance: have {balance}, fee {fee}")]
    InsufficientBalance { balance: u64, fee: u64 },
    #[error("gas limit must be positive")]
    ZeroGas,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum LedgerError {
    #[error("height {0} not produced yet")]
    UnknownHeight(u64),
    #[error("transaction not found")]
    NotFound,
}

/// Where a transaction landed and what happened to it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TxMeta {
    pub height: u64,
    pub index: usize,
    pub sender: Address,
    pub gas_used: u64,
    pub status: TxStatus,
    /// Invocation, baseline run or deployment job the transaction served.
    pub tag: Option<Digest>,
    pub error: Option<String>,
    /// Short name of the call, see [`crate::runtime::op_label`].
    pub op: String,
}

#[derive(Clone, Debug)]
pub struct Chain {
    pub config: ChainConfig,
    pub state: ChainState,
    blocks: Vec<Block>,
    receipts: Vec<Vec<Receipt>>,
    txs: BTreeMap<Digest, TxMeta>,
    mempool: VecDeque<Transaction>,
    pending_nonce: BTreeMap<Address, u64>,
}

impl Chain {
    pub fn new(config: ChainConfig, state: ChainState) -> Self {
        let genesis = Block {
            height: 0,
            parent_hash: Digest::ZERO,
            timestamp: 0,
            tx_hashes: Vec::new(),
            receipts_root: merkle::empty_root(),
            gas_used: 0,
        };
        Chain {
            config,
            state,
            blocks: vec![genesis],
            receipts: vec![Vec::new()],
            txs: BTreeMap::new(),
            mempool: VecDeque::new(),
            pending_nonce: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> u32 {
        self.config.chain_id
    }

    pub fn head(&self) -> &Block {
        self.blocks.last().expect("genesis always present")
    }

    pub fn height(&self) -> u64 {
        self.head().height
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        self.blocks.get(height as usize)
    }

    pub fn receipts(&self, height: u64) -> Option<&[Receipt]> {
        self.receipts.get(height as usize).map(Vec::as_slice)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn tx_meta(&self, hash: &Digest) -> Option<&TxMeta> {
        self.txs.get(hash)
    }

    pub fn tx_metas(&self) -> impl Iterator<Item = (&Digest, &TxMeta)> {
        self.txs.iter()
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    /// Next nonce the chain will accept from `sender`, counting queued transactions.
    pub fn next_nonce(&self, sender: &Address) -> u64 {
        self.pending_nonce.get(sender).copied().unwrap_or_else(|| self.state.account(sender).nonce)
    }

    pub fn submit_tx(&mut self, tx: Transaction) -> Result<Digest, SubmitError> {
        if tx.gas_limit == 0 {
            return Err(SubmitError::ZeroGas);
        }
        let expected = self.next_nonce(&tx.sender);
        if tx.nonce != expected {
            return Err(SubmitError::BadNonce { expected, got: tx.nonce });
        }
        let balance = self.state.account(&tx.sender).balance;
        if balance < tx.fee {
            return Err(SubmitError::InsufficientBalance { balance, fee: tx.fee });
        }
        let hash = tx.hash();
        self.pending_nonce.insert(tx.sender, expected + 1);
        self.mempool.push_back(tx);
        Ok(hash)
    }

    /// Executes queued system work, then up to `max_txs_per_block` mempool
    /// transactions in FIFO order, and appends the block.
    pub fn produce_block(&mut self, timestamp: u64, env: &ExecEnv) -> &Block {
        let height = self.height() + 1;
        let env = ExecEnv { chain_id: self.id(), height, timestamp, ..*env };
        let system: Vec<Transaction> = begin_block(&self.state, &env)
            .into_iter()
            .enumerate()
            .map(|(i, call)| Transaction {
                sender: SYSTEM,
                nonce: (height << 16) | i as u64,
                target: self.state.bridge.address,
                calldata: encode(&call),
                gas_limit: u64::MAX / 4,
                fee: 0,
            })
            .collect();
        let take = self.mempool.len().min(self.config.max_txs_per_block);
        let user: Vec<Transaction> = self.mempool.drain(..take).collect();

        let mut receipts = Vec::with_capacity(system.len() + user.len());
        let mut tx_hashes = Vec::with_capacity(receipts.capacity());
        for tx in system.iter().chain(&user) {
            let hash = tx.hash();
            let out = execute_tx(&mut self.state, tx, &env);
            self.txs.insert(
                hash,
                TxMeta {
                    height,
                    index: receipts.len(),
                    sender: tx.sender,
                    gas_used: out.gas_used,
                    status: out.status,
                    tag: out.tag,
                    error: out.error,
                    op: crate::runtime::op_label(&tx.calldata),
                },
            );
            receipts.push(Receipt { tx_hash: hash, status: out.status, gas_used: out.gas_used, logs: out.logs });
            tx_hashes.push(hash);
        }
        let leaves: Vec<Vec<u8>> = receipts.iter().map(Receipt::encode).collect();
        let block = Block {
            height,
            parent_hash: self.head().hash(),
            timestamp,
            tx_hashes,
            receipts_root: merkle::build_root(&leaves),
            gas_used: receipts.iter().map(|r| r.gas_used).sum(),
        };
        self.blocks.push(block);
        self.receipts.push(receipts);
        self.head()
    }

    pub fn is_finalized(&self, height: u64) -> Result<bool, LedgerError> {
        let head = self.height();
        if height > head {
            return Err(LedgerError::UnknownHeight(height));
        }
        Ok(head - height >= self.config.confirmation_depth)
    }

    pub fn get_receipt_proof(&self, tx_hash: &Digest) -> Result<(Block, Receipt, ReceiptProof), LedgerError> {
        let meta = self.txs.get(tx_hash).ok_or(LedgerError::NotFound)?;
        let receipts = &self.receipts[meta.height as usize];
        let leaves: Vec<Vec<u8>> = receipts.iter().map(Receipt::encode).collect();
        let proof = merkle::prove(&leaves, meta.index).map_err(|_| LedgerError::NotFound)?;
        Ok((self.blocks[meta.height as usize].clone(), receipts[meta.index].clone(), proof))
    }
}
