//! Event payloads carried between chains and the relayed message format.
//!
//! Every bridge event payload is the canonical encoding of an [`Envelope`].
//! The topic string of the event always equals [`Payload::topic`].

use serde::{Deserialize, Serialize};

use crate::hash::{hash_parts, Address, Digest};
use crate::ledger::{Block, EventLog, Receipt};
use crate::merkle::ReceiptProof;
use crate::vm::program::SlotKey;
use crate::vm::state::{LockError, LockRequest, UpdateOutcome};

pub const CLONE_REQ: &str = "CLONE_REQ";
pub const VERIFY_OUT: &str = "VERIFY_OUT";
pub const VERIFY_RESULT: &str = "VERIFY_RESULT";
pub const LOCK_REQ: &str = "LOCK_REQ";
pub const LOCK_RESULT: &str = "LOCK_RESULT";
pub const UPDATE_REQ: &str = "UPDATE_REQ";
pub const UPDATE_ACK: &str = "UPDATE_ACK";
pub const SEG_CALL: &str = "SEG_CALL";
pub const SEG_RESULT: &str = "SEG_RESULT";
pub const SEG_FINAL: &str = "SEG_FINAL";
pub const SEG_ACK: &str = "SEG_ACK";
/// Local notifications, never relayed.
pub const REGISTERED: &str = "REGISTERED";
pub const JOB_DONE: &str = "JOB_DONE";
pub const INV_DONE: &str = "INV_DONE";

/// Topics relayers carry to another chain.
pub const RELAYED: [&str; 10] = [
    VERIFY_OUT,
    VERIFY_RESULT,
    LOCK_REQ,
    LOCK_RESULT,
    UPDATE_REQ,
    UPDATE_ACK,
    SEG_CALL,
    SEG_RESULT,
    SEG_FINAL,
    SEG_ACK,
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloneTarget {
    pub service: String,
    pub logic_addr: Address,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartFailure {
    Lock(LockError),
    /// The invocation was already aborted here.
    Cancelled,
    UnknownContract(Address),
    Exec(String),
}

impl PartFailure {
    pub fn holder(&self) -> Option<Digest> {
        match self {
            PartFailure::Lock(LockError::AlreadyLocked { holder, .. }) => Some(*holder),
            _ => None,
        }
    }
}

pub type Snapshot = Vec<(Address, Vec<(SlotKey, u64)>)>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Committed,
    Aborted(AbortReason),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AbortReason {
    LockConflict { holder: Option<Digest> },
    ExecFailure(String),
    Timeout,
}

impl AbortReason {
    pub fn label(&self) -> &'static str {
        match self {
            AbortReason::LockConflict { .. } => "lock_conflict",
            AbortReason::ExecFailure(_) => "exec_failure",
            AbortReason::Timeout => "timeout",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Payload {
    CloneReq { job: String, invoked_chain: u32, targets: Vec<CloneTarget> },
    VerifyOut { job: String, service: String, origin_addr: Address, clone_addr: Address, hash: Digest },
    VerifyResult { job: String, service: String, clone_addr: Address, ok: bool },
    LockReq { inv: Digest, part: u32, expiry_blocks: u64, contracts: Vec<(Address, Vec<LockRequest>)> },
    LockResult { inv: Digest, part: u32, result: Result<Snapshot, PartFailure> },
    UpdateReq { inv: Digest, part: u32, contracts: Vec<(Address, UpdateOutcome)> },
    UpdateAck { inv: Digest, part: u32, ok: bool },
    SegCall { run: Digest, seg: u32, state: Address, args: Vec<u64>, expiry_blocks: u64 },
    SegResult { run: Digest, seg: u32, result: Result<Vec<u64>, PartFailure> },
    SegFinal { run: Digest, commit: bool },
    SegAck { run: Digest },
    Registered { job: String, service: String, logic_addr: Address, relayer: Address },
    JobDone { job: String, verified: bool },
    InvDone { inv: Digest, outcome: Outcome },
}

impl Payload {
    pub fn topic(&self) -> &'static str {
        match self {
            Payload::CloneReq { .. } => CLONE_REQ,
            Payload::VerifyOut { .. } => VERIFY_OUT,
            Payload::VerifyResult { .. } => VERIFY_RESULT,
            Payload::LockReq { .. } => LOCK_REQ,
            Payload::LockResult { .. } => LOCK_RESULT,
            Payload::UpdateReq { .. } => UPDATE_REQ,
            Payload::UpdateAck { .. } => UPDATE_ACK,
            Payload::SegCall { .. } => SEG_CALL,
            Payload::SegResult { .. } => SEG_RESULT,
            Payload::SegFinal { .. } => SEG_FINAL,
            Payload::SegAck { .. } => SEG_ACK,
            Payload::Registered { .. } => REGISTERED,
            Payload::JobDone { .. } => JOB_DONE,
            Payload::InvDone { .. } => INV_DONE,
        }
    }

    /// Invocation or baseline run the message belongs to.
    pub fn invocation(&self) -> Option<Digest> {
        match self {
            Payload::LockReq { inv, .. }
            | Payload::LockResult { inv, .. }
            | Payload::UpdateReq { inv, .. }
            | Payload::UpdateAck { inv, .. }
            | Payload::InvDone { inv, .. } => Some(*inv),
            Payload::SegCall { run, .. }
            | Payload::SegResult { run, .. }
            | Payload::SegFinal { run, .. }
            | Payload::SegAck { run } => Some(*run),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    pub dest_chain: u32,
    pub payload: Payload,
}

impl Envelope {
    pub fn decode(log: &EventLog) -> Option<Envelope> {
        let env: Envelope = crate::hash::decode(&log.payload)?;
        (env.payload.topic() == log.topic).then_some(env)
    }
}

/// A relayed event with everything needed to authenticate it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossChainMessage {
    pub source_chain: u32,
    pub header: Block,
    pub receipt: Receipt,
    pub proof: ReceiptProof,
    pub event_index: u32,
    pub relayer: Address,
}

impl CrossChainMessage {
    pub fn message_id(&self) -> Digest {
        message_id(self.source_chain, &self.receipt.tx_hash, self.event_index)
    }

    pub fn event(&self) -> Option<&EventLog> {
        self.receipt.logs.get(self.event_index as usize)
    }
}

pub fn message_id(source_chain: u32, tx_hash: &Digest, event_index: u32) -> Digest {
    hash_parts(&[b"msg", &source_chain.to_le_bytes(), &tx_hash.0, &event_index.to_le_bytes()])
}
