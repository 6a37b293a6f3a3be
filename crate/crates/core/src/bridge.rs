//! The bridging contract present on every chain.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{self, BaselineState};
use crate::calltree::{Analysis, DappDescriptor, ServiceInfo};
use crate::deploy::{self, DeployState};
use crate::hash::{Address, Digest};
use crate::invocation::{self, ExecState};
use crate::merkle;
use crate::runtime::{ChainState, SystemCall, TxCtx, TxError, SYSTEM};
use crate::vm::lsd::Interface;
use crate::wire::{CloneTarget, CrossChainMessage, Envelope, Payload};

pub fn bridge_address(chain_id: u32) -> Address {
    Address::contract(chain_id, &SYSTEM, 0)
}

#[derive(Clone, Debug, Error, PartialEq, Eq, Serialize, Deserialize)]
pub enum BridgeError {
    #[error("service `{0}` already registered")]
    AlreadyRegistered(String),
    #[error("no contract at {0}")]
    NotFound(Address),
    #[error("header is not canonical on chain {0}")]
    UnknownHeader(u32),
    #[error("header not finalized yet")]
    NotFinalized,
    #[error("receipt proof does not verify")]
    BadProof,
    #[error("event not emitted by the source bridge")]
    BadEmitter,
    #[error("message addressed to chain {0}")]
    WrongDestination(u32),
    #[error("undecodable or non-relayable payload")]
    Malformed,
    #[error("caller not authorized")]
    Unauthorized,
    #[error("no pending clone request for `{0}`")]
    NoPendingRequest(String),
    #[error("relayer barred from cloning `{0}`")]
    Blacklisted(String),
    #[error("unknown service `{0}`")]
    UnknownService(String),
    #[error("unknown dApp `{0}`")]
    UnknownDapp(String),
    #[error("logic for `{0}` is not verified")]
    UnverifiedLogic(String),
    #[error("fee escrow of {0} not covered")]
    InsufficientFee(u64),
    #[error("empty clone request")]
    EmptyRequest,
    #[error("bad arguments: {0}")]
    BadArgs(String),
}

/// One entry of the service registry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceEntry {
    pub logic_addr: Option<Address>,
    pub verified: bool,
    /// Chain and address of the original logic program.
    pub origin: (u32, Address),
    /// State contract, for services whose home is this chain.
    pub state_addr: Option<Address>,
    pub interface: Option<Interface>,
    pub registered_by: Option<Address>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelayerAccount {
    pub fees: u64,
    pub rewards: u64,
    pub penalties: u64,
    pub reimbursed_gas: u64,
}

impl RelayerAccount {
    pub fn score(&self) -> i64 {
        self.rewards as i64 - self.penalties as i64
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptedMsg {
    pub message_id: Digest,
    pub topic: String,
    pub source_chain: u32,
    pub relayer: Address,
    pub height: u64,
    pub invocation: Option<Digest>,
}

/// Where a service lives, as recorded in a dApp deployment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Home {
    pub chain: u32,
    pub logic_addr: Address,
    pub state_addr: Address,
    pub logic_params: Vec<String>,
    pub logic_returns: Vec<String>,
}

/// A dApp deployed on its execution chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DappRecord {
    pub descriptor: DappDescriptor,
    pub analysis: Analysis,
    pub services: BTreeMap<String, ServiceInfo>,
    pub homes: BTreeMap<String, Home>,
    pub provider: Address,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BridgeCall {
    RequestClone { dapp: String },
    CloneDeploy { job: String, service: String, bytecode: Vec<u8> },
    Verify { job: String, service: String },
    Relay(Box<CrossChainMessage>),
    Start { dapp: String, args: Vec<u64>, exec_gas: u64, baseline: bool },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BridgeState {
    pub chain_id: u32,
    pub address: Address,
    pub registry: BTreeMap<String, ServiceEntry>,
    pub seen: BTreeSet<Digest>,
    pub accepted: Vec<AcceptedMsg>,
    pub relayers: BTreeMap<Address, RelayerAccount>,
    pub dapps: BTreeMap<String, DappRecord>,
    pub deploy: DeployState,
    pub exec: ExecState,
    pub baseline: BaselineState,
}

impl BridgeState {
    pub fn new(chain_id: u32) -> Self {
        BridgeState {
            chain_id,
            address: bridge_address(chain_id),
            registry: BTreeMap::new(),
            seen: BTreeSet::new(),
            accepted: Vec::new(),
            relayers: BTreeMap::new(),
            dapps: BTreeMap::new(),
            deploy: DeployState::default(),
            exec: ExecState::default(),
            baseline: BaselineState::default(),
        }
    }

    /// First registration wins.
    pub fn reg_server(
        &mut self,
        service: &str,
        logic_addr: Address,
        origin: (u32, Address),
        by: Address,
    ) -> Result<(), BridgeError> {
        if self.registry.get(service).is_some_and(|e| e.logic_addr.is_some()) {
            return Err(BridgeError::AlreadyRegistered(service.to_string()));
        }
        let entry = self.registry.entry(service.to_string()).or_insert(ServiceEntry {
            logic_addr: None,
            verified: false,
            origin,
            state_addr: None,
            interface: None,
            registered_by: None,
        });
        entry.logic_addr = Some(logic_addr);
        entry.origin = origin;
        entry.registered_by = Some(by);
        entry.verified = false;
        Ok(())
    }

    /// Registers a service whose logic and state live on this chain.
    pub fn register_home(&mut self, service: &str, logic_addr: Address, state_addr: Address, interface: Interface) {
        self.registry.insert(
            service.to_string(),
            ServiceEntry {
                logic_addr: Some(logic_addr),
                verified: true,
                origin: (self.chain_id, logic_addr),
                state_addr: Some(state_addr),
                interface: Some(interface),
                registered_by: None,
            },
        );
    }

    pub fn is_verified(&self, service: &str) -> bool {
        self.registry.get(service).is_some_and(|e| e.verified && e.logic_addr.is_some())
    }

    pub fn relayer(&mut self, who: Address) -> &mut RelayerAccount {
        self.relayers.entry(who).or_default()
    }

    pub fn total_fees(&self) -> u64 {
        self.relayers.values().map(|r| r.fees).sum()
    }
}

/// Compares the hash of locally deployed code against a foreign digest.
pub fn compare_bytes(state: &ChainState, local: &Address, foreign: &Digest) -> Result<bool, BridgeError> {
    state.bytecode_hash(local).map(|h| &h == foreign).ok_or(BridgeError::NotFound(*local))
}

/// Emits one clone request for `targets` on `invoked_chain`.
pub fn request_clone(
    state: &ChainState,
    ctx: &mut TxCtx,
    job: &str,
    invoked_chain: u32,
    targets: Vec<CloneTarget>,
) -> Result<(), TxError> {
    if targets.is_empty() {
        return Err(BridgeError::EmptyRequest.into());
    }
    ctx.emit(
        state.bridge.address,
        Envelope {
            dest_chain: invoked_chain,
            payload: Payload::CloneReq { job: job.to_string(), invoked_chain, targets },
        },
    )
}

/// Authenticates a relayed message. `Ok(None)` is a duplicate, acknowledged
/// without effect.
pub fn accept_inbound(
    state: &mut ChainState,
    ctx: &mut TxCtx,
    msg: &CrossChainMessage,
) -> Result<Option<Envelope>, TxError> {
    let env = ctx.env;
    let gas = env.gas;
    let src = msg.source_chain;
    if !env.headers.is_canonical(src, msg.header.height, &msg.header.hash()) {
        return Err(BridgeError::UnknownHeader(src).into());
    }
    if env.headers.is_finalized(src, msg.header.height) != Some(true) {
        return Err(BridgeError::NotFinalized.into());
    }
    let leaf = msg.receipt.encode();
    ctx.charge(gas.hash_cost(leaf.len()) + msg.proof.siblings.len() as u64 * gas.hash_cost(65))?;
    if !merkle::verify(&msg.header.receipts_root, &leaf, &msg.proof) {
        return Err(BridgeError::BadProof.into());
    }
    let log = msg.event().ok_or(BridgeError::BadProof)?;
    if log.emitter != bridge_address(src) {
        return Err(BridgeError::BadEmitter.into());
    }
    let envelope = Envelope::decode(log).ok_or(BridgeError::Malformed)?;
    if envelope.dest_chain != state.chain_id {
        return Err(BridgeError::WrongDestination(envelope.dest_chain).into());
    }
    let id = msg.message_id();
    if state.bridge.seen.contains(&id) {
        return Ok(None);
    }
    ctx.charge(gas.storage_write)?;
    state.bridge.seen.insert(id);
    state.bridge.accepted.push(AcceptedMsg {
        message_id: id,
        topic: log.topic.clone(),
        source_chain: src,
        relayer: ctx.sender,
        height: env.height,
        invocation: envelope.payload.invocation(),
    });
    let fee = env.params.relay_fee;
    state.bridge.relayer(ctx.sender).fees += fee;
    Ok(Some(envelope))
}

pub fn handle(state: &mut ChainState, ctx: &mut TxCtx, call: BridgeCall) -> Result<(), TxError> {
    match call {
        BridgeCall::RequestClone { dapp } => deploy::start_job(state, ctx, &dapp),
        BridgeCall::CloneDeploy { job, service, bytecode } => {
            deploy::clone_deploy(state, ctx, &job, &service, bytecode)
        }
        BridgeCall::Verify { job, service } => deploy::verify(state, ctx, &job, &service),
        BridgeCall::Start { dapp, args, exec_gas, baseline: false } => {
            invocation::start(state, ctx, &dapp, args, exec_gas)
        }
        BridgeCall::Start { dapp, args, exec_gas, baseline: true } => {
            baseline::start(state, ctx, &dapp, args, exec_gas)
        }
        BridgeCall::Relay(msg) => {
            let Some(envelope) = accept_inbound(state, ctx, &msg)? else {
                return Ok(());
            };
            ctx.tag = envelope.payload.invocation();
            let src = msg.source_chain;
            match envelope.payload {
                Payload::VerifyOut { job, service, origin_addr, clone_addr, hash } => {
                    deploy::on_verify_out(state, ctx, src, job, service, origin_addr, clone_addr, hash)
                }
                Payload::VerifyResult { job, service, clone_addr, ok } => {
                    deploy::on_verify_result(state, ctx, &job, &service, clone_addr, ok)
                }
                Payload::LockReq { inv, part, expiry_blocks, contracts } => {
                    invocation::on_lock_req(state, ctx, src, inv, part, expiry_blocks, contracts)
                }
                Payload::LockResult { inv, part, result } => invocation::on_lock_result(state, ctx, inv, part, result),
                Payload::UpdateReq { inv, part, contracts } => {
                    invocation::on_update_req(state, ctx, src, inv, part, contracts)
                }
                Payload::UpdateAck { inv, part, ok } => invocation::on_update_ack(state, ctx, inv, part, ok),
                Payload::SegCall { run, seg, state: addr, args, expiry_blocks } => {
                    baseline::on_seg_call(state, ctx, src, run, seg, addr, args, expiry_blocks)
                }
                Payload::SegResult { run, seg, result } => baseline::on_seg_result(state, ctx, run, seg, result),
                Payload::SegFinal { run, commit } => baseline::on_seg_final(state, ctx, src, run, commit),
                Payload::SegAck { run } => baseline::on_seg_ack(state, ctx, msg.source_chain, run),
                _ => Err(BridgeError::Malformed.into()),
            }
        }
    }
}

pub fn handle_system(state: &mut ChainState, ctx: &mut TxCtx, call: SystemCall) -> Result<(), TxError> {
    match call {
        SystemCall::ExpireLocks => {
            let h = ctx.env.height;
            let addrs: Vec<Address> = state.states().map(|(a, _)| *a).collect();
            for a in addrs {
                if let Some(s) = state.state_mut(&a) {
                    for inv in s.expire(h) {
                        state.bridge.exec.expired.push((inv, a, h));
                    }
                }
            }
            Ok(())
        }
        SystemCall::Execute(inv) => {
            ctx.tag = Some(inv);
            invocation::integrated_execute(state, ctx, inv)
        }
        SystemCall::Timeout(inv) => {
            ctx.tag = Some(inv);
            invocation::timeout(state, ctx, inv)
        }
        SystemCall::ResendUpdates(inv) => {
            ctx.tag = Some(inv);
            invocation::resend_updates(state, ctx, inv)
        }
        SystemCall::BaselineTimeout(run) => {
            ctx.tag = Some(run);
            baseline::timeout(state, ctx, run)
        }
        SystemCall::BaselineResend(run) => {
            ctx.tag = Some(run);
            baseline::resend(state, ctx, run)
        }
    }
}

/// Blocks an invoked chain should keep locks before releasing them on its own:
/// twice the bridge timeout, converted from execution-chain blocks.
pub fn expiry_blocks(bridge_timeout: u64, exec_block_ms: u64, invoked_block_ms: u64) -> u64 {
    (2 * bridge_timeout * exec_block_ms).div_ceil(invoked_block_ms.max(1))
}
