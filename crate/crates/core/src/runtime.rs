//! Chain state and transaction execution.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge::{self, BridgeCall, BridgeError, BridgeState};
use crate::hash::{sha256, Address, Digest};
use crate::ledger::{EventLog, HeaderBook, Transaction, TxStatus};
use crate::vm::gas::{GasMeter, GasSchedule, OutOfGas};
use crate::vm::interp::{run, VmError};
use crate::vm::program::{LogicProgram, MonolithicContract, ProgramError, SlotKey, StorageHost};
use crate::vm::state::{LockError, StateContract};
use crate::wire::Envelope;

/// Sender of block-level system transactions.
pub const SYSTEM: Address = Address([0xff; 20]);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolParams {
    pub bridge_timeout_blocks: u64,
    pub relay_fee: u64,
    pub restart_cap: u32,
    /// Transaction aggregation: one lock/update message per invoked chain.
    pub aggregation: bool,
    /// Fine-grained state locks.
    pub fgsl: bool,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams { bridge_timeout_blocks: 20, relay_fee: 1, restart_cap: 3, aggregation: true, fgsl: true }
    }
}

/// Short name for what a transaction's calldata asks for; relays are named
/// after the carried topic.
pub fn op_label(calldata: &[u8]) -> String {
    let Some(call) = crate::hash::decode::<Call>(calldata) else { return "malformed".into() };
    match call {
        Call::Deploy(_) => "deploy".into(),
        Call::Invoke { function, .. } => format!("invoke:{function}"),
        Call::SetLockSize { .. } => "set_lock_size".into(),
        Call::System(s) => match s {
            SystemCall::Execute(_) => "execute",
            SystemCall::Timeout(_) => "timeout",
            SystemCall::ResendUpdates(_) => "resend_updates",
            SystemCall::BaselineTimeout(_) => "baseline_timeout",
            SystemCall::BaselineResend(_) => "baseline_resend",
            SystemCall::ExpireLocks => "expire_locks",
        }
        .into(),
        Call::Bridge(b) => match b {
            BridgeCall::RequestClone { .. } => "request_clone".into(),
            BridgeCall::CloneDeploy { .. } => "clone_deploy".into(),
            BridgeCall::Verify { .. } => "verify".into(),
            BridgeCall::Start { baseline: true, .. } => "start_baseline".into(),
            BridgeCall::Start { .. } => "start".into(),
            BridgeCall::Relay(m) => {
                let topic = m
                    .receipt
                    .logs
                    .get(m.event_index as usize)
                    .and_then(Envelope::decode)
                    .map(|e| e.payload.topic())
                    .unwrap_or("?");
                format!("relay:{topic}")
            }
        },
    }
}

/// What a transaction sees of the world besides its own chain.
#[derive(Clone, Copy)]
pub struct ExecEnv<'a> {
    pub chain_id: u32,
    pub height: u64,
    pub timestamp: u64,
    pub headers: &'a HeaderBook,
    pub gas: &'a GasSchedule,
    pub params: &'a ProtocolParams,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Account {
    pub balance: u64,
    pub nonce: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Deployed {
    Logic { program: LogicProgram, bytecode: Vec<u8>, deployer: Address },
    State(StateContract),
    Monolithic { contract: MonolithicContract, storage: BTreeMap<SlotKey, u64> },
}

impl Deployed {
    pub fn bytecode(&self) -> Vec<u8> {
        match self {
            Deployed::Logic { bytecode, .. } => bytecode.clone(),
            Deployed::State(s) => s.bytecode(),
            Deployed::Monolithic { contract, .. } => contract.bytecode(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Artifact {
    Logic { name: String, bytecode: Vec<u8>, params: Vec<String>, returns: Vec<String> },
    Contract(MonolithicContract),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SystemCall {
    Execute(Digest),
    Timeout(Digest),
    ResendUpdates(Digest),
    BaselineTimeout(Digest),
    BaselineResend(Digest),
    ExpireLocks,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Call {
    Deploy(Artifact),
    /// Direct call of a function on a state or monolithic contract.
    Invoke {
        function: String,
        args: Vec<u64>,
    },
    SetLockSize {
        size: u64,
    },
    Bridge(BridgeCall),
    System(SystemCall),
}

#[derive(Debug, Error)]
pub enum TxError {
    #[error(transparent)]
    OutOfGas(#[from] OutOfGas),
    #[error(transparent)]
    Vm(#[from] VmError),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error(transparent)]
    Lock(#[from] LockError),
    #[error("validation failed: {0}")]
    Validation(#[from] ProgramError),
    #[error("malformed calldata")]
    Malformed,
    #[error("no contract at {0}")]
    NotFound(Address),
    #[error("caller not authorized")]
    Unauthorized,
}

impl TxError {
    fn is_out_of_gas(&self) -> bool {
        matches!(self, TxError::OutOfGas(_) | TxError::Vm(VmError::OutOfGas(_)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainState {
    pub chain_id: u32,
    pub accounts: BTreeMap<Address, Account>,
    pub contracts: BTreeMap<Address, Deployed>,
    pub bridge: BridgeState,
}

impl ChainState {
    pub fn new(chain_id: u32) -> Self {
        ChainState {
            chain_id,
            accounts: BTreeMap::new(),
            contracts: BTreeMap::new(),
            bridge: BridgeState::new(chain_id),
        }
    }

    pub fn account(&self, who: &Address) -> Account {
        self.accounts.get(who).cloned().unwrap_or_default()
    }

    pub fn credit(&mut self, who: Address, amount: u64) {
        let a = self.accounts.entry(who).or_default();
        a.balance = a.balance.saturating_add(amount);
    }

    pub fn debit(&mut self, who: Address, amount: u64) -> bool {
        let a = self.accounts.entry(who).or_default();
        if a.balance < amount {
            return false;
        }
        a.balance -= amount;
        true
    }

    /// Read-only code inquiry; costs nothing.
    pub fn getcode(&self, addr: &Address) -> Option<Vec<u8>> {
        self.contracts.get(addr).map(Deployed::bytecode)
    }

    pub fn bytecode_hash(&self, addr: &Address) -> Option<Digest> {
        self.getcode(addr).map(|b| sha256(&b))
    }

    pub fn state(&self, addr: &Address) -> Option<&StateContract> {
        match self.contracts.get(addr) {
            Some(Deployed::State(s)) => Some(s),
            _ => None,
        }
    }

    pub fn state_mut(&mut self, addr: &Address) -> Option<&mut StateContract> {
        match self.contracts.get_mut(addr) {
            Some(Deployed::State(s)) => Some(s),
            _ => None,
        }
    }

    pub fn states(&self) -> impl Iterator<Item = (&Address, &StateContract)> {
        self.contracts.iter().filter_map(|(a, c)| match c {
            Deployed::State(s) => Some((a, s)),
            _ => None,
        })
    }

    pub fn logic(&self, addr: &Address) -> Option<&LogicProgram> {
        match self.contracts.get(addr) {
            Some(Deployed::Logic { program, .. }) => Some(program),
            _ => None,
        }
    }

    /// Installs an artifact at `Address::contract(chain, deployer, nonce)`.
    pub fn install(&mut self, deployer: Address, nonce: u64, artifact: Deployed) -> Address {
        let addr = Address::contract(self.chain_id, &deployer, nonce);
        self.contracts.insert(addr, artifact);
        addr
    }
}

pub struct TxCtx<'a> {
    pub env: &'a ExecEnv<'a>,
    pub sender: Address,
    pub tx_hash: Digest,
    pub nonce: u64,
    pub meter: GasMeter,
    pub logs: Vec<EventLog>,
    pub tag: Option<Digest>,
}

impl TxCtx<'_> {
    pub fn charge(&mut self, gas: u64) -> Result<(), TxError> {
        Ok(self.meter.charge(gas)?)
    }

    pub fn emit(&mut self, emitter: Address, envelope: Envelope) -> Result<(), TxError> {
        let payload = crate::hash::encode(&envelope);
        self.charge(self.env.gas.event_cost(payload.len()))?;
        self.logs.push(EventLog { emitter, topic: envelope.payload.topic().to_string(), payload });
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TxOutcome {
    pub status: TxStatus,
    pub gas_used: u64,
    pub logs: Vec<EventLog>,
    pub tag: Option<Digest>,
    pub error: Option<String>,
}

pub const GAS_PRICE: u64 = 1;

/// Runs one transaction. A revert discards every state change except the
/// nonce bump and the gas charge.
pub fn execute_tx(state: &mut ChainState, tx: &Transaction, env: &ExecEnv) -> TxOutcome {
    let system = tx.sender == SYSTEM;
    let mut ctx = TxCtx {
        env,
        sender: tx.sender,
        tx_hash: tx.hash(),
        nonce: tx.nonce,
        meter: GasMeter::new(tx.gas_limit),
        logs: Vec::new(),
        tag: None,
    };
    let mut scratch = state.clone();
    let result = ctx
        .charge(env.gas.intrinsic(tx.calldata.len()))
        .and_then(|_| crate::hash::decode::<Call>(&tx.calldata).ok_or(TxError::Malformed))
        .and_then(|call| dispatch(&mut scratch, &mut ctx, tx.target, call));
    let (status, gas_used, error) = match result {
        Ok(()) => {
            *state = scratch;
            (TxStatus::Success, ctx.meter.used(), None)
        }
        Err(e) => {
            let gas = if e.is_out_of_gas() { tx.gas_limit } else { ctx.meter.used() };
            ctx.logs.clear();
            (TxStatus::Revert, gas, Some(e.to_string()))
        }
    };
    if !system {
        let a = state.accounts.entry(tx.sender).or_default();
        a.nonce += 1;
        a.balance = a.balance.saturating_sub(gas_used * GAS_PRICE);
    }
    TxOutcome { status, gas_used, logs: ctx.logs, tag: ctx.tag, error }
}

fn dispatch(state: &mut ChainState, ctx: &mut TxCtx, target: Address, call: Call) -> Result<(), TxError> {
    let gas = ctx.env.gas;
    match call {
        Call::Deploy(artifact) => {
            let deployed = match artifact {
                Artifact::Logic { name, bytecode, params, returns } => {
                    ctx.charge(gas.deploy_cost(bytecode.len(), 0))?;
                    let program = LogicProgram::from_bytecode(&name, &bytecode, params, returns)?;
                    Deployed::Logic { program, bytecode, deployer: ctx.sender }
                }
                Artifact::Contract(contract) => {
                    contract.validate()?;
                    ctx.charge(gas.deploy_cost(contract.bytecode().len(), contract.slots.len()))?;
                    Deployed::Monolithic { contract, storage: BTreeMap::new() }
                }
            };
            state.install(ctx.sender, ctx.nonce, deployed);
            Ok(())
        }
        Call::Invoke { function, args } => {
            let mut meter = GasMeter::new(ctx.meter.remaining());
            let result = match state.contracts.get(&target).cloned() {
                Some(Deployed::State(mut s)) => {
                    let logic = state.logic(&s.logic_addr).cloned();
                    let out = s.call(&function, &args, logic.as_ref(), gas, &mut meter);
                    state.contracts.insert(target, Deployed::State(s));
                    out.map(|_| ())
                }
                Some(Deployed::Monolithic { contract, mut storage }) => {
                    let f =
                        contract.function(&function).ok_or_else(|| VmError::Call(format!("no function {function}")))?;
                    let mut host = StorageHost {
                        slots: &contract.slots,
                        storage: &mut storage,
                        call: |_: &[u64], _: &mut GasMeter| Err(VmError::NoStorage),
                    };
                    let out = run(&f.code, &args, &mut host, gas, &mut meter);
                    if out.is_ok() && !f.view {
                        state.contracts.insert(target, Deployed::Monolithic { contract: contract.clone(), storage });
                    }
                    out.map(|_| ())
                }
                _ => return Err(TxError::NotFound(target)),
            };
            ctx.charge(meter.used())?;
            Ok(result?)
        }
        Call::SetLockSize { size } => {
            let s = state.state_mut(&target).ok_or(TxError::NotFound(target))?;
            ctx.charge(gas.storage_write)?;
            Ok(s.set_lock_size(&ctx.sender, size)?)
        }
        Call::Bridge(call) => {
            if target != state.bridge.address {
                return Err(TxError::NotFound(target));
            }
            bridge::handle(state, ctx, call)
        }
        Call::System(call) => {
            if ctx.sender != SYSTEM {
                return Err(TxError::Unauthorized);
            }
            bridge::handle_system(state, ctx, call)
        }
    }
}

/// System work due at the start of the block being built.
pub fn begin_block(state: &ChainState, env: &ExecEnv) -> Vec<Call> {
    let mut calls: Vec<Call> = Vec::new();
    if state.states().any(|(_, s)| s.lockpool.values().any(|bags| bags.iter().all(|b| b.expiry_height < env.height))) {
        calls.push(Call::System(SystemCall::ExpireLocks));
    }
    calls.extend(crate::invocation::due(state, env).into_iter().map(Call::System));
    calls.extend(crate::baseline::due(state, env).into_iter().map(Call::System));
    calls
}
