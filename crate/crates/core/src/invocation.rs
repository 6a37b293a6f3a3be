//! Cross-chain invocation: lock remote state, execute the whole call tree on
//! the execution chain, then push the updates back.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bridge::{expiry_blocks, BridgeError, DappRecord};
use crate::calltree::lock_plan;
use crate::hash::{hash_parts, Address, Digest};
use crate::runtime::{ChainState, ExecEnv, ProtocolParams, SystemCall, TxCtx, TxError};
use crate::vm::gas::GasMeter;
use crate::vm::program::SlotKey;
use crate::vm::state::{LockRequest, UpdateOutcome};
use crate::wire::{AbortReason, Envelope, Outcome, PartFailure, Payload, Snapshot};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InvStatus {
    Init,
    Locking,
    Executing,
    Updating,
    Committed,
    Aborted,
}

impl InvStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, InvStatus::Committed | InvStatus::Aborted)
    }

    pub fn label(self) -> &'static str {
        match self {
            InvStatus::Init => "init",
            InvStatus::Locking => "locking",
            InvStatus::Executing => "executing",
            InvStatus::Updating => "updating",
            InvStatus::Committed => "committed",
            InvStatus::Aborted => "aborted",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartLock {
    Pending,
    Locked,
    Failed,
}

/// The slice of an invocation handled by one lock/update message pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Part {
    pub chain: u32,
    /// (service, state contract, requests)
    pub contracts: Vec<(String, Address, Vec<LockRequest>)>,
    pub lock: PartLock,
    pub snapshot: Snapshot,
    pub abort_sent: bool,
    pub commit: Option<Vec<(Address, UpdateOutcome)>>,
    pub acked: bool,
    pub sent_height: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invocation {
    pub id: Digest,
    pub seq: u64,
    pub dapp: String,
    pub user: Address,
    pub args: Vec<u64>,
    pub exec_gas: u64,
    pub status: InvStatus,
    pub reason: Option<AbortReason>,
    pub parts: Vec<Part>,
    pub start_height: u64,
    pub start_time: u64,
    pub deadline: u64,
    pub exec_due: Option<u64>,
    pub exec_height: Option<u64>,
    pub end_height: Option<u64>,
    pub end_time: Option<u64>,
    pub outputs: Vec<Option<Vec<u64>>>,
    pub escrow: u64,
    pub history: Vec<(InvStatus, u64)>,
}

impl Invocation {
    fn enter(&mut self, status: InvStatus, height: u64) {
        self.status = status;
        self.history.push((status, height));
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecState {
    pub invocations: BTreeMap<Digest, Invocation>,
    /// Invocations and baseline runs in the order they reached their commit point.
    pub commit_order: Vec<Digest>,
    /// Invoked side: invocations aborted here; late lock requests are refused.
    pub tombstones: BTreeSet<Digest>,
    /// Invoked side: (invocation, contract, height) of locks released by expiry.
    pub expired: Vec<(Digest, Address, u64)>,
    /// Invoked side: updates that could not be applied.
    pub update_failures: Vec<(Digest, Address, String)>,
    next_seq: u64,
}

/// Blocks the execution chain waits for a reply before acting on its own.
pub fn effective_timeout(params: &ProtocolParams, record: &DappRecord) -> u64 {
    params.bridge_timeout_blocks.min(record.analysis.timeout_blocks).max(1)
}

pub fn invocation_id(tx_hash: &Digest) -> Digest {
    hash_parts(&[b"inv", &tx_hash.0])
}

fn record<'a>(state: &'a ChainState, dapp: &str) -> Result<&'a DappRecord, TxError> {
    state.bridge.dapps.get(dapp).ok_or_else(|| BridgeError::UnknownDapp(dapp.to_string()).into())
}

/// Checks every service of the dApp has verified logic on this chain.
pub(crate) fn check_ready(state: &ChainState, rec: &DappRecord) -> Result<(), TxError> {
    for call in &rec.analysis.calls {
        if !state.bridge.is_verified(&call.service) {
            return Err(BridgeError::UnverifiedLogic(call.service.clone()).into());
        }
    }
    Ok(())
}

pub fn start(
    state: &mut ChainState,
    ctx: &mut TxCtx,
    dapp: &str,
    args: Vec<u64>,
    exec_gas: u64,
) -> Result<(), TxError> {
    let env = ctx.env;
    let id = invocation_id(&ctx.tx_hash);
    ctx.tag = Some(id);
    let rec = record(state, dapp)?;
    if args.len() != rec.analysis.n_inputs {
        return Err(
            BridgeError::BadArgs(format!("expected {} inputs, got {}", rec.analysis.n_inputs, args.len())).into()
        );
    }
    check_ready(state, rec)?;
    let plan = lock_plan(&rec.analysis, &rec.services, &args, env.params.fgsl)
        .ok_or_else(|| BridgeError::BadArgs("lock plan needs unavailable values".into()))?;
    let mut parts = Vec::new();
    for (chain, per) in plan {
        let contracts: Vec<(String, Address, Vec<LockRequest>)> =
            per.into_iter().map(|(svc, reqs)| (svc.clone(), rec.homes[&svc].state_addr, reqs)).collect();
        let new_part = |contracts| Part {
            chain,
            contracts,
            lock: PartLock::Pending,
            snapshot: Vec::new(),
            abort_sent: false,
            commit: None,
            acked: false,
            sent_height: env.height,
        };
        if env.params.aggregation {
            parts.push(new_part(contracts));
        } else {
            parts.extend(contracts.into_iter().map(|c| new_part(vec![c])));
        }
    }
    let timeout = effective_timeout(env.params, rec);
    let exec_ms = env.headers.block_time(state.chain_id).unwrap_or(1);
    let calls = rec.analysis.calls.len();
    let escrow = env.params.relay_fee * 4 * parts.len() as u64;
    if !state.debit(ctx.sender, escrow) {
        return Err(BridgeError::InsufficientFee(escrow).into());
    }
    ctx.charge(env.gas.storage_write * (1 + parts.len() as u64))?;
    for (i, p) in parts.iter().enumerate() {
        let invoked_ms = env.headers.block_time(p.chain).unwrap_or(exec_ms);
        let contracts = p.contracts.iter().map(|(_, a, r)| (*a, r.clone())).collect();
        ctx.emit(
            state.bridge.address,
            Envelope {
                dest_chain: p.chain,
                payload: Payload::LockReq {
                    inv: id,
                    part: i as u32,
                    expiry_blocks: expiry_blocks(timeout, exec_ms, invoked_ms),
                    contracts,
                },
            },
        )?;
    }
    let seq = state.bridge.exec.next_seq;
    state.bridge.exec.next_seq += 1;
    let no_parts = parts.is_empty();
    let mut inv = Invocation {
        id,
        seq,
        dapp: dapp.to_string(),
        user: ctx.sender,
        args,
        exec_gas,
        status: InvStatus::Init,
        reason: None,
        parts,
        start_height: env.height,
        start_time: env.timestamp,
        deadline: env.height + timeout,
        exec_due: None,
        exec_height: None,
        end_height: None,
        end_time: None,
        outputs: vec![None; calls],
        escrow,
        history: vec![(InvStatus::Init, env.height)],
    };
    if no_parts {
        inv.enter(InvStatus::Executing, env.height);
        inv.exec_due = Some(env.height + 1);
    } else {
        inv.enter(InvStatus::Locking, env.height);
    }
    state.bridge.exec.invocations.insert(id, inv);
    Ok(())
}

/// Invoked side: take the requested locks atomically for one part.
pub fn on_lock_req(
    state: &mut ChainState,
    ctx: &mut TxCtx,
    src: u32,
    inv: Digest,
    part: u32,
    expiry_blocks: u64,
    contracts: Vec<(Address, Vec<LockRequest>)>,
) -> Result<(), TxError> {
    let result = if state.bridge.exec.tombstones.contains(&inv) {
        Err(PartFailure::Cancelled)
    } else {
        lock_all(state, ctx, inv, expiry_blocks, &contracts)?
    };
    ctx.emit(state.bridge.address, Envelope { dest_chain: src, payload: Payload::LockResult { inv, part, result } })
}

/// Locks every contract or none.
pub(crate) fn lock_all(
    state: &mut ChainState,
    ctx: &mut TxCtx,
    inv: Digest,
    expiry_blocks: u64,
    contracts: &[(Address, Vec<LockRequest>)],
) -> Result<Result<Snapshot, PartFailure>, TxError> {
    let bridge = state.bridge.address;
    let expiry = ctx.env.height + expiry_blocks;
    let mut backup = Vec::new();
    let mut snapshot = Vec::new();
    for (addr, reqs) in contracts {
        let Some(s) = state.state_mut(addr) else {
            restore(state, backup);
            return Ok(Err(PartFailure::UnknownContract(*addr)));
        };
        let before = s.clone();
        match s.lock_state(&bridge, inv, reqs, expiry) {
            Ok(values) => {
                backup.push((*addr, before));
                snapshot.push((*addr, values));
            }
            Err(e) => {
                restore(state, backup);
                return Ok(Err(PartFailure::Lock(e)));
            }
        }
        ctx.charge(ctx.env.gas.storage_write * reqs.len() as u64)?;
    }
    Ok(Ok(snapshot))
}

fn restore(state: &mut ChainState, backup: Vec<(Address, crate::vm::state::StateContract)>) {
    for (addr, s) in backup {
        if let Some(slot) = state.state_mut(&addr) {
            *slot = s;
        }
    }
}

pub fn on_lock_result(
    state: &mut ChainState,
    ctx: &mut TxCtx,
    id: Digest,
    part: u32,
    result: Result<Snapshot, PartFailure>,
) -> Result<(), TxError> {
    let h = ctx.env.height;
    let Some(inv) = state.bridge.exec.invocations.get_mut(&id) else { return Ok(()) };
    let Some(p) = inv.parts.get_mut(part as usize) else { return Ok(()) };
    if p.lock != PartLock::Pending {
        return Ok(());
    }
    ctx.charge(ctx.env.gas.storage_write)?;
    match result {
        Ok(snapshot) => {
            p.lock = PartLock::Locked;
            p.snapshot = snapshot;
            if inv.status == InvStatus::Aborted {
                if !p.abort_sent {
                    p.abort_sent = true;
                    let chain = p.chain;
                    let contracts = p.contracts.iter().map(|(_, a, _)| (*a, UpdateOutcome::Abort)).collect();
                    return ctx.emit(
                        state.bridge.address,
                        Envelope { dest_chain: chain, payload: Payload::UpdateReq { inv: id, part, contracts } },
                    );
                }
                return Ok(());
            }
            if inv.status == InvStatus::Locking && inv.parts.iter().all(|p| p.lock == PartLock::Locked) {
                inv.enter(InvStatus::Executing, h);
                inv.exec_due = Some(h + 1);
            }
            Ok(())
        }
        Err(f) => {
            p.lock = PartLock::Failed;
            if inv.status.is_terminal() {
                return Ok(());
            }
            let reason = match f {
                PartFailure::Exec(m) => AbortReason::ExecFailure(m),
                f => AbortReason::LockConflict { holder: f.holder() },
            };
            abort(state, ctx, id, reason)
        }
    }
}

/// Marks the invocation aborted and releases every part that may hold locks.
pub(crate) fn abort(state: &mut ChainState, ctx: &mut TxCtx, id: Digest, reason: AbortReason) -> Result<(), TxError> {
    let env = ctx.env;
    let bridge = state.bridge.address;
    let Some(inv) = state.bridge.exec.invocations.get_mut(&id) else { return Ok(()) };
    if inv.status.is_terminal() {
        return Ok(());
    }
    inv.enter(InvStatus::Aborted, env.height);
    inv.reason = Some(reason.clone());
    inv.end_height = Some(env.height);
    inv.end_time = Some(env.timestamp);
    let mut msgs = 0u64;
    let mut out = Vec::new();
    for (i, p) in inv.parts.iter_mut().enumerate() {
        msgs += 1;
        if p.lock != PartLock::Failed {
            msgs += 1;
        }
        if p.lock != PartLock::Failed && !p.abort_sent {
            p.abort_sent = true;
            msgs += 2;
            let contracts = p.contracts.iter().map(|(_, a, _)| (*a, UpdateOutcome::Abort)).collect();
            out.push(Envelope {
                dest_chain: p.chain,
                payload: Payload::UpdateReq { inv: id, part: i as u32, contracts },
            });
        }
    }
    let refund = inv.escrow.saturating_sub(env.params.relay_fee * msgs);
    let user = inv.user;
    state.credit(user, refund);
    for e in out {
        ctx.emit(bridge, e)?;
    }
    let dest = state.chain_id;
    ctx.emit(
        bridge,
        Envelope { dest_chain: dest, payload: Payload::InvDone { inv: id, outcome: Outcome::Aborted(reason) } },
    )
}

/// Runs the whole call tree over the locked snapshots and local state.
pub fn integrated_execute(state: &mut ChainState, ctx: &mut TxCtx, id: Digest) -> Result<(), TxError> {
    let env = ctx.env;
    let Some(inv) = state.bridge.exec.invocations.get(&id).cloned() else { return Ok(()) };
    if inv.status != InvStatus::Executing {
        return Ok(());
    }
    let rec = record(state, &inv.dapp)?.clone();
    match run_tree(state, &rec, &inv, env) {
        Ok((outputs, local, remote, gas)) => {
            ctx.charge(gas)?;
            for (addr, writes) in &local {
                let s = state.state_mut(addr).ok_or(TxError::NotFound(*addr))?;
                for (k, v) in writes {
                    s.set_value(k.clone(), *v);
                }
                ctx.charge(env.gas.storage_write * writes.len() as u64)?;
            }
            let bridge = state.bridge.address;
            let mut out = Vec::new();
            let inv = state.bridge.exec.invocations.get_mut(&id).expect("present");
            inv.outputs = outputs.into_iter().map(Some).collect();
            inv.exec_height = Some(env.height);
            for (i, p) in inv.parts.iter_mut().enumerate() {
                let contracts: Vec<(Address, UpdateOutcome)> = p
                    .contracts
                    .iter()
                    .map(|(_, a, _)| (*a, UpdateOutcome::Commit(remote.get(a).cloned().unwrap_or_default())))
                    .collect();
                p.commit = Some(contracts.clone());
                p.sent_height = env.height;
                out.push(Envelope {
                    dest_chain: p.chain,
                    payload: Payload::UpdateReq { inv: id, part: i as u32, contracts },
                });
            }
            let done = out.is_empty();
            if done {
                inv.enter(InvStatus::Committed, env.height);
                inv.end_height = Some(env.height);
                inv.end_time = Some(env.timestamp);
            } else {
                inv.enter(InvStatus::Updating, env.height);
            }
            state.bridge.exec.commit_order.push(id);
            for e in out {
                ctx.emit(bridge, e)?;
            }
            if done {
                let dest = state.chain_id;
                ctx.emit(
                    bridge,
                    Envelope { dest_chain: dest, payload: Payload::InvDone { inv: id, outcome: Outcome::Committed } },
                )?;
            }
            Ok(())
        }
        Err((msg, gas)) => {
            ctx.charge(gas)?;
            abort(state, ctx, id, AbortReason::ExecFailure(msg))
        }
    }
}

type Writes = BTreeMap<Address, Vec<(SlotKey, u64)>>;

/// Outputs per call, local writes, remote writes and gas; or an error and the gas spent.
fn run_tree(
    state: &ChainState,
    rec: &DappRecord,
    inv: &Invocation,
    env: &ExecEnv,
) -> Result<(Vec<Vec<u64>>, Writes, Writes, u64), (String, u64)> {
    let mut working: BTreeMap<(Address, SlotKey), u64> = BTreeMap::new();
    for p in &inv.parts {
        for (addr, values) in &p.snapshot {
            for (k, v) in values {
                working.insert((*addr, k.clone()), *v);
            }
        }
    }
    let mut meter = GasMeter::new(inv.exec_gas);
    let mut outputs: Vec<Option<Vec<u64>>> = vec![None; rec.analysis.calls.len()];
    let mut written: BTreeSet<(Address, SlotKey)> = BTreeSet::new();
    let local_chain = state.chain_id;
    for (i, call) in rec.analysis.calls.iter().enumerate() {
        let fail = |m: String, meter: &GasMeter| (m, meter.used());
        let args = call
            .args
            .iter()
            .map(|a| a.eval(&inv.args, &outputs))
            .collect::<Option<Vec<u64>>>()
            .ok_or_else(|| fail(format!("call {i}: argument unavailable"), &meter))?;
        let entry = state
            .bridge
            .registry
            .get(&call.service)
            .ok_or_else(|| fail(format!("{} not registered", call.service), &meter))?;
        let logic_addr = entry.logic_addr.ok_or_else(|| fail(format!("{} has no logic", call.service), &meter))?;
        let logic = state.logic(&logic_addr).ok_or_else(|| fail(format!("{} logic missing", call.service), &meter))?;
        let iface = &rec.services[&call.service].interface;
        let home = &rec.homes[&call.service];
        let local = home.chain == local_chain;
        let mut inputs = Vec::with_capacity(iface.loads.len() + args.len());
        for load in &iface.loads {
            let key = load.resolve(&args).ok_or_else(|| fail("bad slot key".into(), &meter))?;
            let wk = (home.state_addr, key);
            let v = match working.get(&wk) {
                Some(v) => *v,
                None if local => {
                    let s = state.state(&home.state_addr).ok_or_else(|| fail("state missing".into(), &meter))?;
                    meter.charge(env.gas.storage_read).map_err(|e| fail(e.to_string(), &meter))?;
                    s.value(&wk.1)
                }
                None => return Err(fail(format!("slot {} not locked", wk.1), &meter)),
            };
            inputs.push(v);
        }
        inputs.extend_from_slice(&args);
        let out = logic.execute(&inputs, env.gas, &mut meter).map_err(|e| fail(e.to_string(), &meter))?;
        let (rets, writes) =
            iface.split_outputs(&args, &out).ok_or_else(|| fail("bad logic outputs".into(), &meter))?;
        for (k, v) in writes {
            let wk = (home.state_addr, k);
            working.insert(wk.clone(), v);
            written.insert(wk);
        }
        outputs[i] = Some(rets);
    }
    let mut local = Writes::new();
    let mut remote = Writes::new();
    for (addr, k) in written {
        let v = working[&(addr, k.clone())];
        if state.state(&addr).is_some() {
            local.entry(addr).or_default().push((k, v));
        } else {
            remote.entry(addr).or_default().push((k, v));
        }
    }
    let outputs = outputs.into_iter().map(|o| o.unwrap_or_default()).collect();
    Ok((outputs, local, remote, meter.used()))
}

/// Invoked side: apply or discard the locked state.
pub fn on_update_req(
    state: &mut ChainState,
    ctx: &mut TxCtx,
    src: u32,
    inv: Digest,
    part: u32,
    contracts: Vec<(Address, UpdateOutcome)>,
) -> Result<(), TxError> {
    let bridge = state.bridge.address;
    let mut ok = true;
    let mut aborted = false;
    for (addr, outcome) in &contracts {
        aborted |= *outcome == UpdateOutcome::Abort;
        let Some(s) = state.state_mut(addr) else {
            ok = false;
            state.bridge.exec.update_failures.push((inv, *addr, "unknown contract".into()));
            continue;
        };
        match s.update_state(&bridge, inv, outcome) {
            Ok(()) => {}
            Err(crate::vm::state::LockError::UnknownInvocation) if *outcome == UpdateOutcome::Abort => {}
            Err(e) => {
                ok = false;
                state.bridge.exec.update_failures.push((inv, *addr, e.to_string()));
            }
        }
        let writes = match outcome {
            UpdateOutcome::Commit(w) => w.len() as u64,
            UpdateOutcome::Abort => 1,
        };
        ctx.charge(ctx.env.gas.storage_write * writes.max(1))?;
    }
    if aborted {
        state.bridge.exec.tombstones.insert(inv);
    }
    ctx.emit(bridge, Envelope { dest_chain: src, payload: Payload::UpdateAck { inv, part, ok } })
}

pub fn on_update_ack(state: &mut ChainState, ctx: &mut TxCtx, id: Digest, part: u32, ok: bool) -> Result<(), TxError> {
    let env = ctx.env;
    let Some(inv) = state.bridge.exec.invocations.get_mut(&id) else { return Ok(()) };
    if inv.status != InvStatus::Updating {
        return Ok(());
    }
    let Some(p) = inv.parts.get_mut(part as usize) else { return Ok(()) };
    if p.acked {
        return Ok(());
    }
    p.acked = true;
    if !ok {
        state.bridge.exec.update_failures.push((id, Address::default(), format!("part {part} rejected the update")));
    }
    ctx.charge(env.gas.storage_write)?;
    let inv = state.bridge.exec.invocations.get_mut(&id).expect("present");
    if inv.parts.iter().all(|p| p.acked) {
        inv.enter(InvStatus::Committed, env.height);
        inv.end_height = Some(env.height);
        inv.end_time = Some(env.timestamp);
        let dest = state.chain_id;
        ctx.emit(
            state.bridge.address,
            Envelope { dest_chain: dest, payload: Payload::InvDone { inv: id, outcome: Outcome::Committed } },
        )?;
    }
    Ok(())
}

pub fn timeout(state: &mut ChainState, ctx: &mut TxCtx, id: Digest) -> Result<(), TxError> {
    match state.bridge.exec.invocations.get(&id).map(|i| i.status) {
        Some(InvStatus::Locking | InvStatus::Executing) => abort(state, ctx, id, AbortReason::Timeout),
        _ => Ok(()),
    }
}

/// Past the commit point updates are re-sent until acknowledged.
pub fn resend_updates(state: &mut ChainState, ctx: &mut TxCtx, id: Digest) -> Result<(), TxError> {
    let h = ctx.env.height;
    let bridge = state.bridge.address;
    let Some(inv) = state.bridge.exec.invocations.get_mut(&id) else { return Ok(()) };
    if inv.status != InvStatus::Updating {
        return Ok(());
    }
    let mut out = Vec::new();
    for (i, p) in inv.parts.iter_mut().enumerate() {
        if let (false, Some(c)) = (p.acked, &p.commit) {
            p.sent_height = h;
            out.push(Envelope {
                dest_chain: p.chain,
                payload: Payload::UpdateReq { inv: id, part: i as u32, contracts: c.clone() },
            });
        }
    }
    for e in out {
        ctx.emit(bridge, e)?;
    }
    Ok(())
}

/// System work for the block at `env.height`, in start order.
pub fn due(state: &ChainState, env: &ExecEnv) -> Vec<SystemCall> {
    let h = env.height;
    let mut live: Vec<&Invocation> =
        state.bridge.exec.invocations.values().filter(|i| !i.status.is_terminal()).collect();
    live.sort_by_key(|i| i.seq);
    let mut calls = Vec::new();
    for inv in live {
        let timeout = state.bridge.dapps.get(&inv.dapp).map(|r| effective_timeout(env.params, r)).unwrap_or(1);
        match inv.status {
            InvStatus::Locking | InvStatus::Executing if h > inv.deadline => calls.push(SystemCall::Timeout(inv.id)),
            InvStatus::Executing if inv.exec_due.is_some_and(|d| d <= h) => calls.push(SystemCall::Execute(inv.id)),
            InvStatus::Updating if inv.parts.iter().any(|p| !p.acked && h >= p.sent_height + timeout) => {
                calls.push(SystemCall::ResendUpdates(inv.id))
            }
            _ => {}
        }
    }
    calls
}
