//! The comparison protocol: the call tree runs segment by segment on each
//! service's home chain under whole-contract locks, with a two-phase finish.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bridge::{expiry_blocks, BridgeError};
use crate::hash::{hash_parts, Address, Digest};
use crate::invocation::{effective_timeout, InvStatus};
use crate::runtime::{ChainState, ExecEnv, SystemCall, TxCtx, TxError};
use crate::vm::gas::GasMeter;
use crate::vm::lsd::Interface;
use crate::vm::program::SlotKey;
use crate::vm::state::{LockMode, LockRequest, UpdateOutcome};
use crate::wire::{AbortReason, Envelope, Outcome, PartFailure, Payload};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineRun {
    pub id: Digest,
    pub seq: u64,
    pub dapp: String,
    pub user: Address,
    pub args: Vec<u64>,
    pub exec_gas: u64,
    /// `Locking` while segments run, `Updating` after the final commit is sent.
    pub status: InvStatus,
    pub reason: Option<AbortReason>,
    pub next_call: usize,
    pub awaiting: Option<u32>,
    pub outputs: Vec<Option<Vec<u64>>>,
    pub touched: BTreeSet<u32>,
    pub local_locked: BTreeSet<Address>,
    pub acks: BTreeSet<u32>,
    pub final_height: Option<u64>,
    pub start_height: u64,
    pub start_time: u64,
    pub deadline: u64,
    pub commit_height: Option<u64>,
    pub end_height: Option<u64>,
    pub end_time: Option<u64>,
    pub segments: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineState {
    pub runs: BTreeMap<Digest, BaselineRun>,
    /// Invoked side: contracts each run holds here.
    pub held: BTreeMap<Digest, BTreeSet<Address>>,
    pub tombstones: BTreeSet<Digest>,
    next_seq: u64,
}

pub fn run_id(tx_hash: &Digest) -> Digest {
    hash_parts(&[b"run", &tx_hash.0])
}

fn contract_lock() -> LockRequest {
    LockRequest { slot: SlotKey::scalar("*"), mode: LockMode::Contract }
}

pub fn start(
    state: &mut ChainState,
    ctx: &mut TxCtx,
    dapp: &str,
    args: Vec<u64>,
    exec_gas: u64,
) -> Result<(), TxError> {
    let env = ctx.env;
    let id = run_id(&ctx.tx_hash);
    ctx.tag = Some(id);
    let rec = state.bridge.dapps.get(dapp).ok_or_else(|| BridgeError::UnknownDapp(dapp.to_string()))?;
    if args.len() != rec.analysis.n_inputs {
        return Err(
            BridgeError::BadArgs(format!("expected {} inputs, got {}", rec.analysis.n_inputs, args.len())).into()
        );
    }
    let remote = rec.analysis.calls.iter().filter(|c| c.chain != state.chain_id).count() as u64;
    let deadline = env.height + effective_timeout(env.params, rec) * remote.max(1);
    let calls = rec.analysis.calls.len();
    let escrow = env.params.relay_fee * 4 * remote;
    if !state.debit(ctx.sender, escrow) {
        return Err(BridgeError::InsufficientFee(escrow).into());
    }
    ctx.charge(env.gas.storage_write)?;
    let seq = state.bridge.baseline.next_seq;
    state.bridge.baseline.next_seq += 1;
    state.bridge.baseline.runs.insert(
        id,
        BaselineRun {
            id,
            seq,
            dapp: dapp.to_string(),
            user: ctx.sender,
            args,
            exec_gas,
            status: InvStatus::Locking,
            reason: None,
            next_call: 0,
            awaiting: None,
            outputs: vec![None; calls],
            touched: BTreeSet::new(),
            local_locked: BTreeSet::new(),
            acks: BTreeSet::new(),
            final_height: None,
            start_height: env.height,
            start_time: env.timestamp,
            deadline,
            commit_height: None,
            end_height: None,
            end_time: None,
            segments: 0,
        },
    );
    advance(state, ctx, id)
}

/// Runs local calls in place and stops at the next remote one.
fn advance(state: &mut ChainState, ctx: &mut TxCtx, id: Digest) -> Result<(), TxError> {
    let env = ctx.env;
    let bridge = state.bridge.address;
    loop {
        let run = state.bridge.baseline.runs[&id].clone();
        let rec = state.bridge.dapps[&run.dapp].clone();
        let Some(call) = rec.analysis.calls.get(run.next_call) else {
            return finish(state, ctx, id);
        };
        let i = run.next_call;
        let Some(args) = call.args.iter().map(|a| a.eval(&run.args, &run.outputs)).collect::<Option<Vec<u64>>>() else {
            return abort(state, ctx, id, AbortReason::ExecFailure(format!("call {i}: argument unavailable")));
        };
        let home = rec.homes[&call.service].clone();
        if home.chain != state.chain_id {
            let exec_ms = env.headers.block_time(state.chain_id).unwrap_or(1);
            let invoked_ms = env.headers.block_time(home.chain).unwrap_or(exec_ms);
            // held until SEG_FINAL, so cover the rest of the run plus one timeout
            let left = run.deadline.saturating_sub(env.height) + effective_timeout(env.params, &rec);
            let expiry = expiry_blocks(left, exec_ms, invoked_ms);
            let r = state.bridge.baseline.runs.get_mut(&id).expect("present");
            r.awaiting = Some(i as u32);
            r.touched.insert(home.chain);
            r.segments += 1;
            return ctx.emit(
                bridge,
                Envelope {
                    dest_chain: home.chain,
                    payload: Payload::SegCall {
                        run: id,
                        seg: i as u32,
                        state: home.state_addr,
                        args,
                        expiry_blocks: expiry,
                    },
                },
            );
        }
        let iface = rec.services[&call.service].interface.clone();
        let mut meter = GasMeter::new(run.exec_gas);
        let before = state.state(&home.state_addr).cloned();
        let result = run_segment(state, &bridge, id, home.state_addr, &iface, &args, env, u64::MAX, &mut meter);
        ctx.charge(meter.used())?;
        if let (Err(_), Some(before)) = (&result, before) {
            if let Some(s) = state.state_mut(&home.state_addr) {
                *s = before;
            }
        }
        match result {
            Ok(rets) => {
                let r = state.bridge.baseline.runs.get_mut(&id).expect("present");
                r.local_locked.insert(home.state_addr);
                r.outputs[i] = Some(rets);
                r.next_call += 1;
            }
            Err(f) => return abort(state, ctx, id, failure_reason(f)),
        }
    }
}

fn failure_reason(f: PartFailure) -> AbortReason {
    match f {
        PartFailure::Exec(m) => AbortReason::ExecFailure(m),
        f => AbortReason::LockConflict { holder: f.holder() },
    }
}

/// Locks the whole contract for `run`, executes the service against the
/// run's view of storage and stages the writes.
#[allow(clippy::too_many_arguments)]
fn run_segment(
    state: &mut ChainState,
    bridge: &Address,
    run: Digest,
    addr: Address,
    iface: &Interface,
    args: &[u64],
    env: &ExecEnv,
    expiry_height: u64,
    meter: &mut GasMeter,
) -> Result<Vec<u64>, PartFailure> {
    let logic_addr = state.state(&addr).ok_or(PartFailure::UnknownContract(addr))?.logic_addr;
    let logic = state.logic(&logic_addr).cloned().ok_or(PartFailure::UnknownContract(logic_addr))?;
    let s = state.state_mut(&addr).ok_or(PartFailure::UnknownContract(addr))?;
    s.lock_state(bridge, run, &[contract_lock()], expiry_height).map_err(PartFailure::Lock)?;
    let exec = |e: String| PartFailure::Exec(e);
    let mut inputs = Vec::with_capacity(iface.loads.len() + args.len());
    for load in &iface.loads {
        let key = load.resolve(args).ok_or_else(|| exec("bad slot key".into()))?;
        meter.charge(env.gas.storage_read).map_err(|e| exec(e.to_string()))?;
        inputs.push(s.read_for(&run, &key));
    }
    inputs.extend_from_slice(args);
    let out = logic.execute(&inputs, env.gas, meter).map_err(|e| exec(e.to_string()))?;
    let (rets, writes) = iface.split_outputs(args, &out).ok_or_else(|| exec("bad logic outputs".into()))?;
    meter.charge(env.gas.storage_write * writes.len() as u64).map_err(|e| exec(e.to_string()))?;
    s.stage(bridge, run, &writes).map_err(PartFailure::Lock)?;
    Ok(rets)
}

/// Commit point: apply local staged state and tell touched chains to commit.
fn finish(state: &mut ChainState, ctx: &mut TxCtx, id: Digest) -> Result<(), TxError> {
    let env = ctx.env;
    let bridge = state.bridge.address;
    let run = state.bridge.baseline.runs[&id].clone();
    for addr in &run.local_locked {
        if let Some(s) = state.state_mut(addr) {
            s.update_state(&bridge, id, &UpdateOutcome::Commit(Vec::new()))?;
        }
    }
    state.bridge.exec.commit_order.push(id);
    let r = state.bridge.baseline.runs.get_mut(&id).expect("present");
    r.commit_height = Some(env.height);
    r.final_height = Some(env.height);
    r.local_locked.clear();
    if run.touched.is_empty() {
        return complete(state, ctx, id);
    }
    r.status = InvStatus::Updating;
    for chain in &run.touched {
        ctx.emit(bridge, Envelope { dest_chain: *chain, payload: Payload::SegFinal { run: id, commit: true } })?;
    }
    Ok(())
}

fn complete(state: &mut ChainState, ctx: &mut TxCtx, id: Digest) -> Result<(), TxError> {
    let env = ctx.env;
    let r = state.bridge.baseline.runs.get_mut(&id).expect("present");
    r.status = InvStatus::Committed;
    r.end_height = Some(env.height);
    r.end_time = Some(env.timestamp);
    let dest = state.chain_id;
    ctx.emit(
        state.bridge.address,
        Envelope { dest_chain: dest, payload: Payload::InvDone { inv: id, outcome: Outcome::Committed } },
    )
}

fn abort(state: &mut ChainState, ctx: &mut TxCtx, id: Digest, reason: AbortReason) -> Result<(), TxError> {
    let env = ctx.env;
    let bridge = state.bridge.address;
    let Some(run) = state.bridge.baseline.runs.get(&id).cloned() else { return Ok(()) };
    if run.status != InvStatus::Locking {
        return Ok(());
    }
    for addr in &run.local_locked {
        if let Some(s) = state.state_mut(addr) {
            s.update_state(&bridge, id, &UpdateOutcome::Abort)?;
        }
    }
    // Segments already sent: at most one message pair per touched chain is left unused.
    let sent = run.segments as u64 * 2 + run.touched.len() as u64 * 2;
    let refund = (env.params.relay_fee * 4 * run.segments as u64).saturating_sub(env.params.relay_fee * sent);
    state.credit(run.user, refund);
    let r = state.bridge.baseline.runs.get_mut(&id).expect("present");
    r.status = InvStatus::Aborted;
    r.reason = Some(reason.clone());
    r.local_locked.clear();
    r.end_height = Some(env.height);
    r.end_time = Some(env.timestamp);
    for chain in &run.touched {
        ctx.emit(bridge, Envelope { dest_chain: *chain, payload: Payload::SegFinal { run: id, commit: false } })?;
    }
    let dest = state.chain_id;
    ctx.emit(
        bridge,
        Envelope { dest_chain: dest, payload: Payload::InvDone { inv: id, outcome: Outcome::Aborted(reason) } },
    )
}

/// Invoked side: run one segment on the service's home state.
#[allow(clippy::too_many_arguments)]
pub fn on_seg_call(
    state: &mut ChainState,
    ctx: &mut TxCtx,
    src: u32,
    run: Digest,
    seg: u32,
    addr: Address,
    args: Vec<u64>,
    expiry_blocks: u64,
) -> Result<(), TxError> {
    let env = ctx.env;
    let bridge = state.bridge.address;
    let result = if state.bridge.baseline.tombstones.contains(&run) {
        Err(PartFailure::Cancelled)
    } else {
        match state.bridge.registry.values().find(|e| e.state_addr == Some(addr)).and_then(|e| e.interface.clone()) {
            None => Err(PartFailure::UnknownContract(addr)),
            Some(iface) => {
                let mut meter = GasMeter::new(ctx.meter.remaining());
                let before = state.state(&addr).cloned();
                let r =
                    run_segment(state, &bridge, run, addr, &iface, &args, env, env.height + expiry_blocks, &mut meter);
                ctx.charge(meter.used())?;
                match (&r, before) {
                    (Ok(_), _) => {
                        state.bridge.baseline.held.entry(run).or_default().insert(addr);
                    }
                    (Err(_), Some(before)) => {
                        let locked_before = before.lockpool.contains_key(&run);
                        if let Some(s) = state.state_mut(&addr) {
                            *s = before;
                        }
                        if locked_before {
                            state.bridge.baseline.held.entry(run).or_default().insert(addr);
                        }
                    }
                    (Err(_), None) => {}
                }
                r
            }
        }
    };
    ctx.emit(bridge, Envelope { dest_chain: src, payload: Payload::SegResult { run, seg, result } })
}

pub fn on_seg_result(
    state: &mut ChainState,
    ctx: &mut TxCtx,
    id: Digest,
    seg: u32,
    result: Result<Vec<u64>, PartFailure>,
) -> Result<(), TxError> {
    let Some(run) = state.bridge.baseline.runs.get_mut(&id) else { return Ok(()) };
    if run.status != InvStatus::Locking || run.awaiting != Some(seg) {
        return Ok(());
    }
    ctx.charge(ctx.env.gas.storage_write)?;
    match result {
        Ok(rets) => {
            run.outputs[seg as usize] = Some(rets);
            run.awaiting = None;
            run.next_call = seg as usize + 1;
            advance(state, ctx, id)
        }
        Err(f) => abort(state, ctx, id, failure_reason(f)),
    }
}

/// Invoked side: commit or roll back everything the run holds here.
pub fn on_seg_final(
    state: &mut ChainState,
    ctx: &mut TxCtx,
    src: u32,
    run: Digest,
    commit: bool,
) -> Result<(), TxError> {
    let bridge = state.bridge.address;
    let held = state.bridge.baseline.held.remove(&run).unwrap_or_default();
    let outcome = if commit { UpdateOutcome::Commit(Vec::new()) } else { UpdateOutcome::Abort };
    for addr in held {
        if let Some(s) = state.state_mut(&addr) {
            if let Err(e) = s.update_state(&bridge, run, &outcome) {
                state.bridge.exec.update_failures.push((run, addr, e.to_string()));
            }
        }
        ctx.charge(ctx.env.gas.storage_write)?;
    }
    if !commit {
        state.bridge.baseline.tombstones.insert(run);
    }
    ctx.emit(bridge, Envelope { dest_chain: src, payload: Payload::SegAck { run } })
}

pub fn on_seg_ack(state: &mut ChainState, ctx: &mut TxCtx, src: u32, id: Digest) -> Result<(), TxError> {
    let Some(run) = state.bridge.baseline.runs.get_mut(&id) else { return Ok(()) };
    if run.status != InvStatus::Updating {
        return Ok(());
    }
    run.acks.insert(src);
    if run.touched.is_subset(&run.acks) {
        return complete(state, ctx, id);
    }
    Ok(())
}

pub fn timeout(state: &mut ChainState, ctx: &mut TxCtx, id: Digest) -> Result<(), TxError> {
    abort(state, ctx, id, AbortReason::Timeout)
}

pub fn resend(state: &mut ChainState, ctx: &mut TxCtx, id: Digest) -> Result<(), TxError> {
    let h = ctx.env.height;
    let bridge = state.bridge.address;
    let Some(run) = state.bridge.baseline.runs.get_mut(&id) else { return Ok(()) };
    if run.status != InvStatus::Updating {
        return Ok(());
    }
    run.final_height = Some(h);
    let chains: Vec<u32> = run.touched.difference(&run.acks).copied().collect();
    for chain in chains {
        ctx.emit(bridge, Envelope { dest_chain: chain, payload: Payload::SegFinal { run: id, commit: true } })?;
    }
    Ok(())
}

pub fn due(state: &ChainState, env: &ExecEnv) -> Vec<SystemCall> {
    let h = env.height;
    let mut live: Vec<&BaselineRun> = state.bridge.baseline.runs.values().filter(|r| !r.status.is_terminal()).collect();
    live.sort_by_key(|r| r.seq);
    let mut calls = Vec::new();
    for run in live {
        let Some(rec) = state.bridge.dapps.get(&run.dapp) else { continue };
        let timeout = effective_timeout(env.params, rec);
        match run.status {
            InvStatus::Locking if h > run.deadline => calls.push(SystemCall::BaselineTimeout(run.id)),
            InvStatus::Updating if run.final_height.is_some_and(|f| h >= f + timeout) => {
                calls.push(SystemCall::BaselineResend(run.id))
            }
            _ => {}
        }
    }
    calls
}
