//! Cross-chain deployment: clone requests, first-registration-wins cloning,
//! bytecode-hash verification against the original, reward/penalty and restart.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bridge::{compare_bytes, request_clone, BridgeError};
use crate::hash::{hash_parts, Address, Digest};
use crate::runtime::{ChainState, Deployed, TxCtx, TxError};
use crate::vm::program::LogicProgram;
use crate::wire::{CloneTarget, Envelope, Payload};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Prepared,
    CloneRequested,
    Registered,
    Verifying,
    Verified,
    Failed,
}

impl Phase {
    pub fn label(&self) -> &'static str {
        match self {
            Phase::Prepared => "prepared",
            Phase::CloneRequested => "clone_requested",
            Phase::Registered => "registered",
            Phase::Verifying => "verifying",
            Phase::Verified => "verified",
            Phase::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryState {
    pub phase: Phase,
    pub restarts: u32,
    pub clone_addr: Option<Address>,
    /// Another job is cloning this service; this entry copies its progress.
    pub follower: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobEvent {
    pub service: Option<String>,
    pub phase: Phase,
    pub height: u64,
    pub time_ms: u64,
    pub gas_used: u64,
    pub actor: Address,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentJob {
    pub job_id: String,
    pub exec_chain: u32,
    pub clone_list: Vec<String>,
    pub entries: BTreeMap<String, EntryState>,
    pub provider: Address,
    pub transcript: Vec<JobEvent>,
}

impl DeploymentJob {
    pub fn phase(&self) -> Phase {
        if self.entries.values().any(|e| e.phase == Phase::Failed) {
            return Phase::Failed;
        }
        self.entries.values().map(|e| e.phase).min().unwrap_or(Phase::Verified)
    }

    pub fn restart_count(&self) -> u32 {
        self.entries.values().map(|e| e.restarts).sum()
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.phase(), Phase::Verified | Phase::Failed)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeployState {
    pub jobs: BTreeMap<String, DeploymentJob>,
    /// Services with an outstanding clone request, and the job asking.
    pub pending: BTreeMap<String, String>,
    pub blacklist: BTreeSet<(String, Address)>,
}

pub fn job_tag(job: &str) -> Digest {
    hash_parts(&[b"job", job.as_bytes()])
}

fn record(state: &mut ChainState, ctx: &TxCtx, job: &str, service: Option<&str>, phase: Phase, gas: u64) {
    if let Some(j) = state.bridge.deploy.jobs.get_mut(job) {
        j.transcript.push(JobEvent {
            service: service.map(str::to_string),
            phase,
            height: ctx.env.height,
            time_ms: ctx.env.timestamp,
            gas_used: gas,
            actor: ctx.sender,
        });
    }
}

fn finish_if_done(state: &mut ChainState, ctx: &mut TxCtx, job: &str) -> Result<(), TxError> {
    let Some(j) = state.bridge.deploy.jobs.get(job) else { return Ok(()) };
    let phase = j.phase();
    if matches!(phase, Phase::Verified | Phase::Failed) {
        record(state, ctx, job, None, phase, 0);
        let dest = state.chain_id;
        ctx.emit(
            state.bridge.address,
            Envelope {
                dest_chain: dest,
                payload: Payload::JobDone { job: job.to_string(), verified: phase == Phase::Verified },
            },
        )?;
    }
    Ok(())
}

/// The job currently driving a clone of `service`, if any.
fn owner_of(state: &ChainState, service: &str) -> Option<String> {
    state
        .bridge
        .deploy
        .jobs
        .values()
        .find(|j| {
            j.entries.get(service).is_some_and(|e| !matches!(e.phase, Phase::Verified | Phase::Failed) && !e.follower)
        })
        .map(|j| j.job_id.clone())
}

/// Jobs waiting on another job's clone of `service` take over its phase.
fn propagate(state: &mut ChainState, ctx: &mut TxCtx, owner: &str, service: &str) -> Result<(), TxError> {
    let Some(src) = state.bridge.deploy.jobs.get(owner).and_then(|j| j.entries.get(service)).cloned() else {
        return Ok(());
    };
    let followers: Vec<String> = state
        .bridge
        .deploy
        .jobs
        .values()
        .filter(|j| j.job_id != owner && j.entries.get(service).is_some_and(|e| e.follower && e.phase != src.phase))
        .map(|j| j.job_id.clone())
        .collect();
    for f in followers {
        if let Some(e) = state.bridge.deploy.jobs.get_mut(&f).and_then(|j| j.entries.get_mut(service)) {
            e.phase = src.phase;
            e.clone_addr = src.clone_addr;
        }
        record(state, ctx, &f, Some(service), src.phase, 0);
        finish_if_done(state, ctx, &f)?;
    }
    Ok(())
}

/// Preparation: the provider asks for every not-yet-verified remote logic
/// program of a dApp to be cloned here. One request per invoked chain.
pub fn start_job(state: &mut ChainState, ctx: &mut TxCtx, dapp: &str) -> Result<(), TxError> {
    ctx.tag = Some(job_tag(dapp));
    let record_ = state.bridge.dapps.get(dapp).ok_or_else(|| BridgeError::UnknownDapp(dapp.to_string()))?;
    if ctx.sender != record_.provider {
        return Err(BridgeError::Unauthorized.into());
    }
    if state.bridge.deploy.jobs.get(dapp).is_some_and(|j| !j.is_terminal() || j.phase() == Phase::Verified) {
        return Err(BridgeError::BadArgs(format!("job `{dapp}` already exists")).into());
    }
    let clone_list: Vec<String> =
        record_.analysis.clone_list.iter().filter(|s| !state.bridge.is_verified(s)).cloned().collect();
    let mut by_chain: BTreeMap<u32, Vec<CloneTarget>> = BTreeMap::new();
    let mut entries = BTreeMap::new();
    for s in &clone_list {
        if let Some(owner) = owner_of(state, s) {
            let mut e = state.bridge.deploy.jobs[&owner].entries[s].clone();
            e.follower = true;
            e.restarts = 0;
            entries.insert(s.clone(), e);
            continue;
        }
        let home = &record_.homes[s];
        by_chain.entry(home.chain).or_default().push(CloneTarget { service: s.clone(), logic_addr: home.logic_addr });
        entries.insert(
            s.clone(),
            EntryState { phase: Phase::CloneRequested, restarts: 0, clone_addr: None, follower: false },
        );
    }
    let job = DeploymentJob {
        job_id: dapp.to_string(),
        exec_chain: state.chain_id,
        clone_list: clone_list.clone(),
        entries,
        provider: ctx.sender,
        transcript: Vec::new(),
    };
    state.bridge.deploy.jobs.insert(dapp.to_string(), job);
    record(state, ctx, dapp, None, Phase::Prepared, 0);
    for (chain, targets) in by_chain {
        for t in &targets {
            state.bridge.deploy.pending.insert(t.service.clone(), dapp.to_string());
            record(state, ctx, dapp, Some(&t.service), Phase::CloneRequested, 0);
        }
        ctx.charge(ctx.env.gas.storage_write * targets.len() as u64)?;
        request_clone(state, ctx, dapp, chain, targets)?;
    }
    finish_if_done(state, ctx, dapp)
}

/// A relayer's bundled deploy-and-register. Any failure reverts the deploy.
pub fn clone_deploy(
    state: &mut ChainState,
    ctx: &mut TxCtx,
    job: &str,
    service: &str,
    bytecode: Vec<u8>,
) -> Result<(), TxError> {
    ctx.tag = Some(job_tag(job));
    if state.bridge.deploy.pending.get(service).map(String::as_str) != Some(job) {
        if state.bridge.registry.get(service).is_some_and(|e| e.logic_addr.is_some()) {
            return Err(BridgeError::AlreadyRegistered(service.to_string()).into());
        }
        return Err(BridgeError::NoPendingRequest(service.to_string()).into());
    }
    if state.bridge.deploy.blacklist.contains(&(service.to_string(), ctx.sender)) {
        return Err(BridgeError::Blacklisted(service.to_string()).into());
    }
    let home = state
        .bridge
        .dapps
        .get(job)
        .and_then(|d| d.homes.get(service))
        .cloned()
        .ok_or_else(|| BridgeError::UnknownService(service.to_string()))?;
    let cost = ctx.env.gas.deploy_cost(bytecode.len(), 0);
    ctx.charge(cost)?;
    let program =
        LogicProgram::from_bytecode(service, &bytecode, home.logic_params.clone(), home.logic_returns.clone())?;
    let addr = state.install(ctx.sender, ctx.nonce, Deployed::Logic { program, bytecode, deployer: ctx.sender });
    state.bridge.reg_server(service, addr, (home.chain, home.logic_addr), ctx.sender)?;
    ctx.charge(ctx.env.gas.storage_write)?;
    state.bridge.deploy.pending.remove(service);
    state.bridge.relayer(ctx.sender).reimbursed_gas += cost;
    if let Some(e) = state.bridge.deploy.jobs.get_mut(job).and_then(|j| j.entries.get_mut(service)) {
        e.phase = Phase::Registered;
        e.clone_addr = Some(addr);
    }
    record(state, ctx, job, Some(service), Phase::Registered, ctx.meter.used());
    propagate(state, ctx, job, service)?;
    let dest = state.chain_id;
    ctx.emit(
        state.bridge.address,
        Envelope {
            dest_chain: dest,
            payload: Payload::Registered {
                job: job.to_string(),
                service: service.to_string(),
                logic_addr: addr,
                relayer: ctx.sender,
            },
        },
    )
}

/// Provider-initiated verification: publish the clone's bytecode hash to the
/// original's chain.
pub fn verify(state: &mut ChainState, ctx: &mut TxCtx, job: &str, service: &str) -> Result<(), TxError> {
    ctx.tag = Some(job_tag(job));
    let j = state.bridge.deploy.jobs.get(job).ok_or_else(|| BridgeError::UnknownDapp(job.to_string()))?;
    if ctx.sender != j.provider {
        return Err(BridgeError::Unauthorized.into());
    }
    let entry = j.entries.get(service).ok_or_else(|| BridgeError::UnknownService(service.to_string()))?;
    let clone_addr = match (entry.phase, entry.clone_addr) {
        (Phase::Registered, Some(a)) => a,
        _ => return Err(BridgeError::BadArgs(format!("`{service}` is not awaiting verification")).into()),
    };
    let code = state.getcode(&clone_addr).ok_or(BridgeError::NotFound(clone_addr))?;
    ctx.charge(ctx.env.gas.hash_cost(code.len()))?;
    let hash = crate::hash::sha256(&code);
    let home = state.bridge.dapps[job].homes[service].clone();
    if let Some(e) = state.bridge.deploy.jobs.get_mut(job).and_then(|j| j.entries.get_mut(service)) {
        e.phase = Phase::Verifying;
    }
    record(state, ctx, job, Some(service), Phase::Verifying, 0);
    propagate(state, ctx, job, service)?;
    ctx.emit(
        state.bridge.address,
        Envelope {
            dest_chain: home.chain,
            payload: Payload::VerifyOut {
                job: job.to_string(),
                service: service.to_string(),
                origin_addr: home.logic_addr,
                clone_addr,
                hash,
            },
        },
    )
}

#[allow(clippy::too_many_arguments)]
pub fn on_verify_out(
    state: &mut ChainState,
    ctx: &mut TxCtx,
    src: u32,
    job: String,
    service: String,
    origin_addr: Address,
    clone_addr: Address,
    hash: Digest,
) -> Result<(), TxError> {
    ctx.tag = Some(job_tag(&job));
    if let Some(code) = state.getcode(&origin_addr) {
        ctx.charge(ctx.env.gas.hash_cost(code.len()))?;
    }
    let ok = compare_bytes(state, &origin_addr, &hash).unwrap_or(false);
    ctx.emit(
        state.bridge.address,
        Envelope { dest_chain: src, payload: Payload::VerifyResult { job, service, clone_addr, ok } },
    )
}

pub fn on_verify_result(
    state: &mut ChainState,
    ctx: &mut TxCtx,
    job: &str,
    service: &str,
    clone_addr: Address,
    ok: bool,
) -> Result<(), TxError> {
    ctx.tag = Some(job_tag(job));
    let cap = ctx.env.params.restart_cap;
    let Some(entry) = state.bridge.deploy.jobs.get(job).and_then(|j| j.entries.get(service)) else {
        return Ok(());
    };
    if entry.phase != Phase::Verifying || entry.clone_addr != Some(clone_addr) {
        return Ok(());
    }
    let by = state.bridge.registry.get(service).and_then(|e| e.registered_by);
    ctx.charge(ctx.env.gas.storage_write)?;
    if ok {
        if let Some(e) = state.bridge.registry.get_mut(service) {
            e.verified = true;
        }
        if let Some(r) = by {
            state.bridge.relayer(r).rewards += 1;
        }
        if let Some(e) = state.bridge.deploy.jobs.get_mut(job).and_then(|j| j.entries.get_mut(service)) {
            e.phase = Phase::Verified;
        }
        record(state, ctx, job, Some(service), Phase::Verified, 0);
        propagate(state, ctx, job, service)?;
        return finish_if_done(state, ctx, job);
    }
    if let Some(r) = by {
        state.bridge.relayer(r).penalties += 1;
        state.bridge.deploy.blacklist.insert((service.to_string(), r));
    }
    if let Some(e) = state.bridge.registry.get_mut(service) {
        e.logic_addr = None;
        e.registered_by = None;
        e.verified = false;
    }
    let e = state.bridge.deploy.jobs.get_mut(job).and_then(|j| j.entries.get_mut(service)).expect("checked above");
    e.restarts += 1;
    e.clone_addr = None;
    if e.restarts > cap {
        e.phase = Phase::Failed;
        record(state, ctx, job, Some(service), Phase::Failed, 0);
        propagate(state, ctx, job, service)?;
        return finish_if_done(state, ctx, job);
    }
    e.phase = Phase::CloneRequested;
    state.bridge.deploy.pending.insert(service.to_string(), job.to_string());
    record(state, ctx, job, Some(service), Phase::CloneRequested, 0);
    propagate(state, ctx, job, service)?;
    let home = state.bridge.dapps[job].homes[service].clone();
    request_clone(
        state,
        ctx,
        job,
        home.chain,
        vec![CloneTarget { service: service.to_string(), logic_addr: home.logic_addr }],
    )
}
