//! Discrete-event simulation of several chains, their relayers, one dApp
//! provider and any number of users.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge::{bridge_address, BridgeCall, DappRecord, Home};
use crate::calltree::{analyze, DappDescriptor, ServiceInfo};
use crate::hash::{encode, hash_parts, Address, Digest};
use crate::invocation::invocation_id;
use crate::ledger::{Chain, ChainConfig, HeaderBook, Transaction, TxStatus};
use crate::relayer::{Relayer, RelayerConfig};
use crate::runtime::{Call, ChainState, Deployed, ExecEnv, ProtocolParams};
use crate::vm::gas::GasSchedule;
use crate::vm::lsd::lsd_transform;
use crate::vm::program::{MonolithicContract, SlotKey};
use crate::wire::{AbortReason, Envelope, Outcome, Payload};

pub const USER_GAS_LIMIT: u64 = 10_000_000;
pub const DEFAULT_EXEC_GAS: u64 = 1_000_000;
const FUNDS: u64 = 1 << 50;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum SetupError {
    #[error("unknown chain {0}")]
    UnknownChain(u32),
    #[error("duplicate chain {0}")]
    DuplicateChain(u32),
    #[error("duplicate service `{0}`")]
    DuplicateService(String),
    #[error("unknown service `{0}`")]
    UnknownService(String),
    #[error("unknown dApp `{0}`")]
    UnknownDapp(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Integratex,
    Baseline,
}

impl Protocol {
    pub fn label(self) -> &'static str {
        match self {
            Protocol::Integratex => "integratex",
            Protocol::Baseline => "baseline",
        }
    }
}

/// A service as installed at genesis on its home chain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstalledService {
    pub id: String,
    pub chain: u32,
    pub contract: MonolithicContract,
    pub initial: BTreeMap<SlotKey, u64>,
    pub logic_addr: Address,
    pub state_addr: Address,
    pub logic_params: Vec<String>,
    pub logic_returns: Vec<String>,
    pub info: ServiceInfo,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestSpec {
    pub dapp: String,
    pub args: Vec<u64>,
    pub protocol: Protocol,
    pub at_ms: u64,
    pub exec_gas: u64,
    /// Submit only once this earlier request has finished.
    pub after: Option<usize>,
    /// Resubmit after a lock conflict once the holder finishes.
    pub retry: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Attempt {
    pub tx: Digest,
    pub id: Digest,
    pub submit_ms: u64,
    pub submit_height: u64,
    pub end_ms: Option<u64>,
    pub end_height: Option<u64>,
    pub outcome: Option<Outcome>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReqState {
    Scheduled,
    InFlight,
    WaitingFor(Digest),
    Committed,
    Aborted(AbortReason),
    Rejected(String),
}

impl ReqState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, ReqState::Committed | ReqState::Aborted(_) | ReqState::Rejected(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Request {
    pub spec: RequestSpec,
    pub user: Address,
    pub attempts: Vec<Attempt>,
    pub state: ReqState,
}

impl Request {
    pub fn first_submit_ms(&self) -> Option<u64> {
        self.attempts.first().map(|a| a.submit_ms)
    }

    pub fn end_ms(&self) -> Option<u64> {
        self.attempts.last().and_then(|a| a.end_ms)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProviderJob {
    pub dapp: String,
    pub at_ms: u64,
    pub request_tx: Option<Digest>,
    pub start_ms: Option<u64>,
    /// (service, height of the REGISTERED event) awaiting a verify call.
    pub registered: Vec<(String, u64)>,
    pub verify_txs: Vec<Digest>,
    pub done: Option<(bool, u64)>,
    pub rejected: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    Block(u32),
    Relay(usize),
    Provider(usize),
    Submit(usize),
}

impl Ev {
    fn priority(self) -> u8 {
        match self {
            Ev::Block(_) => 0,
            Ev::Relay(_) => 1,
            Ev::Provider(_) | Ev::Submit(_) => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RunEnd {
    Quiescent,
    TimeLimit,
}

pub struct World {
    pub chains: BTreeMap<u32, Chain>,
    pub headers: HeaderBook,
    pub gas: GasSchedule,
    pub params: ProtocolParams,
    pub relayers: Vec<Relayer>,
    pub provider: Address,
    pub services: BTreeMap<String, InstalledService>,
    pub dapps: BTreeMap<String, DappDescriptor>,
    pub jobs: Vec<ProviderJob>,
    pub requests: Vec<Request>,
    pub now: u64,
    queue: BinaryHeap<Reverse<(u64, u8, u64, Ev)>>,
    seq: u64,
    started: bool,
}

impl World {
    pub fn new(
        chains: Vec<ChainConfig>,
        gas: GasSchedule,
        params: ProtocolParams,
        relayers: Vec<RelayerConfig>,
        seed: u64,
    ) -> Result<World, SetupError> {
        if chains.is_empty() {
            return Err(SetupError::Invalid("at least one chain is required".into()));
        }
        let provider = Address::for_actor("provider");
        let mut map = BTreeMap::new();
        let mut headers = HeaderBook::default();
        for c in chains {
            c.validate().map_err(SetupError::Invalid)?;
            let id = c.chain_id;
            let mut state = ChainState::new(id);
            state.credit(provider, FUNDS);
            let chain = Chain::new(c.clone(), state);
            headers.add_chain(&c, chain.head().hash());
            if map.insert(id, chain).is_some() {
                return Err(SetupError::DuplicateChain(id));
            }
        }
        let min_bt = map.values().map(|c| c.config.block_time_ms).min().unwrap_or(1);
        let relayers: Vec<Relayer> = relayers.into_iter().map(|r| Relayer::new(r, (min_bt / 2).max(1), seed)).collect();
        for r in &relayers {
            for c in map.values_mut() {
                c.state.credit(r.addr, FUNDS);
            }
        }
        Ok(World {
            chains: map,
            headers,
            gas,
            params,
            relayers,
            provider,
            services: BTreeMap::new(),
            dapps: BTreeMap::new(),
            jobs: Vec::new(),
            requests: Vec::new(),
            now: 0,
            queue: BinaryHeap::new(),
            seq: 0,
            started: false,
        })
    }

    pub fn chain(&self, id: u32) -> &Chain {
        &self.chains[&id]
    }

    /// Installs a service at genesis: decouples the contract, deploys the logic
    /// program and state contract on `chain` and registers it there.
    pub fn add_service(
        &mut self,
        id: &str,
        chain: u32,
        contract: MonolithicContract,
        initial: BTreeMap<SlotKey, u64>,
        lock_size: u64,
    ) -> Result<(), SetupError> {
        if self.services.contains_key(id) {
            return Err(SetupError::DuplicateService(id.to_string()));
        }
        let provider = self.provider;
        let c = self.chains.get_mut(&chain).ok_or(SetupError::UnknownChain(chain))?;
        let d = lsd_transform(&contract).map_err(|e| SetupError::Invalid(e.to_string()))?;
        let st = &mut c.state;
        let nonce = st.account(&provider).nonce;
        let bytecode = d.logic.bytecode();
        let logic_addr =
            st.install(provider, nonce, Deployed::Logic { program: d.logic.clone(), bytecode, deployer: provider });
        let mut state = d.state;
        state.logic_addr = logic_addr;
        state.bridge_addr = bridge_address(chain);
        state.deployer = provider;
        state.lock_size = lock_size.max(1);
        for (k, v) in &initial {
            if state.slot_decl(k).is_none() {
                return Err(SetupError::Invalid(format!("service `{id}`: no slot {k}")));
            }
            state.set_value(k.clone(), *v);
        }
        let state_addr = st.install(provider, nonce + 1, Deployed::State(state));
        st.accounts.entry(provider).or_default().nonce = nonce + 2;
        st.bridge.register_home(id, logic_addr, state_addr, d.interface.clone());
        let info = ServiceInfo { id: id.to_string(), chain, interface: d.interface, lock_size: lock_size.max(1) };
        self.services.insert(
            id.to_string(),
            InstalledService {
                id: id.to_string(),
                chain,
                contract,
                initial,
                logic_addr,
                state_addr,
                logic_params: d.logic.params,
                logic_returns: d.logic.returns,
                info,
            },
        );
        Ok(())
    }

    /// Records the dApp on its execution chain.
    pub fn add_dapp(&mut self, desc: DappDescriptor) -> Result<(), SetupError> {
        let mut services = BTreeMap::new();
        let mut homes = BTreeMap::new();
        for call in &desc.calls {
            let s = self.services.get(&call.service).ok_or_else(|| SetupError::UnknownService(call.service.clone()))?;
            services.insert(s.id.clone(), s.info.clone());
            homes.insert(
                s.id.clone(),
                Home {
                    chain: s.chain,
                    logic_addr: s.logic_addr,
                    state_addr: s.state_addr,
                    logic_params: s.logic_params.clone(),
                    logic_returns: s.logic_returns.clone(),
                },
            );
        }
        let analysis = analyze(&desc, &services).map_err(|e| SetupError::Invalid(e.to_string()))?;
        let provider = self.provider;
        let exec = self.chains.get_mut(&desc.exec_chain).ok_or(SetupError::UnknownChain(desc.exec_chain))?;
        exec.state
            .bridge
            .dapps
            .insert(desc.name.clone(), DappRecord { descriptor: desc.clone(), analysis, services, homes, provider });
        self.dapps.insert(desc.name.clone(), desc);
        Ok(())
    }

    /// The provider asks for the dApp's remote logic to be cloned at `at_ms`.
    pub fn deploy_dapp(&mut self, dapp: &str, at_ms: u64) -> Result<usize, SetupError> {
        if !self.dapps.contains_key(dapp) {
            return Err(SetupError::UnknownDapp(dapp.to_string()));
        }
        self.jobs.push(ProviderJob {
            dapp: dapp.to_string(),
            at_ms,
            request_tx: None,
            start_ms: None,
            registered: Vec::new(),
            verify_txs: Vec::new(),
            done: None,
            rejected: None,
        });
        let i = self.jobs.len() - 1;
        if self.started {
            self.schedule(at_ms.max(self.now), Ev::Provider(i));
        }
        Ok(i)
    }

    pub fn add_request(&mut self, spec: RequestSpec) -> Result<usize, SetupError> {
        let desc = self.dapps.get(&spec.dapp).ok_or_else(|| SetupError::UnknownDapp(spec.dapp.clone()))?;
        let i = self.requests.len();
        let user = Address::for_actor(&format!("user:{i}"));
        self.chains
            .get_mut(&desc.exec_chain)
            .ok_or(SetupError::UnknownChain(desc.exec_chain))?
            .state
            .credit(user, FUNDS);
        if spec.after.is_some_and(|a| a >= i) {
            return Err(SetupError::Invalid(format!("request {i} waits on a later request")));
        }
        let after = spec.after;
        let at = spec.at_ms;
        self.requests.push(Request { spec, user, attempts: Vec::new(), state: ReqState::Scheduled });
        if self.started && after.is_none() {
            self.schedule(at.max(self.now), Ev::Submit(i));
        }
        Ok(i)
    }

    fn schedule(&mut self, at: u64, ev: Ev) {
        self.seq += 1;
        self.queue.push(Reverse((at, ev.priority(), self.seq, ev)));
    }

    fn start(&mut self) {
        if self.started {
            return;
        }
        self.started = true;
        let blocks: Vec<(u32, u64)> = self.chains.iter().map(|(id, c)| (*id, c.config.block_time_ms)).collect();
        for (id, bt) in blocks {
            self.schedule(bt, Ev::Block(id));
        }
        for i in 0..self.relayers.len() {
            let at = self.relayers[i].offset_ms;
            self.schedule(at, Ev::Relay(i));
        }
        for i in 0..self.jobs.len() {
            let at = self.jobs[i].at_ms;
            self.schedule(at, Ev::Provider(i));
        }
        for i in 0..self.requests.len() {
            if self.requests[i].spec.after.is_none() {
                let at = self.requests[i].spec.at_ms;
                self.schedule(at, Ev::Submit(i));
            }
        }
    }

    /// Runs until everything scheduled has finished and no lock is held, or
    /// simulated time passes `limit_ms`.
    pub fn run(&mut self, limit_ms: u64) -> RunEnd {
        self.start();
        while let Some(Reverse((t, _, _, ev))) = self.queue.pop() {
            if t > limit_ms {
                self.queue.push(Reverse((t, ev.priority(), 0, ev)));
                return RunEnd::TimeLimit;
            }
            self.now = t;
            match ev {
                Ev::Block(c) => {
                    self.produce(c);
                    let bt = self.chains[&c].config.block_time_ms;
                    self.schedule(t + bt, Ev::Block(c));
                    if self.is_quiescent() {
                        return RunEnd::Quiescent;
                    }
                }
                Ev::Relay(i) => {
                    self.relayers[i].poll(&mut self.chains);
                    let iv = self.relayers[i].interval_ms;
                    self.schedule(t + iv, Ev::Relay(i));
                }
                Ev::Provider(i) => self.provider_start(i),
                Ev::Submit(i) => self.submit(i),
            }
        }
        RunEnd::Quiescent
    }

    fn produce(&mut self, c: u32) {
        let env = ExecEnv {
            chain_id: c,
            height: 0,
            timestamp: self.now,
            headers: &self.headers,
            gas: &self.gas,
            params: &self.params,
        };
        let chain = self.chains.get_mut(&c).expect("scheduled chain exists");
        let hash = chain.produce_block(self.now, &env).hash();
        self.headers.push(c, hash);
        self.observe(c);
    }

    /// Agents read the new block on `c` and the finality of older ones.
    fn observe(&mut self, c: u32) {
        let chain = &self.chains[&c];
        let h = chain.height();
        let depth = chain.config.confirmation_depth;
        let mut events = Vec::new();
        for r in chain.receipts(h).unwrap_or_default() {
            for log in &r.logs {
                if log.emitter == bridge_address(c) {
                    if let Some(env) = Envelope::decode(log) {
                        events.push(env.payload);
                    }
                }
            }
        }
        for p in events {
            match p {
                Payload::InvDone { inv, outcome } => self.on_inv_done(inv, outcome, h),
                Payload::Registered { job, service, .. } => {
                    for j in self.jobs.iter_mut().filter(|j| j.dapp == job && j.done.is_none()) {
                        j.registered.push((service.clone(), h));
                    }
                }
                Payload::JobDone { job, verified } => {
                    let now = self.now;
                    for j in self.jobs.iter_mut().filter(|j| j.dapp == job && j.done.is_none()) {
                        j.done = Some((verified, now));
                    }
                }
                _ => {}
            }
        }
        self.check_rejections(c);
        // verify registrations once their event is final
        let mut verify = Vec::new();
        for (i, j) in self.jobs.iter_mut().enumerate() {
            let exec = self.dapps[&j.dapp].exec_chain;
            if exec != c {
                continue;
            }
            let (ready, later): (Vec<_>, Vec<_>) = j.registered.drain(..).partition(|(_, at)| h >= at + depth);
            j.registered = later;
            verify.extend(ready.into_iter().map(|(s, _)| (i, s)));
        }
        for (i, service) in verify {
            let dapp = self.jobs[i].dapp.clone();
            let exec = self.dapps[&dapp].exec_chain;
            let call = Call::Bridge(BridgeCall::Verify { job: dapp, service });
            if let Some(tx) = self.send(exec, self.provider, &call) {
                self.jobs[i].verify_txs.push(tx);
            }
        }
    }

    fn check_rejections(&mut self, c: u32) {
        let chain = &self.chains[&c];
        for r in self.requests.iter_mut().filter(|r| r.state == ReqState::InFlight) {
            let Some(a) = r.attempts.last() else { continue };
            if let Some(meta) = chain.tx_meta(&a.tx) {
                if meta.status == TxStatus::Revert {
                    r.state = ReqState::Rejected(meta.error.clone().unwrap_or_default());
                }
            }
        }
        for j in self.jobs.iter_mut().filter(|j| j.done.is_none() && j.rejected.is_none()) {
            if let Some(meta) = j.request_tx.and_then(|t| chain.tx_meta(&t)) {
                if meta.status == TxStatus::Revert {
                    j.rejected = meta.error.clone();
                }
            }
        }
    }

    fn on_inv_done(&mut self, inv: Digest, outcome: Outcome, height: u64) {
        let now = self.now;
        let mut finished = Vec::new();
        let mut retry_now = Vec::new();
        for (i, r) in self.requests.iter_mut().enumerate() {
            if r.state == ReqState::WaitingFor(inv) {
                retry_now.push(i);
                continue;
            }
            let Some(a) = r.attempts.last_mut() else { continue };
            if a.id != inv || a.outcome.is_some() {
                continue;
            }
            a.end_ms = Some(now);
            a.end_height = Some(height);
            a.outcome = Some(outcome.clone());
            match &outcome {
                Outcome::Committed => r.state = ReqState::Committed,
                Outcome::Aborted(AbortReason::LockConflict { holder }) if r.spec.retry && r.attempts.len() < 64 => {
                    match holder {
                        Some(hd) if !self_done(&self.chains, *hd) => r.state = ReqState::WaitingFor(*hd),
                        _ => retry_now.push(i),
                    }
                }
                Outcome::Aborted(reason) => r.state = ReqState::Aborted(reason.clone()),
            }
            if r.state.is_terminal() {
                finished.push(i);
            }
        }
        for i in retry_now {
            self.submit(i);
        }
        for i in finished {
            let next: Vec<usize> = (0..self.requests.len())
                .filter(|&k| self.requests[k].spec.after == Some(i) && self.requests[k].state == ReqState::Scheduled)
                .collect();
            for k in next {
                let at = self.requests[k].spec.at_ms.max(self.now);
                self.schedule(at, Ev::Submit(k));
            }
        }
    }

    fn provider_start(&mut self, i: usize) {
        let dapp = self.jobs[i].dapp.clone();
        let exec = self.dapps[&dapp].exec_chain;
        let call = Call::Bridge(BridgeCall::RequestClone { dapp });
        self.jobs[i].start_ms = Some(self.now);
        self.jobs[i].request_tx = self.send(exec, self.provider, &call);
    }

    fn submit(&mut self, i: usize) {
        let r = &self.requests[i];
        let exec = self.dapps[&r.spec.dapp].exec_chain;
        let call = Call::Bridge(BridgeCall::Start {
            dapp: r.spec.dapp.clone(),
            args: r.spec.args.clone(),
            exec_gas: r.spec.exec_gas,
            baseline: r.spec.protocol == Protocol::Baseline,
        });
        let user = r.user;
        let submit_height = self.chains[&exec].height();
        let Some(tx) = self.send(exec, user, &call) else {
            self.requests[i].state = ReqState::Rejected("submission refused".into());
            return;
        };
        let id = match self.requests[i].spec.protocol {
            Protocol::Integratex => invocation_id(&tx),
            Protocol::Baseline => crate::baseline::run_id(&tx),
        };
        let r = &mut self.requests[i];
        r.attempts.push(Attempt {
            tx,
            id,
            submit_ms: self.now,
            submit_height,
            end_ms: None,
            end_height: None,
            outcome: None,
        });
        r.state = ReqState::InFlight;
    }

    fn send(&mut self, chain: u32, sender: Address, call: &Call) -> Option<Digest> {
        let c = self.chains.get_mut(&chain)?;
        let tx = Transaction {
            sender,
            nonce: c.next_nonce(&sender),
            target: bridge_address(chain),
            calldata: encode(call),
            gas_limit: USER_GAS_LIMIT,
            fee: USER_GAS_LIMIT,
        };
        c.submit_tx(tx).ok()
    }

    /// Submits an arbitrary transaction now; it lands in the next block.
    pub fn send_call(&mut self, chain: u32, sender: Address, target: Address, call: &Call) -> Option<Digest> {
        let c = self.chains.get_mut(&chain)?;
        let tx = Transaction {
            sender,
            nonce: c.next_nonce(&sender),
            target,
            calldata: encode(call),
            gas_limit: USER_GAS_LIMIT,
            fee: 0,
        };
        c.submit_tx(tx).ok()
    }

    pub fn is_quiescent(&self) -> bool {
        self.requests.iter().all(|r| r.state.is_terminal())
            && self.jobs.iter().all(|j| j.done.is_some() || j.rejected.is_some())
            && self.chains.values().all(|c| {
                let b = &c.state.bridge;
                b.exec.invocations.values().all(|i| i.status.is_terminal())
                    && b.baseline.runs.values().all(|r| r.status.is_terminal())
                    && b.baseline.held.is_empty()
                    && c.state.states().all(|(_, s)| s.is_idle())
            })
    }

    /// Digest over every block hash of every chain.
    pub fn fingerprint(&self) -> Digest {
        let mut parts: Vec<Vec<u8>> = Vec::new();
        for (id, c) in &self.chains {
            parts.push(id.to_le_bytes().to_vec());
            for b in c.blocks() {
                parts.push(b.hash().0.to_vec());
            }
        }
        let refs: Vec<&[u8]> = parts.iter().map(Vec::as_slice).collect();
        hash_parts(&refs)
    }

    /// Gas per chain of every transaction tagged with `id`.
    pub fn gas_for(&self, id: &Digest) -> BTreeMap<u32, u64> {
        let mut out = BTreeMap::new();
        for (cid, c) in &self.chains {
            let g: u64 = c.tx_metas().filter(|(_, m)| m.tag.as_ref() == Some(id)).map(|(_, m)| m.gas_used).sum();
            if g > 0 {
                out.insert(*cid, g);
            }
        }
        out
    }

    /// Accepted cross-chain messages for `id`, as (destination chain, topic).
    pub fn messages_for(&self, id: &Digest) -> Vec<(u32, String)> {
        let mut out = Vec::new();
        for (cid, c) in &self.chains {
            for m in c.state.bridge.accepted.iter().filter(|m| m.invocation.as_ref() == Some(id)) {
                out.push((*cid, m.topic.clone()));
            }
        }
        out
    }
}

fn self_done(chains: &BTreeMap<u32, Chain>, id: Digest) -> bool {
    chains.values().any(|c| {
        c.state.bridge.exec.invocations.get(&id).is_some_and(|i| i.status.is_terminal())
            || c.state.bridge.baseline.runs.get(&id).is_some_and(|r| r.status.is_terminal())
    })
}
