//! Single-chain reference: every service as its original contract in one
//! flat state, and an audit of a finished world against it.

use std::collections::BTreeMap;

use crate::calltree::Analysis;
use crate::hash::Digest;
use crate::invocation::InvStatus;
use crate::vm::gas::{GasMeter, GasSchedule};
use crate::vm::interp::{run, VmError};
use crate::vm::program::{MonolithicContract, SlotKey, StorageHost};
use crate::world::World;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Oracle {
    pub contracts: BTreeMap<String, MonolithicContract>,
    pub storage: BTreeMap<String, BTreeMap<SlotKey, u64>>,
}

impl Oracle {
    pub fn new(services: impl IntoIterator<Item = (String, MonolithicContract, BTreeMap<SlotKey, u64>)>) -> Self {
        let mut contracts = BTreeMap::new();
        let mut storage = BTreeMap::new();
        for (id, c, s) in services {
            contracts.insert(id.clone(), c);
            storage.insert(id, s);
        }
        Oracle { contracts, storage }
    }

    pub fn from_world(world: &World) -> Self {
        Oracle::new(world.services.values().map(|s| (s.id.clone(), s.contract.clone(), s.initial.clone())))
    }

    /// Runs the whole call tree; all or nothing. Returns each call's results.
    pub fn apply(&mut self, analysis: &Analysis, inputs: &[u64]) -> Result<Vec<Vec<u64>>, String> {
        let gas = GasSchedule::default();
        let mut scratch = self.storage.clone();
        let mut outputs: Vec<Option<Vec<u64>>> = vec![None; analysis.calls.len()];
        for (i, call) in analysis.calls.iter().enumerate() {
            let args = call
                .args
                .iter()
                .map(|a| a.eval(inputs, &outputs))
                .collect::<Option<Vec<u64>>>()
                .ok_or_else(|| format!("call {i}: argument unavailable"))?;
            let c = self.contracts.get(&call.service).ok_or_else(|| format!("unknown service {}", call.service))?;
            let fname = self.function_for(&call.service)?;
            let f = c.function(&fname).ok_or_else(|| format!("{} has no {fname}", call.service))?;
            let st = scratch.entry(call.service.clone()).or_default();
            let mut host = StorageHost {
                slots: &c.slots,
                storage: st,
                call: |_: &[u64], _: &mut GasMeter| Err(VmError::NoStorage),
            };
            let out = run(&f.code, &args, &mut host, &gas, &mut GasMeter::unlimited()).map_err(|e| e.to_string())?;
            outputs[i] = Some(out);
        }
        self.storage = scratch;
        Ok(outputs.into_iter().map(Option::unwrap_or_default).collect())
    }

    fn function_for(&self, service: &str) -> Result<String, String> {
        let c = &self.contracts[service];
        let mut writers = c.functions.iter().filter(|f| !f.view);
        match (writers.next(), writers.next()) {
            (Some(f), None) => Ok(f.name.clone()),
            _ => Err(format!("{service} needs exactly one state-changing function")),
        }
    }

    /// Non-zero values of the contract's own slots.
    pub fn values(&self, service: &str) -> BTreeMap<SlotKey, u64> {
        self.storage.get(service).map(|m| nonzero(m, &self.contracts[service])).unwrap_or_default()
    }
}

fn nonzero(m: &BTreeMap<SlotKey, u64>, c: &MonolithicContract) -> BTreeMap<SlotKey, u64> {
    m.iter()
        .filter(|(k, v)| **v != 0 && c.slots.iter().any(|s| s.name == k.name))
        .map(|(k, v)| (k.clone(), *v))
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuditReport {
    pub committed: usize,
    pub aborted: usize,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// A finished invocation or baseline run, as the audit sees it.
struct Finished {
    key: (u64, u32, usize),
    dapp: String,
    args: Vec<u64>,
    outputs: Option<Vec<Vec<u64>>>,
    id: Digest,
}

/// Replays every committed invocation in commit order through the oracle and
/// compares against all state contracts; also checks nothing is left half done.
pub fn audit(world: &World) -> AuditReport {
    let mut report = AuditReport::default();
    let mut commits = Vec::new();
    for (cid, chain) in &world.chains {
        let b = &chain.state.bridge;
        for inv in b.exec.invocations.values() {
            match inv.status {
                InvStatus::Committed => report.committed += 1,
                InvStatus::Aborted => report.aborted += 1,
                s => report.violations.push(format!("invocation {} stuck in {}", inv.id.short(), s.label())),
            }
            if inv.status == InvStatus::Committed && inv.parts.iter().any(|p| !p.acked) {
                report.violations.push(format!("invocation {} committed without every ack", inv.id.short()));
            }
        }
        for run in b.baseline.runs.values() {
            match run.status {
                InvStatus::Committed => report.committed += 1,
                InvStatus::Aborted => report.aborted += 1,
                s => report.violations.push(format!("baseline run {} stuck in {}", run.id.short(), s.label())),
            }
        }
        for (idx, id) in b.exec.commit_order.iter().enumerate() {
            if let Some(inv) = b.exec.invocations.get(id) {
                let h = inv.exec_height.unwrap_or(0);
                let t = chain.block(h).map(|bl| bl.timestamp).unwrap_or(0);
                commits.push(Finished {
                    key: (t, *cid, idx),
                    dapp: inv.dapp.clone(),
                    args: inv.args.clone(),
                    outputs: Some(inv.outputs.iter().map(|o| o.clone().unwrap_or_default()).collect()),
                    id: *id,
                });
            } else if let Some(run) = b.baseline.runs.get(id) {
                let h = run.commit_height.unwrap_or(0);
                let t = chain.block(h).map(|bl| bl.timestamp).unwrap_or(0);
                commits.push(Finished {
                    key: (t, *cid, idx),
                    dapp: run.dapp.clone(),
                    args: run.args.clone(),
                    outputs: Some(run.outputs.iter().map(|o| o.clone().unwrap_or_default()).collect()),
                    id: *id,
                });
            }
        }
        if !b.baseline.held.is_empty() {
            report.violations.push(format!("chain {cid}: baseline contract locks still held"));
        }
        for (inv, addr, why) in &b.exec.update_failures {
            report.violations.push(format!("chain {cid}: update for {} at {addr} failed: {why}", inv.short()));
        }
        for (addr, s) in chain.state.states() {
            if !s.is_idle() {
                report.violations.push(format!("chain {cid}: {} at {addr} still locked", s.name));
            }
            if !s.conservation_holds() {
                report.violations.push(format!("chain {cid}: {} lock accounting broken", s.name));
            }
        }
    }
    commits.sort_by_key(|c| c.key);
    let mut oracle = Oracle::from_world(world);
    for c in &commits {
        let Some(rec) =
            world.dapps.get(&c.dapp).and_then(|d| world.chains[&d.exec_chain].state.bridge.dapps.get(&d.name))
        else {
            report.violations.push(format!("{}: unknown dApp {}", c.id.short(), c.dapp));
            continue;
        };
        match oracle.apply(&rec.analysis, &c.args) {
            Ok(out) => {
                if c.outputs.as_ref().is_some_and(|o| o != &out) {
                    report.violations.push(format!("{}: results differ from the oracle", c.id.short()));
                }
            }
            Err(e) => report.violations.push(format!("{}: committed but the oracle fails: {e}", c.id.short())),
        }
    }
    for s in world.services.values() {
        let Some(st) = world.chains[&s.chain].state.state(&s.state_addr) else {
            report.violations.push(format!("{}: state contract missing", s.id));
            continue;
        };
        let got = nonzero(&st.storage, &s.contract);
        let want = oracle.values(&s.id);
        if got != want {
            report.violations.push(format!("{}: state {:?} but the oracle has {:?}", s.id, got, want));
        }
    }
    report
}
