#![allow(dead_code)]

use xcsim::calltree::DappDescriptor;
use xcsim::hash::Digest;
use xcsim::metrics::{Report, SummaryRow};
use xcsim::relayer::{Behavior, RelayerConfig};
use xcsim::runner::{execute_all, RunOutcome};
use xcsim::scenario::{
    builtin, random_tree, three_chains, Arrival, Overrides, RunPlan, Scenario, ServiceSpec, WorkloadSpec,
};
use xcsim::vm::gas::GasSchedule;
use xcsim::vm::program::SlotKey;
use xcsim::world::{Attempt, Protocol, World};

pub fn threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(2)
}

pub fn run_all(plans: &[RunPlan]) -> Vec<RunOutcome> {
    execute_all(plans, threads()).expect("plans set up")
}

pub fn plans(name: &str, o: &Overrides) -> Vec<RunPlan> {
    builtin(name, o).expect("builtin exists").plans
}

pub fn report(outcomes: &[RunOutcome]) -> Report {
    Report::from_outcomes(outcomes, &[])
}

pub fn summary<'a>(r: &'a Report, variant: &str, protocol: Protocol) -> &'a SummaryRow {
    r.summary
        .iter()
        .find(|s| s.variant == variant && s.protocol == protocol.label())
        .unwrap_or_else(|| panic!("no summary for {variant}/{}", protocol.label()))
}

pub struct RandomCase {
    pub plan: RunPlan,
    pub services: Vec<ServiceSpec>,
    pub dapp: DappDescriptor,
    pub args: Vec<u64>,
}

/// One request against a random inventory call tree.
pub fn random_case(seed: u64, max_nodes: usize, protocol: Protocol) -> RandomCase {
    let (services, dapp, args) = random_tree(seed, max_nodes);
    let s = Scenario {
        name: "random".into(),
        seed,
        protocols: vec![protocol],
        chains: three_chains(5000),
        gas: GasSchedule::default(),
        params: Default::default(),
        relayers: vec![RelayerConfig::new("r0", Behavior::Honest)],
        services: services.clone(),
        dapps: vec![dapp.clone()],
        workload: vec![WorkloadSpec {
            dapp: dapp.name.clone(),
            args: args.clone(),
            count: 1,
            at_ms: 0,
            spacing_ms: 0,
            arrival: Arrival::Concurrent,
            retry: false,
            exec_gas: None,
        }],
        variants: Vec::new(),
        asserts: Vec::new(),
        limit_ms: 24 * 3600 * 1000,
        base_dir: None,
    };
    let plan = s.expand(&Overrides::default()).expect("random scenario expands").remove(0);
    RandomCase { plan, services, dapp, args }
}

pub fn rounds(a: &Attempt) -> Option<u64> {
    a.end_height.map(|e| e - a.submit_height)
}

pub fn latency(a: &Attempt) -> Option<u64> {
    a.end_ms.map(|e| e - a.submit_ms)
}

/// Least-squares line through the points: (slope, intercept, r squared).
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points.iter().map(|(x, y)| (y - (slope * x + intercept)).powi(2)).sum();
    let ss_tot: f64 = points.iter().map(|(_, y)| (y - my).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    (slope, intercept, r2)
}

pub fn slot(world: &World, service: &str, name: &str) -> u64 {
    let s = &world.services[service];
    let st = world.chains[&s.chain].state.state(&s.state_addr).expect("state contract");
    st.storage.get(&SlotKey::scalar(name)).copied().unwrap_or(0)
}

/// Accepted cross-chain messages for an invocation, counted by topic.
pub fn topic_count(world: &World, id: &Digest, topic: &str) -> usize {
    world.messages_for(id).iter().filter(|(_, t)| t == topic).count()
}

/// Reference Merkle root built straight from SHA-256: leaves `H(0 || leaf)`,
/// nodes `H(1 || l || r)`, an odd last node promoted as is, `H("")` when empty.
pub fn oracle_root(leaves: &[Vec<u8>]) -> [u8; 32] {
    use sha2::{Digest as _, Sha256};
    let h = |parts: &[&[u8]]| -> [u8; 32] {
        let mut s = Sha256::new();
        for p in parts {
            s.update(p);
        }
        s.finalize().into()
    };
    if leaves.is_empty() {
        return h(&[]);
    }
    let mut level: Vec<[u8; 32]> = leaves.iter().map(|l| h(&[&[0u8], l])).collect();
    while level.len() > 1 {
        level = level.chunks(2).map(|c| if c.len() == 2 { h(&[&[1u8], &c[0], &c[1]]) } else { c[0] }).collect();
    }
    level[0]
}
