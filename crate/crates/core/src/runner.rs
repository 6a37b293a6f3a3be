//! Builds worlds from run plans and drives them to completion.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::hash::{encode, Address};
use crate::ledger::{ChainConfig, HeaderBook, Transaction, TxStatus};
use crate::metrics::Report;
use crate::oracle::{audit, AuditReport};
use crate::runtime::{execute_tx, Artifact, Call, ChainState, ExecEnv};
use crate::scenario::{parse_slot_key, Arrival, Assertion, Op, RunPlan, Suite};
use crate::vm::gas::GasSchedule;
use crate::vm::lsd::lsd_transform;
use crate::vm::program::MonolithicContract;
use crate::world::{Protocol, RequestSpec, RunEnd, SetupError, World, USER_GAS_LIMIT};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{scenario}/{variant}: {source}")]
    Setup { scenario: String, variant: String, source: SetupError },
}

/// Deployment gas of one service, whole contract against logic only.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LsdRow {
    pub service: String,
    pub monolithic_gas: u64,
    pub decoupled_gas: u64,
}

impl LsdRow {
    pub fn saving_pct(&self) -> f64 {
        if self.monolithic_gas == 0 {
            return 0.0;
        }
        100.0 * (self.monolithic_gas as f64 - self.decoupled_gas as f64) / self.monolithic_gas as f64
    }
}

pub struct RunOutcome {
    pub plan: RunPlan,
    pub world: World,
    pub end: RunEnd,
    /// When the workload started (after deployment, if any).
    pub workload_start_ms: u64,
    pub audit: AuditReport,
    pub lsd: Vec<LsdRow>,
}

pub fn build_world(plan: &RunPlan) -> Result<World, SetupError> {
    let mut world =
        World::new(plan.chains.clone(), plan.gas.clone(), plan.params.clone(), plan.relayers.clone(), plan.seed)?;
    for (spec, contract) in &plan.services {
        let mut initial = BTreeMap::new();
        for (k, v) in &spec.storage {
            let key = parse_slot_key(k).ok_or_else(|| SetupError::Invalid(format!("bad slot `{k}`")))?;
            initial.insert(key, *v);
        }
        world.add_service(&spec.id, spec.chain, contract.clone(), initial, spec.lock_size)?;
    }
    for d in &plan.dapps {
        world.add_dapp(d.clone())?;
    }
    Ok(world)
}

/// Runs the plan: deployment first (integrated protocol only), then the workload.
pub fn execute(plan: &RunPlan) -> Result<RunOutcome, RunError> {
    let setup = |source| RunError::Setup { scenario: plan.scenario.clone(), variant: plan.variant.clone(), source };
    let mut world = build_world(plan).map_err(setup)?;
    let mut end = RunEnd::Quiescent;
    if plan.protocol == Protocol::Integratex {
        for d in &plan.dapps {
            world.deploy_dapp(&d.name, 0).map_err(setup)?;
        }
        end = world.run(plan.limit_ms);
    }
    let start = world.now;
    let mut prev: Option<usize> = None;
    for w in &plan.workload {
        for i in 0..w.count {
            let sequential = w.arrival == Arrival::Sequential && i > 0;
            let spec = RequestSpec {
                dapp: w.dapp.clone(),
                args: w.args.clone(),
                protocol: plan.protocol,
                at_ms: start + w.at_ms + w.spacing_ms * i as u64,
                exec_gas: w.exec_gas(),
                after: if sequential { prev } else { None },
                retry: w.retry,
            };
            prev = Some(world.add_request(spec).map_err(setup)?);
        }
    }
    if end == RunEnd::Quiescent && !plan.workload.is_empty() {
        end = world.run(plan.limit_ms);
    }
    let report = audit(&world);
    let lsd = if plan.lsd_probe {
        lsd_probe(&plan.gas, &plan.services.iter().map(|(s, c)| (s.id.clone(), c.clone())).collect::<Vec<_>>())
    } else {
        Vec::new()
    };
    Ok(RunOutcome { plan: plan.clone(), world, end, workload_start_ms: start, audit: report, lsd })
}

/// Runs plans on up to `threads` worker threads; results keep plan order.
pub fn execute_all(plans: &[RunPlan], threads: usize) -> Result<Vec<RunOutcome>, RunError> {
    let threads = threads.clamp(1, plans.len().max(1));
    if threads == 1 {
        return plans.iter().map(execute).collect();
    }
    let mut slots: Vec<Option<Result<RunOutcome, RunError>>> = (0..plans.len()).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        let workers: Vec<_> = (0..threads)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        if i >= plans.len() {
                            break;
                        }
                        done.push((i, execute(&plans[i])));
                    }
                    done
                })
            })
            .collect();
        for w in workers {
            for (i, r) in w.join().expect("worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every plan ran")).collect()
}

/// Runs a whole suite. Every suite also checks that the atomicity audit is clean.
pub fn run_suite(suite: &Suite, threads: usize) -> Result<(Vec<RunOutcome>, Report), RunError> {
    let outcomes = execute_all(&suite.plans, threads)?;
    let mut asserts = vec![Assertion { metric: "audit_violations".into(), op: Op::Eq, value: 0.0, variant: None }];
    asserts.extend(suite.asserts.iter().filter(|a| a.metric != "audit_violations").cloned());
    let report = Report::from_outcomes(&outcomes, &asserts);
    Ok((outcomes, report))
}

/// Deploys each contract whole and as its decoupled logic on a scratch chain
/// and reads the gas off the receipts.
pub fn lsd_probe(gas: &GasSchedule, services: &[(String, MonolithicContract)]) -> Vec<LsdRow> {
    let config = ChainConfig::new(1);
    let mut state = ChainState::new(1);
    let deployer = Address::for_actor("lsd-probe");
    state.credit(deployer, 1 << 50);
    let mut headers = HeaderBook::default();
    headers.add_chain(&config, Default::default());
    let params = Default::default();
    let env = ExecEnv { chain_id: 1, height: 1, timestamp: 0, headers: &headers, gas, params: &params };
    let deploy = |state: &mut ChainState, artifact: Artifact| {
        let tx = Transaction {
            sender: deployer,
            nonce: state.account(&deployer).nonce,
            target: Address::default(),
            calldata: encode(&Call::Deploy(artifact)),
            gas_limit: USER_GAS_LIMIT,
            fee: 0,
        };
        let out = execute_tx(state, &tx, &env);
        (out.status == TxStatus::Success).then_some(out.gas_used)
    };
    let mut rows = Vec::new();
    let mut seen = Vec::new();
    for (id, c) in services {
        if seen.contains(&c.name) {
            continue;
        }
        seen.push(c.name.clone());
        let Ok(d) = lsd_transform(c) else { continue };
        let mono = deploy(&mut state, Artifact::Contract(c.clone()));
        let logic = deploy(
            &mut state,
            Artifact::Logic {
                name: d.logic.name.clone(),
                bytecode: d.logic.bytecode(),
                params: d.logic.params.clone(),
                returns: d.logic.returns.clone(),
            },
        );
        if let (Some(m), Some(l)) = (mono, logic) {
            rows.push(LsdRow { service: id.clone(), monolithic_gas: m, decoupled_gas: l });
        }
    }
    rows
}
