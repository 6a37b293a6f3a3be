//! Acceptance run: one pass/fail line per criterion.
//!
//! `cargo test --test acceptance` runs everything; pass criterion
//! numbers after `--` to run a subset.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use xcsim::bridge::BridgeCall;
use xcsim::deploy::Phase;
use xcsim::ledger::TxStatus;
use xcsim::relayer::{Behavior, RelayerConfig};
use xcsim::runner::RunOutcome;
use xcsim::runtime::Call;
use xcsim::scenario::{train_hotel_args, Overrides, RunPlan, WorkloadSpec};
use xcsim::wire::{message_id, CrossChainMessage, Envelope, LOCK_REQ, RELAYED, UPDATE_REQ};
use xcsim::world::{Protocol, ReqState, RunEnd, World};

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Stage count of an uncontended integrated invocation: the start
/// transaction, four relayed hops (lock out and back, update out and back)
/// and the execution block. A hop is one block to finalize the event plus
/// one to include the relay.
fn integrated_rounds_oracle(confirmation_depth: u64) -> u64 {
    let hop = confirmation_depth + 1;
    1 + 4 * hop + 1
}

/// Sequential execution: the start transaction, a call/result pair of hops
/// per remote segment, then a final/ack pair.
fn baseline_rounds_oracle(confirmation_depth: u64, remote_segments: u64) -> u64 {
    let hop = confirmation_depth + 1;
    1 + 2 * hop * remote_segments + 2 * hop
}

/// Golden value of the integrated stage count under the default chains.
const FROZEN_R: u64 = 10;

fn c1_aggregation_law() -> Verdict {
    let cases: Vec<RandomCase> = (0..120).map(|s| random_case(s, 8, Protocol::Integratex)).collect();
    let outcomes = run_all(&cases.iter().map(|c| c.plan.clone()).collect::<Vec<_>>());
    let (mut checked, mut spread) = (0, 0);
    for (case, out) in cases.iter().zip(&outcomes) {
        let chains: BTreeSet<u32> = case
            .dapp
            .calls
            .iter()
            .map(|c| case.services.iter().find(|s| s.id == c.service).expect("service").chain)
            .filter(|c| *c != case.dapp.exec_chain)
            .collect();
        if chains.len() > 1 {
            spread += 1;
        }
        for req in &out.world.requests {
            for a in &req.attempts {
                let lock = topic_count(&out.world, &a.id, LOCK_REQ);
                let update = topic_count(&out.world, &a.id, UPDATE_REQ);
                ensure(lock == chains.len() && update == chains.len(), || {
                    format!(
                        "seed {}: {} chains, {lock} lock and {update} update messages",
                        case.plan.seed,
                        chains.len()
                    )
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} invocations over {} random trees, {spread} spanning two invoked chains", cases.len()))
}

fn c2_round_constancy() -> Verdict {
    let plans = plans("depth-sweep", &Overrides::default());
    let depth = plans[0].chains[0].confirmation_depth;
    let r = integrated_rounds_oracle(depth);
    ensure(r == FROZEN_R, || format!("oracle gives {r}, frozen value is {FROZEN_R}"))?;
    let outcomes = run_all(&plans);
    let mut baseline = Vec::new();
    for o in &outcomes {
        let d = o.plan.dapps[0].calls.len() as u64;
        for req in &o.world.requests {
            ensure(req.state == ReqState::Committed, || format!("d={d} {:?}: {:?}", o.plan.protocol, req.state))?;
            let got = rounds(req.attempts.last().expect("attempt")).expect("finished");
            match o.plan.protocol {
                Protocol::Integratex => ensure(got == FROZEN_R, || format!("integrated d={d}: {got} rounds"))?,
                Protocol::Baseline => {
                    let want = baseline_rounds_oracle(depth, d);
                    ensure(got == want, || format!("baseline d={d}: {got} rounds, expected {want}"))?;
                    baseline.push((d as f64, got as f64));
                }
            }
        }
    }
    let (slope, _, r2) = linear_fit(&baseline);
    ensure(slope > 0.0 && r2 > 0.999_999, || format!("baseline slope {slope}, r2 {r2}"))?;
    Ok(format!("R = {FROZEN_R} for d = 1..6; baseline = {slope:.0}d + {}", baseline_rounds_oracle(depth, 0)))
}

fn c3_exactly_once_clone() -> Verdict {
    let base = plans("deploy-phase", &Overrides::default()).remove(0);
    let plans: Vec<RunPlan> = (0..100)
        .map(|seed| RunPlan {
            seed,
            relayers: (0..4).map(|i| RelayerConfig::new(&format!("r{i}"), Behavior::Honest)).collect(),
            ..base.clone()
        })
        .collect();
    let outcomes = run_all(&plans);
    let mut lost = 0;
    for o in &outcomes {
        let seed = o.plan.seed;
        for j in &o.world.jobs {
            ensure(matches!(j.done, Some((true, _))), || format!("seed {seed}: job {} ended {:?}", j.dapp, j.done))?;
        }
        let exec = o.plan.dapps[0].exec_chain;
        let chain = o.world.chain(exec);
        let mut cloned = 0;
        for job in chain.state.bridge.deploy.jobs.values() {
            for service in &job.clone_list {
                let count = |p: Phase| {
                    job.transcript
                        .iter()
                        .filter(|e| e.service.as_deref() == Some(service.as_str()) && e.phase == p)
                        .count()
                };
                ensure(count(Phase::Registered) == 1 && count(Phase::Verified) == 1, || {
                    format!(
                        "seed {seed}: {service} registered {}x, verified {}x",
                        count(Phase::Registered),
                        count(Phase::Verified)
                    )
                })?;
                let entry = &chain.state.bridge.registry[service];
                ensure(entry.verified && entry.logic_addr.is_some(), || {
                    format!("seed {seed}: {service} not verified")
                })?;
                cloned += 1;
            }
        }
        let deploys: Vec<_> = chain.tx_metas().filter(|(_, m)| m.op == "clone_deploy").collect();
        let ok = deploys.iter().filter(|(_, m)| m.status == TxStatus::Success).count();
        ensure(ok == cloned, || format!("seed {seed}: {ok} clones registered for {cloned} services"))?;
        lost += deploys.len() - ok;
    }
    Ok(format!("100 seeds x 4 relayers, {lost} losing clone attempts reverted"))
}

fn c4_train_hotel() -> Verdict {
    let outcomes = run_all(&plans("train-hotel", &Overrides::default()));
    let r = report(&outcomes);
    let ix = summary(&r, "default", Protocol::Integratex).mean_latency_ms;
    let bl = summary(&r, "default", Protocol::Baseline).mean_latency_ms;
    ensure(ix <= 0.6 * bl, || format!("integrated {ix} ms vs baseline {bl} ms"))?;
    let train = outcomes[0].plan.services.iter().find(|(s, _)| s.id == "train").expect("train").0.chain;
    let transfers = |p: Protocol| {
        r.chains.iter().find(|c| c.chain == train && c.protocol == p.label()).map(|c| c.transfer_rounds).unwrap_or(0)
    };
    let (ti, tb) = (transfers(Protocol::Integratex), transfers(Protocol::Baseline));
    ensure(ti == 1 && tb >= 2, || format!("train chain transfer rounds: integrated {ti}, baseline {tb}"))?;
    Ok(format!("{:.1}% latency reduction; train chain transfers {ti} vs {tb}", 100.0 * (1.0 - ix / bl)))
}

fn c5_block_time_sweep() -> Verdict {
    let outcomes = run_all(&plans("blocktime-sweep", &Overrides::default()));
    let r = report(&outcomes);
    let mut fits = Vec::new();
    for p in [Protocol::Integratex, Protocol::Baseline] {
        let pts: Vec<(f64, f64)> = [2000, 5000, 8000, 12000]
            .iter()
            .map(|bt| (*bt as f64, summary(&r, &format!("bt={bt}"), p).mean_latency_ms))
            .collect();
        let (_, _, r2) = linear_fit(&pts);
        ensure(r2 >= 0.99, || format!("{} r2 = {r2}", p.label()))?;
        fits.push(r2);
    }
    for bt in [2000, 5000, 8000, 12000] {
        let v = format!("bt={bt}");
        let (ix, bl) = (
            summary(&r, &v, Protocol::Integratex).mean_latency_ms,
            summary(&r, &v, Protocol::Baseline).mean_latency_ms,
        );
        ensure(ix < bl, || format!("{v}: integrated {ix} >= baseline {bl}"))?;
    }
    Ok(format!("r2 {:.4} / {:.4}", fits[0], fits[1]))
}

fn c6_depth_four() -> Verdict {
    let o = Overrides { depth: Some(4), ..Default::default() };
    let mut all = plans("depth-sweep", &o);
    all.extend(plans("ta-ablation", &o));
    let r = report(&run_all(&all));
    let ix = summary(&r, "d=4", Protocol::Integratex);
    let bl = summary(&r, "d=4", Protocol::Baseline);
    let reduction = 1.0 - ix.mean_latency_ms / bl.mean_latency_ms;
    let tput = ix.throughput_per_s / bl.throughput_per_s;
    let on = summary(&r, "d=4/ta=on", Protocol::Integratex).total_gas as f64;
    let off = summary(&r, "d=4/ta=off", Protocol::Integratex).total_gas as f64;
    let saving = 1.0 - on / off;
    ensure(reduction >= 0.5, || format!("latency reduction {:.1}%", 100.0 * reduction))?;
    ensure(tput >= 2.0, || format!("throughput ratio {tput:.2}"))?;
    ensure(saving >= 0.10, || format!("aggregation saves {:.1}% gas", 100.0 * saving))?;
    Ok(format!("reduction {:.1}%, throughput x{tput:.2}, TA saves {:.1}% gas", 100.0 * reduction, 100.0 * saving))
}

fn c7_fgsl() -> Verdict {
    let mut all = plans("concurrency-sweep", &Overrides { concurrency: Some(1), ..Default::default() });
    all.extend(plans("concurrency-sweep", &Overrides { concurrency: Some(6), ..Default::default() }));
    let r = report(&run_all(&all));
    let lat = |v: &str| summary(&r, v, Protocol::Integratex).mean_latency_ms;
    let on = lat("k=6/fgsl=on") / lat("k=1/fgsl=on");
    let off = lat("k=6/fgsl=off") / lat("k=1/fgsl=off");
    ensure(on <= 1.2 && off >= 3.0, || format!("FGSL on x{on:.2}, off x{off:.2}"))?;
    Ok(format!("6 concurrent: FGSL on x{on:.2}, off x{off:.2} of single"))
}

fn c8_lsd_gas() -> Verdict {
    let outcomes = run_all(&plans("lsd-gas", &Overrides::default()));
    let rows = &outcomes[0].lsd;
    let get = |s: &str| rows.iter().find(|r| r.service == s).ok_or_else(|| format!("no row for {s}"));
    let (train, hotel) = (get("train")?, get("hotel")?);
    for r in [train, hotel] {
        ensure(r.decoupled_gas < r.monolithic_gas, || format!("{r:?}"))?;
    }
    ensure(hotel.saving_pct() > train.saving_pct(), || {
        format!("hotel saves {:.1}%, train {:.1}%", hotel.saving_pct(), train.saving_pct())
    })?;
    Ok(format!("saving: hotel {:.1}% > train {:.1}%", hotel.saving_pct(), train.saving_pct()))
}

/// A random fault schedule on the travel services: one honest relayer among
/// faulty ones, and requests built to conflict or fail.
fn fault_plan(seed: u64) -> RunPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let protocol = if seed.is_multiple_of(2) { Protocol::Integratex } else { Protocol::Baseline };
    let o = Overrides { protocol: Some(protocol), ..Default::default() };
    let mut plan = plans("fault-suite", &o).remove(0);
    plan.seed = seed;
    let mut relayers = vec![RelayerConfig::new("honest", Behavior::Honest)];
    let faulty = [
        RelayerConfig::new("dropper", Behavior::Drop(1.0)),
        RelayerConfig::new("tamperer", Behavior::Tamper(0.5)),
        RelayerConfig::new("early", Behavior::PrematureClone),
    ];
    relayers.extend(faulty.iter().filter(|_| rng.gen_bool(0.7)).cloned());
    relayers.shuffle(&mut rng);
    plan.relayers = relayers;
    plan.params.fgsl = rng.gen_bool(0.5);
    let n = rng.gen_range(2..=5);
    let mut work = Vec::new();
    for _ in 0..n {
        let at_ms = rng.gen_range(0..120) * 1000;
        let base = WorkloadSpec {
            dapp: "train-hotel".into(),
            args: train_hotel_args(rng.gen_range(1..4)),
            count: 1,
            at_ms,
            spacing_ms: 0,
            arrival: Default::default(),
            retry: rng.gen_bool(0.5),
            exec_gas: None,
        };
        work.push(match rng.gen_range(0..5) {
            0 => base,
            1 => WorkloadSpec { count: rng.gen_range(2..5), ..base },
            2 => WorkloadSpec { args: train_hotel_args(500), ..base },
            3 => WorkloadSpec { exec_gas: Some(rng.gen_range(20..400)), ..base },
            _ => WorkloadSpec { dapp: "short-fuse".into(), ..base },
        });
    }
    plan.workload = work;
    plan
}

fn c9_atomicity() -> Verdict {
    let plans: Vec<RunPlan> = (0..1000).map(fault_plan).collect();
    let mut reasons: BTreeMap<&str, usize> = BTreeMap::new();
    let mut committed = 0;
    for chunk in plans.chunks(100) {
        for o in run_all(chunk) {
            let seed = o.plan.seed;
            ensure(o.end == RunEnd::Quiescent, || format!("seed {seed}: hit the time limit"))?;
            ensure(o.audit.ok(), || format!("seed {seed}: {:?}", o.audit.violations))?;
            for req in &o.world.requests {
                match &req.state {
                    ReqState::Committed => committed += 1,
                    ReqState::Aborted(r) => *reasons.entry(r.label()).or_default() += 1,
                    s => return Err(format!("seed {seed}: request ended {s:?}")),
                }
            }
        }
    }
    for k in ["lock_conflict", "exec_failure", "timeout"] {
        ensure(reasons.get(k).copied().unwrap_or(0) > 0, || format!("no {k} aborts were exercised"))?;
    }
    Ok(format!("1000 schedules, 0 violations; {committed} commits, aborts {reasons:?}"))
}

fn relay_txs<'a>(o: &'a RunOutcome, relayer: usize) -> impl Iterator<Item = &'a xcsim::ledger::TxMeta> + 'a {
    o.world.relayers[relayer]
        .sent
        .iter()
        .filter_map(|(dest, h)| o.world.chain(*dest).tx_meta(h))
        .filter(|m| m.op.starts_with("relay:"))
}

/// Resubmits every already-accepted message and checks nothing is dispatched again.
fn replay_all(world: &mut World) -> Result<usize, String> {
    let sender = world.relayers[0].addr;
    let mut replays = Vec::new();
    for (src, chain) in &world.chains {
        for h in 1..=chain.height() {
            for r in chain.receipts(h).unwrap_or_default() {
                for (i, log) in r.logs.iter().enumerate() {
                    let Some(env) = Envelope::decode(log) else { continue };
                    if !RELAYED.contains(&env.payload.topic()) {
                        continue;
                    }
                    let id = message_id(*src, &r.tx_hash, i as u32);
                    if !world.chain(env.dest_chain).state.bridge.seen.contains(&id) {
                        continue;
                    }
                    let (header, receipt, proof) = chain.get_receipt_proof(&r.tx_hash).map_err(|e| e.to_string())?;
                    let msg = CrossChainMessage {
                        source_chain: *src,
                        header,
                        receipt,
                        proof,
                        event_index: i as u32,
                        relayer: sender,
                    };
                    replays.push((env.dest_chain, msg));
                }
            }
        }
    }
    let accepted: BTreeMap<u32, usize> =
        world.chains.iter().map(|(id, c)| (*id, c.state.bridge.accepted.len())).collect();
    let mut sent = Vec::new();
    for (dest, msg) in replays {
        let target = xcsim::bridge::bridge_address(dest);
        let h =
            world.send_call(dest, sender, target, &Call::Bridge(BridgeCall::Relay(Box::new(msg)))).ok_or("submit")?;
        sent.push((dest, h));
    }
    // a run returns after the first block once quiescent, so step until every replay lands
    let limit = world.now + 60_000;
    while world.now < limit && sent.iter().any(|(d, h)| world.chain(*d).tx_meta(h).is_none()) {
        world.run(limit);
    }
    for (dest, h) in &sent {
        let c = world.chain(*dest);
        let m = c.tx_meta(h).ok_or("replay not included")?;
        let logs = &c.receipts(m.height).unwrap_or_default()[m.index].logs;
        ensure(m.status == TxStatus::Success && logs.is_empty(), || {
            format!("replay on chain {dest} dispatched: {m:?}")
        })?;
    }
    for (id, c) in &world.chains {
        ensure(c.state.bridge.accepted.len() == accepted[id], || format!("chain {id} accepted a replay"))?;
    }
    Ok(sent.len())
}

fn c10_verifiability() -> Verdict {
    let mut plans = Vec::new();
    for seed in 0..50 {
        for p in [Protocol::Integratex, Protocol::Baseline] {
            let mut plan = plans_for(p);
            plan.seed = seed;
            plan.relayers = vec![
                RelayerConfig::new("honest", Behavior::Honest),
                RelayerConfig::new("half", Behavior::Tamper(0.5)),
                RelayerConfig::new("always", Behavior::Tamper(1.0)),
                RelayerConfig::new("honest2", Behavior::Honest),
            ];
            plans.push(plan);
        }
    }
    let bad_proof = xcsim::bridge::BridgeError::BadProof.to_string();
    let (mut rejected, mut honest, mut bad_clones, mut replayed) = (0, 0, 0, 0);
    for mut o in run_all(&plans) {
        let seed = o.plan.seed;
        ensure(o.audit.ok(), || format!("seed {seed}: {:?}", o.audit.violations))?;
        for (i, r) in o.world.relayers.iter().enumerate() {
            let txs: Vec<_> = relay_txs(&o, i).collect();
            let failed = txs.iter().filter(|m| m.status != TxStatus::Success).count();
            let proof_failed =
                txs.iter().filter(|m| m.error.as_deref().is_some_and(|e| e.contains(&bad_proof))).count();
            if r.config.behavior.is_honest() {
                ensure(failed == 0, || format!("seed {seed}: {failed} honest relays rejected"))?;
                honest += txs.len();
            } else {
                ensure(proof_failed == r.tampered_ids.len() && failed == proof_failed, || {
                    format!(
                        "seed {seed}: {} tampered, {proof_failed} rejected by proof, {failed} failed",
                        r.tampered_ids.len()
                    )
                })?;
                rejected += proof_failed;
            }
        }
        if o.plan.protocol == Protocol::Integratex {
            let exec = o.plan.dapps[0].exec_chain;
            let chain = o.world.chain(exec);
            for (name, entry) in &chain.state.bridge.registry {
                let (Some(addr), true) = (entry.logic_addr, entry.verified) else { continue };
                let Some(svc) = o.world.services.get(name) else { continue };
                let origin = o.world.chain(svc.chain).state.getcode(&svc.logic_addr);
                ensure(chain.state.getcode(&addr) == origin, || format!("seed {seed}: tampered {name} verified"))?;
            }
            for r in &o.world.relayers {
                let acct = chain.state.bridge.relayers.get(&r.addr).cloned().unwrap_or_default();
                let registered = r
                    .sent
                    .iter()
                    .filter_map(|(d, h)| o.world.chain(*d).tx_meta(h))
                    .filter(|m| m.op == "clone_deploy" && m.status == TxStatus::Success)
                    .count() as u64;
                match r.config.behavior {
                    Behavior::Honest => ensure(acct.penalties == 0, || format!("seed {seed}: honest clone rejected"))?,
                    Behavior::Tamper(p) if p >= 1.0 => {
                        ensure(acct.penalties == registered && acct.rewards == 0, || {
                            format!("seed {seed}: {registered} tampered clones, {} penalised", acct.penalties)
                        })?;
                        bad_clones += registered;
                    }
                    _ => bad_clones += acct.penalties,
                }
            }
        }
        if seed < 5 {
            replayed += replay_all(&mut o.world)?;
        }
    }
    ensure(rejected > 0 && bad_clones > 0, || "nothing was tampered".into())?;
    Ok(format!(
        "{rejected} tampered messages and {bad_clones} tampered clones rejected, {honest} honest relays accepted, {replayed} replays ignored"
    ))
}

fn plans_for(p: Protocol) -> RunPlan {
    let o = Overrides { protocol: Some(p), ..Default::default() };
    plans("train-hotel", &o).remove(0)
}

fn c11_liveness() -> Verdict {
    let mut plans = Vec::new();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut relayers = vec![
            RelayerConfig::new("honest", Behavior::Honest),
            RelayerConfig::new("dropper", Behavior::Drop(1.0)),
            RelayerConfig::new("tamperer", Behavior::Tamper(0.5)),
            RelayerConfig::new("early", Behavior::PrematureClone),
        ];
        relayers.shuffle(&mut rng);
        for p in [Protocol::Integratex, Protocol::Baseline] {
            plans.push(RunPlan { seed, relayers: relayers.clone(), ..plans_for(p) });
        }
    }
    let mut worst = 0;
    for o in run_all(&plans) {
        let seed = o.plan.seed;
        ensure(o.end == RunEnd::Quiescent, || format!("seed {seed}: time limit"))?;
        for j in &o.world.jobs {
            ensure(matches!(j.done, Some((true, _))), || {
                format!("seed {seed}: job ended {:?} {:?}", j.done, j.rejected)
            })?;
        }
        let exec = o.plan.dapps[0].exec_chain;
        let bridge = &o.world.chain(exec).state.bridge;
        for req in &o.world.requests {
            ensure(req.state == ReqState::Committed, || format!("seed {seed} {:?}: {:?}", o.plan.protocol, req.state))?;
            let a = req.attempts.last().expect("attempt");
            let deadline = match o.plan.protocol {
                Protocol::Integratex => bridge.exec.invocations[&a.id].deadline,
                Protocol::Baseline => bridge.baseline.runs[&a.id].deadline,
            };
            let end = a.end_height.expect("finished");
            ensure(end <= deadline + o.plan.params.bridge_timeout_blocks, || {
                format!("seed {seed}: finished at {end}, deadline {deadline}")
            })?;
            worst = worst.max(rounds(a).unwrap_or(0));
        }
    }
    Ok(format!("100 seeds x 2 protocols, 1 honest of 4; slowest {worst} rounds"))
}

/// Inventory semantics: every call takes its quantity from stock; the whole
/// tree fails if any service runs short.
fn inventory_oracle(case: &RandomCase) -> Option<BTreeMap<String, u64>> {
    let mut stock: BTreeMap<String, u64> = case.services.iter().map(|s| (s.id.clone(), s.storage["stock"])).collect();
    for (i, call) in case.dapp.calls.iter().enumerate() {
        let s = stock.get_mut(&call.service)?;
        *s = s.checked_sub(case.args[i])?;
    }
    Some(stock)
}

fn c12_differential() -> Verdict {
    let mut plans = Vec::new();
    let mut cases = Vec::new();
    for seed in 1000..1200 {
        for p in [Protocol::Integratex, Protocol::Baseline] {
            let c = random_case(seed, 8, p);
            plans.push(c.plan.clone());
            cases.push(c);
        }
    }
    let outcomes = run_all(&plans);
    let mut agreed = 0;
    for pair in cases.chunks(2).zip(outcomes.chunks(2)) {
        let (cs, os) = pair;
        let seed = cs[0].plan.seed;
        let oracle = inventory_oracle(&cs[0]);
        let committed = |o: &RunOutcome| o.world.requests.iter().all(|r| r.state == ReqState::Committed);
        let (Some(want), true, true) = (oracle, committed(&os[0]), committed(&os[1])) else { continue };
        for s in &cs[0].services {
            let (ix, bl) = (slot(&os[0].world, &s.id, "stock"), slot(&os[1].world, &s.id, "stock"));
            ensure(ix == want[&s.id] && bl == want[&s.id], || {
                format!("seed {seed}: {} stock integrated {ix}, baseline {bl}, oracle {}", s.id, want[&s.id])
            })?;
        }
        agreed += 1;
    }
    ensure(agreed >= 190, || format!("only {agreed} of 200 dApps committed everywhere"))?;
    Ok(format!("{agreed} of 200 random dApps: integrated = baseline = oracle"))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Verdict); 12] = [
        (1, "aggregation law", c1_aggregation_law),
        (2, "round-count constancy", c2_round_constancy),
        (3, "exactly-once clone", c3_exactly_once_clone),
        (4, "train-and-hotel latency", c4_train_hotel),
        (5, "block-time sweep", c5_block_time_sweep),
        (6, "depth sweep at d=4", c6_depth_four),
        (7, "FGSL concurrency", c7_fgsl),
        (8, "LSD deployment gas", c8_lsd_gas),
        (9, "atomicity audit", c9_atomicity),
        (10, "verifiability", c10_verifiability),
        (11, "liveness", c11_liveness),
        (12, "differential correctness", c12_differential),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("[pass] {n:>2} {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {n:>2} {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
