//! Per-run measurements and the CSV files they are written to.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::deploy::job_tag;
use crate::hash::Address;
use crate::ledger::TxStatus;
use crate::runner::RunOutcome;
use crate::runtime::SYSTEM;
use crate::scenario::Assertion;
use crate::wire::{Outcome, LOCK_REQ, SEG_CALL, UPDATE_REQ};
use crate::world::{Protocol, ReqState, World};

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct InvocationRow {
    pub scenario: String,
    pub variant: String,
    pub protocol: String,
    pub seed: u64,
    pub request: usize,
    pub attempt: usize,
    pub invocation: String,
    pub dapp: String,
    pub depth: usize,
    pub submit_ms: u64,
    pub end_ms: Option<u64>,
    pub latency_ms: Option<u64>,
    pub rounds: Option<u64>,
    pub status: String,
    pub abort_reason: String,
    pub request_latency_ms: Option<u64>,
    pub gas_total: u64,
    pub gas_exec_chain: u64,
    pub gas_invoked_chains: u64,
    pub lock_msgs: usize,
    pub update_msgs: usize,
    pub segment_msgs: usize,
    pub total_msgs: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ChainRow {
    pub scenario: String,
    pub variant: String,
    pub protocol: String,
    pub seed: u64,
    pub chain: u32,
    pub block_time_ms: u64,
    pub blocks: u64,
    pub txs: usize,
    pub reverted_txs: usize,
    pub gas_used: u64,
    pub msgs_in: usize,
    pub transfer_rounds: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub variant: String,
    pub protocol: String,
    pub seed: u64,
    pub requests: usize,
    pub committed: usize,
    pub aborted: usize,
    pub rejected: usize,
    pub attempts: usize,
    pub lock_conflicts: usize,
    pub exec_failures: usize,
    pub timeouts: usize,
    pub mean_latency_ms: f64,
    pub mean_rounds: f64,
    pub makespan_ms: u64,
    pub throughput_per_s: f64,
    pub total_gas: u64,
    pub gas_per_commit: f64,
    pub total_msgs: usize,
    pub audit_violations: usize,
    pub quiescent: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RelayerRow {
    pub scenario: String,
    pub variant: String,
    pub protocol: String,
    pub seed: u64,
    pub relayer: String,
    pub behavior: String,
    pub relayed: u64,
    pub dropped: u64,
    pub tampered: u64,
    pub clone_attempts: u64,
    pub premature_deploys: u64,
    pub submit_errors: u64,
    pub accepted: usize,
    pub fees: u64,
    pub rewards: u64,
    pub penalties: u64,
    pub reimbursed_gas: u64,
    pub gas_spent: u64,
    pub reverted_txs: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DeployRow {
    pub scenario: String,
    pub variant: String,
    pub seed: u64,
    pub job: String,
    pub chain: u32,
    pub height: u64,
    pub time_ms: u64,
    pub elapsed_ms: u64,
    pub op: String,
    pub actor: String,
    pub gas: u64,
    pub status: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LsdCsvRow {
    pub scenario: String,
    pub service: String,
    pub monolithic_gas: u64,
    pub decoupled_gas: u64,
    pub saving_pct: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub scenario: String,
    pub variant: String,
    pub metric: String,
    pub integratex: f64,
    pub baseline: f64,
    /// integratex / baseline
    pub ratio: f64,
    /// How much lower integratex is, as a percentage of baseline.
    pub reduction_pct: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssertionResult {
    pub assertion: Assertion,
    pub variant: String,
    pub actual: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub invocations: Vec<InvocationRow>,
    pub chains: Vec<ChainRow>,
    pub summary: Vec<SummaryRow>,
    pub relayers: Vec<RelayerRow>,
    pub deploy: Vec<DeployRow>,
    pub lsd: Vec<LsdCsvRow>,
    pub comparisons: Vec<ComparisonRow>,
    pub assertions: Vec<AssertionResult>,
}

pub const INVOCATIONS_HEADER: &[&str] = &[
    "scenario",
    "variant",
    "protocol",
    "seed",
    "request",
    "attempt",
    "invocation",
    "dapp",
    "depth",
    "submit_ms",
    "end_ms",
    "latency_ms",
    "rounds",
    "status",
    "abort_reason",
    "request_latency_ms",
    "gas_total",
    "gas_exec_chain",
    "gas_invoked_chains",
    "lock_msgs",
    "update_msgs",
    "segment_msgs",
    "total_msgs",
];
pub const CHAINS_HEADER: &[&str] = &[
    "scenario",
    "variant",
    "protocol",
    "seed",
    "chain",
    "block_time_ms",
    "blocks",
    "txs",
    "reverted_txs",
    "gas_used",
    "msgs_in",
    "transfer_rounds",
];
pub const SUMMARY_HEADER: &[&str] = &[
    "scenario",
    "variant",
    "protocol",
    "seed",
    "requests",
    "committed",
    "aborted",
    "rejected",
    "attempts",
    "lock_conflicts",
    "exec_failures",
    "timeouts",
    "mean_latency_ms",
    "mean_rounds",
    "makespan_ms",
    "throughput_per_s",
    "total_gas",
    "gas_per_commit",
    "total_msgs",
    "audit_violations",
    "quiescent",
];
pub const RELAYERS_HEADER: &[&str] = &[
    "scenario",
    "variant",
    "protocol",
    "seed",
    "relayer",
    "behavior",
    "relayed",
    "dropped",
    "tampered",
    "clone_attempts",
    "premature_deploys",
    "submit_errors",
    "accepted",
    "fees",
    "rewards",
    "penalties",
    "reimbursed_gas",
    "gas_spent",
    "reverted_txs",
];
pub const DEPLOY_HEADER: &[&str] =
    &["scenario", "variant", "seed", "job", "chain", "height", "time_ms", "elapsed_ms", "op", "actor", "gas", "status"];
pub const LSD_HEADER: &[&str] = &["scenario", "service", "monolithic_gas", "decoupled_gas", "saving_pct"];
pub const COMPARISONS_HEADER: &[&str] =
    &["scenario", "variant", "metric", "integratex", "baseline", "ratio", "reduction_pct"];

/// File name and header of every CSV a run writes.
pub const FILES: [(&str, &[&str]); 7] = [
    ("invocations.csv", INVOCATIONS_HEADER),
    ("chains.csv", CHAINS_HEADER),
    ("summary.csv", SUMMARY_HEADER),
    ("relayers.csv", RELAYERS_HEADER),
    ("deploy.csv", DEPLOY_HEADER),
    ("lsd.csv", LSD_HEADER),
    ("comparisons.csv", COMPARISONS_HEADER),
];

fn actor_name(world: &World, a: &Address) -> String {
    if *a == world.provider {
        return "provider".into();
    }
    if *a == SYSTEM {
        return "system".into();
    }
    if let Some(r) = world.relayers.iter().find(|r| r.addr == *a) {
        return format!("relayer:{}", r.config.id);
    }
    if let Some(i) = world.requests.iter().position(|r| r.user == *a) {
        return format!("user:{i}");
    }
    a.to_string()
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn collect_run(out: &RunOutcome, report: &mut Report) {
    let plan = &out.plan;
    let world = &out.world;
    let protocol = plan.protocol.label().to_string();

    let mut total_gas = 0;
    let mut total_msgs = 0;
    let mut latencies = Vec::new();
    let mut rounds = Vec::new();
    let (mut committed, mut aborted, mut rejected, mut attempts) = (0, 0, 0, 0);
    let (mut conflicts, mut failures, mut timeouts) = (0, 0, 0);
    let mut first_submit: Option<u64> = None;
    let mut last_end: Option<u64> = None;

    for (ri, r) in world.requests.iter().enumerate() {
        let exec = world.dapps[&r.spec.dapp].exec_chain;
        let depth = plan.depth(&r.spec.dapp).unwrap_or(0);
        match r.state {
            ReqState::Committed => committed += 1,
            ReqState::Aborted(_) => aborted += 1,
            ReqState::Rejected(_) => rejected += 1,
            _ => {}
        }
        if let Some(s) = r.first_submit_ms() {
            first_submit = Some(first_submit.map_or(s, |f| f.min(s)));
        }
        let n = r.attempts.len();
        for (ai, a) in r.attempts.iter().enumerate() {
            attempts += 1;
            let gas = world.gas_for(&a.id);
            let g_total: u64 = gas.values().sum();
            let g_exec = gas.get(&exec).copied().unwrap_or(0);
            let msgs = world.messages_for(&a.id);
            let count = |t: &str| msgs.iter().filter(|(_, topic)| topic == t).count();
            total_gas += g_total;
            total_msgs += msgs.len();
            let last = ai + 1 == n;
            let (status, reason) = match (&a.outcome, &r.state) {
                (Some(Outcome::Committed), _) => ("committed".to_string(), String::new()),
                (Some(Outcome::Aborted(why)), _) => {
                    match why.label() {
                        "lock_conflict" => conflicts += 1,
                        "exec_failure" => failures += 1,
                        _ => timeouts += 1,
                    }
                    ("aborted".to_string(), why.label().to_string())
                }
                (None, ReqState::Rejected(e)) if last => ("rejected".to_string(), e.clone()),
                (None, _) => ("pending".to_string(), String::new()),
            };
            let request_latency = (last && r.state.is_terminal())
                .then(|| a.end_ms.map(|e| e - r.first_submit_ms().unwrap_or(e)))
                .flatten();
            if last && r.state == ReqState::Committed {
                if let (Some(e), Some(s), Some(eh), Some(first)) =
                    (a.end_ms, r.first_submit_ms(), a.end_height, r.attempts.first())
                {
                    latencies.push((e - s) as f64);
                    rounds.push((eh - first.submit_height) as f64);
                }
            }
            if let Some(e) = a.end_ms {
                last_end = Some(last_end.map_or(e, |l| l.max(e)));
            }
            report.invocations.push(InvocationRow {
                scenario: plan.scenario.clone(),
                variant: plan.variant.clone(),
                protocol: protocol.clone(),
                seed: plan.seed,
                request: ri,
                attempt: ai,
                invocation: a.id.short(),
                dapp: r.spec.dapp.clone(),
                depth,
                submit_ms: a.submit_ms,
                end_ms: a.end_ms,
                latency_ms: a.end_ms.map(|e| e - a.submit_ms),
                rounds: a.end_height.map(|e| e - a.submit_height),
                status,
                abort_reason: reason,
                request_latency_ms: request_latency,
                gas_total: g_total,
                gas_exec_chain: g_exec,
                gas_invoked_chains: g_total - g_exec,
                lock_msgs: count(LOCK_REQ),
                update_msgs: count(UPDATE_REQ),
                segment_msgs: count(SEG_CALL),
                total_msgs: msgs.len(),
            });
        }
    }

    for (cid, c) in &world.chains {
        let accepted = &c.state.bridge.accepted;
        report.chains.push(ChainRow {
            scenario: plan.scenario.clone(),
            variant: plan.variant.clone(),
            protocol: protocol.clone(),
            seed: plan.seed,
            chain: *cid,
            block_time_ms: c.config.block_time_ms,
            blocks: c.height(),
            txs: c.tx_metas().count(),
            reverted_txs: c.tx_metas().filter(|(_, m)| m.status == TxStatus::Revert).count(),
            gas_used: c.blocks().iter().map(|b| b.gas_used).sum(),
            msgs_in: accepted.len(),
            transfer_rounds: accepted.iter().filter(|m| m.topic == LOCK_REQ || m.topic == SEG_CALL).count(),
        });
    }

    let makespan = match (first_submit, last_end) {
        (Some(s), Some(e)) if e > s => e - s,
        _ => 0,
    };
    report.summary.push(SummaryRow {
        scenario: plan.scenario.clone(),
        variant: plan.variant.clone(),
        protocol: protocol.clone(),
        seed: plan.seed,
        requests: world.requests.len(),
        committed,
        aborted,
        rejected,
        attempts,
        lock_conflicts: conflicts,
        exec_failures: failures,
        timeouts,
        mean_latency_ms: mean(&latencies),
        mean_rounds: mean(&rounds),
        makespan_ms: makespan,
        throughput_per_s: if makespan > 0 { committed as f64 * 1000.0 / makespan as f64 } else { 0.0 },
        total_gas,
        gas_per_commit: if committed > 0 { total_gas as f64 / committed as f64 } else { 0.0 },
        total_msgs,
        audit_violations: out.audit.violations.len(),
        quiescent: out.end == crate::world::RunEnd::Quiescent,
    });

    for r in &world.relayers {
        let mut row = RelayerRow {
            scenario: plan.scenario.clone(),
            variant: plan.variant.clone(),
            protocol: protocol.clone(),
            seed: plan.seed,
            relayer: r.config.id.clone(),
            behavior: String::from(r.config.behavior),
            relayed: r.stats.relayed,
            dropped: r.stats.dropped,
            tampered: r.stats.tampered,
            clone_attempts: r.stats.clone_attempts,
            premature_deploys: r.stats.premature_deploys,
            submit_errors: r.stats.submit_errors,
            ..RelayerRow::default()
        };
        for c in world.chains.values() {
            let b = &c.state.bridge;
            row.accepted += b.accepted.iter().filter(|m| m.relayer == r.addr).count();
            if let Some(acct) = b.relayers.get(&r.addr) {
                row.fees += acct.fees;
                row.rewards += acct.rewards;
                row.penalties += acct.penalties;
                row.reimbursed_gas += acct.reimbursed_gas;
            }
            for (_, m) in c.tx_metas().filter(|(_, m)| m.sender == r.addr) {
                row.gas_spent += m.gas_used;
                if m.status == TxStatus::Revert {
                    row.reverted_txs += 1;
                }
            }
        }
        report.relayers.push(row);
    }

    for j in &world.jobs {
        let tag = job_tag(&j.dapp);
        let start = j.start_ms.unwrap_or(0);
        let mut rows = Vec::new();
        for (cid, c) in &world.chains {
            for (_, m) in c.tx_metas().filter(|(_, m)| m.tag == Some(tag)) {
                let t = c.block(m.height).map(|b| b.timestamp).unwrap_or(0);
                rows.push(DeployRow {
                    scenario: plan.scenario.clone(),
                    variant: plan.variant.clone(),
                    seed: plan.seed,
                    job: j.dapp.clone(),
                    chain: *cid,
                    height: m.height,
                    time_ms: t,
                    elapsed_ms: t.saturating_sub(start),
                    op: m.op.clone(),
                    actor: actor_name(world, &m.sender),
                    gas: m.gas_used,
                    status: if m.status == TxStatus::Success { "ok".into() } else { "revert".into() },
                });
            }
        }
        rows.sort_by_key(|r| (r.time_ms, r.chain, r.height));
        report.deploy.extend(rows);
    }

    for l in &out.lsd {
        report.lsd.push(LsdCsvRow {
            scenario: plan.scenario.clone(),
            service: l.service.clone(),
            monolithic_gas: l.monolithic_gas,
            decoupled_gas: l.decoupled_gas,
            saving_pct: l.saving_pct(),
        });
    }
}

const COMPARED: [&str; 4] = ["mean_latency_ms", "mean_rounds", "throughput_per_s", "total_gas"];

/// Numeric columns of a summary row by name.
pub fn summary_values(s: &SummaryRow) -> BTreeMap<&'static str, f64> {
    BTreeMap::from([
        ("requests", s.requests as f64),
        ("committed", s.committed as f64),
        ("aborted", s.aborted as f64),
        ("rejected", s.rejected as f64),
        ("attempts", s.attempts as f64),
        ("lock_conflicts", s.lock_conflicts as f64),
        ("exec_failures", s.exec_failures as f64),
        ("timeouts", s.timeouts as f64),
        ("mean_latency_ms", s.mean_latency_ms),
        ("mean_rounds", s.mean_rounds),
        ("makespan_ms", s.makespan_ms as f64),
        ("throughput_per_s", s.throughput_per_s),
        ("total_gas", s.total_gas as f64),
        ("gas_per_commit", s.gas_per_commit),
        ("total_msgs", s.total_msgs as f64),
        ("audit_violations", s.audit_violations as f64),
        ("quiescent", if s.quiescent { 1.0 } else { 0.0 }),
    ])
}

impl Report {
    pub fn from_outcomes(outcomes: &[RunOutcome], asserts: &[Assertion]) -> Report {
        let mut report = Report::default();
        for o in outcomes {
            collect_run(o, &mut report);
        }
        report.compare();
        report.check(asserts);
        report
    }

    fn compare(&mut self) {
        let find = |v: &str, p: Protocol| {
            self.summary.iter().find(|s| s.variant == v && s.protocol == p.label()).map(summary_values)
        };
        let mut rows = Vec::new();
        let mut seen = Vec::new();
        for s in &self.summary {
            if seen.contains(&s.variant) {
                continue;
            }
            seen.push(s.variant.clone());
            let (Some(ix), Some(base)) = (find(&s.variant, Protocol::Integratex), find(&s.variant, Protocol::Baseline))
            else {
                continue;
            };
            for m in COMPARED {
                let (a, b) = (ix[m], base[m]);
                rows.push(ComparisonRow {
                    scenario: s.scenario.clone(),
                    variant: s.variant.clone(),
                    metric: m.to_string(),
                    integratex: a,
                    baseline: b,
                    ratio: if b != 0.0 { a / b } else { 0.0 },
                    reduction_pct: if b != 0.0 { 100.0 * (b - a) / b } else { 0.0 },
                });
            }
        }
        self.comparisons = rows;
    }

    /// Values of `metric` per variant. Comparison metrics are
    /// `latency_reduction_pct`, `throughput_ratio` and `gas_reduction_pct`;
    /// anything else names a summary column, optionally prefixed with a
    /// protocol (`baseline.mean_rounds`).
    pub fn metric(&self, metric: &str) -> Vec<(String, f64)> {
        let cmp = |m: &str, f: fn(&ComparisonRow) -> f64| -> Vec<(String, f64)> {
            self.comparisons.iter().filter(|c| c.metric == m).map(|c| (c.variant.clone(), f(c))).collect()
        };
        match metric {
            "latency_reduction_pct" => return cmp("mean_latency_ms", |c| c.reduction_pct),
            "throughput_ratio" => return cmp("throughput_per_s", |c| c.ratio),
            "gas_reduction_pct" => return cmp("total_gas", |c| c.reduction_pct),
            _ => {}
        }
        let (proto, col) = match metric.split_once('.') {
            Some((p, c)) => (Some(p), c),
            None => (None, metric),
        };
        self.summary
            .iter()
            .filter(|s| proto.is_none_or(|p| p == s.protocol))
            .filter_map(|s| summary_values(s).get(col).map(|v| (format!("{}/{}", s.variant, s.protocol), *v)))
            .collect()
    }

    fn check(&mut self, asserts: &[Assertion]) {
        for a in asserts {
            let values: Vec<(String, f64)> = self
                .metric(&a.metric)
                .into_iter()
                .filter(|(v, _)| a.variant.as_ref().is_none_or(|want| v == want || v.starts_with(&format!("{want}/"))))
                .collect();
            if values.is_empty() {
                self.assertions.push(AssertionResult {
                    assertion: a.clone(),
                    variant: a.variant.clone().unwrap_or_default(),
                    actual: None,
                    pass: false,
                });
            }
            for (v, x) in values {
                self.assertions.push(AssertionResult {
                    assertion: a.clone(),
                    variant: v,
                    actual: Some(x),
                    pass: a.op.holds(x, a.value),
                });
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    /// Every CSV as (file name, contents).
    pub fn to_csv(&self) -> Vec<(&'static str, String)> {
        vec![
            (FILES[0].0, csv_string(FILES[0].1, &self.invocations)),
            (FILES[1].0, csv_string(FILES[1].1, &self.chains)),
            (FILES[2].0, csv_string(FILES[2].1, &self.summary)),
            (FILES[3].0, csv_string(FILES[3].1, &self.relayers)),
            (FILES[4].0, csv_string(FILES[4].1, &self.deploy)),
            (FILES[5].0, csv_string(FILES[5].1, &self.lsd)),
            (FILES[6].0, csv_string(FILES[6].1, &self.comparisons)),
        ]
    }

    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, text) in self.to_csv() {
            std::fs::write(dir.join(name), text)?;
        }
        Ok(())
    }
}

fn csv_string<T: Serialize>(header: &[&str], rows: &[T]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header_of<T: Serialize + Default>() -> Vec<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(T::default()).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        text.lines().next().unwrap().split(',').map(str::to_string).collect()
    }

    #[test]
    fn declared_headers_match_the_rows() {
        assert_eq!(header_of::<InvocationRow>(), INVOCATIONS_HEADER);
        assert_eq!(header_of::<ChainRow>(), CHAINS_HEADER);
        assert_eq!(header_of::<SummaryRow>(), SUMMARY_HEADER);
        assert_eq!(header_of::<RelayerRow>(), RELAYERS_HEADER);
        assert_eq!(header_of::<DeployRow>(), DEPLOY_HEADER);
        assert_eq!(header_of::<LsdCsvRow>(), LSD_HEADER);
        assert_eq!(header_of::<ComparisonRow>(), COMPARISONS_HEADER);
    }

    #[test]
    fn empty_reports_still_have_headers() {
        for (name, text) in Report::default().to_csv() {
            assert_eq!(text.lines().count(), 1, "{name}");
        }
    }
}
