//! Scenario files and the builtin experiment set.
//!
//! A scenario expands into one [`RunPlan`] per (variant, protocol) pair. Each
//! plan is a complete, self-contained world description.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calltree::{CallSpec, DappDescriptor};
use crate::ledger::ChainConfig;
use crate::relayer::{Behavior, RelayerConfig};
use crate::runtime::ProtocolParams;
use crate::samples;
use crate::vm::asm::assemble_contract;
use crate::vm::gas::GasSchedule;
use crate::vm::program::{MonolithicContract, SlotKey};
use crate::world::{Protocol, DEFAULT_EXEC_GAS};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error("unknown builtin scenario `{0}`")]
    UnknownBuiltin(String),
}

fn field(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: field.into(), message: message.into() }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceSpec {
    pub id: String,
    pub chain: u32,
    /// A bundled sample (`train`, `hotel`, `agency`, `inventory`) or a path to an `.asm` file.
    pub program: String,
    #[serde(default = "one")]
    pub lock_size: u64,
    /// Initial values; map entries are written `name[key]`.
    #[serde(default)]
    pub storage: BTreeMap<String, u64>,
}

fn one() -> u64 {
    1
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arrival {
    /// All requests at once (plus spacing).
    #[default]
    Concurrent,
    /// Each request after the previous one finishes.
    Sequential,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub dapp: String,
    pub args: Vec<u64>,
    #[serde(default = "one_usize")]
    pub count: usize,
    /// Offset from the end of deployment.
    #[serde(default)]
    pub at_ms: u64,
    #[serde(default)]
    pub spacing_ms: u64,
    #[serde(default)]
    pub arrival: Arrival,
    #[serde(default = "yes")]
    pub retry: bool,
    #[serde(default)]
    pub exec_gas: Option<u64>,
}

fn one_usize() -> usize {
    1
}
fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "==")]
    Eq,
}

impl Op {
    pub fn holds(self, a: f64, b: f64) -> bool {
        match self {
            Op::Ge => a >= b,
            Op::Gt => a > b,
            Op::Le => a <= b,
            Op::Lt => a < b,
            Op::Eq => (a - b).abs() < 1e-9,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Op::Ge => ">=",
            Op::Gt => ">",
            Op::Le => "<=",
            Op::Lt => "<",
            Op::Eq => "==",
        }
    }
}

/// A check on the finished scenario; see the runner for metric names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assertion {
    pub metric: String,
    pub op: Op,
    pub value: f64,
    #[serde(default)]
    pub variant: Option<String>,
}

/// Settings one variant changes relative to the scenario.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub label: String,
    #[serde(default)]
    pub block_time_ms: Option<u64>,
    #[serde(default)]
    pub aggregation: Option<bool>,
    #[serde(default)]
    pub fgsl: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "both")]
    pub protocols: Vec<Protocol>,
    pub chains: Vec<ChainConfig>,
    #[serde(default)]
    pub gas: GasSchedule,
    #[serde(default)]
    pub params: ProtocolParams,
    #[serde(default = "one_honest")]
    pub relayers: Vec<RelayerConfig>,
    pub services: Vec<ServiceSpec>,
    pub dapps: Vec<DappDescriptor>,
    #[serde(default)]
    pub workload: Vec<WorkloadSpec>,
    #[serde(default)]
    pub variants: Vec<Variant>,
    #[serde(default, rename = "assert")]
    pub asserts: Vec<Assertion>,
    /// Simulated-time cap per run.
    #[serde(default = "default_limit")]
    pub limit_ms: u64,
    /// Directory `.asm` paths are relative to.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn both() -> Vec<Protocol> {
    vec![Protocol::Integratex, Protocol::Baseline]
}

fn one_honest() -> Vec<RelayerConfig> {
    vec![RelayerConfig::new("r0", Behavior::Honest)]
}

fn default_limit() -> u64 {
    24 * 3600 * 1000
}

/// Command-line overrides.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub protocol: Option<Protocol>,
    pub aggregation: Option<bool>,
    pub fgsl: Option<bool>,
    pub block_times: Vec<u64>,
    pub depth: Option<usize>,
    pub concurrency: Option<usize>,
}

/// Everything one `run` executes: the plans and the checks on their results.
#[derive(Clone, Debug, PartialEq)]
pub struct Suite {
    pub name: String,
    pub plans: Vec<RunPlan>,
    pub asserts: Vec<Assertion>,
}

/// One world to simulate.
#[derive(Clone, Debug, PartialEq)]
pub struct RunPlan {
    pub scenario: String,
    pub variant: String,
    pub protocol: Protocol,
    pub seed: u64,
    pub chains: Vec<ChainConfig>,
    pub gas: GasSchedule,
    pub params: ProtocolParams,
    pub relayers: Vec<RelayerConfig>,
    pub services: Vec<(ServiceSpec, MonolithicContract)>,
    pub dapps: Vec<DappDescriptor>,
    pub workload: Vec<WorkloadSpec>,
    pub limit_ms: u64,
    /// Also measure monolithic against decoupled deployment gas.
    pub lsd_probe: bool,
}

impl RunPlan {
    pub fn depth(&self, dapp: &str) -> Option<usize> {
        let d = self.dapps.iter().find(|d| d.name == dapp)?;
        let mut depth = vec![0usize; d.calls.len()];
        for (i, c) in d.calls.iter().enumerate() {
            depth[i] = match &c.parent {
                None => 1,
                Some(p) => d.calls.iter().position(|x| &x.id == p).map(|j| depth[j] + 1).unwrap_or(1),
            };
        }
        depth.into_iter().max()
    }
}

pub fn parse_slot_key(s: &str) -> Option<SlotKey> {
    match s.split_once('[') {
        None => Some(SlotKey::scalar(s.trim())),
        Some((name, rest)) => {
            let k: u64 = rest.strip_suffix(']')?.trim().parse().ok()?;
            Some(SlotKey::entry(name.trim(), k))
        }
    }
}

pub fn builtin_program(name: &str) -> Option<MonolithicContract> {
    Some(match name {
        "train" => samples::train_contract(),
        "hotel" => samples::hotel_contract(),
        "agency" => samples::agency_contract(),
        "inventory" => samples::inventory_contract(),
        _ => return None,
    })
}

impl Scenario {
    pub fn from_toml(text: &str, base_dir: Option<&Path>) -> Result<Scenario, ConfigError> {
        let mut s: Scenario = toml::from_str(text)?;
        s.base_dir = base_dir.map(Path::to_path_buf);
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Scenario, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Scenario::from_toml(&text, path.parent())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.chains.is_empty() {
            return Err(field("chains", "at least one chain is required"));
        }
        for (i, c) in self.chains.iter().enumerate() {
            c.validate().map_err(|m| field(format!("chains[{i}]"), m))?;
        }
        if !self.relayers.iter().any(|r| r.behavior.is_honest()) {
            return Err(field("relayers", "at least one relayer must be honest"));
        }
        if self.protocols.is_empty() {
            return Err(field("protocols", "empty"));
        }
        let chain_ids: Vec<u32> = self.chains.iter().map(|c| c.chain_id).collect();
        for (i, s) in self.services.iter().enumerate() {
            if !chain_ids.contains(&s.chain) {
                return Err(field(format!("services[{i}].chain"), format!("no chain {}", s.chain)));
            }
            self.program(i)?;
            for k in s.storage.keys() {
                if parse_slot_key(k).is_none() {
                    return Err(field(format!("services[{i}].storage"), format!("bad slot `{k}`")));
                }
            }
        }
        for (i, d) in self.dapps.iter().enumerate() {
            if !chain_ids.contains(&d.exec_chain) {
                return Err(field(format!("dapps[{i}].exec_chain"), format!("no chain {}", d.exec_chain)));
            }
        }
        for (i, w) in self.workload.iter().enumerate() {
            let Some(d) = self.dapps.iter().find(|d| d.name == w.dapp) else {
                return Err(field(format!("workload[{i}].dapp"), format!("unknown dApp `{}`", w.dapp)));
            };
            if d.inputs.len() != w.args.len() {
                return Err(field(
                    format!("workload[{i}].args"),
                    format!("`{}` takes {} inputs, got {}", w.dapp, d.inputs.len(), w.args.len()),
                ));
            }
        }
        Ok(())
    }

    fn program(&self, i: usize) -> Result<MonolithicContract, ConfigError> {
        let s = &self.services[i];
        if let Some(c) = builtin_program(&s.program) {
            return Ok(c);
        }
        if s.program.ends_with(".asm") {
            let path = match &self.base_dir {
                Some(d) => d.join(&s.program),
                None => PathBuf::from(&s.program),
            };
            let text = std::fs::read_to_string(&path)
                .map_err(|e| field(format!("services[{i}].program"), format!("{}: {e}", path.display())))?;
            return assemble_contract(&text).map_err(|e| field(format!("services[{i}].program"), e.to_string()));
        }
        Err(field(format!("services[{i}].program"), format!("unknown program `{}`", s.program)))
    }

    pub fn suite(&self, o: &Overrides) -> Result<Suite, ConfigError> {
        Ok(Suite { name: self.name.clone(), plans: self.expand(o)?, asserts: self.asserts.clone() })
    }

    pub fn expand(&self, o: &Overrides) -> Result<Vec<RunPlan>, ConfigError> {
        let mut services = Vec::new();
        for (i, s) in self.services.iter().enumerate() {
            services.push((s.clone(), self.program(i)?));
        }
        let variants = if self.variants.is_empty() {
            vec![Variant { label: "default".into(), ..Variant::default() }]
        } else {
            self.variants.clone()
        };
        let protocols: Vec<Protocol> = match o.protocol {
            Some(p) => self.protocols.iter().copied().filter(|x| *x == p).collect(),
            None => self.protocols.clone(),
        };
        let mut plans = Vec::new();
        for v in &variants {
            let mut bts: Vec<Option<u64>> = vec![v.block_time_ms];
            if !o.block_times.is_empty() {
                bts = o.block_times.iter().map(|b| Some(*b)).collect();
            }
            for bt in bts {
                for p in &protocols {
                    let mut chains = self.chains.clone();
                    if let Some(bt) = bt {
                        for c in &mut chains {
                            c.block_time_ms = bt;
                        }
                    }
                    let mut params = self.params.clone();
                    if let Some(a) = o.aggregation.or(v.aggregation) {
                        params.aggregation = a;
                    }
                    if let Some(f) = o.fgsl.or(v.fgsl) {
                        params.fgsl = f;
                    }
                    let label = match (bt, o.block_times.is_empty()) {
                        (Some(bt), false) => format!("{}/bt={}", v.label, bt),
                        _ => v.label.clone(),
                    };
                    plans.push(RunPlan {
                        scenario: self.name.clone(),
                        variant: label,
                        protocol: *p,
                        seed: o.seed.unwrap_or(self.seed),
                        chains,
                        gas: self.gas.clone(),
                        params,
                        relayers: self.relayers.clone(),
                        services: services.clone(),
                        dapps: self.dapps.clone(),
                        workload: self.workload.clone(),
                        limit_ms: self.limit_ms,
                        lsd_probe: false,
                    });
                }
            }
        }
        Ok(plans)
    }
}

pub const BUILTINS: [&str; 8] = [
    "train-hotel",
    "depth-sweep",
    "blocktime-sweep",
    "concurrency-sweep",
    "ta-ablation",
    "lsd-gas",
    "deploy-phase",
    "fault-suite",
];

pub fn three_chains(block_time_ms: u64) -> Vec<ChainConfig> {
    (1..=3).map(|id| ChainConfig { block_time_ms, ..ChainConfig::new(id) }).collect()
}

fn storage(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

pub const TRAVELLER: u64 = 7;

/// Train on chain 2, hotel on chain 3, agency on chain 1.
pub fn travel_services() -> Vec<ServiceSpec> {
    vec![
        ServiceSpec {
            id: "train".into(),
            chain: 2,
            program: "train".into(),
            lock_size: 1,
            storage: storage(&[("fare", 10), ("seats[0]", 100), ("seats[1]", 100)]),
        },
        ServiceSpec {
            id: "hotel".into(),
            chain: 3,
            program: "hotel".into(),
            lock_size: 1,
            storage: storage(&[("price", 50), ("remain", 100)]),
        },
        ServiceSpec {
            id: "agency".into(),
            chain: 1,
            program: "agency".into(),
            lock_size: 1,
            storage: storage(&[("commission", 5), ("balance[7]", 1_000_000)]),
        },
    ]
}

/// Outbound train, hotel, return train, then settlement with the agency.
pub fn train_hotel_dapp(timeout_blocks: u64) -> DappDescriptor {
    let call = |id: &str, service: &str, parent: Option<&str>, args: &[&str], amounts: &[(&str, &str)]| CallSpec {
        id: id.into(),
        service: service.into(),
        parent: parent.map(str::to_string),
        args: args.iter().map(|s| s.to_string()).collect(),
        amounts: amounts.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
    };
    DappDescriptor {
        name: "train-hotel".into(),
        exec_chain: 1,
        inputs: ["user", "out", "ret", "cls", "num"].iter().map(|s| s.to_string()).collect(),
        timeout_blocks,
        calls: vec![
            call("train_out", "train", None, &["in.out", "in.cls", "in.num"], &[("seats", "in.num")]),
            call("hotel", "hotel", Some("train_out"), &["in.num"], &[("remain", "in.num")]),
            call("train_ret", "train", Some("hotel"), &["in.ret", "in.cls", "in.num"], &[("seats", "in.num")]),
            call(
                "settle",
                "agency",
                None,
                &["in.user", "out.train_out.cost", "out.hotel.cost", "out.train_ret.cost"],
                &[],
            ),
        ],
    }
}

pub fn train_hotel_args(num: u64) -> Vec<u64> {
    vec![TRAVELLER, 0, 1, 0, num]
}

/// A linear chain of `depth` inventory services alternating between chains 2 and 3.
pub fn inventory_chain(depth: usize) -> (Vec<ServiceSpec>, DappDescriptor) {
    let mut services = Vec::new();
    let mut calls = Vec::new();
    for k in 1..=depth {
        let id = format!("inv{k}");
        services.push(ServiceSpec {
            id: id.clone(),
            chain: if k % 2 == 1 { 2 } else { 3 },
            program: "inventory".into(),
            lock_size: 1,
            storage: storage(&[("price", 10 + k as u64), ("stock", 1000)]),
        });
        calls.push(CallSpec {
            id: format!("c{k}"),
            service: id,
            parent: (k > 1).then(|| format!("c{}", k - 1)),
            args: vec!["in.qty".into()],
            amounts: [("stock".to_string(), "in.qty".to_string())].into(),
        });
    }
    let dapp = DappDescriptor {
        name: format!("chain-{depth}"),
        exec_chain: 1,
        inputs: vec!["qty".into()],
        timeout_blocks: 10,
        calls,
    };
    (services, dapp)
}

/// A random call tree of up to `max_nodes` inventory calls over chains 1 to 3.
/// Services may be called more than once. Inputs are one quantity per call.
pub fn random_tree(seed: u64, max_nodes: usize) -> (Vec<ServiceSpec>, DappDescriptor, Vec<u64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_nodes.max(1));
    let n_services = rng.gen_range(1..=n);
    let services: Vec<ServiceSpec> = (0..n_services)
        .map(|k| ServiceSpec {
            id: format!("s{k}"),
            chain: rng.gen_range(1..=3),
            program: "inventory".into(),
            lock_size: 1,
            storage: storage(&[("price", rng.gen_range(1..50)), ("stock", rng.gen_range(20..200))]),
        })
        .collect();
    let mut calls = Vec::new();
    let mut inputs = Vec::new();
    let mut args = Vec::new();
    for i in 0..n {
        let parent = if i == 0 || rng.gen_bool(0.3) { None } else { Some(format!("n{}", rng.gen_range(0..i))) };
        let svc = &services[rng.gen_range(0..n_services)];
        inputs.push(format!("q{i}"));
        args.push(rng.gen_range(1..6));
        calls.push(CallSpec {
            id: format!("n{i}"),
            service: svc.id.clone(),
            parent,
            args: vec![format!("in.q{i}")],
            amounts: [("stock".to_string(), format!("in.q{i}"))].into(),
        });
    }
    let dapp = DappDescriptor { name: format!("random-{seed}"), exec_chain: 1, inputs, timeout_blocks: 10, calls };
    (services, dapp, args)
}

fn base(name: &str, services: Vec<ServiceSpec>, dapps: Vec<DappDescriptor>, workload: Vec<WorkloadSpec>) -> Scenario {
    Scenario {
        name: name.into(),
        seed: 1,
        protocols: both(),
        chains: three_chains(5000),
        gas: GasSchedule::default(),
        params: ProtocolParams::default(),
        relayers: one_honest(),
        services,
        dapps,
        workload,
        variants: Vec::new(),
        asserts: Vec::new(),
        limit_ms: default_limit(),
        base_dir: None,
    }
}

fn work(dapp: &str, args: Vec<u64>, count: usize, arrival: Arrival) -> WorkloadSpec {
    WorkloadSpec { dapp: dapp.into(), args, count, at_ms: 0, spacing_ms: 0, arrival, retry: true, exec_gas: None }
}

fn assert_that(metric: &str, op: Op, value: f64) -> Assertion {
    Assertion { metric: metric.into(), op, value, variant: None }
}

/// The builtin scenarios, expanded with the command-line overrides applied.
pub fn builtin(name: &str, o: &Overrides) -> Result<Suite, ConfigError> {
    let mut asserts = Vec::new();
    let plans = builtin_plans(name, o, &mut asserts)?;
    Ok(Suite { name: name.to_string(), plans, asserts })
}

fn builtin_plans(name: &str, o: &Overrides, asserts: &mut Vec<Assertion>) -> Result<Vec<RunPlan>, ConfigError> {
    match name {
        "train-hotel" => {
            let s = base(
                name,
                travel_services(),
                vec![train_hotel_dapp(10)],
                vec![work("train-hotel", train_hotel_args(2), 1, Arrival::Concurrent)],
            );
            asserts.push(assert_that("latency_reduction_pct", Op::Ge, 40.0));
            s.expand(o)
        }
        "blocktime-sweep" => {
            let mut s = base(
                name,
                travel_services(),
                vec![train_hotel_dapp(10)],
                vec![work("train-hotel", train_hotel_args(2), 1, Arrival::Concurrent)],
            );
            s.variants = [2000, 5000, 8000, 12000]
                .iter()
                .map(|bt| Variant { label: format!("bt={bt}"), block_time_ms: Some(*bt), ..Variant::default() })
                .collect();
            asserts.push(assert_that("latency_reduction_pct", Op::Gt, 0.0));
            s.expand(o)
        }
        "depth-sweep" | "ta-ablation" => {
            let depths: Vec<usize> = match (o.depth, name) {
                (Some(d), _) => vec![d],
                (None, "depth-sweep") => (1..=6).collect(),
                (None, _) => vec![4],
            };
            let mut plans = Vec::new();
            for d in depths {
                if d == 0 {
                    return Err(field("--depth", "must be at least 1"));
                }
                let (services, dapp) = inventory_chain(d);
                let dname = dapp.name.clone();
                let mut s = base(name, services, vec![dapp], vec![work(&dname, vec![1], 5, Arrival::Sequential)]);
                if name == "ta-ablation" {
                    s.protocols = vec![Protocol::Integratex];
                    s.variants = vec![
                        Variant { label: format!("d={d}/ta=on"), aggregation: Some(true), ..Variant::default() },
                        Variant { label: format!("d={d}/ta=off"), aggregation: Some(false), ..Variant::default() },
                    ];
                } else {
                    s.variants = vec![Variant { label: format!("d={d}"), ..Variant::default() }];
                    // one remote segment is cheaper sequentially
                    if d >= 2 {
                        asserts.push(Assertion {
                            variant: Some(format!("d={d}")),
                            ..assert_that("latency_reduction_pct", Op::Gt, 0.0)
                        });
                    }
                }
                plans.extend(s.expand(o)?);
            }
            Ok(plans)
        }
        "concurrency-sweep" => {
            let ks: Vec<usize> = match o.concurrency {
                Some(k) => vec![k],
                None => (1..=6).collect(),
            };
            let mut plans = Vec::new();
            for k in ks {
                if k == 0 {
                    return Err(field("--concurrency", "must be at least 1"));
                }
                let mut s = base(
                    name,
                    travel_services(),
                    vec![train_hotel_dapp(10)],
                    vec![work("train-hotel", train_hotel_args(2), k, Arrival::Concurrent)],
                );
                s.protocols = vec![Protocol::Integratex];
                s.variants = vec![
                    Variant { label: format!("k={k}/fgsl=on"), fgsl: Some(true), ..Variant::default() },
                    Variant { label: format!("k={k}/fgsl=off"), fgsl: Some(false), ..Variant::default() },
                ];
                plans.extend(s.expand(o)?);
            }
            Ok(plans)
        }
        "lsd-gas" | "deploy-phase" => {
            let mut s = base(name, travel_services(), vec![train_hotel_dapp(10)], Vec::new());
            s.protocols = vec![Protocol::Integratex];
            let mut plans = s.expand(o)?;
            for p in &mut plans {
                p.lsd_probe = name == "lsd-gas";
            }
            Ok(plans)
        }
        "fault-suite" => {
            let mut s = base(name, travel_services(), vec![train_hotel_dapp(10), timeout_dapp()], Vec::new());
            s.relayers = vec![
                RelayerConfig::new("honest", Behavior::Honest),
                RelayerConfig::new("dropper", Behavior::Drop(1.0)),
                RelayerConfig::new("tamperer", Behavior::Tamper(0.5)),
                RelayerConfig::new("early", Behavior::PrematureClone),
            ];
            s.workload = vec![
                work("train-hotel", train_hotel_args(2), 1, Arrival::Concurrent),
                WorkloadSpec { retry: false, ..work("train-hotel", train_hotel_args(3), 3, Arrival::Concurrent) },
                WorkloadSpec { at_ms: 100_000, ..work("train-hotel", train_hotel_args(500), 1, Arrival::Concurrent) },
                WorkloadSpec {
                    at_ms: 100_000,
                    exec_gas: Some(40),
                    ..work("train-hotel", train_hotel_args(1), 1, Arrival::Concurrent)
                },
                WorkloadSpec { at_ms: 200_000, ..work("short-fuse", train_hotel_args(1), 1, Arrival::Concurrent) },
            ];
            s.params.fgsl = false;
            asserts.push(assert_that("audit_violations", Op::Eq, 0.0));
            s.expand(o)
        }
        _ => Err(ConfigError::UnknownBuiltin(name.to_string())),
    }
}

/// Train-and-hotel with a timeout shorter than one lock round trip.
pub fn timeout_dapp() -> DappDescriptor {
    DappDescriptor { name: "short-fuse".into(), ..train_hotel_dapp(2) }
}

impl WorkloadSpec {
    pub fn exec_gas(&self) -> u64 {
        self.exec_gas.unwrap_or(DEFAULT_EXEC_GAS)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slot_keys_parse() {
        assert_eq!(parse_slot_key("fare"), Some(SlotKey::scalar("fare")));
        assert_eq!(parse_slot_key("seats[3]"), Some(SlotKey::entry("seats", 3)));
        assert_eq!(parse_slot_key("seats[x]"), None);
    }

    #[test]
    fn every_builtin_expands() {
        for b in BUILTINS {
            let suite = builtin(b, &Overrides::default()).unwrap();
            assert!(!suite.plans.is_empty(), "{b}");
        }
        assert!(matches!(builtin("nope", &Overrides::default()), Err(ConfigError::UnknownBuiltin(_))));
    }

    #[test]
    fn overrides_narrow_the_sweep() {
        let o = Overrides { depth: Some(4), protocol: Some(Protocol::Baseline), ..Overrides::default() };
        let plans = builtin("depth-sweep", &o).unwrap().plans;
        assert_eq!(plans.len(), 1);
        assert_eq!(plans[0].protocol, Protocol::Baseline);
        assert_eq!(plans[0].depth("chain-4"), Some(4));
    }

    #[test]
    fn file_errors_name_the_field() {
        let text = r#"
            name = "x"
            [[chains]]
            chain_id = 1
            [[services]]
            id = "a"
            chain = 9
            program = "hotel"
            [[dapps]]
            name = "d"
            exec_chain = 1
            calls = []
        "#;
        let err = Scenario::from_toml(text, None).unwrap_err().to_string();
        assert!(err.contains("services[0].chain"), "{err}");
        let err = Scenario::from_toml("name = 3", None).unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn random_trees_are_reproducible() {
        let a = random_tree(5, 8);
        let b = random_tree(5, 8);
        assert_eq!(a.1, b.1);
        assert!(a.1.calls.len() <= 8);
    }
}
