//! dApp descriptors and their static analysis: call tree, state requirements
//! and the list of logic programs that must be cloned to the execution chain.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vm::lsd::{Interface, SlotRef};
use crate::vm::program::SlotKey;
use crate::vm::state::{LockMode, LockRequest};

fn default_timeout() -> u64 {
    10
}

/// dApp descriptor as written in a scenario file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DappDescriptor {
    pub name: String,
    pub exec_chain: u32,
    #[serde(default)]
    pub inputs: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_blocks: u64,
    pub calls: Vec<CallSpec>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CallSpec {
    pub id: String,
    pub service: String,
    #[serde(default)]
    pub parent: Option<String>,
    /// `in.NAME`, `out.NODE.RETURN` or an integer literal.
    #[serde(default)]
    pub args: Vec<String>,
    /// Fine-grained lock amount per written slot, as an input-derived expression.
    #[serde(default)]
    pub amounts: BTreeMap<String, String>,
}

/// What the analysis needs to know about a deployed service.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceInfo {
    pub id: String,
    pub chain: u32,
    pub interface: Interface,
    pub lock_size: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArgExpr {
    Input(usize),
    Const(u64),
    /// Return value `ret` of call `node` (index into the analysis call list).
    Output {
        node: usize,
        ret: usize,
    },
}

impl ArgExpr {
    pub fn eval(&self, inputs: &[u64], outputs: &[Option<Vec<u64>>]) -> Option<u64> {
        match *self {
            ArgExpr::Input(i) => inputs.get(i).copied(),
            ArgExpr::Const(c) => Some(c),
            ArgExpr::Output { node, ret } => outputs.get(node)?.as_ref()?.get(ret).copied(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeSpec {
    Shared,
    Whole,
    Amount(ArgExpr),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: String,
    pub service: String,
    pub chain: u32,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub depth: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallTree {
    /// Nodes in execution (preorder) order.
    pub nodes: Vec<TreeNode>,
    /// Longest root-to-leaf path in edges, counting the edge from the dApp entry.
    pub depth: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedCall {
    pub service: String,
    pub chain: u32,
    pub args: Vec<ArgExpr>,
    pub locks: Vec<(SlotRef, ModeSpec)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateRequirementSet {
    pub per_chain: BTreeMap<u32, Vec<(String, SlotRef, ModeSpec)>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Analysis {
    pub exec_chain: u32,
    pub tree: CallTree,
    /// One entry per tree node, same order.
    pub calls: Vec<ResolvedCall>,
    pub requirements: StateRequirementSet,
    pub clone_list: Vec<String>,
    pub timeout_blocks: u64,
    pub n_inputs: usize,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("unknown service `{0}`")]
    UnknownService(String),
    #[error("call cycle through `{0}`")]
    CyclicCalls(String),
    #[error("`{node}` names unknown parent `{parent}`")]
    UnknownParent { node: String, parent: String },
    #[error("duplicate call id `{0}`")]
    DuplicateNode(String),
    #[error("`{node}`: {msg}")]
    BadArg { node: String, msg: String },
    #[error("dApp has no calls")]
    Empty,
}

fn parse_expr(
    text: &str,
    inputs: &[String],
    position: &BTreeMap<&str, usize>,
    services: &[&ServiceInfo],
    me: usize,
) -> Result<ArgExpr, String> {
    let text = text.trim();
    if let Ok(v) = text.replace('_', "").parse::<u64>() {
        return Ok(ArgExpr::Const(v));
    }
    if let Some(name) = text.strip_prefix("in.") {
        return inputs
            .iter()
            .position(|i| i == name)
            .map(ArgExpr::Input)
            .ok_or_else(|| format!("unknown input `{name}`"));
    }
    if let Some(rest) = text.strip_prefix("out.") {
        let (node, ret) = rest.rsplit_once('.').ok_or_else(|| format!("expected out.NODE.RETURN, got `{text}`"))?;
        let &idx = position.get(node).ok_or_else(|| format!("unknown call `{node}`"))?;
        if idx >= me {
            return Err(format!("`{node}` has not executed yet"));
        }
        let r = services[idx]
            .interface
            .returns
            .iter()
            .position(|r| r == ret)
            .ok_or_else(|| format!("`{node}` has no return `{ret}`"))?;
        return Ok(ArgExpr::Output { node: idx, ret: r });
    }
    Err(format!("cannot parse `{text}`"))
}

pub fn analyze(dapp: &DappDescriptor, services: &BTreeMap<String, ServiceInfo>) -> Result<Analysis, AnalysisError> {
    if dapp.calls.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut ids = BTreeSet::new();
    for c in &dapp.calls {
        if !ids.insert(c.id.as_str()) {
            return Err(AnalysisError::DuplicateNode(c.id.clone()));
        }
        if !services.contains_key(&c.service) {
            return Err(AnalysisError::UnknownService(c.service.clone()));
        }
    }
    let by_id: BTreeMap<&str, usize> = dapp.calls.iter().enumerate().map(|(i, c)| (c.id.as_str(), i)).collect();
    let mut parent_of = vec![None; dapp.calls.len()];
    for (i, c) in dapp.calls.iter().enumerate() {
        if let Some(p) = &c.parent {
            let &pi = by_id
                .get(p.as_str())
                .ok_or_else(|| AnalysisError::UnknownParent { node: c.id.clone(), parent: p.clone() })?;
            parent_of[i] = Some(pi);
        }
    }
    // walking parents from any node must reach a root within n steps
    for (i, c) in dapp.calls.iter().enumerate() {
        let mut cur = parent_of[i];
        let mut steps = 0;
        while let Some(p) = cur {
            steps += 1;
            if steps > dapp.calls.len() {
                return Err(AnalysisError::CyclicCalls(c.id.clone()));
            }
            cur = parent_of[p];
        }
    }

    // preorder, children in declaration order
    let mut order = Vec::with_capacity(dapp.calls.len());
    let mut stack: Vec<(usize, usize)> =
        (0..dapp.calls.len()).rev().filter(|&i| parent_of[i].is_none()).map(|i| (i, 1)).collect();
    let mut depth_of = vec![0; dapp.calls.len()];
    while let Some((i, d)) = stack.pop() {
        order.push(i);
        depth_of[i] = d;
        for j in (0..dapp.calls.len()).rev() {
            if parent_of[j] == Some(i) {
                stack.push((j, d + 1));
            }
        }
    }
    let position: BTreeMap<&str, usize> =
        order.iter().enumerate().map(|(pos, &i)| (dapp.calls[i].id.as_str(), pos)).collect();
    let infos: Vec<&ServiceInfo> = order.iter().map(|&i| &services[&dapp.calls[i].service]).collect();

    let mut nodes = Vec::with_capacity(order.len());
    let mut calls = Vec::with_capacity(order.len());
    let mut requirements = StateRequirementSet::default();
    let mut clone_list: Vec<String> = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        let spec = &dapp.calls[i];
        let info = infos[pos];
        let bad = |msg: String| AnalysisError::BadArg { node: spec.id.clone(), msg };
        let iface = &info.interface;
        if spec.args.len() != iface.params.len() {
            return Err(bad(format!(
                "{} takes {} arguments, got {}",
                iface.function,
                iface.params.len(),
                spec.args.len()
            )));
        }
        let args = spec
            .args
            .iter()
            .map(|a| parse_expr(a, &dapp.inputs, &position, &infos, pos))
            .collect::<Result<Vec<_>, _>>()
            .map_err(bad)?;
        for slot in spec.amounts.keys() {
            if !iface.stores.iter().any(|s| &s.slot == slot) {
                return Err(bad(format!("amount given for `{slot}`, which {} does not write", iface.function)));
            }
        }
        let mut locks = Vec::new();
        for load in &iface.loads {
            let written = iface.stores.iter().any(|s| s == load);
            let mode = match (written, spec.amounts.get(&load.slot)) {
                (false, _) => ModeSpec::Shared,
                (true, None) => ModeSpec::Whole,
                (true, Some(e)) => match parse_expr(e, &dapp.inputs, &position, &infos, pos).map_err(bad)? {
                    ArgExpr::Output { .. } => {
                        return Err(bad(format!("amount for `{}` must derive from transaction inputs", load.slot)))
                    }
                    e => ModeSpec::Amount(e),
                },
            };
            locks.push((load.clone(), mode));
        }
        for store in &iface.stores {
            if !iface.loads.contains(store) {
                locks.push((store.clone(), ModeSpec::Whole));
            }
        }
        for (slot, _) in &locks {
            if let Some(crate::vm::lsd::KeySource::Arg(k)) = slot.key {
                if matches!(args.get(k as usize), Some(ArgExpr::Output { .. })) {
                    return Err(bad(format!("key of `{}` must derive from transaction inputs", slot.slot)));
                }
            }
        }
        if info.chain != dapp.exec_chain {
            for (slot, mode) in &locks {
                requirements.per_chain.entry(info.chain).or_default().push((info.id.clone(), slot.clone(), *mode));
            }
            if !clone_list.contains(&info.id) {
                clone_list.push(info.id.clone());
            }
        }
        let parent = parent_of[i].map(|p| position[dapp.calls[p].id.as_str()]);
        nodes.push(TreeNode {
            id: spec.id.clone(),
            service: info.id.clone(),
            chain: info.chain,
            parent,
            children: Vec::new(),
            depth: depth_of[i],
        });
        calls.push(ResolvedCall { service: info.id.clone(), chain: info.chain, args, locks });
    }
    for pos in 0..nodes.len() {
        if let Some(p) = nodes[pos].parent {
            nodes[p].children.push(pos);
        }
    }
    let depth = nodes.iter().map(|n| n.depth).max().unwrap_or(0);
    Ok(Analysis {
        exec_chain: dapp.exec_chain,
        tree: CallTree { nodes, depth },
        calls,
        requirements,
        clone_list,
        timeout_blocks: dapp.timeout_blocks,
        n_inputs: dapp.inputs.len(),
    })
}

/// Lock requests per state contract (keyed by service id) for one invocation.
/// Requests on the same slot are merged: any exclusive use wins over a read,
/// amounts add up.
pub fn lock_plan(
    analysis: &Analysis,
    services: &BTreeMap<String, ServiceInfo>,
    inputs: &[u64],
    fgsl: bool,
) -> Option<BTreeMap<u32, BTreeMap<String, Vec<LockRequest>>>> {
    let mut merged: BTreeMap<u32, BTreeMap<String, BTreeMap<SlotKey, LockMode>>> = BTreeMap::new();
    for call in &analysis.calls {
        if call.chain == analysis.exec_chain {
            continue;
        }
        let lock_size = services.get(&call.service).map(|s| s.lock_size.max(1)).unwrap_or(1);
        for (slot, mode) in &call.locks {
            let key = resolve_slot(slot, &call.args, inputs)?;
            let mode = match mode {
                ModeSpec::Shared => LockMode::Shared,
                ModeSpec::Whole => LockMode::Whole,
                ModeSpec::Amount(_) if !fgsl => LockMode::Whole,
                ModeSpec::Amount(e) => {
                    let need = e.eval(inputs, &[])?;
                    LockMode::Amount(need.div_ceil(lock_size).max(1) * lock_size)
                }
            };
            let slots = merged.entry(call.chain).or_default().entry(call.service.clone()).or_default();
            let next = match (slots.get(&key).copied(), mode) {
                (None, m) => m,
                (Some(LockMode::Whole), _) | (_, LockMode::Whole) => LockMode::Whole,
                (Some(LockMode::Amount(a)), LockMode::Amount(b)) => LockMode::Amount(a + b),
                (Some(LockMode::Amount(a)), LockMode::Shared) | (Some(LockMode::Shared), LockMode::Amount(a)) => {
                    LockMode::Amount(a)
                }
                (Some(m), _) => m,
            };
            slots.insert(key, next);
        }
    }
    Some(
        merged
            .into_iter()
            .map(|(chain, per)| {
                let per = per
                    .into_iter()
                    .map(|(svc, slots)| {
                        (svc, slots.into_iter().map(|(slot, mode)| LockRequest { slot, mode }).collect())
                    })
                    .collect();
                (chain, per)
            })
            .collect(),
    )
}

/// Resolves a slot reference whose map key comes from a call argument; the
/// argument itself must be computable before execution.
pub fn resolve_slot(slot: &SlotRef, args: &[ArgExpr], inputs: &[u64]) -> Option<SlotKey> {
    use crate::vm::lsd::KeySource;
    let key = match slot.key {
        None => None,
        Some(KeySource::Const(k)) => Some(k),
        Some(KeySource::Arg(i)) => Some(args.get(i as usize)?.eval(inputs, &[])?),
    };
    Some(SlotKey { name: slot.slot.clone(), key })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples;

    pub(crate) fn registry() -> BTreeMap<String, ServiceInfo> {
        let mut m = BTreeMap::new();
        for (id, chain, c) in [
            ("train", 2, samples::train_contract()),
            ("hotel", 3, samples::hotel_contract()),
            ("agency", 1, samples::agency_contract()),
        ] {
            let d = crate::vm::lsd::lsd_transform(&c).unwrap();
            m.insert(id.to_string(), ServiceInfo { id: id.into(), chain, interface: d.interface, lock_size: 1 });
        }
        m
    }

    fn train_hotel() -> DappDescriptor {
        toml::from_str(
            r#"
            name = "train-hotel"
            exec_chain = 1
            inputs = ["user", "out", "ret", "cls", "num"]
            [[calls]]
            id = "train_out"
            service = "train"
            args = ["in.out", "in.cls", "in.num"]
            amounts = { seats = "in.num" }
            [[calls]]
            id = "hotel"
            service = "hotel"
            parent = "train_out"
            args = ["in.num"]
            amounts = { remain = "in.num" }
            [[calls]]
            id = "train_ret"
            service = "train"
            parent = "hotel"
            args = ["in.ret", "in.cls", "in.num"]
            amounts = { seats = "in.num" }
            [[calls]]
            id = "settle"
            service = "agency"
            args = ["in.user", "out.train_out.cost", "out.hotel.cost", "out.train_ret.cost"]
            "#,
        )
        .unwrap()
    }

    #[test]
    fn train_hotel_tree() {
        let a = analyze(&train_hotel(), &registry()).unwrap();
        assert_eq!(a.tree.depth, 3);
        assert_eq!(a.clone_list, vec!["train", "hotel"]);
        let ids: Vec<&str> = a.tree.nodes.iter().map(|n| n.id.as_str()).collect();
        assert_eq!(ids, vec!["train_out", "hotel", "train_ret", "settle"]);
        assert_eq!(a.requirements.per_chain.keys().copied().collect::<Vec<_>>(), vec![2, 3]);
        // two train legs, each a fare read and a seats write
        assert_eq!(a.requirements.per_chain[&2].len(), 4);
        assert_eq!(a.calls[3].args[1], ArgExpr::Output { node: 0, ret: 0 });
    }

    #[test]
    fn lock_plan_merges_per_contract() {
        let a = analyze(&train_hotel(), &registry()).unwrap();
        let plan = lock_plan(&a, &registry(), &[7, 0, 1, 0, 2], true).unwrap();
        assert_eq!(plan.len(), 2);
        let train = &plan[&2]["train"];
        assert_eq!(train.len(), 3);
        assert!(train.contains(&LockRequest { slot: SlotKey::entry("seats", 0), mode: LockMode::Amount(2) }));
        assert!(train.contains(&LockRequest { slot: SlotKey::scalar("fare"), mode: LockMode::Shared }));
        let same_route = lock_plan(&a, &registry(), &[7, 1, 1, 0, 2], true).unwrap();
        assert!(same_route[&2]["train"]
            .contains(&LockRequest { slot: SlotKey::entry("seats", 1), mode: LockMode::Amount(4) }));
        let whole = lock_plan(&a, &registry(), &[7, 0, 1, 0, 2], false).unwrap();
        assert!(whole[&3]["hotel"].contains(&LockRequest { slot: SlotKey::scalar("remain"), mode: LockMode::Whole }));
    }

    #[test]
    fn local_only_dapp_has_no_clones() {
        let mut d = train_hotel();
        d.calls = vec![d.calls[3].clone()];
        d.calls[0].args = vec!["in.user".into(), "1".into(), "2".into(), "3".into()];
        let a = analyze(&d, &registry()).unwrap();
        assert!(a.clone_list.is_empty());
        assert!(a.requirements.per_chain.is_empty());
        assert_eq!(a.tree.depth, 1);
    }

    #[test]
    fn cycles_and_unknowns_rejected() {
        let mut d = train_hotel();
        d.calls[0].parent = Some("train_ret".into());
        assert!(matches!(analyze(&d, &registry()), Err(AnalysisError::CyclicCalls(_))));
        let mut d = train_hotel();
        d.calls[1].service = "spa".into();
        assert_eq!(analyze(&d, &registry()), Err(AnalysisError::UnknownService("spa".into())));
        let mut d = train_hotel();
        d.calls[0].args[0] = "out.settle.total".into();
        assert!(matches!(analyze(&d, &registry()), Err(AnalysisError::BadArg { .. })));
        let mut d = train_hotel();
        d.calls[1].amounts.insert("remain".into(), "out.train_out.cost".into());
        assert!(matches!(analyze(&d, &registry()), Err(AnalysisError::BadArg { .. })));
    }
}
