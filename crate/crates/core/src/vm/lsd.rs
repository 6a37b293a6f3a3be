//! Logic/state decoupling.
//!
//! A decouplable contract has one state-changing function shaped as
//! `loads; body; stores; ret n`, where the body never touches storage. The
//! transform lifts the body into a pure logic program that takes the loaded
//! values as leading parameters and returns the values to store after the
//! function's own results. What remains is a state contract whose wrapper
//! loads, calls the logic and stores.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::instr::Instr;
use super::program::{Function, LogicProgram, MonolithicContract, ProgramError, SlotKey};
use super::state::StateContract;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LsdError {
    #[error("{contract} is not decouplable: {reason}")]
    NotDecouplable { contract: String, reason: String },
    #[error(transparent)]
    Program(#[from] ProgramError),
}

/// Where a map key comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeySource {
    Arg(u8),
    Const(u64),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotRef {
    pub slot: String,
    pub key: Option<KeySource>,
}

impl SlotRef {
    /// Concrete storage location for a call with `args`.
    pub fn resolve(&self, args: &[u64]) -> Option<SlotKey> {
        let key = match self.key {
            None => None,
            Some(KeySource::Const(k)) => Some(k),
            Some(KeySource::Arg(i)) => Some(*args.get(i as usize)?),
        };
        Some(SlotKey { name: self.slot.clone(), key })
    }
}

/// How the state-changing function maps onto its logic program.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interface {
    pub function: String,
    pub params: Vec<String>,
    pub returns: Vec<String>,
    /// Logic inputs, in order, before the call arguments.
    pub loads: Vec<SlotRef>,
    /// Slots written from the logic outputs that follow the function returns.
    pub stores: Vec<SlotRef>,
}

impl Interface {
    /// Splits logic outputs into function results and `(slot, value)` writes.
    pub fn split_outputs(&self, args: &[u64], outputs: &[u64]) -> Option<(Vec<u64>, Vec<(SlotKey, u64)>)> {
        let n = self.returns.len();
        if outputs.len() != n + self.stores.len() {
            return None;
        }
        let writes = self
            .stores
            .iter()
            .zip(&outputs[n..])
            .map(|(s, v)| Some((s.resolve(args)?, *v)))
            .collect::<Option<Vec<_>>>()?;
        Some((outputs[..n].to_vec(), writes))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decoupled {
    pub logic: LogicProgram,
    pub state: StateContract,
    pub interface: Interface,
}

fn key_source(i: &Instr) -> Option<KeySource> {
    match *i {
        Instr::Arg(a) => Some(KeySource::Arg(a)),
        Instr::Push(k) => Some(KeySource::Const(k)),
        _ => None,
    }
}

pub fn lsd_transform(contract: &MonolithicContract) -> Result<Decoupled, LsdError> {
    let fail = |reason: &str| LsdError::NotDecouplable { contract: contract.name.clone(), reason: reason.to_string() };
    contract.validate()?;
    let mut writers = contract.functions.iter().filter(|f| !f.view);
    let f = writers.next().ok_or_else(|| fail("no state-changing function"))?;
    if writers.next().is_some() {
        return Err(fail("more than one state-changing function"));
    }
    let code = &f.code;
    let slot_name = |s: u8| contract.slots[s as usize].name.clone();

    // prologue
    let mut loads = Vec::new();
    let mut p = 0;
    loop {
        match (code.get(p), code.get(p + 1)) {
            (Some(Instr::SLoad(s)), _) => {
                loads.push(SlotRef { slot: slot_name(*s), key: None });
                p += 1;
            }
            (Some(k), Some(Instr::SLoadMap(s))) if key_source(k).is_some() => {
                loads.push(SlotRef { slot: slot_name(*s), key: key_source(k) });
                p += 2;
            }
            _ => break,
        }
    }
    let prologue_len = p;

    // epilogue, scanned backwards from the final ret
    let Some(Instr::Ret(n)) = code.last().copied() else {
        return Err(fail("function does not end in ret"));
    };
    let mut e = code.len() - 1;
    let mut stores_rev = Vec::new();
    loop {
        match (e.checked_sub(2).map(|i| &code[i]), e.checked_sub(1).map(|i| &code[i])) {
            (_, Some(Instr::SStore(s))) if e > prologue_len => {
                stores_rev.push(SlotRef { slot: slot_name(*s), key: None });
                e -= 1;
            }
            (Some(k), Some(Instr::SStoreMap(s))) if e - 2 >= prologue_len && key_source(k).is_some() => {
                stores_rev.push(SlotRef { slot: slot_name(*s), key: key_source(k) });
                e -= 2;
            }
            _ => break,
        }
    }
    let epilogue_start = e;
    let mut stores = stores_rev;
    stores.reverse();

    let body = &code[prologue_len..epilogue_start];
    if body.iter().any(Instr::is_storage) {
        return Err(fail("storage access inside the function body"));
    }
    if body.iter().any(|i| matches!(i, Instr::Ret(_))) {
        return Err(fail("early return inside the function body"));
    }
    if body.iter().any(|i| i.jump_target().is_some_and(|t| t >= epilogue_start)) {
        return Err(fail("jump into the store epilogue"));
    }
    for l in &loads {
        if let Some(d) = contract.slots.iter().find(|d| d.name == l.slot) {
            debug_assert_eq!(d.kind.is_map(), l.key.is_some());
        }
    }

    let shift = loads.len() as u8;
    let delta = loads.len() as isize - prologue_len as isize;
    let retarget = |t: u16| (t as isize + delta) as u16;
    let mut lcode: Vec<Instr> = (0..shift).map(Instr::Arg).collect();
    for i in body {
        lcode.push(match *i {
            Instr::Arg(a) => Instr::Arg(a + shift),
            Instr::Jump(t) => Instr::Jump(retarget(t)),
            Instr::JumpIfZero(t) => Instr::JumpIfZero(retarget(t)),
            other => other,
        });
    }
    let m = stores.len();
    lcode.push(Instr::Ret(n + m as u8));

    let params: Vec<String> = loads.iter().map(|l| l.slot.clone()).chain(f.params.iter().cloned()).collect();
    let returns: Vec<String> = f.returns.iter().cloned().chain(stores.iter().rev().map(|s| s.slot.clone())).collect();
    let logic = LogicProgram::new(&format!("L{}", contract.name), params, returns, lcode)?;

    // wrapper: loads, args, call, stores, ret
    let mut wrapper: Vec<Instr> = code[..prologue_len].to_vec();
    wrapper.extend((0..f.params.len() as u8).map(Instr::Arg));
    wrapper.push(Instr::CallLogic { args: shift + f.params.len() as u8, rets: n + m as u8 });
    wrapper.extend_from_slice(&code[epilogue_start..]);
    let mut functions: Vec<Function> = contract.functions.iter().filter(|g| g.view).cloned().collect();
    functions.push(Function { code: wrapper, ..f.clone() });
    let state = StateContract::new(&format!("S{}", contract.name), contract.slots.clone(), functions);

    // stores are applied in reverse order of the logic outputs
    let interface = Interface {
        function: f.name.clone(),
        params: f.params.clone(),
        returns: f.returns.clone(),
        loads,
        stores: stores.into_iter().rev().collect(),
    };
    Ok(Decoupled { logic, state, interface })
}
