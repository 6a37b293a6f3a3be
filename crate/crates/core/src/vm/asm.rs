//! Text assembly for mini-VM programs, one instruction per line.
//!
//! ```text
//! ; hotel booking logic
//! .logic hotel-logic
//! .params price remain num
//! .returns cost remain
//!     arg num
//!     arg remain
//!     ...
//! ```
//!
//! Contracts declare slots and several functions:
//!
//! ```text
//! .contract Hotel
//! .slot price
//! .slot accounts map
//! .slot seats umap
//! .function getPrice view
//! .returns price
//!     sload price
//!     ret 1
//! ```
//!
//! `label:` lines name jump targets. `arg` accepts a parameter name or index,
//! storage opcodes take a slot name.

use std::collections::BTreeMap;

use thiserror::Error;

use super::instr::Instr;
use super::program::{Function, LogicProgram, MonolithicContract, ProgramError, SlotDecl, SlotKind};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AsmError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error(transparent)]
    Program(#[from] ProgramError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Artifact {
    Logic(LogicProgram),
    Contract(MonolithicContract),
}

#[derive(Default)]
struct FnDraft {
    name: String,
    view: bool,
    params: Vec<String>,
    returns: Vec<String>,
    lines: Vec<(usize, Vec<String>)>,
    labels: BTreeMap<String, usize>,
}

fn err(line: usize, msg: impl Into<String>) -> AsmError {
    AsmError::Syntax { line, msg: msg.into() }
}

fn lower(draft: &FnDraft, slots: &[SlotDecl]) -> Result<Vec<Instr>, AsmError> {
    let num = |line: usize, s: &str| -> Result<u64, AsmError> {
        s.replace('_', "").parse::<u64>().map_err(|_| err(line, format!("bad number `{s}`")))
    };
    let small = |line: usize, s: &str| -> Result<u8, AsmError> {
        u8::try_from(num(line, s)?).map_err(|_| err(line, format!("`{s}` does not fit in a byte")))
    };
    let slot = |line: usize, s: &str| -> Result<u8, AsmError> {
        slots.iter().position(|d| d.name == s).map(|i| i as u8).ok_or_else(|| err(line, format!("unknown slot `{s}`")))
    };
    let target = |line: usize, s: &str| -> Result<u16, AsmError> {
        draft.labels.get(s).map(|&t| t as u16).ok_or_else(|| err(line, format!("unknown label `{s}`")))
    };
    let mut code = Vec::with_capacity(draft.lines.len());
    for (line, toks) in &draft.lines {
        let line = *line;
        let operand = |i: usize| -> Result<&str, AsmError> {
            toks.get(i).map(String::as_str).ok_or_else(|| err(line, format!("`{}` needs an operand", toks[0])))
        };
        let instr = match toks[0].as_str() {
            "push" => Instr::Push(num(line, operand(1)?)?),
            "arg" => {
                let a = operand(1)?;
                match draft.params.iter().position(|p| p == a) {
                    Some(i) => Instr::Arg(i as u8),
                    None => Instr::Arg(small(line, a)?),
                }
            }
            "add" => Instr::Add,
            "sub" => Instr::Sub,
            "mul" => Instr::Mul,
            "lt" => Instr::Lt,
            "eq" => Instr::Eq,
            "select" => Instr::Select,
            "require" => Instr::Require,
            "jump" => Instr::Jump(target(line, operand(1)?)?),
            "jumpz" => Instr::JumpIfZero(target(line, operand(1)?)?),
            "ret" => Instr::Ret(small(line, operand(1)?)?),
            "dup" => Instr::Dup(small(line, operand(1)?)?),
            "pop" => Instr::Pop,
            "sload" => Instr::SLoad(slot(line, operand(1)?)?),
            "sloadm" => Instr::SLoadMap(slot(line, operand(1)?)?),
            "sstore" => Instr::SStore(slot(line, operand(1)?)?),
            "sstorem" => Instr::SStoreMap(slot(line, operand(1)?)?),
            "call" => Instr::CallLogic { args: small(line, operand(1)?)?, rets: small(line, operand(2)?)? },
            other => return Err(err(line, format!("unknown mnemonic `{other}`"))),
        };
        code.push(instr);
    }
    Ok(code)
}

pub fn assemble(src: &str) -> Result<Artifact, AsmError> {
    enum Kind {
        Logic(String),
        Contract(String),
    }
    let mut kind: Option<Kind> = None;
    let mut slots: Vec<SlotDecl> = Vec::new();
    let mut fns: Vec<FnDraft> = Vec::new();

    for (idx, raw) in src.lines().enumerate() {
        let line = idx + 1;
        let text = raw.split(';').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let toks: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        let head = toks[0].as_str();
        match head {
            ".logic" | ".contract" => {
                if kind.is_some() {
                    return Err(err(line, "duplicate program header"));
                }
                let name = toks.get(1).ok_or_else(|| err(line, "missing name"))?.clone();
                if head == ".logic" {
                    fns.push(FnDraft { name: name.clone(), ..Default::default() });
                    kind = Some(Kind::Logic(name));
                } else {
                    kind = Some(Kind::Contract(name));
                }
            }
            ".slot" => {
                if !matches!(kind, Some(Kind::Contract(_))) {
                    return Err(err(line, ".slot outside a contract"));
                }
                let name = toks.get(1).ok_or_else(|| err(line, "missing slot name"))?.clone();
                let kind = match toks.get(2).map(String::as_str) {
                    None | Some("uint") => SlotKind::Uint,
                    Some("map") => SlotKind::Map,
                    Some("umap") => SlotKind::Umap,
                    Some(k) => return Err(err(line, format!("unknown slot kind `{k}`"))),
                };
                slots.push(SlotDecl { name, kind });
            }
            ".function" => {
                if !matches!(kind, Some(Kind::Contract(_))) {
                    return Err(err(line, ".function outside a contract"));
                }
                let name = toks.get(1).ok_or_else(|| err(line, "missing function name"))?.clone();
                let view = toks.get(2).map(String::as_str) == Some("view");
                fns.push(FnDraft { name, view, ..Default::default() });
            }
            ".params" | ".returns" => {
                let f = fns.last_mut().ok_or_else(|| err(line, format!("{head} before a function")))?;
                if !f.lines.is_empty() {
                    return Err(err(line, format!("{head} after instructions")));
                }
                let names = toks[1..].to_vec();
                if head == ".params" {
                    f.params = names;
                } else {
                    f.returns = names;
                }
            }
            _ if head.ends_with(':') && toks.len() == 1 => {
                let f = fns.last_mut().ok_or_else(|| err(line, "label before a function"))?;
                let label = head.trim_end_matches(':').to_string();
                if f.labels.insert(label, f.lines.len()).is_some() {
                    return Err(err(line, "duplicate label"));
                }
            }
            _ if head.starts_with('.') => return Err(err(line, format!("unknown directive `{head}`"))),
            _ => {
                let f = fns.last_mut().ok_or_else(|| err(line, "instruction before a function"))?;
                f.lines.push((line, toks));
            }
        }
    }

    match kind {
        None => Err(err(0, "missing .logic or .contract header")),
        Some(Kind::Logic(name)) => {
            let f = fns.pop().expect("logic header pushes a draft");
            let code = lower(&f, &[])?;
            Ok(Artifact::Logic(LogicProgram::new(&name, f.params, f.returns, code)?))
        }
        Some(Kind::Contract(name)) => {
            let mut functions = Vec::with_capacity(fns.len());
            for f in &fns {
                let code = lower(f, &slots)?;
                functions.push(Function {
                    name: f.name.clone(),
                    params: f.params.clone(),
                    returns: f.returns.clone(),
                    view: f.view,
                    code,
                });
            }
            let c = MonolithicContract { name, slots, functions };
            c.validate()?;
            Ok(Artifact::Contract(c))
        }
    }
}

pub fn assemble_logic(src: &str) -> Result<LogicProgram, AsmError> {
    match assemble(src)? {
        Artifact::Logic(l) => Ok(l),
        Artifact::Contract(_) => Err(err(0, "expected .logic, found .contract")),
    }
}

pub fn assemble_contract(src: &str) -> Result<MonolithicContract, AsmError> {
    match assemble(src)? {
        Artifact::Contract(c) => Ok(c),
        Artifact::Logic(_) => Err(err(0, "expected .contract, found .logic")),
    }
}
