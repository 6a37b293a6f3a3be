//! Mini-VM instruction set and its canonical bytecode.
//!
//! Programs are straight-line code with forward jumps only, so every program
//! terminates. Storage and logic-call opcodes exist only for state-touching
//! code (monolithic contracts and state wrappers); logic programs may not
//! use them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Instr {
    Push(u64),
    Arg(u8),
    Add,
    Sub,
    Mul,
    Lt,
    Eq,
    /// `[a, b, cond] -> cond != 0 ? a : b`
    Select,
    Require,
    Jump(u16),
    JumpIfZero(u16),
    /// Return the top `n` stack values, bottom first.
    Ret(u8),
    /// Copy the value `n` positions below the top (0 = top).
    Dup(u8),
    Pop,
    SLoad(u8),
    /// Pops a key.
    SLoadMap(u8),
    /// Pops a value.
    SStore(u8),
    /// Pops a key, then a value.
    SStoreMap(u8),
    /// Calls the paired logic program with `args` popped values; pushes `rets`.
    CallLogic {
        args: u8,
        rets: u8,
    },
}

impl Instr {
    pub fn is_storage(&self) -> bool {
        matches!(
            self,
            Instr::SLoad(_) | Instr::SLoadMap(_) | Instr::SStore(_) | Instr::SStoreMap(_) | Instr::CallLogic { .. }
        )
    }

    pub fn is_branch(&self) -> bool {
        matches!(self, Instr::Jump(_) | Instr::JumpIfZero(_) | Instr::Require | Instr::Select)
    }

    pub fn jump_target(&self) -> Option<usize> {
        match self {
            Instr::Jump(t) | Instr::JumpIfZero(t) => Some(*t as usize),
            _ => None,
        }
    }

    fn opcode(&self) -> u8 {
        match self {
            Instr::Push(_) => 0x01,
            Instr::Arg(_) => 0x02,
            Instr::Add => 0x03,
            Instr::Sub => 0x04,
            Instr::Mul => 0x05,
            Instr::Lt => 0x06,
            Instr::Eq => 0x07,
            Instr::Select => 0x08,
            Instr::Require => 0x09,
            Instr::Jump(_) => 0x0a,
            Instr::JumpIfZero(_) => 0x0b,
            Instr::Ret(_) => 0x0c,
            Instr::Dup(_) => 0x0d,
            Instr::Pop => 0x0e,
            Instr::SLoad(_) => 0x10,
            Instr::SLoadMap(_) => 0x11,
            Instr::SStore(_) => 0x12,
            Instr::SStoreMap(_) => 0x13,
            Instr::CallLogic { .. } => 0x14,
        }
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(self.opcode());
        match *self {
            Instr::Push(v) => out.extend_from_slice(&v.to_le_bytes()),
            Instr::Arg(i) | Instr::Ret(i) | Instr::Dup(i) => out.push(i),
            Instr::SLoad(s) | Instr::SLoadMap(s) | Instr::SStore(s) | Instr::SStoreMap(s) => out.push(s),
            Instr::Jump(t) | Instr::JumpIfZero(t) => out.extend_from_slice(&t.to_le_bytes()),
            Instr::CallLogic { args, rets } => out.extend_from_slice(&[args, rets]),
            _ => {}
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BytecodeError {
    #[error("unknown opcode {0:#04x} at byte {1}")]
    UnknownOpcode(u8, usize),
    #[error("truncated bytecode")]
    Truncated,
    #[error("bad header")]
    BadHeader,
}

pub fn encode_code(code: &[Instr]) -> Vec<u8> {
    let mut out = Vec::with_capacity(code.len() * 2);
    for i in code {
        i.encode_into(&mut out);
    }
    out
}

pub fn decode_code(bytes: &[u8]) -> Result<Vec<Instr>, BytecodeError> {
    let mut out = Vec::new();
    let mut p = 0;
    let take = |p: &mut usize, n: usize| -> Result<&[u8], BytecodeError> {
        let s = bytes.get(*p..*p + n).ok_or(BytecodeError::Truncated)?;
        *p += n;
        Ok(s)
    };
    while p < bytes.len() {
        let at = p;
        let op = take(&mut p, 1)?[0];
        let instr = match op {
            0x01 => Instr::Push(u64::from_le_bytes(take(&mut p, 8)?.try_into().unwrap())),
            0x02 => Instr::Arg(take(&mut p, 1)?[0]),
            0x03 => Instr::Add,
            0x04 => Instr::Sub,
            0x05 => Instr::Mul,
            0x06 => Instr::Lt,
            0x07 => Instr::Eq,
            0x08 => Instr::Select,
            0x09 => Instr::Require,
            0x0a => Instr::Jump(u16::from_le_bytes(take(&mut p, 2)?.try_into().unwrap())),
            0x0b => Instr::JumpIfZero(u16::from_le_bytes(take(&mut p, 2)?.try_into().unwrap())),
            0x0c => Instr::Ret(take(&mut p, 1)?[0]),
            0x0d => Instr::Dup(take(&mut p, 1)?[0]),
            0x0e => Instr::Pop,
            0x10 => Instr::SLoad(take(&mut p, 1)?[0]),
            0x11 => Instr::SLoadMap(take(&mut p, 1)?[0]),
            0x12 => Instr::SStore(take(&mut p, 1)?[0]),
            0x13 => Instr::SStoreMap(take(&mut p, 1)?[0]),
            0x14 => {
                let b = take(&mut p, 2)?;
                Instr::CallLogic { args: b[0], rets: b[1] }
            }
            other => return Err(BytecodeError::UnknownOpcode(other, at)),
        };
        out.push(instr);
    }
    Ok(out)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ValidationError {
    #[error("empty program")]
    Empty,
    #[error("jump at {at} targets {target}: only forward jumps inside the program are allowed")]
    BackEdge { at: usize, target: usize },
    #[error("last instruction must be ret")]
    MissingReturn,
    #[error("ret {found} at {at} but abi declares {expected} return values")]
    ReturnArity { at: usize, found: u8, expected: usize },
    #[error("arg {index} at {at} out of range for {params} params")]
    ArgOutOfRange { at: usize, index: u8, params: usize },
    #[error("storage or call instruction at {0} in a pure logic program")]
    Impure(usize),
    #[error("slot index {index} at {at} not declared")]
    UnknownSlot { at: usize, index: u8 },
}

/// Structural checks shared by every program kind. `slots` is `None` for pure
/// logic (storage forbidden) and the declared slot count otherwise.
pub fn validate(code: &[Instr], params: usize, returns: usize, slots: Option<usize>) -> Result<(), ValidationError> {
    if code.is_empty() {
        return Err(ValidationError::Empty);
    }
    for (at, instr) in code.iter().enumerate() {
        if let Some(target) = instr.jump_target() {
            if target <= at || target >= code.len() {
                return Err(ValidationError::BackEdge { at, target });
            }
        }
        match *instr {
            Instr::Ret(n) if n as usize != returns => {
                return Err(ValidationError::ReturnArity { at, found: n, expected: returns })
            }
            Instr::Arg(i) if i as usize >= params => {
                return Err(ValidationError::ArgOutOfRange { at, index: i, params })
            }
            Instr::SLoad(s) | Instr::SLoadMap(s) | Instr::SStore(s) | Instr::SStoreMap(s) => match slots {
                None => return Err(ValidationError::Impure(at)),
                Some(n) if s as usize >= n => return Err(ValidationError::UnknownSlot { at, index: s }),
                _ => {}
            },
            Instr::CallLogic { .. } if slots.is_none() => return Err(ValidationError::Impure(at)),
            _ => {}
        }
    }
    if !matches!(code.last(), Some(Instr::Ret(_))) {
        return Err(ValidationError::MissingReturn);
    }
    Ok(())
}
