use thiserror::Error;

use super::gas::{GasMeter, GasSchedule, OutOfGas};
use super::instr::Instr;

const MAX_STACK: usize = 1024;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum VmError {
    #[error("require failed at instruction {0}")]
    Revert(usize),
    #[error(transparent)]
    OutOfGas(#[from] OutOfGas),
    #[error("stack underflow at instruction {0}")]
    StackUnderflow(usize),
    #[error("stack overflow")]
    StackOverflow,
    #[error("arithmetic overflow at instruction {0}")]
    Overflow(usize),
    #[error("arithmetic underflow at instruction {0}")]
    Underflow(usize),
    #[error("abi mismatch: expected {expected} inputs, got {got}")]
    AbiMismatch { expected: usize, got: usize },
    #[error("storage access not available here")]
    NoStorage,
    #[error("logic call failed: {0}")]
    Call(String),
    #[error("program fell off the end")]
    NoReturn,
}

/// Storage and logic-call access for state-touching code.
pub trait Host {
    fn sload(&mut self, slot: u8, key: Option<u64>) -> Result<u64, VmError>;
    fn sstore(&mut self, slot: u8, key: Option<u64>, value: u64) -> Result<(), VmError>;
    fn call_logic(&mut self, args: &[u64], meter: &mut GasMeter) -> Result<Vec<u64>, VmError>;
}

/// Host for pure logic: every storage access fails.
pub struct Pure;

impl Host for Pure {
    fn sload(&mut self, _: u8, _: Option<u64>) -> Result<u64, VmError> {
        Err(VmError::NoStorage)
    }
    fn sstore(&mut self, _: u8, _: Option<u64>, _: u64) -> Result<(), VmError> {
        Err(VmError::NoStorage)
    }
    fn call_logic(&mut self, _: &[u64], _: &mut GasMeter) -> Result<Vec<u64>, VmError> {
        Err(VmError::NoStorage)
    }
}

pub fn run(
    code: &[Instr],
    args: &[u64],
    host: &mut dyn Host,
    gas: &GasSchedule,
    meter: &mut GasMeter,
) -> Result<Vec<u64>, VmError> {
    let mut stack: Vec<u64> = Vec::with_capacity(16);
    let mut pc = 0usize;
    macro_rules! pop {
        () => {
            stack.pop().ok_or(VmError::StackUnderflow(pc))?
        };
    }
    macro_rules! push {
        ($v:expr) => {{
            if stack.len() >= MAX_STACK {
                return Err(VmError::StackOverflow);
            }
            stack.push($v);
        }};
    }
    while let Some(instr) = code.get(pc) {
        meter.charge(gas.instruction)?;
        let mut next = pc + 1;
        match *instr {
            Instr::Push(v) => push!(v),
            Instr::Arg(i) => {
                let v =
                    *args.get(i as usize).ok_or(VmError::AbiMismatch { expected: i as usize + 1, got: args.len() })?;
                push!(v)
            }
            Instr::Add => {
                let b = pop!();
                let a = pop!();
                push!(a.checked_add(b).ok_or(VmError::Overflow(pc))?)
            }
            Instr::Sub => {
                let b = pop!();
                let a = pop!();
                push!(a.checked_sub(b).ok_or(VmError::Underflow(pc))?)
            }
            Instr::Mul => {
                let b = pop!();
                let a = pop!();
                push!(a.checked_mul(b).ok_or(VmError::Overflow(pc))?)
            }
            Instr::Lt => {
                let b = pop!();
                let a = pop!();
                push!((a < b) as u64)
            }
            Instr::Eq => {
                let b = pop!();
                let a = pop!();
                push!((a == b) as u64)
            }
            Instr::Select => {
                let cond = pop!();
                let b = pop!();
                let a = pop!();
                push!(if cond != 0 { a } else { b })
            }
            Instr::Require => {
                if pop!() == 0 {
                    return Err(VmError::Revert(pc));
                }
            }
            Instr::Jump(t) => next = t as usize,
            Instr::JumpIfZero(t) => {
                if pop!() == 0 {
                    next = t as usize;
                }
            }
            Instr::Ret(n) => {
                let n = n as usize;
                if stack.len() < n {
                    return Err(VmError::StackUnderflow(pc));
                }
                return Ok(stack.split_off(stack.len() - n));
            }
            Instr::Dup(n) => {
                let idx = stack.len().checked_sub(1 + n as usize).ok_or(VmError::StackUnderflow(pc))?;
                push!(stack[idx])
            }
            Instr::Pop => {
                pop!();
            }
            Instr::SLoad(s) => {
                meter.charge(gas.storage_read)?;
                push!(host.sload(s, None)?)
            }
            Instr::SLoadMap(s) => {
                meter.charge(gas.storage_read)?;
                let key = pop!();
                push!(host.sload(s, Some(key))?)
            }
            Instr::SStore(s) => {
                meter.charge(gas.storage_write)?;
                let v = pop!();
                host.sstore(s, None, v)?
            }
            Instr::SStoreMap(s) => {
                meter.charge(gas.storage_write)?;
                let key = pop!();
                let v = pop!();
                host.sstore(s, Some(key), v)?
            }
            Instr::CallLogic { args: n, rets } => {
                let n = n as usize;
                if stack.len() < n {
                    return Err(VmError::StackUnderflow(pc));
                }
                let call_args = stack.split_off(stack.len() - n);
                let out = host.call_logic(&call_args, meter)?;
                if out.len() != rets as usize {
                    return Err(VmError::Call(format!("expected {rets} return values, got {}", out.len())));
                }
                for v in out {
                    push!(v)
                }
            }
        }
        pc = next;
    }
    Err(VmError::NoReturn)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exec(code: &[Instr], args: &[u64]) -> Result<Vec<u64>, VmError> {
        run(code, args, &mut Pure, &GasSchedule::default(), &mut GasMeter::unlimited())
    }

    #[test]
    fn select_and_compare() {
        use Instr::*;
        let code = [Push(10), Push(20), Arg(0), Arg(1), Lt, Select, Ret(1)];
        assert_eq!(exec(&code, &[1, 2]).unwrap(), vec![10]);
        assert_eq!(exec(&code, &[2, 1]).unwrap(), vec![20]);
    }

    #[test]
    fn forward_jump_skips() {
        use Instr::*;
        let code = [Arg(0), JumpIfZero(4), Push(7), Ret(1), Push(9), Ret(1)];
        assert_eq!(exec(&code, &[1]).unwrap(), vec![7]);
        assert_eq!(exec(&code, &[0]).unwrap(), vec![9]);
    }

    #[test]
    fn checked_arithmetic_reverts() {
        use Instr::*;
        assert_eq!(exec(&[Push(1), Push(2), Sub, Ret(1)], &[]), Err(VmError::Underflow(2)));
        assert_eq!(exec(&[Push(u64::MAX), Push(2), Mul, Ret(1)], &[]), Err(VmError::Overflow(2)));
        assert_eq!(exec(&[Push(0), Require, Ret(0)], &[]), Err(VmError::Revert(1)));
    }

    #[test]
    fn gas_is_per_instruction() {
        use Instr::*;
        let mut meter = GasMeter::unlimited();
        run(&[Push(1), Push(2), Add, Ret(1)], &[], &mut Pure, &GasSchedule::default(), &mut meter).unwrap();
        assert_eq!(meter.used(), 12);
        let mut tight = GasMeter::new(8);
        let err = run(&[Push(1), Push(2), Add, Ret(1)], &[], &mut Pure, &GasSchedule::default(), &mut tight);
        assert!(matches!(err, Err(VmError::OutOfGas(_))));
    }

    #[test]
    fn pure_host_blocks_storage() {
        assert_eq!(exec(&[Instr::SLoad(0), Instr::Ret(1)], &[]), Err(VmError::NoStorage));
    }
}
