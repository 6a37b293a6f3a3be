use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::gas::{GasMeter, GasSchedule};
use super::instr::{decode_code, encode_code, validate, BytecodeError, Instr, ValidationError};
use super::interp::{run, Host, Pure, VmError};
use crate::hash::{sha256, Digest};

const LOGIC_MAGIC: u8 = b'L';
const CONTRACT_MAGIC: u8 = b'M';
const FUNCTION_MAGIC: u8 = b'F';

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProgramError {
    #[error(transparent)]
    Bytecode(#[from] BytecodeError),
    #[error("validation failed in {function}: {source}")]
    Validation {
        function: String,
        #[source]
        source: ValidationError,
    },
    #[error("abi declares {declared} params/returns but bytecode header says {header}")]
    AbiHeader { declared: usize, header: usize },
    #[error("too many {0} (limit 255)")]
    TooMany(&'static str),
}

/// A concrete storage location: a scalar slot, or one entry of a map slot.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlotKey {
    pub name: String,
    pub key: Option<u64>,
}

impl SlotKey {
    pub fn scalar(name: &str) -> Self {
        SlotKey { name: name.to_string(), key: None }
    }

    pub fn entry(name: &str, key: u64) -> Self {
        SlotKey { name: name.to_string(), key: Some(key) }
    }
}

impl fmt::Display for SlotKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.key {
            None => write!(f, "{}", self.name),
            Some(k) => write!(f, "{}[{}]", self.name, k),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotKind {
    Uint,
    /// Map with signed or opaque values.
    Map,
    /// Map of unsigned counters; entries can be amount-locked.
    Umap,
}

impl SlotKind {
    pub fn is_map(self) -> bool {
        matches!(self, SlotKind::Map | SlotKind::Umap)
    }

    /// Can be split into amount locks.
    pub fn is_uint(self) -> bool {
        matches!(self, SlotKind::Uint | SlotKind::Umap)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotDecl {
    pub name: String,
    pub kind: SlotKind,
}

/// A pure, stateless logic program with a single entry point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicProgram {
    pub name: String,
    pub params: Vec<String>,
    pub returns: Vec<String>,
    pub code: Vec<Instr>,
}

impl LogicProgram {
    pub fn new(name: &str, params: Vec<String>, returns: Vec<String>, code: Vec<Instr>) -> Result<Self, ProgramError> {
        let p = LogicProgram { name: name.to_string(), params, returns, code };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ProgramError> {
        if self.params.len() > 255 || self.returns.len() > 255 {
            return Err(ProgramError::TooMany("params or returns"));
        }
        validate(&self.code, self.params.len(), self.returns.len(), None)
            .map_err(|source| ProgramError::Validation { function: self.name.clone(), source })
    }

    /// `[b'L', n_params, n_returns] ++ instructions`.
    pub fn bytecode(&self) -> Vec<u8> {
        let mut out = vec![LOGIC_MAGIC, self.params.len() as u8, self.returns.len() as u8];
        out.extend(encode_code(&self.code));
        out
    }

    pub fn bytecode_hash(&self) -> Digest {
        sha256(&self.bytecode())
    }

    /// Rebuilds a program from raw bytecode plus the ABI names shipped alongside it.
    pub fn from_bytecode(
        name: &str,
        bytes: &[u8],
        params: Vec<String>,
        returns: Vec<String>,
    ) -> Result<Self, ProgramError> {
        if bytes.len() < 3 || bytes[0] != LOGIC_MAGIC {
            return Err(BytecodeError::BadHeader.into());
        }
        if bytes[1] as usize != params.len() {
            return Err(ProgramError::AbiHeader { declared: params.len(), header: bytes[1] as usize });
        }
        if bytes[2] as usize != returns.len() {
            return Err(ProgramError::AbiHeader { declared: returns.len(), header: bytes[2] as usize });
        }
        LogicProgram::new(name, params, returns, decode_code(&bytes[3..])?)
    }

    pub fn execute(&self, inputs: &[u64], gas: &GasSchedule, meter: &mut GasMeter) -> Result<Vec<u64>, VmError> {
        if inputs.len() != self.params.len() {
            return Err(VmError::AbiMismatch { expected: self.params.len(), got: inputs.len() });
        }
        run(&self.code, inputs, &mut Pure, gas, meter)
    }

    pub fn return_index(&self, name: &str) -> Option<usize> {
        self.returns.iter().position(|r| r == name)
    }
}

/// One function of a storage-touching contract.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Function {
    pub name: String,
    pub params: Vec<String>,
    pub returns: Vec<String>,
    pub view: bool,
    pub code: Vec<Instr>,
}

impl Function {
    fn encode_into(&self, out: &mut Vec<u8>) {
        let code = encode_code(&self.code);
        out.extend_from_slice(&[FUNCTION_MAGIC, self.params.len() as u8, self.returns.len() as u8, self.view as u8]);
        out.extend_from_slice(&(code.len() as u16).to_le_bytes());
        out.extend(code);
    }

    fn validate(&self, slots: usize) -> Result<(), ProgramError> {
        validate(&self.code, self.params.len(), self.returns.len(), Some(slots))
            .map_err(|source| ProgramError::Validation { function: self.name.clone(), source })?;
        if self.view && self.code.iter().any(|i| matches!(i, Instr::SStore(_) | Instr::SStoreMap(_))) {
            return Err(ProgramError::Validation { function: self.name.clone(), source: ValidationError::Impure(0) });
        }
        Ok(())
    }
}

/// A contract whose functions read and write their own storage directly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonolithicContract {
    pub name: String,
    pub slots: Vec<SlotDecl>,
    pub functions: Vec<Function>,
}

impl MonolithicContract {
    pub fn validate(&self) -> Result<(), ProgramError> {
        if self.slots.len() > 255 || self.functions.len() > 255 {
            return Err(ProgramError::TooMany("slots or functions"));
        }
        self.functions.iter().try_for_each(|f| f.validate(self.slots.len()))
    }

    pub fn bytecode(&self) -> Vec<u8> {
        contract_bytecode(CONTRACT_MAGIC, &self.slots, &self.functions)
    }

    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn slot_index(&self, name: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.name == name)
    }
}

pub(crate) fn contract_bytecode(magic: u8, slots: &[SlotDecl], functions: &[Function]) -> Vec<u8> {
    let mut out = vec![magic, slots.len() as u8];
    out.extend(slots.iter().map(|s| match s.kind {
        SlotKind::Uint => 0u8,
        SlotKind::Map => 1u8,
        SlotKind::Umap => 2u8,
    }));
    out.push(functions.len() as u8);
    for f in functions {
        f.encode_into(&mut out);
    }
    out
}

/// Host over a flat slot map, used for monolithic contracts and state wrappers.
pub struct StorageHost<'a, F>
where
    F: FnMut(&[u64], &mut GasMeter) -> Result<Vec<u64>, VmError>,
{
    pub slots: &'a [SlotDecl],
    pub storage: &'a mut std::collections::BTreeMap<SlotKey, u64>,
    pub call: F,
}

impl<F> Host for StorageHost<'_, F>
where
    F: FnMut(&[u64], &mut GasMeter) -> Result<Vec<u64>, VmError>,
{
    fn sload(&mut self, slot: u8, key: Option<u64>) -> Result<u64, VmError> {
        let decl = self.slots.get(slot as usize).ok_or(VmError::NoStorage)?;
        Ok(*self.storage.get(&SlotKey { name: decl.name.clone(), key }).unwrap_or(&0))
    }

    fn sstore(&mut self, slot: u8, key: Option<u64>, value: u64) -> Result<(), VmError> {
        let decl = self.slots.get(slot as usize).ok_or(VmError::NoStorage)?;
        self.storage.insert(SlotKey { name: decl.name.clone(), key }, value);
        Ok(())
    }

    fn call_logic(&mut self, args: &[u64], meter: &mut GasMeter) -> Result<Vec<u64>, VmError> {
        (self.call)(args, meter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples;

    #[test]
    fn logic_bytecode_roundtrips_with_abi() {
        let hotel = samples::hotel_logic();
        let rebuilt =
            LogicProgram::from_bytecode("x", &hotel.bytecode(), hotel.params.clone(), hotel.returns.clone()).unwrap();
        assert_eq!(rebuilt.code, hotel.code);
        assert_eq!(rebuilt.bytecode_hash(), hotel.bytecode_hash());
    }

    #[test]
    fn wrong_abi_arity_rejected() {
        let hotel = samples::hotel_logic();
        let err = LogicProgram::from_bytecode("x", &hotel.bytecode(), vec![], hotel.returns.clone());
        assert!(matches!(err, Err(ProgramError::AbiHeader { .. })));
    }

    #[test]
    fn book_follows_hotel_semantics() {
        let hotel = samples::hotel_logic();
        let gas = GasSchedule::default();
        let out = hotel.execute(&[5, 2, 1], &gas, &mut GasMeter::unlimited()).unwrap();
        assert_eq!(out[hotel.return_index("remain").unwrap()], 1);
        assert_eq!(out[hotel.return_index("cost").unwrap()], 5);
        assert!(matches!(hotel.execute(&[5, 2, 3], &gas, &mut GasMeter::unlimited()), Err(VmError::Revert(_))));
        assert!(matches!(
            hotel.execute(&[5, 2], &gas, &mut GasMeter::unlimited()),
            Err(VmError::AbiMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn execution_is_deterministic() {
        let train = samples::train_logic();
        let gas = GasSchedule::default();
        let inputs = [40, 100, 1, 1, 2];
        let mut m1 = GasMeter::unlimited();
        let mut m2 = GasMeter::unlimited();
        let a = train.execute(&inputs, &gas, &mut m1).unwrap();
        let b = train.clone().execute(&inputs, &gas, &mut m2).unwrap();
        assert_eq!(a, b);
        assert_eq!(m1.used(), m2.used());
    }
}
