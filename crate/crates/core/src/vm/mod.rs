pub mod asm;
pub mod gas;
pub mod instr;
pub mod interp;
pub mod lsd;
pub mod program;
pub mod state;

pub use gas::{GasMeter, GasSchedule};
pub use instr::Instr;
pub use interp::VmError;
pub use lsd::{lsd_transform, Decoupled, Interface, LsdError};
pub use program::{LogicProgram, MonolithicContract, SlotKey, SlotKind};
pub use state::{LockError, LockMode, LockRequest, StateContract, UpdateOutcome};
