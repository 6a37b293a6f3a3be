//! Bundled sample contracts.

use crate::vm::asm::{assemble_contract, assemble_logic};
use crate::vm::program::{LogicProgram, MonolithicContract};

pub const HOTEL_ASM: &str = include_str!("../programs/hotel.asm");
pub const HOTEL_LOGIC_ASM: &str = include_str!("../programs/hotel_logic.asm");
pub const TRAIN_ASM: &str = include_str!("../programs/train.asm");
pub const TRAIN_LOGIC_ASM: &str = include_str!("../programs/train_logic.asm");
pub const AGENCY_ASM: &str = include_str!("../programs/agency.asm");
pub const AGENCY_LOGIC_ASM: &str = include_str!("../programs/agency_logic.asm");
pub const INVENTORY_ASM: &str = include_str!("../programs/inventory.asm");
pub const INVENTORY_LOGIC_ASM: &str = include_str!("../programs/inventory_logic.asm");

pub fn hotel_contract() -> MonolithicContract {
    assemble_contract(HOTEL_ASM).expect("bundled hotel.asm")
}

pub fn hotel_logic() -> LogicProgram {
    assemble_logic(HOTEL_LOGIC_ASM).expect("bundled hotel_logic.asm")
}

pub fn train_contract() -> MonolithicContract {
    assemble_contract(TRAIN_ASM).expect("bundled train.asm")
}

pub fn train_logic() -> LogicProgram {
    assemble_logic(TRAIN_LOGIC_ASM).expect("bundled train_logic.asm")
}

pub fn agency_contract() -> MonolithicContract {
    assemble_contract(AGENCY_ASM).expect("bundled agency.asm")
}

pub fn agency_logic() -> LogicProgram {
    assemble_logic(AGENCY_LOGIC_ASM).expect("bundled agency_logic.asm")
}

pub fn inventory_logic() -> LogicProgram {
    assemble_logic(INVENTORY_LOGIC_ASM).expect("bundled inventory_logic.asm")
}

pub fn inventory_contract() -> MonolithicContract {
    assemble_contract(INVENTORY_ASM).expect("bundled inventory.asm")
}
