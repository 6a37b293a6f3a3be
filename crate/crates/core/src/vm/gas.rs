use serde::{Deserialize, Serialize};

/// Gas constants shared by every chain in a scenario.
///
/// Proportioned after Ethereum so that deployment and aggregation savings
/// point the same way as on an EVM chain; absolute numbers are not comparable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GasSchedule {
    pub instruction: u64,
    pub storage_read: u64,
    pub storage_write: u64,
    pub deploy_base: u64,
    pub deploy_byte: u64,
    pub deploy_slot: u64,
    pub event_base: u64,
    pub event_byte: u64,
    pub tx_base: u64,
    pub calldata_byte: u64,
    /// Per hash evaluated while checking a receipt proof or bytecode digest.
    pub hash_word: u64,
}

impl Default for GasSchedule {
    fn default() -> Self {
        GasSchedule {
            instruction: 3,
            storage_read: 200,
            storage_write: 5_000,
            deploy_base: 32_000,
            deploy_byte: 200,
            deploy_slot: 20_000,
            event_base: 375,
            event_byte: 8,
            tx_base: 21_000,
            calldata_byte: 16,
            hash_word: 36,
        }
    }
}

impl GasSchedule {
    pub fn deploy_cost(&self, bytecode_len: usize, declared_slots: usize) -> u64 {
        self.deploy_base + self.deploy_byte * bytecode_len as u64 + self.deploy_slot * declared_slots as u64
    }

    pub fn event_cost(&self, payload_len: usize) -> u64 {
        self.event_base + self.event_byte * payload_len as u64
    }

    pub fn intrinsic(&self, calldata_len: usize) -> u64 {
        self.tx_base + self.calldata_byte * calldata_len as u64
    }

    pub fn hash_cost(&self, input_len: usize) -> u64 {
        self.hash_word * (input_len as u64).div_ceil(32).max(1)
    }

    pub fn all_positive(&self) -> bool {
        [
            self.instruction,
            self.storage_read,
            self.storage_write,
            self.deploy_base,
            self.deploy_byte,
            self.deploy_slot,
            self.event_base,
            self.event_byte,
            self.tx_base,
            self.calldata_byte,
            self.hash_word,
        ]
        .iter()
        .all(|c| *c > 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("out of gas: needed {needed}, limit {limit}")]
pub struct OutOfGas {
    pub needed: u64,
    pub limit: u64,
}

#[derive(Clone, Debug)]
pub struct GasMeter {
    limit: u64,
    used: u64,
}

impl GasMeter {
    pub fn new(limit: u64) -> Self {
        GasMeter { limit, used: 0 }
    }

    pub fn unlimited() -> Self {
        GasMeter::new(u64::MAX)
    }

    pub fn charge(&mut self, amount: u64) -> Result<(), OutOfGas> {
        let needed = self.used.saturating_add(amount);
        if needed > self.limit {
            self.used = self.limit;
            return Err(OutOfGas { needed, limit: self.limit });
        }
        self.used = needed;
        Ok(())
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn remaining(&self) -> u64 {
        self.limit - self.used
    }
}
